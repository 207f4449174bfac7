"""Fusion of per-channel evidence into one authentication score.

A plan assigns a weight ``alpha_w`` to every channel. The final score is
either ``sum alpha_w * p_hat_w`` (aggregate first, decide next: ``ad``) or
``sum alpha_w * delta_w`` where ``delta_w = 1`` means channel ``w`` votes
fake (decide first, aggregate next: ``da``). Higher scores point to fakes.

Strategies:

``s1``  every informative channel, weight 1, ranked by pattern id
``s2``  channels with ``P_b <= mu``, weight 1, ranked by ascending ``P_b``
``s3``  channels with per-channel ``P_err <= nu``, weight 1, ranked by ascending ``P_err``
``s4``  linear max-margin classifier coefficients, ranked by descending magnitude

A channel is informative when its original and fake flip laws differ.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Union

import numpy as np

from .stats import ChannelErrorProfile, _optimal_cut, gamma_crit, np_statistic
from .types import ChannelObservations, Codebook, ModelConfig, ProbeFeatures
from .patterns import probe_features

STRATEGIES = ("s1", "s2", "s3", "s4")
ORDERINGS = ("ad", "da")
RULES = ("gamma_crit", "gamma_opt")


def _norm(value: str, allowed: Sequence[str], what: str) -> str:
    v = value.lower().replace("-", "_")
    if v not in allowed:
        raise ValueError(f"unknown {what} {value!r}; expected one of {', '.join(allowed)}")
    return v


@dataclass(frozen=True)
class ChannelPair:
    """The two reference laws side by side, with derived per-channel boundaries."""

    c0: Codebook
    c1: Codebook
    informative: np.ndarray = field(init=False, repr=False)
    gamma_crit: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if self.c0.config != self.c1.config:
            raise ValueError("original and fake codebooks use different model configs")
        informative = self.c0.p != self.c1.p
        gc = np.full(self.config.M, np.nan)
        for w in np.flatnonzero(informative):
            gc[w] = gamma_crit(float(self.c0.p[w]), float(self.c1.p[w]))
        object.__setattr__(self, "informative", informative)
        object.__setattr__(self, "gamma_crit", gc)

    @property
    def config(self) -> ModelConfig:
        return self.c0.config

    @property
    def fake_above(self) -> np.ndarray:
        """True where fakes flip more often than originals."""
        return self.c0.p < self.c1.p


@dataclass(frozen=True)
class ChannelDecision:
    pattern: int
    delta: int


def decision_vector(obs: ChannelObservations, pair: ChannelPair, rule: str = "gamma_crit") -> np.ndarray:
    """Per-channel votes (1 = fake, 0 = original, NaN = no decision)."""
    rule = _norm(rule, RULES, "rule")
    if obs.config != pair.config:
        raise ValueError("observations and codebooks use different model configs")
    active = pair.informative & (obs.L > 0)
    out = np.full(pair.config.M, np.nan)
    D, L = obs.D, obs.L
    above = pair.fake_above
    if rule == "gamma_crit":
        limit = pair.gamma_crit * L
        vote = np.where(above, D > limit, D < limit)
    else:
        cuts = np.zeros(pair.config.M, dtype=np.int64)
        for w in np.flatnonzero(active):
            cuts[w] = _optimal_cut(int(L[w]), float(pair.c0.p[w]), float(pair.c1.p[w]))[0]
        vote = np.where(above, D > cuts, D < cuts)
    out[active] = vote[active]
    return out


def per_channel_decision(obs: ChannelObservations, c0: Codebook, c1: Codebook,
                         rule: str = "gamma_crit") -> list[ChannelDecision]:
    """Hamming test on every supported informative channel.

    With ``P_b < Q_b`` a channel votes fake iff ``D > gamma * L``; the
    inequality flips when ``P_b > Q_b``. ``gamma`` is the equal-likelihood
    boundary (``gamma_crit``) or the error-minimizing cut at the probe's own
    support (``gamma_opt``).
    """
    vec = decision_vector(obs, ChannelPair(c0, c1), rule)
    return [ChannelDecision(int(w), int(vec[w])) for w in np.flatnonzero(~np.isnan(vec))]


# -- linear classifier ------------------------------------------------------

@dataclass(frozen=True)
class LinearClassifier:
    """Linear classifier on standardized flip-rate features.

    ``weights`` act on ``(x - mean) / std``; a positive decision value means
    fake. Undefined features are imputed with the training mean.
    """

    weights: np.ndarray
    bias: float
    mean: np.ndarray
    std: np.ndarray

    def standardize(self, X: np.ndarray) -> np.ndarray:
        X = np.where(np.isnan(X), self.mean, X)
        return (X - self.mean) / self.std

    def decision_function(self, X: np.ndarray) -> np.ndarray:
        return self.standardize(np.atleast_2d(X)) @ self.weights + self.bias

    @property
    def raw_coefficients(self) -> np.ndarray:
        """Coefficients acting on unstandardized flip rates."""
        return self.weights / self.std

    def to_json(self) -> str:
        return json.dumps({
            "weights": self.weights.tolist(),
            "bias": self.bias,
            "standardization": {"mean": self.mean.tolist(), "std": self.std.tolist()},
        })

    @classmethod
    def from_json(cls, text: str) -> "LinearClassifier":
        d = json.loads(text)
        return cls(
            weights=np.asarray(d["weights"], dtype=np.float64),
            bias=float(d["bias"]),
            mean=np.asarray(d["standardization"]["mean"], dtype=np.float64),
            std=np.asarray(d["standardization"]["std"], dtype=np.float64),
        )


def _feature_matrix(features: Sequence[ProbeFeatures]) -> np.ndarray:
    return np.vstack([f.p_hat for f in features])


def hinge_loss(clf: LinearClassifier, X: np.ndarray, y: np.ndarray) -> float:
    return float(np.mean(np.maximum(0.0, 1.0 - y * clf.decision_function(X))))


def train_linear_classifier(features_originals: Sequence[ProbeFeatures], features_fakes: Sequence[ProbeFeatures],
                            config: Optional[ModelConfig] = None, *, reg: float = 1e-3, epochs: int = 200,
                            batch_size: int = 32, seed: int = 0) -> LinearClassifier:
    """Soft-margin linear SVM by seeded mini-batch subgradient descent.

    Minimizes ``reg/2 |w|^2 + mean(max(0, 1 - y (w.z + b)))`` with step
    ``1/(reg (t + t0))`` (Pegasos schedule) and returns the average of the
    iterates over the second half of training. Labels: fake = +1.
    """
    if len(features_originals) < 2 or len(features_fakes) < 2:
        raise ValueError("need at least two examples of each class to train a classifier")
    feats = list(features_originals) + list(features_fakes)
    cfg = config or feats[0].config
    if any(f.config != cfg for f in feats):
        raise ValueError("all features must share the same model config")
    X = _feature_matrix(feats)
    y = np.concatenate([-np.ones(len(features_originals)), np.ones(len(features_fakes))])

    mean = np.nanmean(np.where(np.all(np.isnan(X), axis=0), 0.0, X), axis=0)
    Xf = np.where(np.isnan(X), mean, X)
    std = Xf.std(axis=0)
    std = np.where(std > 0, std, 1.0)
    Z = (Xf - mean) / std

    n, d = Z.shape
    rng = np.random.Generator(np.random.Philox(seed))
    w = np.zeros(d)
    b = 0.0
    w_avg = np.zeros(d)
    b_avg = 0.0
    n_avg = 0
    t0 = 1.0 / reg
    steps_per_epoch = math.ceil(n / batch_size)
    t = 0
    for epoch in range(epochs):
        order = rng.permutation(n)
        for s in range(steps_per_epoch):
            idx = order[s * batch_size:(s + 1) * batch_size]
            t += 1
            eta = 1.0 / (reg * (t + t0))
            margin = y[idx] * (Z[idx] @ w + b)
            viol = margin < 1.0
            grad_w = reg * w - (y[idx, None] * Z[idx])[viol].sum(axis=0) / len(idx)
            grad_b = -y[idx][viol].sum() / len(idx)
            w = w - eta * grad_w
            b = b - eta * grad_b
            if epoch >= epochs // 2:
                n_avg += 1
                w_avg += (w - w_avg) / n_avg
                b_avg += (b - b_avg) / n_avg
    return LinearClassifier(weights=w_avg, bias=float(b_avg), mean=mean, std=std)


# -- plans ------------------------------------------------------------------

@dataclass(frozen=True)
class AggregationPlan:
    """Channel weights plus the order in which channels enter a best-k selection.

    ``ranking`` lists the eligible channels best first; ``weights`` is zero
    for every channel outside ``ranking[:k]`` once :meth:`restrict` is applied.
    """

    strategy: str
    ordering: str
    weights: np.ndarray
    ranking: np.ndarray
    mu: Optional[float] = None
    nu: Optional[float] = None
    k: Optional[int] = None
    rule: str = "gamma_crit"
    base_weights: Optional[np.ndarray] = field(default=None, repr=False)

    def restrict(self, k: int) -> "AggregationPlan":
        """Keep only the first ``k`` ranked channels."""
        if k < 0:
            raise ValueError(f"k must be nonnegative, got {k}")
        base = self.base_weights if self.base_weights is not None else self.weights
        if k > len(self.ranking):
            warnings.warn(
                f"k={k} exceeds the {len(self.ranking)} eligible channels; using all of them",
                stacklevel=2,
            )
        keep = self.ranking[:k]
        w = np.zeros_like(base)
        w[keep] = base[keep]
        return replace(self, weights=w, k=k, base_weights=base)

    def with_ordering(self, ordering: str) -> "AggregationPlan":
        return replace(self, ordering=_norm(ordering, ORDERINGS, "ordering"))


def build_plan(strategy: str, ordering: str, c0: Codebook, c1: Codebook,
               profiles: Optional[Sequence[ChannelErrorProfile]] = None, *,
               mu: Optional[float] = None, nu: Optional[float] = None, k: Optional[int] = None,
               classifier: Optional[LinearClassifier] = None, rule: str = "gamma_crit") -> AggregationPlan:
    strategy = _norm(strategy, STRATEGIES, "strategy")
    ordering = _norm(ordering, ORDERINGS, "ordering")
    rule = _norm(rule, RULES, "rule")
    pair = ChannelPair(c0, c1)
    M = pair.config.M
    informative = pair.informative
    ids = np.arange(M)

    if mu is not None and not 0.0 <= mu <= 1.0:
        raise ValueError(f"mu must lie in [0, 1], got {mu}")
    if nu is not None and not 0.0 <= nu <= 1.0:
        raise ValueError(f"nu must lie in [0, 1], got {nu}")

    weights = np.zeros(M)
    if strategy == "s1":
        eligible = informative
        ranking = ids[eligible]
        weights[eligible] = 1.0
    elif strategy == "s2":
        # mu below the probability floor still admits channels sitting at the floor
        eligible = informative if mu is None else informative & (c0.p <= max(mu, pair.config.prob_floor))
        cand = ids[eligible]
        ranking = cand[np.lexsort((cand, c0.p[cand]))]
        weights[eligible] = 1.0
    elif strategy == "s3":
        if profiles is None:
            raise ValueError("strategy s3 needs per-channel error profiles")
        p_err = np.array([pr.p_err for pr in sorted(profiles, key=lambda pr: pr.pattern)])
        if p_err.shape != (M,):
            raise ValueError(f"expected {M} channel profiles, got {len(profiles)}")
        eligible = informative if nu is None else informative & (p_err <= nu)
        cand = ids[eligible]
        ranking = cand[np.lexsort((cand, p_err[cand]))]
        weights[eligible] = 1.0
    else:
        if classifier is None:
            raise ValueError("strategy s4 needs trained classifier weights")
        if classifier.weights.shape != (M,):
            raise ValueError(f"classifier has {classifier.weights.size} weights, expected {M}")
        eligible = informative
        cand = ids[eligible]
        ranking = cand[np.lexsort((cand, -np.abs(classifier.weights[cand])))]
        weights[eligible] = classifier.raw_coefficients[eligible]

    plan = AggregationPlan(strategy, ordering, weights, ranking, mu=mu, nu=nu, rule=rule)
    if k is not None:
        plan = plan.restrict(k)
    return plan


# -- scoring ----------------------------------------------------------------

Decisions = Union[Sequence[ChannelDecision], np.ndarray]


def aggregate(inputs: Union[ProbeFeatures, Decisions], plan: AggregationPlan) -> float:
    """Final score ``sum_w input_w * alpha_w``; missing channels contribute 0."""
    if isinstance(inputs, ProbeFeatures):
        if plan.ordering != "ad":
            raise ValueError("flip-rate features can only be aggregated by an 'ad' plan")
        return float(inputs.filled(0.0) @ plan.weights)
    if plan.ordering != "da":
        raise ValueError("channel decisions can only be aggregated by a 'da' plan")
    if isinstance(inputs, np.ndarray):
        return float(np.nan_to_num(inputs, nan=0.0) @ plan.weights)
    return float(sum(plan.weights[d.pattern] * d.delta for d in inputs))


def input_matrix(observations: Sequence[ChannelObservations], pair: ChannelPair, ordering: str,
                 rule: str = "gamma_crit") -> np.ndarray:
    """Rows of features (``ad``) or votes (``da``), zero where undefined."""
    ordering = _norm(ordering, ORDERINGS, "ordering")
    if ordering == "ad":
        rows = [probe_features(o).filled(0.0) for o in observations]
    else:
        rows = [np.nan_to_num(decision_vector(o, pair, rule), nan=0.0) for o in observations]
    return np.vstack(rows) if rows else np.zeros((0, pair.config.M))


@dataclass(frozen=True)
class ScoreEvaluation:
    threshold: float
    p_err: float
    higher_is_fake: bool
    p_miss: float
    p_fa: float


def evaluate_scores(scores_originals: Sequence[float], scores_fakes: Sequence[float]) -> ScoreEvaluation:
    """Minimal average error of a single threshold on final scores.

    Candidate thresholds are ``-inf``, ``+inf`` and the midpoints of adjacent
    distinct scores; both directions are scanned. Ties prefer the smallest
    threshold, then the direction where higher scores mean original.
    """
    o = np.sort(np.asarray(scores_originals, dtype=np.float64))
    f = np.sort(np.asarray(scores_fakes, dtype=np.float64))
    n0, n1 = o.size, f.size
    if n0 == 0 or n1 == 0:
        raise ValueError("both score lists must be non-empty")
    u = np.unique(np.concatenate([o, f]))
    cands = np.concatenate([[-np.inf], (u[:-1] + u[1:]) / 2.0, [np.inf]])

    # higher = fake: fake iff s > t
    miss_hf = n0 - np.searchsorted(o, cands, side="right")
    fa_hf = np.searchsorted(f, cands, side="right")
    # higher = original: fake iff s < t
    miss_ho = np.searchsorted(o, cands, side="left")
    fa_ho = n1 - np.searchsorted(f, cands, side="left")

    # exact comparison of (miss/n0 + fa/n1) via integers
    err_hf = miss_hf * n1 + fa_hf * n0
    err_ho = miss_ho * n1 + fa_ho * n0
    best = min(err_hf.min(), err_ho.min())
    i_ho = np.flatnonzero(err_ho == best)
    i_hf = np.flatnonzero(err_hf == best)
    i = min(i_ho[0] if i_ho.size else len(cands), i_hf[0] if i_hf.size else len(cands))
    higher_is_fake = not (i_ho.size and i_ho[0] == i)
    miss, fa = (miss_hf[i], fa_hf[i]) if higher_is_fake else (miss_ho[i], fa_ho[i])
    return ScoreEvaluation(
        threshold=float(cands[i]), p_err=float(0.5 * (miss / n0 + fa / n1)),
        higher_is_fake=bool(higher_is_fake), p_miss=float(miss / n0), p_fa=float(fa / n1),
    )


@dataclass(frozen=True)
class SweepPoint:
    strategy: str
    ordering: str
    k: int
    threshold: float
    p_err: float


def best_k_sweep(plan: AggregationPlan, k_values: Sequence[int],
                 originals: Sequence[ChannelObservations], fakes: Sequence[ChannelObservations],
                 pair: ChannelPair) -> list[SweepPoint]:
    """Min average error of the top-``k`` channels of ``plan`` for every ``k``."""
    X0 = input_matrix(originals, pair, plan.ordering, plan.rule)
    X1 = input_matrix(fakes, pair, plan.ordering, plan.rule)
    return sweep_matrices(plan, k_values, X0, X1)


def sweep_matrices(plan: AggregationPlan, k_values: Sequence[int], X0: np.ndarray, X1: np.ndarray) -> list[SweepPoint]:
    out = []
    n_elig = len(plan.ranking)
    for k in k_values:
        if k > n_elig:
            warnings.warn(f"k={k} exceeds the {n_elig} eligible channels; truncated", stacklevel=2)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            w = plan.restrict(min(k, n_elig)).weights
        ev = evaluate_scores(X0 @ w, X1 @ w)
        out.append(SweepPoint(plan.strategy, plan.ordering, int(min(k, n_elig)), ev.threshold, ev.p_err))
    return out


# -- verdicts ---------------------------------------------------------------

@dataclass(frozen=True)
class ChannelDiagnostic:
    pattern: int
    D: int
    L: int
    p_hat: float
    p_b: float
    q_b: float
    gamma_crit: float
    delta: Optional[int]
    weight: float
    np_statistic: float


@dataclass(frozen=True)
class VerdictReport:
    score: float
    threshold: float
    higher_is_fake: bool
    verdict: str
    strategy: str
    ordering: str
    per_channel: list[ChannelDiagnostic]

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in ("score", "threshold", "higher_is_fake", "verdict", "strategy", "ordering")}
        d["per_channel"] = [vars(c) for c in self.per_channel]
        return d


def authenticate(obs: ChannelObservations, plan: AggregationPlan, pair: ChannelPair,
                 threshold: float, higher_is_fake: bool = True) -> VerdictReport:
    """Score one (possibly fused) observation and compare with ``threshold``."""
    feats = probe_features(obs)
    votes = decision_vector(obs, pair, plan.rule)
    score = aggregate(feats if plan.ordering == "ad" else votes, plan)
    is_fake = score > threshold if higher_is_fake else score < threshold
    diags = []
    for w in np.flatnonzero(obs.L > 0):
        p_hat = float(feats.p_hat[w])
        p_b, q_b = float(pair.c0.p[w]), float(pair.c1.p[w])
        diags.append(ChannelDiagnostic(
            pattern=int(w), D=int(obs.D[w]), L=int(obs.L[w]), p_hat=p_hat, p_b=p_b, q_b=q_b,
            gamma_crit=float(pair.gamma_crit[w]),
            delta=None if np.isnan(votes[w]) else int(votes[w]),
            weight=float(plan.weights[w]),
            np_statistic=float(np_statistic(p_hat, p_b, q_b)),
        ))
    return VerdictReport(
        score=score, threshold=float(threshold), higher_is_fake=higher_is_fake,
        verdict="fake" if is_fake else "original", strategy=plan.strategy, ordering=plan.ordering,
        per_channel=diags,
    )
