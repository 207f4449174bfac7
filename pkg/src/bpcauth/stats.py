"""Per-channel statistics for the binomial flip-count model.

For one channel the flip count ``D`` of a probe is ``Binom(L, P_b)`` for an
original and ``Binom(L, Q_b)`` for a fake. This module provides the exact
error probabilities of the Hamming-distance test ``D > gamma*L``, the
error-minimizing integer cut, the closed-form equal-likelihood boundary,
Bernoulli cross-entropy / KL helpers, the PLL score and the normalized
Neyman-Pearson log-likelihood ratio.

All logarithms are natural (scores are in nats).
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass
from functools import lru_cache
from typing import Iterable, Sequence, Union

import numpy as np
from scipy.special import rel_entr, xlog1py, xlogy

from .types import ChannelObservations, Codebook, ProbeFeatures

ArrayLike = Union[float, np.ndarray]

# relative slack used to treat two floating error values as a tie
_TIE_RTOL = 1e-12


class DegenerateChannelError(ValueError):
    """Raised when a channel has identical original and fake laws."""


def binomial_log_pmf(L: int, p: float) -> np.ndarray:
    """``log P(D = k)`` for ``k = 0..L`` by the ratio recurrence in log space."""
    if L < 0:
        raise ValueError(f"L must be nonnegative, got {L}")
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"probability must lie in [0, 1], got {p}")
    out = np.full(L + 1, -np.inf)
    if p == 0.0:
        out[0] = 0.0
        return out
    if p == 1.0:
        out[L] = 0.0
        return out
    k = np.arange(L, dtype=np.float64)
    steps = np.log(L - k) - np.log(k + 1.0) + (math.log(p) - math.log1p(-p))
    out[0] = L * math.log1p(-p)
    out[1:] = out[0] + np.cumsum(steps)
    return out


def _log_lower_tails(logpmf: np.ndarray) -> np.ndarray:
    """``log P(D <= k)`` for every k."""
    return np.logaddexp.accumulate(logpmf)


def _log_upper_tails(logpmf: np.ndarray) -> np.ndarray:
    """``log P(D > k)`` for every k (the last entry is ``-inf``)."""
    out = np.full(logpmf.shape, -np.inf)
    out[:-1] = np.logaddexp.accumulate(logpmf[::-1])[::-1][1:]
    return out


def threshold_cut(gamma: float, L: int) -> int:
    """Integer cut ``floor(gamma*L)``, robust to ``gamma = k/L`` round-off."""
    if not 0.0 <= gamma <= 1.0:
        raise ValueError(f"gamma must lie in [0, 1], got {gamma}")
    return min(L, int(math.floor(gamma * L + 1e-9)))


def p_miss(gamma: float, L: int, p_b: float) -> float:
    """Probability that an original (flip rate ``p_b``) has ``D > gamma*L``."""
    if L < 1:
        raise ValueError(f"L must be a positive integer, got {L}")
    k = threshold_cut(gamma, L)
    if k >= L:
        return 0.0
    logpmf = binomial_log_pmf(L, p_b)
    return float(np.exp(np.logaddexp.reduce(logpmf[k + 1:])))


def p_false_accept(gamma: float, L: int, q_b: float) -> float:
    """Probability that a fake (flip rate ``q_b``) has ``D <= gamma*L``."""
    if L < 1:
        raise ValueError(f"L must be a positive integer, got {L}")
    k = threshold_cut(gamma, L)
    logpmf = binomial_log_pmf(L, q_b)
    return float(np.exp(np.logaddexp.reduce(logpmf[:k + 1])))


@dataclass(frozen=True)
class ChannelErrorProfile:
    """Error summary of the best Hamming test on one channel.

    ``fake_above`` is True when the test votes fake for ``D > cut`` (the usual
    ``p_b <= q_b`` case) and False for the mirrored test ``D < cut``.
    ``gamma_opt = cut / L``.
    """

    pattern: int
    p_b: float
    q_b: float
    L: int
    cut: int
    fake_above: bool
    gamma_opt: float
    gamma_crit: float
    p_miss: float
    p_fa: float
    p_err: float

    @property
    def informative(self) -> bool:
        return self.p_b != self.q_b


def _argmin_first(log_err: np.ndarray) -> int:
    best = log_err.min()
    if best == -np.inf:
        return int(np.flatnonzero(log_err == -np.inf)[0])
    return int(np.flatnonzero(log_err <= best + _TIE_RTOL)[0])


@lru_cache(maxsize=65536)
def _optimal_cut(L: int, p_b: float, q_b: float) -> tuple[int, bool, float, float]:
    lp = binomial_log_pmf(L, p_b)
    lq = binomial_log_pmf(L, q_b)
    if p_b <= q_b:
        # vote fake iff D > k: miss = P_p(D > k), false accept = P_q(D <= k)
        log_miss = _log_upper_tails(lp)
        log_fa = _log_lower_tails(lq)
        fake_above = True
    else:
        # mirrored: vote fake iff D < k: miss = P_p(D <= k-1), false accept = P_q(D >= k)
        log_miss = np.concatenate(([-np.inf], _log_lower_tails(lp)[:-1]))
        log_fa = np.concatenate(([0.0], _log_upper_tails(lq)[:-1]))
        fake_above = False
    log_err = np.logaddexp(log_miss, log_fa) - math.log(2.0)
    k = _argmin_first(log_err)
    return k, fake_above, float(np.exp(log_miss[k])), float(np.exp(log_fa[k]))


def optimal_threshold(L: int, p_b: float, q_b: float, pattern: int = -1) -> ChannelErrorProfile:
    """Exhaustive search of the integer cut minimizing ``(P_m + P_fa) / 2``.

    Ties go to the smallest cut. When ``p_b > q_b`` the mirrored test
    (fake iff ``D < cut``) is searched instead.
    """
    if L < 1:
        raise ValueError(f"L must be a positive integer, got {L}")
    p_b, q_b = float(p_b), float(q_b)
    k, fake_above, pm, pfa = _optimal_cut(int(L), p_b, q_b)
    try:
        gc = gamma_crit(p_b, q_b)
    except (DegenerateChannelError, ValueError):
        gc = math.nan
    return ChannelErrorProfile(
        pattern=pattern, p_b=p_b, q_b=q_b, L=int(L), cut=k, fake_above=fake_above,
        gamma_opt=k / L, gamma_crit=gc, p_miss=pm, p_fa=pfa, p_err=0.5 * (pm + pfa),
    )


def gamma_crit(p_b: float, q_b: float) -> float:
    """Flip rate at which both channel likelihoods are equal.

    Independent of ``L``; lies strictly between ``p_b`` and ``q_b``.
    """
    if not (0.0 < p_b < 1.0 and 0.0 < q_b < 1.0):
        raise ValueError(f"flip probabilities must lie in (0, 1), got {p_b}, {q_b}")
    if p_b == q_b:
        raise DegenerateChannelError(f"gamma_crit undefined for identical laws p_b = q_b = {p_b}")
    if p_b + q_b == 1.0:
        # complementary laws: the two log-ratios are equal, boundary is 1/2
        return 0.5
    a = math.log(p_b) - math.log(q_b)
    b = math.log1p(-p_b) - math.log1p(-q_b)
    return b / (b - a)


def _check_open_unit(q: np.ndarray, name: str) -> None:
    if np.any(~((q > 0.0) & (q < 1.0))):
        raise ValueError(f"{name} must lie strictly inside (0, 1)")


def _check_closed_unit(p: np.ndarray, name: str) -> None:
    if np.any(~((p >= 0.0) & (p <= 1.0))):
        raise ValueError(f"{name} must lie in [0, 1]")


def _scalar(x: np.ndarray) -> ArrayLike:
    return float(x) if np.ndim(x) == 0 else x


def binary_entropy(p: ArrayLike) -> ArrayLike:
    p = np.asarray(p, dtype=np.float64)
    _check_closed_unit(p, "p")
    return _scalar(-(xlogy(p, p) + xlogy(1.0 - p, 1.0 - p)))


def cross_entropy_bernoulli(p: ArrayLike, q: ArrayLike) -> ArrayLike:
    """``H(p; q) = -p log q - (1-p) log(1-q)`` in nats."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    _check_closed_unit(p, "p")
    _check_open_unit(q, "q")
    return _scalar(-(xlogy(p, q) + xlog1py(1.0 - p, -q)))


def kl_bernoulli(p: ArrayLike, q: ArrayLike) -> ArrayLike:
    """``KL(Bern(p) || Bern(q))`` in nats, with ``0 log 0 = 0``."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    _check_closed_unit(p, "p")
    _check_open_unit(q, "q")
    return _scalar(rel_entr(p, q) + rel_entr(1.0 - p, 1.0 - q))


def log_likelihood(obs: ChannelObservations, codebook: Codebook) -> float:
    """Direct log-likelihood ``sum D log p + (L-D) log(1-p)`` of a probe."""
    if obs.config != codebook.config:
        raise ValueError("observations and codebook use different model configs")
    p = codebook.p
    return float(np.sum(obs.D * np.log(p) + (obs.L - obs.D) * np.log1p(-p)))


def pll_score(features: ProbeFeatures, codebook: Codebook) -> float:
    """Posterior log-likelihood: ``-sum_w L_w * H(p_hat_w; p_w)`` over defined channels."""
    if features.config != codebook.config:
        raise ValueError("features and codebook use different model configs")
    mask = features.defined
    h = cross_entropy_bernoulli(features.p_hat[mask], codebook.p[mask])
    return float(-np.sum(features.support[mask] * h))


def np_statistic(p_hat: ArrayLike, p_b: ArrayLike, q_b: ArrayLike) -> ArrayLike:
    """Cross-entropy difference ``H(p_hat; q_b) - H(p_hat; p_b)``.

    Positive values favour the original law.
    """
    return _scalar(
        np.asarray(cross_entropy_bernoulli(p_hat, q_b)) - np.asarray(cross_entropy_bernoulli(p_hat, p_b))
    )


def np_log_ratio(D: ArrayLike, L: ArrayLike, p_b: ArrayLike, q_b: ArrayLike) -> ArrayLike:
    """Normalized log-likelihood ratio ``(1/L) log R`` of original vs fake."""
    D = np.asarray(D, dtype=np.float64)
    L = np.asarray(L, dtype=np.float64)
    if np.any(L < 1) or np.any(D < 0) or np.any(D > L):
        raise ValueError("need 0 <= D <= L and L >= 1")
    p_b = np.asarray(p_b, dtype=np.float64)
    q_b = np.asarray(q_b, dtype=np.float64)
    _check_open_unit(p_b, "p_b")
    _check_open_unit(q_b, "q_b")
    a = np.log(p_b) - np.log(q_b)
    b = np.log1p(-p_b) - np.log1p(-q_b)
    return _scalar((D * a + (L - D) * b) / L)


def rho_for_gamma(gamma: float, L: int, p_b: float, q_b: float) -> float:
    """``log rho`` making the likelihood-ratio test match the cut ``gamma``.

    Returns ``L * (KL(gamma || q_b) - KL(gamma || p_b))``; requires ``p_b <= q_b``.
    """
    if p_b > q_b:
        raise ValueError(f"calibration requires p_b <= q_b, got p_b={p_b} > q_b={q_b}")
    if not 0.0 < gamma < 1.0:
        raise ValueError(f"gamma must lie in (0, 1), got {gamma}")
    return float(L * (kl_bernoulli(gamma, q_b) - kl_bernoulli(gamma, p_b)))


def channel_profiles(c0: Codebook, c1: Codebook, L: Union[int, Sequence[int], np.ndarray]) -> list[ChannelErrorProfile]:
    """Error profile of every channel at support ``L`` (scalar or per-channel)."""
    if c0.config != c1.config:
        raise ValueError("codebooks use different model configs")
    M = c0.config.M
    Ls = np.broadcast_to(np.asarray(L, dtype=np.int64), (M,))
    return [
        optimal_threshold(max(int(Ls[w]), 1), float(c0.p[w]), float(c1.p[w]), pattern=w)
        for w in range(M)
    ]


PROFILE_COLUMNS = ("pattern_id", "p_b", "q_b", "L", "gamma_crit", "gamma_opt", "p_miss", "p_fa", "p_err")
PROFILE_SCHEMA = "# bpcauth channel-profiles v1"


def profiles_to_csv(profiles: Iterable[ChannelErrorProfile]) -> str:
    buf = io.StringIO()
    buf.write(PROFILE_SCHEMA + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(PROFILE_COLUMNS)
    for pr in profiles:
        d = asdict(pr)
        writer.writerow([pr.pattern] + [repr(float(d[c])) if isinstance(d[c], float) else d[c]
                                        for c in PROFILE_COLUMNS[1:]])
    return buf.getvalue()
