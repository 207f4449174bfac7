"""Synthetic copy-detection-pattern generator following the pattern channel model.

Randomness comes from numpy's counter-based ``Philox`` bit generator. Every
image draws from its own stream, keyed by ``(seed, template index, class,
shot)`` through :class:`numpy.random.SeedSequence`, so any image can be
regenerated alone and in any order.

Flips are drawn independently per pixel and per shot. Real captures of one
print are correlated, so simulated multi-shot gains are optimistic.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .patterns import extract_channels, pattern_map
from .stats import optimal_threshold
from .aggregation import evaluate_scores
from .types import BinaryImage, ChannelObservations, Codebook, ModelConfig

ORIGINAL, FAKE, TEMPLATE = 0, 1, 2


def rng_stream(seed: int, *key: int) -> np.random.Generator:
    """Independent Philox stream for ``(seed, *key)``."""
    if seed < 0 or seed >= 2**64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=tuple(key))))


def gen_template(width: int, height: int, seed: int, *key: int) -> BinaryImage:
    """Fair-coin binary template."""
    if width < 1 or height < 1:
        raise ValueError(f"template dimensions must be positive, got {width}x{height}")
    rng = rng_stream(seed, *key)
    return BinaryImage.from_array(rng.integers(0, 2, size=(height, width), dtype=np.uint8))


def simulate_probe(template: BinaryImage, codebook: Codebook, seed: int, *key: int) -> BinaryImage:
    """Flip each interior pixel with the probability of its template pattern.

    Border pixels are copied unchanged.
    """
    template.check()
    config = codebook.config
    rng = rng_stream(seed, *key)
    probe = template.as_array().copy()
    ids = pattern_map(template, config)
    if ids.size:
        flips = rng.random(ids.shape) < codebook.p[ids]
        r = config.radius
        H, W = probe.shape
        probe[r:H - r, r:W - r] ^= flips.astype(np.uint8)
    return BinaryImage.from_array(probe)


# -- reference laws ---------------------------------------------------------

def default_codebooks(config: ModelConfig, seed: int) -> tuple[Codebook, Codebook]:
    """Originals log-uniform in ``[1e-3, 1e-1]``; fakes add an uplift in ``[0.05, 0.3]``.

    Every channel is informative and fakes always flip more.
    """
    rng = rng_stream(seed, 0xC0DE)
    p = np.exp(rng.uniform(np.log(1e-3), np.log(1e-1), size=config.M))
    q = p + rng.uniform(0.05, 0.3, size=config.M)
    return Codebook.from_probabilities(config, p), Codebook.from_probabilities(config, q)


def mixed_codebooks(config: ModelConfig, seed: int, *, strong_fraction: float = 0.1,
                    uplift: tuple[float, float] = (0.005, 0.03), jitter: float = 0.05) -> tuple[Codebook, Codebook]:
    """A harder pair of laws where most channels barely separate the classes.

    Originals are log-uniform in ``[1e-3, 0.3]``. About ``strong_fraction`` of
    the channels, concentrated among the reliable (low flip rate) patterns,
    get an additive fake uplift drawn from ``uplift``. Every other channel's
    fake law is the original one scaled by ``exp(N(0, jitter))``, so it is
    informative only in name. Plain averaging over all channels is then a
    poor detector while channel selection pays off.
    """
    rng = rng_stream(seed, 0xBEEF)
    M = config.M
    p = np.exp(rng.uniform(np.log(1e-3), np.log(0.3), size=M))
    rank = np.argsort(np.argsort(p)) / (M - 1)
    # density 3 (1 - rank)^2 integrates to 1 over rank in [0, 1]
    strong = rng.random(M) < strong_fraction * 3.0 * (1.0 - rank) ** 2
    q = p * np.exp(rng.normal(0.0, jitter, size=M))
    q[strong] = np.minimum(p[strong] + rng.uniform(*uplift, size=int(strong.sum())), 0.45)
    return Codebook.from_probabilities(config, p), Codebook.from_probabilities(config, q)


PRESETS = {"default": default_codebooks, "mixed": mixed_codebooks}


# -- datasets ---------------------------------------------------------------

@dataclass(frozen=True)
class SimSpec:
    width: int
    height: int
    codebook: Codebook
    seed: int
    shots: int = 1

    def __post_init__(self) -> None:
        if self.width < 1 or self.height < 1:
            raise ValueError("simulation dimensions must be positive")
        if self.shots < 1:
            raise ValueError(f"shots must be at least 1, got {self.shots}")
        if self.width < self.codebook.config.h or self.height < self.codebook.config.h:
            raise ValueError("image smaller than the pattern size")


@dataclass(frozen=True)
class SimDataset:
    """Lazily generated set of (template, original shots, fake shots) triples.

    Templates use ``spec_originals.seed``; each class draws its probes from
    its own spec's seed. Every image is a pure function of those seeds and
    its indices.
    """

    spec_originals: SimSpec
    spec_fakes: SimSpec
    n_templates: int
    shots: int

    @property
    def config(self) -> ModelConfig:
        return self.spec_originals.codebook.config

    def template(self, i: int) -> BinaryImage:
        s = self.spec_originals
        return gen_template(s.width, s.height, s.seed, i, TEMPLATE)

    def original(self, i: int, shot: int, template: BinaryImage | None = None) -> BinaryImage:
        s = self.spec_originals
        return simulate_probe(template if template is not None else self.template(i), s.codebook, s.seed, i, ORIGINAL, shot)

    def fake(self, i: int, shot: int, template: BinaryImage | None = None) -> BinaryImage:
        s = self.spec_fakes
        return simulate_probe(template if template is not None else self.template(i), s.codebook, s.seed, i, FAKE, shot)

    def triple(self, i: int) -> tuple[BinaryImage, list[BinaryImage], list[BinaryImage]]:
        t = self.template(i)
        return (t, [self.original(i, s, t) for s in range(self.shots)],
                [self.fake(i, s, t) for s in range(self.shots)])

    def __len__(self) -> int:
        return self.n_templates

    def __iter__(self) -> Iterator[tuple[BinaryImage, list[BinaryImage], list[BinaryImage]]]:
        for i in range(self.n_templates):
            yield self.triple(i)

    def observations(self, i: int) -> tuple[list[ChannelObservations], list[ChannelObservations]]:
        """Per-shot observations of template ``i`` for originals and fakes."""
        t, origs, fakes = self.triple(i)
        cfg = self.config
        return ([extract_channels(t, o, cfg) for o in origs], [extract_channels(t, f, cfg) for f in fakes])


def make_dataset(spec_originals: SimSpec, spec_fakes: SimSpec, n_templates: int,
                 shots: int | None = None) -> SimDataset:
    if (spec_originals.width, spec_originals.height) != (spec_fakes.width, spec_fakes.height):
        raise ValueError("original and fake specs must share image dimensions")
    if spec_originals.codebook.config != spec_fakes.codebook.config:
        raise ValueError("original and fake codebooks must share the pattern size")
    if n_templates < 1:
        raise ValueError(f"n_templates must be positive, got {n_templates}")
    return SimDataset(spec_originals, spec_fakes, n_templates, shots or spec_originals.shots)


# -- per-channel theory vs simulation ---------------------------------------

@dataclass(frozen=True)
class Fig2Row:
    pattern: int
    p_b: float
    q_b: float
    L: int
    theoretical: float
    empirical: float
    empirical_min: float


def fig2_experiment(c0: Codebook, c1: Codebook, L_per_channel: int, n_probes: int,
                    seed: int = 0) -> list[Fig2Row]:
    """Theoretical versus simulated minimal error for every informative channel.

    ``empirical`` applies the theoretical optimal cut to ``n_probes`` simulated
    flip counts per class; ``empirical_min`` re-optimizes the threshold on
    those samples, as one would on a test set.
    """
    if c0.config != c1.config:
        raise ValueError("codebooks use different model configs")
    rows = []
    for w in np.flatnonzero(c0.p != c1.p):
        p, q = float(c0.p[w]), float(c1.p[w])
        prof = optimal_threshold(L_per_channel, p, q, pattern=int(w))
        rng = rng_stream(seed, int(w))
        d0 = rng.binomial(L_per_channel, p, size=n_probes)
        d1 = rng.binomial(L_per_channel, q, size=n_probes)
        if prof.fake_above:
            miss, fa = np.mean(d0 > prof.cut), np.mean(d1 <= prof.cut)
        else:
            miss, fa = np.mean(d0 < prof.cut), np.mean(d1 >= prof.cut)
        rows.append(Fig2Row(
            pattern=int(w), p_b=p, q_b=q, L=L_per_channel, theoretical=prof.p_err,
            empirical=float(0.5 * (miss + fa)),
            empirical_min=evaluate_scores(d0, d1).p_err,
        ))
    return rows
