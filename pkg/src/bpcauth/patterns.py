"""Binary pattern-based channel mechanics.

Every interior pixel of a template (one whose full ``h x h`` neighbourhood
lies inside the image) is assigned to the channel given by the pattern of
that neighbourhood. Border pixels are discarded. Neighbourhoods are encoded
row-major with the top-left bit most significant, so for ``h = 3`` the
centre pixel carries weight ``2**4``.
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

from .types import BinaryImage, ChannelObservations, Codebook, ModelConfig, ProbeFeatures


def encode_pattern(block) -> int:
    block = np.asarray(block)
    if block.ndim != 2 or block.shape[0] != block.shape[1] or block.shape[0] % 2 == 0:
        raise ValueError(f"pattern block must be square with odd side, got shape {block.shape}")
    if not np.all((block == 0) | (block == 1)):
        raise ValueError("pattern block must contain only 0 and 1")
    value = 0
    for bit in block.ravel():
        value = (value << 1) | int(bit)
    return value


def decode_pattern(pattern_id: int, h: int = 3) -> np.ndarray:
    """Inverse of :func:`encode_pattern`."""
    n = h * h
    if not 0 <= pattern_id < (1 << n):
        raise ValueError(f"pattern id {pattern_id} out of range for h={h}")
    bits = [(pattern_id >> (n - 1 - i)) & 1 for i in range(n)]
    return np.array(bits, dtype=np.uint8).reshape(h, h)


def pattern_map(template: BinaryImage, config: ModelConfig) -> np.ndarray:
    """Pattern id of every interior pixel, shape ``(H-h+1, W-h+1)``."""
    t = template.as_array().astype(np.int64)
    h = config.h
    H, W = t.shape
    if H < h or W < h:
        return np.zeros((max(H - h + 1, 0), max(W - h + 1, 0)), dtype=np.int64)
    ih, iw = H - h + 1, W - h + 1
    ids = np.zeros((ih, iw), dtype=np.int64)
    for r in range(h):
        for c in range(h):
            ids = (ids << 1) | t[r:r + ih, c:c + iw]
    return ids


def interior(image: BinaryImage, config: ModelConfig) -> np.ndarray:
    """The interior pixels of ``image`` (border of width ``h//2`` removed)."""
    r = config.radius
    a = image.as_array()
    return a[r:a.shape[0] - r, r:a.shape[1] - r]


def extract_channels(template: BinaryImage, probe: BinaryImage, config: ModelConfig) -> ChannelObservations:
    """Per-pattern flip and occurrence counts for one template/probe pair."""
    if template.shape != probe.shape:
        raise ValueError(
            f"template and probe dimensions differ: {template.width}x{template.height} "
            f"vs {probe.width}x{probe.height}"
        )
    template.check()
    probe.check()
    ids = pattern_map(template, config).ravel()
    flips = (interior(template, config) ^ interior(probe, config)).ravel()
    L = np.bincount(ids, minlength=config.M)
    D = np.bincount(ids, weights=flips, minlength=config.M).astype(np.int64)
    return ChannelObservations(config, D, L)


def pool(observations: Iterable[ChannelObservations]) -> ChannelObservations:
    """Sum counts over several observations (order-independent)."""
    it = iter(observations)
    try:
        total = next(it)
    except StopIteration:
        raise ValueError("cannot pool an empty collection of observations") from None
    for obs in it:
        total = total + obs
    return total


def estimate_codebook(pairs: Sequence[tuple[BinaryImage, BinaryImage]], config: ModelConfig) -> Codebook:
    """Pool counts over all ``(template, probe)`` pairs, then divide and clamp."""
    if len(pairs) == 0:
        raise ValueError("estimate_codebook needs at least one (template, probe) pair")
    obs = pool(extract_channels(t, p, config) for t, p in pairs)
    return codebook_from_observations(obs)


def codebook_from_observations(obs: ChannelObservations) -> Codebook:
    return Codebook.from_counts(obs.config, obs.L, obs.D)


def probe_features(obs: ChannelObservations, config: ModelConfig | None = None) -> ProbeFeatures:
    """Empirical flip rate ``D/L`` per channel; ``NaN`` where ``L = 0``."""
    if config is not None and config != obs.config:
        raise ValueError("observations were extracted with a different model config")
    p_hat = np.full(obs.config.M, np.nan)
    seen = obs.L > 0
    p_hat[seen] = obs.D[seen] / obs.L[seen]
    return ProbeFeatures(obs.config, p_hat, obs.L)


def fuse_multishot(shots: Sequence[ChannelObservations]) -> ChannelObservations:
    """Fuse several captures of one printed code by summing their counts.

    Real captures of the same print are correlated; summing treats them as
    independent evidence.
    """
    if len(shots) == 0:
        raise ValueError("fuse_multishot needs at least one shot")
    config = shots[0].config
    for s in shots[1:]:
        if s.config != config:
            raise ValueError("all shots must share the same model config")
    return pool(shots)
