"""Gray-level preprocessing of captured probes: histogram matching and Otsu binarization.

Both operate on 256 uniform bins, bin ``i`` holding values that round to
``i/255``. Dark pixels become ``1`` (black).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

from .io import PathLike, read_binary, read_gray
from .types import BinaryImage, GrayImage

N_BINS = 256


def to_bins(values: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(np.asarray(values) * (N_BINS - 1)), 0, N_BINS - 1).astype(np.int64)


def histogram(image: GrayImage) -> np.ndarray:
    return np.bincount(to_bins(image.values).ravel(), minlength=N_BINS)


def histogram_match(probe: GrayImage, reference: GrayImage) -> GrayImage:
    """Map probe levels so their histogram follows the reference's.

    Each probe bin goes to the smallest reference bin whose cumulative count
    fraction reaches the probe bin's cumulative fraction.
    """
    if probe.values.size == 0 or reference.values.size == 0:
        raise ValueError("histogram matching needs non-empty images")
    bins = to_bins(probe.values)
    hp = np.bincount(bins.ravel(), minlength=N_BINS)
    if np.count_nonzero(hp) < 2:
        warnings.warn("probe is constant; histogram matching left it unchanged", stacklevel=2)
        return probe
    hr = histogram(reference)
    cp, cr = np.cumsum(hp), np.cumsum(hr)
    n_p, n_r = int(cp[-1]), int(cr[-1])
    # smallest j with cr[j]/n_r >= cp[i]/n_p, compared exactly in integers
    lut = np.searchsorted(cr * n_p, cp * n_r, side="left")
    lut = np.minimum(lut, N_BINS - 1)
    return GrayImage(probe.width, probe.height, lut[bins] / (N_BINS - 1))


def _between_class_objective(hist: np.ndarray) -> list[Fraction]:
    """Exact between-class variance (up to a constant factor) for every cut ``t``.

    Class 0 holds bins ``<= t``. The objective ``(N*S0 - n0*S)^2 / (n0*n1)``
    is proportional to ``w0 * w1 * (mu0 - mu1)^2``; empty classes score 0.
    """
    counts = [int(c) for c in hist]
    N = sum(counts)
    S = sum(i * c for i, c in enumerate(counts))
    out = []
    n0 = s0 = 0
    for t, c in enumerate(counts):
        n0 += c
        s0 += t * c
        n1 = N - n0
        if n0 == 0 or n1 == 0:
            out.append(Fraction(0))
        else:
            out.append(Fraction((N * s0 - n0 * S) ** 2, n0 * n1))
    return out


def otsu_threshold(image: GrayImage) -> int:
    """Bin index maximizing between-class variance; the lowest index wins ties."""
    scores = _between_class_objective(histogram(image))
    best = max(scores)
    if best == 0:
        raise ValueError("image is constant; Otsu's method has no valid split")
    return scores.index(best)


def otsu_binarize(image: GrayImage) -> tuple[BinaryImage, float]:
    """Binarize with Otsu's threshold: values above it are white (0), the rest black (1)."""
    if image.values.size == 0:
        raise ValueError("cannot binarize an empty image")
    t = otsu_threshold(image)
    bits = (to_bins(image.as_array()) <= t).astype(np.uint8)
    return BinaryImage(image.width, image.height, bits), t / (N_BINS - 1)


@dataclass(frozen=True)
class PreprocessSpec:
    reference: GrayImage
    bins: int = N_BINS

    def __post_init__(self) -> None:
        self.reference.check()
        if self.bins != N_BINS:
            raise ValueError(f"only {N_BINS} histogram bins are supported")


def preprocess_probe(probe: GrayImage, spec: PreprocessSpec | None) -> BinaryImage:
    """Histogram-match (when a reference is given) then Otsu-binarize."""
    if spec is not None:
        probe = histogram_match(probe, spec.reference)
    return otsu_binarize(probe)[0]


def ingest_triple(template_path: PathLike, probe_path: PathLike,
                  spec: PreprocessSpec | None) -> tuple[BinaryImage, BinaryImage]:
    """Load a binary template and a gray probe, returning the binarized pair."""
    for path in (template_path, probe_path):
        if not Path(path).exists():
            raise FileNotFoundError(f"no such file: {path}")
    template = read_binary(template_path)
    probe = preprocess_probe(read_gray(probe_path), spec)
    if probe.shape != template.shape:
        raise ValueError(
            f"probe {probe_path} is {probe.width}x{probe.height} but template "
            f"{template_path} is {template.width}x{template.height}"
        )
    return template, probe
