"""Domain value objects shared by every stage of the pipeline.

Conventions used throughout the package:

* Binary pixels use ``1 = black`` and ``0 = white``.
* Images are stored as 2-D numpy arrays of shape ``(height, width)`` whose
  flattened row-major order is the ``bits``/``values`` sequence.
* A pattern identity ``omega`` is an integer in ``[0, 2**(h*h))``.
* Probe features that cannot be estimated (no occurrence of the pattern)
  are ``NaN``; they are never replaced by zero.

All objects are frozen; arrays are flagged read-only after construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

DEFAULT_PROB_FLOOR = 1e-6
MAX_PATTERN_SIDE = 5


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ModelConfig:
    """Pattern geometry and probability floor.

    ``h`` is the (odd) side of the square neighbourhood, ``prob_floor`` the
    clamp ``eps`` applied to every codebook probability.
    """

    h: int = 3
    prob_floor: float = DEFAULT_PROB_FLOOR

    def __post_init__(self) -> None:
        if not isinstance(self.h, (int, np.integer)) or self.h < 1 or self.h % 2 == 0:
            raise ValueError(f"pattern side h must be a positive odd integer, got {self.h!r}")
        if self.h > MAX_PATTERN_SIDE:
            raise ValueError(f"pattern side h={self.h} exceeds the supported maximum {MAX_PATTERN_SIDE}")
        if not 0.0 < self.prob_floor < 0.5:
            raise ValueError(f"prob_floor must lie in (0, 0.5), got {self.prob_floor!r}")

    @property
    def M(self) -> int:
        """Number of distinct patterns, ``2 ** (h*h)``."""
        return 1 << (self.h * self.h)

    @property
    def radius(self) -> int:
        return self.h // 2

    def clamp(self, p):
        return np.clip(p, self.prob_floor, 1.0 - self.prob_floor)


@dataclass(frozen=True)
class BinaryImage:
    """Binarized image; ``bits`` has shape ``(height, width)``, dtype uint8."""

    width: int
    height: int
    bits: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "bits", _frozen(np.asarray(self.bits)))

    @classmethod
    def from_array(cls, arr) -> "BinaryImage":
        arr = np.asarray(arr)
        if arr.ndim != 2:
            raise ValueError(f"expected a 2-D array, got shape {arr.shape}")
        img = cls(width=arr.shape[1], height=arr.shape[0], bits=arr.astype(np.uint8))
        img.check()
        return img

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    def as_array(self) -> np.ndarray:
        """Bits as a ``(height, width)`` array (reshaping a flat sequence if needed)."""
        return self.bits.reshape(self.height, self.width)

    def check(self) -> None:
        problem = validate(self)
        if problem is not None:
            raise ValueError(problem)


@dataclass(frozen=True)
class GrayImage:
    """Gray-level image with values in ``[0, 1]``; shape ``(height, width)``."""

    width: int
    height: int
    values: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", _frozen(np.asarray(self.values, dtype=np.float64)))

    @classmethod
    def from_array(cls, arr) -> "GrayImage":
        arr = np.asarray(arr, dtype=np.float64)
        if arr.ndim != 2:
            raise ValueError(f"expected a 2-D array, got shape {arr.shape}")
        img = cls(width=arr.shape[1], height=arr.shape[0], values=arr)
        img.check()
        return img

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    def as_array(self) -> np.ndarray:
        return self.values.reshape(self.height, self.width)

    def check(self) -> None:
        problem = validate(self)
        if problem is not None:
            raise ValueError(problem)


@dataclass(frozen=True)
class Codebook:
    """Per-pattern bit-flip law with the counts it was estimated from.

    ``occurrences[w]`` and ``flips[w]`` are pooled counts; ``p[w]`` is the
    clamped flip probability. Codebooks describing a generating law (rather
    than an estimate) carry zero counts.
    """

    config: ModelConfig
    occurrences: np.ndarray
    flips: np.ndarray
    p: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "occurrences", _frozen(np.asarray(self.occurrences, dtype=np.int64)))
        object.__setattr__(self, "flips", _frozen(np.asarray(self.flips, dtype=np.int64)))
        object.__setattr__(self, "p", _frozen(np.asarray(self.p, dtype=np.float64)))

    @classmethod
    def from_counts(cls, config: ModelConfig, occurrences, flips) -> "Codebook":
        """Maximum-likelihood estimate ``flips/occurrences``, clamped.

        Channels never observed get ``p = eps``.
        """
        occ = np.asarray(occurrences, dtype=np.int64)
        fl = np.asarray(flips, dtype=np.int64)
        rate = np.divide(fl, occ, out=np.zeros(occ.shape, dtype=np.float64), where=occ > 0)
        cb = cls(config, occ, fl, config.clamp(rate))
        cb.check()
        return cb

    @classmethod
    def from_probabilities(cls, config: ModelConfig, p) -> "Codebook":
        """A generating law with no supporting counts; ``p`` is clamped."""
        p = config.clamp(np.asarray(p, dtype=np.float64))
        zeros = np.zeros(config.M, dtype=np.int64)
        cb = cls(config, zeros, zeros, p)
        cb.check()
        return cb

    @property
    def entries(self) -> list[tuple[int, int, float]]:
        return [(int(o), int(f), float(q)) for o, f, q in zip(self.occurrences, self.flips, self.p)]

    def check(self) -> None:
        problem = validate(self)
        if problem is not None:
            raise ValueError(problem)


@dataclass(frozen=True)
class ChannelObservations:
    """Per-pattern flip counts ``D`` and occurrence counts ``L``."""

    config: ModelConfig
    D: np.ndarray
    L: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "D", _frozen(np.asarray(self.D, dtype=np.int64)))
        object.__setattr__(self, "L", _frozen(np.asarray(self.L, dtype=np.int64)))
        M = self.config.M
        if self.D.shape != (M,) or self.L.shape != (M,):
            raise ValueError(f"observations must have length M={M}")
        if np.any(self.D < 0) or np.any(self.D > self.L):
            bad = int(np.flatnonzero((self.D < 0) | (self.D > self.L))[0])
            raise ValueError(f"flip count exceeds occurrences (or is negative) at pattern {bad}")

    @property
    def total(self) -> int:
        return int(self.L.sum())

    def __add__(self, other: "ChannelObservations") -> "ChannelObservations":
        if other.config != self.config:
            raise ValueError("cannot combine observations with different model configs")
        return ChannelObservations(self.config, self.D + other.D, self.L + other.L)


@dataclass(frozen=True)
class ProbeFeatures:
    """Empirical flip rates of one probe; ``NaN`` marks unsupported channels."""

    config: ModelConfig
    p_hat: np.ndarray
    support: np.ndarray
    _defined: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "p_hat", _frozen(np.asarray(self.p_hat, dtype=np.float64)))
        object.__setattr__(self, "support", _frozen(np.asarray(self.support, dtype=np.int64)))
        object.__setattr__(self, "_defined", _frozen(~np.isnan(self.p_hat)))

    @property
    def defined(self) -> np.ndarray:
        """Boolean mask of channels that carry a feature value."""
        return self._defined

    def filled(self, value: float = 0.0) -> np.ndarray:
        """Feature vector with undefined channels replaced by ``value``."""
        return np.where(self._defined, self.p_hat, value)


Validatable = Union[BinaryImage, GrayImage, Codebook]


def validate(obj: Validatable) -> Optional[str]:
    """Return a description of the first violated invariant, or ``None``."""
    if isinstance(obj, BinaryImage):
        return _validate_grid(obj.width, obj.height, obj.bits, binary=True)
    if isinstance(obj, GrayImage):
        return _validate_grid(obj.width, obj.height, obj.values, binary=False)
    if isinstance(obj, Codebook):
        M = obj.config.M
        for name in ("occurrences", "flips", "p"):
            if getattr(obj, name).shape != (M,):
                return f"codebook {name} length mismatch: expected {M}, got {getattr(obj, name).size}"
        if np.any(obj.occurrences < 0) or np.any(obj.flips < 0):
            return "codebook counts must be nonnegative"
        over = np.flatnonzero(obj.flips > obj.occurrences)
        if over.size:
            return f"flips exceed occurrences at pattern {int(over[0])}"
        eps = obj.config.prob_floor
        out = np.flatnonzero(~((obj.p >= eps) & (obj.p <= 1.0 - eps)))
        if out.size:
            return f"probability outside [{eps}, {1 - eps}] at pattern {int(out[0])}"
        return None
    raise TypeError(f"cannot validate object of type {type(obj).__name__}")


def _validate_grid(width, height, data: np.ndarray, binary: bool) -> Optional[str]:
    if not (isinstance(width, (int, np.integer)) and width > 0):
        return f"width must be a positive integer, got {width!r}"
    if not (isinstance(height, (int, np.integer)) and height > 0):
        return f"height must be a positive integer, got {height!r}"
    if data.size != width * height:
        return f"length mismatch: expected {width * height} values for {width}x{height}, got {data.size}"
    if binary:
        if not np.all((data == 0) | (data == 1)):
            return "binary image contains values other than 0 and 1"
    elif not np.all((data >= 0.0) & (data <= 1.0)):
        return "gray image contains values outside [0, 1]"
    return None
