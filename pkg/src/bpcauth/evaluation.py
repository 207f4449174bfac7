"""Train/test evaluation of every strategy and ordering, single- and multi-shot."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .aggregation import (
    ORDERINGS, STRATEGIES, ChannelPair, LinearClassifier, SweepPoint, build_plan, input_matrix,
    sweep_matrices, train_linear_classifier,
)
from .patterns import codebook_from_observations, fuse_multishot, pool, probe_features
from .stats import channel_profiles
from .types import ChannelObservations, Codebook

DEFAULT_K_VALUES = (1, 2, 3, 4, 6, 8, 12, 16, 24, 32, 48, 64, 96, 128, 192, 256, 384, 512)
MODES = ("single", "multi")


@dataclass(frozen=True)
class TemplateObservations:
    """Per-shot observations of one template for both classes."""

    index: int
    originals: list[ChannelObservations]
    fakes: list[ChannelObservations]

    def mode(self, mode: str) -> tuple[ChannelObservations, ChannelObservations]:
        if mode == "single":
            return self.originals[0], self.fakes[0]
        if mode == "multi":
            return fuse_multishot(self.originals), fuse_multishot(self.fakes)
        raise ValueError(f"unknown shot mode {mode!r}")


def split_indices(indices: Sequence[int], train_fraction: float, seed: int) -> tuple[list[int], list[int]]:
    """Deterministic train/test split from a hash of ``(seed, index)``."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train fraction must lie in (0, 1), got {train_fraction}")
    train, test = [], []
    for i in indices:
        digest = hashlib.sha256(f"{seed}:{i}".encode()).digest()
        u = int.from_bytes(digest[:8], "big") / 2.0**64
        (train if u < train_fraction else test).append(i)
    return train, test


def estimate_reference_codebooks(train: Sequence[TemplateObservations]) -> tuple[Codebook, Codebook]:
    """Codebooks of originals and fakes pooled over every training shot."""
    if not train:
        raise ValueError("empty training split")
    c0 = codebook_from_observations(pool(o for t in train for o in t.originals))
    c1 = codebook_from_observations(pool(f for t in train for f in t.fakes))
    return c0, c1


@dataclass(frozen=True)
class TableCell:
    strategy: str
    ordering: str
    mode: str
    best_k: int
    threshold: float
    p_err: float


@dataclass
class EvaluationResult:
    sweeps: list[SweepPoint]
    sweep_modes: list[str]
    table: list[TableCell]
    classifiers: dict

    def cell(self, strategy: str, ordering: str, mode: str) -> TableCell:
        for c in self.table:
            if (c.strategy, c.ordering, c.mode) == (strategy, ordering, mode):
                return c
        raise KeyError((strategy, ordering, mode))


def evaluate_strategies(train: Sequence[TemplateObservations], test: Sequence[TemplateObservations],
                        c0: Codebook, c1: Codebook, *, k_values: Sequence[int] = DEFAULT_K_VALUES,
                        rule: str = "gamma_crit", modes: Sequence[str] = MODES,
                        seed: int = 0) -> EvaluationResult:
    """Best-k sweep of every strategy x ordering on the test split.

    Per-channel error profiles (strategy s3) use the mean training support of
    each channel in the given shot mode; the classifier (s4) is trained on
    training features of the same mode.
    """
    if not train or not test:
        raise ValueError("both train and test splits must be non-empty")
    pair = ChannelPair(c0, c1)
    M = pair.config.M
    sweeps, sweep_modes, table, classifiers = [], [], [], {}
    for mode in modes:
        tr = [t.mode(mode) for t in train]
        te = [t.mode(mode) for t in test]
        support = np.mean([o.L for o, _ in tr], axis=0)
        profiles = channel_profiles(c0, c1, np.maximum(np.rint(support).astype(np.int64), 1))
        clf = train_linear_classifier([probe_features(o) for o, _ in tr],
                                      [probe_features(f) for _, f in tr], seed=seed)
        classifiers[mode] = clf
        ks = sorted({min(k, M) for k in k_values})
        for ordering in ORDERINGS:
            X0 = input_matrix([o for o, _ in te], pair, ordering, rule)
            X1 = input_matrix([f for _, f in te], pair, ordering, rule)
            for strategy in STRATEGIES:
                plan = build_plan(strategy, ordering, c0, c1, profiles, classifier=clf, rule=rule)
                ks_plan = sorted({min(k, len(plan.ranking)) for k in ks})
                points = sweep_matrices(plan, ks_plan, X0, X1)
                sweeps.extend(points)
                sweep_modes.extend([mode] * len(points))
                best = min(points, key=lambda pt: (pt.p_err, pt.k))
                table.append(TableCell(strategy, ordering, mode, best.k, best.threshold, best.p_err))
    return EvaluationResult(sweeps, sweep_modes, table, classifiers)
