"""Command line interface: ``bpcauth {simulate,estimate,authenticate,evaluate}``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import dataset as dsio
from .aggregation import (
    ChannelPair, LinearClassifier, authenticate, build_plan, evaluate_scores, input_matrix,
    train_linear_classifier,
)
from .evaluation import (
    DEFAULT_K_VALUES, TemplateObservations, estimate_reference_codebooks, evaluate_strategies,
    split_indices,
)
from .imaging import PreprocessSpec, preprocess_probe
from .io import atomic_write_text, load_codebook, read_binary, read_gray, save_codebook
from .patterns import extract_channels, fuse_multishot, probe_features
from .sim import PRESETS, SimSpec, make_dataset
from .stats import PROFILE_COLUMNS, channel_profiles
from .types import ModelConfig

log = logging.getLogger("bpcauth")

# train templates out of all templates in the reference capture campaign
DEFAULT_TRAIN_FRACTION = 500 / 1440
CSV_VERSION = "v1"


def _seed(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be a 64-bit unsigned integer")
    return value


def _fraction(text: str) -> float:
    value = float(text)
    if not 0.0 < value < 1.0:
        raise argparse.ArgumentTypeError("split fraction must lie in (0, 1)")
    return value


def _rule(text: str) -> str:
    return text.replace("-", "_")


def _csv(header: str, columns: Sequence[str], rows) -> str:
    buf = io.StringIO()
    buf.write(f"# bpcauth {header} {CSV_VERSION}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def _split(manifest: dict, seed: int, fraction: float) -> tuple[list[int], list[int]]:
    train, test = split_indices(range(int(manifest["n_templates"])), fraction, seed)
    if not train:
        raise ValueError("train split is empty; increase --train-fraction or the dataset size")
    if not test:
        raise ValueError("test split is empty; decrease --train-fraction or enlarge the dataset")
    return train, test


def _preprocess(reference: Optional[str]) -> Optional[PreprocessSpec]:
    return PreprocessSpec(read_gray(reference)) if reference else None


# -- commands ---------------------------------------------------------------

def cmd_simulate(args: argparse.Namespace) -> int:
    config = ModelConfig(h=args.h)
    c0, c1 = PRESETS[args.preset](config, args.seed)
    ds = make_dataset(SimSpec(args.width, args.height, c0, args.seed, args.shots),
                      SimSpec(args.width, args.height, c1, args.seed, args.shots),
                      args.n, args.shots)
    root = dsio.write_dataset(ds, args.out, extra={"preset": args.preset})
    log.info("wrote %d templates x %d shots to %s", args.n, args.shots, root)
    return 0


def cmd_estimate(args: argparse.Namespace) -> int:
    manifest = dsio.read_manifest(args.dataset)
    config = dsio.manifest_config(manifest)
    train, test = _split(manifest, args.seed, args.train_fraction)
    obs = dsio.load_observations(args.dataset, train, config, args.shots, _preprocess(args.reference))
    c0, c1 = estimate_reference_codebooks(obs)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_codebook(c0, out / "codebook_orig.json")
    save_codebook(c1, out / "codebook_fake.json")
    atomic_write_text(out / "split.json", json.dumps(
        {"seed": args.seed, "train_fraction": args.train_fraction, "train": train, "test": test}))
    log.info("estimated codebooks from %d training templates into %s", len(train), out)
    return 0


def _load_pair(args: argparse.Namespace) -> ChannelPair:
    c0 = load_codebook(args.codebook_orig)
    c1 = load_codebook(args.codebook_fake)
    if c0.config != c1.config:
        raise ValueError("original and fake codebooks use different model configs")
    return ChannelPair(c0, c1)


def cmd_authenticate(args: argparse.Namespace) -> int:
    pair = _load_pair(args)
    config = pair.config
    spec = _preprocess(args.reference)
    template = read_binary(args.template)
    shots = []
    for path in args.probe:
        p = Path(path)
        probe = read_binary(p) if p.suffix == ".pbm" else preprocess_probe(read_gray(p), spec)
        shots.append(extract_channels(template, probe, config))
    obs = fuse_multishot(shots)

    profiles = channel_profiles(pair.c0, pair.c1, np.maximum(obs.L, 1))
    calib: Optional[list[TemplateObservations]] = None
    if args.dataset:
        manifest = dsio.read_manifest(args.dataset)
        train, _ = _split(manifest, args.seed, args.train_fraction)
        calib = dsio.load_observations(args.dataset, train, config, len(shots), spec)

    classifier = None
    if args.strategy == "s4":
        if args.classifier:
            classifier = LinearClassifier.from_json(Path(args.classifier).read_text())
        elif calib is not None:
            fused = [t.mode("multi") for t in calib]
            classifier = train_linear_classifier([probe_features(o) for o, _ in fused],
                                                 [probe_features(f) for _, f in fused], seed=args.seed)
        else:
            raise ValueError("strategy s4 needs --classifier or --dataset to train one")

    plan = build_plan(args.strategy, args.ordering, pair.c0, pair.c1, profiles,
                      mu=args.mu, nu=args.nu, k=args.k, classifier=classifier, rule=args.rule)

    if args.threshold is not None:
        threshold, higher_is_fake = args.threshold, True
    elif calib is not None:
        fused = [t.mode("multi") for t in calib]
        X0 = input_matrix([o for o, _ in fused], pair, plan.ordering, plan.rule)
        X1 = input_matrix([f for _, f in fused], pair, plan.ordering, plan.rule)
        ev = evaluate_scores(X0 @ plan.weights, X1 @ plan.weights)
        threshold, higher_is_fake = ev.threshold, ev.higher_is_fake
    else:
        raise ValueError("need --threshold or --dataset to calibrate a decision threshold")

    report = authenticate(obs, plan, pair, threshold, higher_is_fake)
    direction = "above" if report.higher_is_fake else "below"
    print(f"verdict: {report.verdict}")
    print(f"score: {report.score:.6g} (fake if {direction} {report.threshold:.6g}); "
          f"strategy {plan.strategy.upper()}, ordering {plan.ordering.upper()}, "
          f"{len(shots)} shot(s), {int((plan.weights != 0).sum())} weighted channels")
    if args.json:
        atomic_write_text(args.json, json.dumps(report.to_dict(), indent=1))
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    manifest = dsio.read_manifest(args.dataset)
    config = dsio.manifest_config(manifest)
    spec = _preprocess(args.reference)
    train_idx, test_idx = _split(manifest, args.seed, args.train_fraction)
    train = dsio.load_observations(args.dataset, train_idx, config, args.shots, spec)
    test = dsio.load_observations(args.dataset, test_idx, config, args.shots, spec)
    if args.codebook_orig and args.codebook_fake:
        pair = _load_pair(args)
        c0, c1 = pair.c0, pair.c1
    else:
        c0, c1 = estimate_reference_codebooks(train)
    k_values = args.k_values or DEFAULT_K_VALUES
    result = evaluate_strategies(train, test, c0, c1, k_values=k_values, rule=args.rule, seed=args.seed)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    # per-channel theory vs single-shot test set
    single = [t.mode("single") for t in test]
    support = np.maximum(np.rint(np.mean([o.L for o, _ in single], axis=0)).astype(np.int64), 1)
    rows = []
    feats0 = np.vstack([probe_features(o).p_hat for o, _ in single])
    feats1 = np.vstack([probe_features(f).p_hat for _, f in single])
    for pr in channel_profiles(c0, c1, support):
        if not pr.informative:
            continue
        a, b = feats0[:, pr.pattern], feats1[:, pr.pattern]
        a, b = a[~np.isnan(a)], b[~np.isnan(b)]
        emp = evaluate_scores(a, b).p_err if a.size and b.size else float("nan")
        rows.append([pr.pattern, pr.p_b, pr.q_b, pr.L, pr.gamma_crit, pr.gamma_opt,
                     pr.p_miss, pr.p_fa, pr.p_err, emp])
    atomic_write_text(out / "fig2.csv", _csv("fig2", PROFILE_COLUMNS + ("empirical_p_err",), rows))

    sweep_rows = [[p.strategy, p.ordering, p.k, p.threshold, p.p_err]
                  for p, mode in zip(result.sweeps, result.sweep_modes) if mode == "single"]
    atomic_write_text(out / "fig3.csv", _csv("fig3", ("strategy", "ordering", "k", "threshold", "p_err"),
                                             sweep_rows))
    table_rows = [[c.strategy, c.ordering, c.mode, c.best_k, c.threshold, c.p_err] for c in result.table]
    atomic_write_text(out / "table1.csv", _csv("table1", ("strategy", "ordering", "shots", "best_k",
                                                          "threshold", "p_err"), table_rows))
    for mode, clf in result.classifiers.items():
        atomic_write_text(out / f"classifier_{mode}.json", clf.to_json())

    print(f"{'':10s}" + "".join(f"{s.upper():>9s}" for s in ("s1", "s2", "s3", "s4")))
    for ordering in ("ad", "da"):
        for mode in ("single", "multi"):
            cells = [result.cell(s, ordering, mode).p_err * 100 for s in ("s1", "s2", "s3", "s4")]
            print(f"{ordering.upper()} {mode:6s} " + "".join(f"{c:8.2f}%" for c in cells))
    return 0


# -- parser -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bpcauth", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common_split(p: argparse.ArgumentParser) -> None:
        p.add_argument("--seed", type=_seed, default=0, help="root seed for the train/test split")
        p.add_argument("--train-fraction", type=_fraction, default=DEFAULT_TRAIN_FRACTION)
        p.add_argument("--reference", help="gray reference image for histogram matching of PGM probes")

    p = sub.add_parser("simulate", help="generate a synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--n", type=int, default=500, help="number of templates")
    p.add_argument("--shots", type=int, default=6)
    p.add_argument("--width", type=int, default=228)
    p.add_argument("--height", type=int, default=228)
    p.add_argument("--h", type=int, default=3, help="pattern side")
    p.add_argument("--preset", choices=sorted(PRESETS), default="default")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("estimate", help="estimate reference codebooks on the train split")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--shots", type=int, default=None, help="use only the first N shots")
    common_split(p)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("authenticate", help="authenticate one probe or fuse several shots")
    p.add_argument("--template", required=True)
    p.add_argument("--probe", required=True, nargs="+")
    p.add_argument("--codebook-orig", required=True)
    p.add_argument("--codebook-fake", required=True)
    p.add_argument("--strategy", choices=("s1", "s2", "s3", "s4"), default="s3")
    p.add_argument("--ordering", choices=("ad", "da"), default="da")
    p.add_argument("--mu", type=float)
    p.add_argument("--nu", type=float)
    p.add_argument("--k", type=int)
    p.add_argument("--rule", type=_rule, choices=("gamma_crit", "gamma_opt"), default="gamma_crit")
    p.add_argument("--threshold", type=float, help="decision threshold on the final score (higher = fake)")
    p.add_argument("--dataset", help="calibrate the threshold on this dataset's train split")
    p.add_argument("--classifier", help="trained classifier JSON for strategy s4")
    p.add_argument("--json", help="write the full report as JSON here")
    common_split(p)
    p.set_defaults(func=cmd_authenticate)

    p = sub.add_parser("evaluate", help="write fig2.csv, fig3.csv and table1.csv for the test split")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--codebook-orig")
    p.add_argument("--codebook-fake")
    p.add_argument("--rule", type=_rule, choices=("gamma_crit", "gamma_opt"), default="gamma_crit")
    p.add_argument("--shots", type=int, default=None)
    p.add_argument("--k-values", type=int, nargs="+")
    common_split(p)
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (OSError, ValueError) as exc:
        print(f"bpcauth: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
