import csv
import json
from pathlib import Path

import numpy as np
import pytest

from bpcauth import dataset as dsio
from bpcauth.aggregation import evaluate_scores
from bpcauth.cli import main
from bpcauth.io import load_codebook, read_binary, write_binary
from bpcauth.patterns import extract_channels, probe_features

N, SHOTS, SIZE = 12, 2, 40


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli") / "ds"
    assert main(["simulate", "--out", str(root), "--seed", "5", "--n", str(N), "--shots", str(SHOTS),
                 "--width", str(SIZE), "--height", str(SIZE)]) == 0
    return root


@pytest.fixture(scope="module")
def codebooks(dataset, tmp_path_factory):
    out = tmp_path_factory.mktemp("cb")
    assert main(["estimate", "--dataset", str(dataset), "--out", str(out), "--seed", "1",
                 "--train-fraction", "0.5"]) == 0
    return out


def tree(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(Path(root).rglob("*")) if p.is_file()}


def read_csv(path):
    lines = Path(path).read_text().splitlines()
    return lines[0], list(csv.reader(lines[1:]))


def test_simulate_deterministic(dataset, tmp_path):
    again = tmp_path / "again"
    assert main(["simulate", "--out", str(again), "--seed", "5", "--n", str(N), "--shots", str(SHOTS),
                 "--width", str(SIZE), "--height", str(SIZE)]) == 0
    a, b = tree(dataset), tree(again)
    assert a == b
    assert len(a) == N * (1 + 2 * SHOTS) + 1
    m = json.loads(a["manifest.json"])
    assert m["complete"] and m["seed"] == 5 and m["shots"] == SHOTS


def test_simulate_bad_output(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["simulate", "--out", str(blocker), "--n", "1", "--shots", "1",
                 "--width", "8", "--height", "8"]) != 0
    assert "error" in capsys.readouterr().err


def test_incomplete_dataset_rejected(dataset, tmp_path):
    m = json.loads((dataset / "manifest.json").read_text())
    m["complete"] = False
    broken = tmp_path / "broken"
    broken.mkdir()
    (broken / "manifest.json").write_text(json.dumps(m))
    assert main(["estimate", "--dataset", str(broken), "--out", str(tmp_path / "o")]) != 0


def test_estimate_split_and_reproducibility(dataset, codebooks, tmp_path):
    split = json.loads((codebooks / "split.json").read_text())
    assert not set(split["train"]) & set(split["test"])
    assert sorted(split["train"] + split["test"]) == list(range(N))
    assert main(["estimate", "--dataset", str(dataset), "--out", str(tmp_path), "--seed", "1",
                 "--train-fraction", "0.5"]) == 0
    for name in ("codebook_orig.json", "codebook_fake.json", "split.json"):
        assert (tmp_path / name).read_bytes() == (codebooks / name).read_bytes()
    c0 = load_codebook(codebooks / "codebook_orig.json")
    assert c0.occurrences.sum() == len(split["train"]) * SHOTS * (SIZE - 2) ** 2


def auth_args(dataset, codebooks, probes, *extra):
    return ["authenticate", "--template", str(dataset / "templates" / "0000.pbm"),
            "--probe", *map(str, probes),
            "--codebook-orig", str(codebooks / "codebook_orig.json"),
            "--codebook-fake", str(codebooks / "codebook_fake.json"), *extra]


def test_authenticate_template_as_probe(dataset, codebooks, capsys):
    t = dataset / "templates" / "0000.pbm"
    assert main(auth_args(dataset, codebooks, [t], "--strategy", "s1", "--ordering", "ad", "--dataset",
                          str(dataset), "--seed", "1", "--train-fraction", "0.5")) == 0
    out = capsys.readouterr().out
    assert "verdict: original" in out and "score: 0 " in out


def test_authenticate_calibrated(dataset, codebooks, tmp_path, capsys):
    orig = [dataset / "originals" / f"0000_shot{s}.pbm" for s in range(SHOTS)]
    fake = [dataset / "fakes" / f"0000_shot{s}.pbm" for s in range(SHOTS)]
    common = ("--dataset", str(dataset), "--seed", "1", "--train-fraction", "0.5")
    report = tmp_path / "r.json"
    assert main(auth_args(dataset, codebooks, orig, *common, "--json", str(report))) == 0
    assert "verdict: original" in capsys.readouterr().out
    d = json.loads(report.read_text())
    assert d["verdict"] == "original" and "2 shot" not in d
    assert sum(c["L"] for c in d["per_channel"]) == SHOTS * (SIZE - 2) ** 2
    assert main(auth_args(dataset, codebooks, fake, *common)) == 0
    assert "verdict: fake" in capsys.readouterr().out


def test_authenticate_needs_threshold(dataset, codebooks):
    t = dataset / "templates" / "0000.pbm"
    assert main(auth_args(dataset, codebooks, [t])) != 0
    assert main(auth_args(dataset, codebooks, [t], "--strategy", "s4", "--threshold", "0")) != 0


def test_authenticate_size_mismatch(dataset, codebooks, tmp_path):
    small = tmp_path / "small.pbm"
    write_binary(read_binary(dataset / "templates" / "0000.pbm").__class__.from_array(np.zeros((5, 5))), small)
    assert main(auth_args(dataset, codebooks, [small], "--threshold", "1")) != 0


def test_evaluate_outputs(dataset, codebooks, tmp_path, capsys):
    out = tmp_path / "eval"
    assert main(["evaluate", "--dataset", str(dataset), "--out", str(out), "--seed", "1",
                 "--train-fraction", "0.5", "--k-values", "1", "4", "512"]) == 0
    printed = capsys.readouterr().out
    assert "S4" in printed

    head, rows = read_csv(out / "table1.csv")
    assert head == "# bpcauth table1 v1"
    assert rows[0] == ["strategy", "ordering", "shots", "best_k", "threshold", "p_err"]
    assert len(rows) - 1 == 16
    assert {(r[0], r[1], r[2]) for r in rows[1:]} == {
        (s, o, m) for s in ("s1", "s2", "s3", "s4") for o in ("ad", "da") for m in ("single", "multi")}

    head, rows = read_csv(out / "fig3.csv")
    assert rows[0] == ["strategy", "ordering", "k", "threshold", "p_err"]
    head, rows = read_csv(out / "fig2.csv")
    assert rows[0][:9] == ["pattern_id", "p_b", "q_b", "L", "gamma_crit", "gamma_opt", "p_miss", "p_fa", "p_err"]
    assert (out / "classifier_single.json").exists() and (out / "classifier_multi.json").exists()


def test_evaluate_s1_ad_matches_plain_average(dataset, tmp_path):
    out = tmp_path / "eval"
    assert main(["evaluate", "--dataset", str(dataset), "--out", str(out), "--seed", "1",
                 "--train-fraction", "0.5", "--k-values", "512"]) == 0
    _, rows = read_csv(out / "table1.csv")
    cell = next(r for r in rows[1:] if r[:3] == ["s1", "ad", "single"])

    manifest = dsio.read_manifest(dataset)
    from bpcauth.cli import _split
    _, test = _split(manifest, 1, 0.5)
    config = dsio.manifest_config(manifest)

    def mean_feature(cls, i):
        t = read_binary(dsio.template_path(dataset, i))
        y = read_binary(dsio.probe_path(dataset, cls, i, 0))
        return float(np.nansum(probe_features(extract_channels(t, y, config)).p_hat)) / config.M

    ev = evaluate_scores([mean_feature("originals", i) for i in test], [mean_feature("fakes", i) for i in test])
    assert float(cell[5]) == ev.p_err
