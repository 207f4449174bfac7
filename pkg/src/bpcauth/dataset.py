"""On-disk dataset layout.

::

    manifest.json              specs, root seed, "complete" sentinel
    templates/NNNN.pbm
    originals/NNNN_shotS.pbm   (or .pgm for captured gray probes)
    fakes/NNNN_shotS.pbm

The manifest is written first with ``"complete": false`` and rewritten with
``true`` once every image is on disk.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Optional, Sequence

from .imaging import PreprocessSpec, preprocess_probe
from .io import PathLike, atomic_write_text, codebook_to_dict, read_binary, read_gray, write_binary
from .patterns import extract_channels
from .evaluation import TemplateObservations
from .sim import SimDataset
from .types import BinaryImage, ModelConfig

MANIFEST = "manifest.json"
FORMAT = "bpcauth-dataset v1"


def template_path(root: Path, i: int) -> Path:
    return root / "templates" / f"{i:04d}.pbm"


def probe_path(root: Path, cls: str, i: int, shot: int) -> Path:
    """Path of a probe; prefers ``.pbm`` and falls back to ``.pgm``."""
    base = root / cls / f"{i:04d}_shot{shot}"
    pbm = base.with_suffix(".pbm")
    if pbm.exists():
        return pbm
    pgm = base.with_suffix(".pgm")
    return pgm if pgm.exists() else pbm


def write_dataset(ds: SimDataset, out: PathLike, extra: Optional[dict] = None) -> Path:
    root = Path(out)
    if root.exists() and not root.is_dir():
        raise NotADirectoryError(f"output path {root} exists and is not a directory")
    root.mkdir(parents=True, exist_ok=True)
    manifest = {
        "format": FORMAT,
        "seed": ds.spec_originals.seed,
        "fake_seed": ds.spec_fakes.seed,
        "n_templates": ds.n_templates,
        "shots": ds.shots,
        "width": ds.spec_originals.width,
        "height": ds.spec_originals.height,
        "h": ds.config.h,
        "prob_floor": ds.config.prob_floor,
        "codebooks": {
            "original": codebook_to_dict(ds.spec_originals.codebook),
            "fake": codebook_to_dict(ds.spec_fakes.codebook),
        },
        **(extra or {}),
        "complete": False,
    }
    atomic_write_text(root / MANIFEST, json.dumps(manifest, indent=1))
    for sub in ("templates", "originals", "fakes"):
        (root / sub).mkdir(exist_ok=True)
    for i in range(ds.n_templates):
        t, origs, fakes = ds.triple(i)
        write_binary(t, template_path(root, i))
        for s, img in enumerate(origs):
            write_binary(img, root / "originals" / f"{i:04d}_shot{s}.pbm")
        for s, img in enumerate(fakes):
            write_binary(img, root / "fakes" / f"{i:04d}_shot{s}.pbm")
    manifest["complete"] = True
    atomic_write_text(root / MANIFEST, json.dumps(manifest, indent=1))
    return root


def read_manifest(root: PathLike) -> dict:
    path = Path(root) / MANIFEST
    if not path.exists():
        raise FileNotFoundError(f"no dataset manifest at {path}")
    with open(path, "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    if not manifest.get("complete", False):
        raise ValueError(f"dataset at {root} is incomplete (manifest lacks the completion flag)")
    return manifest


def manifest_config(manifest: dict) -> ModelConfig:
    return ModelConfig(h=int(manifest.get("h", 3)), prob_floor=float(manifest.get("prob_floor", 1e-6)))


def load_probe(path: Path, template: BinaryImage, spec: Optional[PreprocessSpec]) -> BinaryImage:
    if path.suffix == ".pbm":
        probe = read_binary(path)
    else:
        probe = preprocess_probe(read_gray(path), spec)
    if probe.shape != template.shape:
        raise ValueError(f"probe {path} is {probe.width}x{probe.height}, template is "
                         f"{template.width}x{template.height}")
    return probe


def load_observations(root: PathLike, indices: Sequence[int], config: ModelConfig,
                      shots: Optional[int] = None,
                      spec: Optional[PreprocessSpec] = None) -> list[TemplateObservations]:
    """Extract per-shot channel observations for the given template indices."""
    root = Path(root)
    manifest = read_manifest(root)
    n_shots = int(manifest["shots"]) if shots is None else min(shots, int(manifest["shots"]))
    out = []
    for i in indices:
        t = read_binary(template_path(root, i))
        origs = [extract_channels(t, load_probe(probe_path(root, "originals", i, s), t, spec), config)
                 for s in range(n_shots)]
        fakes = [extract_channels(t, load_probe(probe_path(root, "fakes", i, s), t, spec), config)
                 for s in range(n_shots)]
        out.append(TemplateObservations(i, origs, fakes))
    return out
