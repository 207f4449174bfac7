"""File formats: codebook JSON, PBM/PGM images, atomic writes."""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path
from typing import Union

import numpy as np
from PIL import Image, UnidentifiedImageError

from .types import BinaryImage, Codebook, GrayImage, ModelConfig

PathLike = Union[str, os.PathLike]


def atomic_write_bytes(path: PathLike, data: bytes) -> None:
    """Write ``data`` to ``path`` via a temporary file and rename."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: PathLike, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


# -- codebooks --------------------------------------------------------------

def codebook_to_dict(cb: Codebook) -> dict:
    # json emits repr() floats: shortest round-tripping form, 17 significant digits at most
    return {
        "h": cb.config.h,
        "prob_floor": cb.config.prob_floor,
        "entries": [[o, f, p] for o, f, p in cb.entries],
    }


def codebook_from_dict(data: dict) -> Codebook:
    config = ModelConfig(h=int(data["h"]), prob_floor=float(data["prob_floor"]))
    entries = data["entries"]
    if len(entries) != config.M:
        raise ValueError(f"codebook has {len(entries)} entries, expected M={config.M}")
    occ = np.array([int(e[0]) for e in entries], dtype=np.int64)
    flips = np.array([int(e[1]) for e in entries], dtype=np.int64)
    p = np.array([float(e[2]) for e in entries], dtype=np.float64)
    cb = Codebook(config, occ, flips, p)
    cb.check()
    return cb


def save_codebook(cb: Codebook, path: PathLike) -> None:
    atomic_write_text(path, json.dumps(codebook_to_dict(cb)))


def load_codebook(path: PathLike) -> Codebook:
    with open(path, "r", encoding="utf-8") as fh:
        return codebook_from_dict(json.load(fh))


# -- images -----------------------------------------------------------------

def _open(path: PathLike) -> Image.Image:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"image file not found: {path}")
    try:
        img = Image.open(path)
        img.load()
    except (UnidentifiedImageError, OSError, SyntaxError, ValueError) as exc:
        raise ValueError(f"cannot read image {path}: {exc}") from exc
    return img


def read_binary(path: PathLike) -> BinaryImage:
    """Read a PBM file (P1 or P4). PBM stores 1 for black, as we do."""
    img = _open(path)
    if img.mode != "1":
        raise ValueError(f"{path} is not a bitmap (PBM) image (mode {img.mode})")
    # Pillow maps black to False
    return BinaryImage.from_array((~np.asarray(img, dtype=bool)).astype(np.uint8))


def read_gray(path: PathLike) -> GrayImage:
    """Read a PGM (P2/P5, 8-bit) as values ``v/255``; PBM input is accepted too."""
    img = _open(path)
    if img.mode == "1":
        arr = np.asarray(img, dtype=bool).astype(np.float64)
    elif img.mode == "L":
        arr = np.asarray(img, dtype=np.float64) / 255.0
    else:
        raise ValueError(f"{path} is not an 8-bit grayscale image (mode {img.mode})")
    return GrayImage.from_array(arr)


def encode_pbm(image: BinaryImage) -> bytes:
    """Raw (P4) PBM encoding."""
    h, w = image.shape
    packed = np.packbits(image.as_array().astype(bool), axis=1)
    return f"P4\n{w} {h}\n".encode("ascii") + packed.tobytes()


def encode_pgm(image: GrayImage) -> bytes:
    """Raw (P5) 8-bit PGM encoding; values are rounded to ``v*255``."""
    h, w = image.shape
    data = np.rint(image.as_array() * 255.0).astype(np.uint8)
    return f"P5\n{w} {h}\n255\n".encode("ascii") + data.tobytes()


def write_binary(image: BinaryImage, path: PathLike) -> None:
    atomic_write_bytes(path, encode_pbm(image))


def write_gray(image: GrayImage, path: PathLike) -> None:
    atomic_write_bytes(path, encode_pgm(image))
