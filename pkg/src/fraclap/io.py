"""Atomic file output and the flat-binary field dump format."""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .spectral import Field, GridSpec


def atomic_write_text(path, text: str) -> Path:
    """Write via a temp file in the target directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def atomic_write_bytes(path, data: bytes) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def write_json(path, obj) -> Path:
    return atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def dump_field(field: Field, path) -> tuple[Path, Path]:
    """Write ``path`` (little-endian float64, row-major) and ``path.json`` header."""
    path = Path(path)
    g = field.grid
    header = {
        "format": "fraclap-field/1",
        "dtype": "<f8",
        "order": "row-major by axis",
        "shape": list(g.shape),
        "spacing": g.h,
        "origin": [-g.L] * g.n,
        "grid": g.to_dict(),
    }
    data = np.ascontiguousarray(field.values, dtype="<f8").tobytes()
    atomic_write_bytes(path, data)
    hdr = write_json(path.with_name(path.name + ".json"), header)
    return path, hdr


def load_field(path) -> Field:
    path = Path(path)
    header = json.loads(path.with_name(path.name + ".json").read_text())
    gd = header["grid"]
    grid = GridSpec(gd["n"], gd["N"], gd["L"])
    vals = np.frombuffer(path.read_bytes(), dtype="<f8").reshape(header["shape"])
    return Field(grid, vals.copy())
