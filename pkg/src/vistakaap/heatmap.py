"""Grayscale PGM (P5) rendering of attribution maps."""

from __future__ import annotations

import numpy as np


def to_gray(values: np.ndarray) -> np.ndarray:
    """Min-max scale to 0..255; a flat map renders black."""
    v = np.atleast_2d(np.asarray(values, dtype=np.float64))
    lo, hi = float(v.min()), float(v.max())
    if hi <= lo:
        return np.zeros(v.shape, dtype=np.uint8)
    return np.rint((v - lo) / (hi - lo) * 255.0).astype(np.uint8)


def pgm_bytes(values: np.ndarray) -> bytes:
    g = to_gray(values)
    h, w = g.shape
    return f"P5\n{w} {h}\n255\n".encode("ascii") + g.tobytes()


def write_pgm(path, values: np.ndarray) -> None:
    with open(path, "wb") as fh:
        fh.write(pgm_bytes(values))


def read_pgm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    header = data.split(b"\n", 3)
    if header[0] != b"P5":
        raise ValueError("not a binary PGM")
    w, h = (int(x) for x in header[1].split())
    return np.frombuffer(header[3], dtype=np.uint8).reshape(h, w)
