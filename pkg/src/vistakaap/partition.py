"""Balanced contiguous partitions of 1-D ranges and square 2-D grids."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ConfigError, ShapeError


@dataclass(frozen=True)
class Part:
    """A contiguous group: one range (1-D) or one rectangular block (2-D).

    ``bounds`` holds one ``(start, stop)`` pair per partitioned axis.
    Indexing an array with :attr:`index` selects the group and, for images,
    spans every channel.
    """

    bounds: tuple[tuple[int, int], ...]

    @property
    def index(self) -> tuple[slice, ...]:
        return tuple(slice(a, b) for a, b in self.bounds)

    @property
    def size(self) -> int:
        n = 1
        for a, b in self.bounds:
            n *= b - a
        return n


@dataclass(frozen=True)
class PartitionScheme:
    ndim: int  # 1 or 2
    extent: int  # l for 1-D, side w for 2-D
    j: int  # parts per axis
    parts: tuple[Part, ...]

    @property
    def domain_shape(self) -> tuple[int, ...]:
        return (self.extent,) * self.ndim

    def __len__(self) -> int:
        return len(self.parts)

    def __iter__(self):
        return iter(self.parts)

    def __getitem__(self, i: int) -> Part:
        return self.parts[i]


def balanced_bounds(l: int, j: int) -> tuple[tuple[int, int], ...]:
    """Split ``[0, l)`` into ``j`` ranges; the first ``l % j`` get one extra element."""
    base, extra = divmod(l, j)
    out = []
    start = 0
    for i in range(j):
        stop = start + base + (1 if i < extra else 0)
        out.append((start, stop))
        start = stop
    return tuple(out)


def _check(extent: int, j: int, what: str) -> None:
    if extent < 1:
        raise ConfigError(f"{what} must be >= 1, got {extent}")
    if j < 2:
        raise ConfigError(f"part count must be >= 2 (a single part is the whole input), got {j}")
    if j > extent:
        raise ConfigError(f"cannot split {what}={extent} into {j} non-empty parts")


@lru_cache(maxsize=512)
def make_parts_1d(l: int, j: int) -> PartitionScheme:
    _check(l, j, "length")
    return PartitionScheme(1, l, j, tuple(Part((b,)) for b in balanced_bounds(l, j)))


@lru_cache(maxsize=512)
def make_parts_2d(w: int, j: int) -> PartitionScheme:
    _check(w, j, "side")
    axis = balanced_bounds(w, j)
    return PartitionScheme(2, w, j, tuple(Part((r, c)) for r in axis for c in axis))


def square_side(arr: np.ndarray) -> int:
    h, w = arr.shape[:2]
    if h != w:
        raise ShapeError(f"2-D partitions need a square input, got {h}x{w}")
    return h


def _check_part(x: np.ndarray, part: Part) -> None:
    if x.ndim < len(part.bounds):
        raise ShapeError(f"part has {len(part.bounds)} axes but input has {x.ndim}")
    for axis, (a, b) in enumerate(part.bounds):
        if not 0 <= a < b <= x.shape[axis]:
            raise ShapeError(f"part bounds {(a, b)} out of range for axis {axis} of size {x.shape[axis]}")


def perturb(x: np.ndarray, part: Part, mode: str, fill=0) -> np.ndarray:
    """Return a perturbed copy of ``x``.

    ``keep-only`` fills everything outside ``part`` with ``fill``; ``drop``
    fills ``part`` itself. For token sequences ``fill`` is the padding id.
    """
    x = np.asarray(x)
    _check_part(x, part)
    if mode == "keep-only":
        out = np.full_like(x, fill)
        out[part.index] = x[part.index]
    elif mode == "drop":
        out = x.copy()
        out[part.index] = fill
    else:
        raise ConfigError(f"perturb mode must be 'keep-only' or 'drop', got {mode!r}")
    return out
