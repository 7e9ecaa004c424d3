"""Dice overlap between attribution maps and k selection by convergence."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ShapeError
from .kaap import AttributionMap, kaap_map, select_target
from .predictor import MultimodalSample, Predictor

DEFAULT_Q = 0.25
DEFAULT_THRESHOLD = 0.95


def top_fraction_mask(values: np.ndarray, q: float) -> np.ndarray:
    """Boolean mask of the ceil(q * n) largest entries; ties go to lower indices."""
    flat = np.asarray(values, dtype=np.float64).ravel()
    n = flat.size
    count = min(n, math.ceil(q * n)) if n else 0
    mask = np.zeros(n, dtype=bool)
    if count:
        # stable sort on the negated values keeps lower indices first among ties
        mask[np.argsort(-flat, kind="stable")[:count]] = True
    return mask


def _values(m) -> np.ndarray:
    return m.values if isinstance(m, AttributionMap) else np.asarray(m, dtype=np.float64)


def dice(map_a, map_b, q: float = DEFAULT_Q) -> float:
    """Dice coefficient 2|A∩B| / (|A|+|B|) of the two top-q masks."""
    if not 0 < q <= 1:
        raise ConfigError(f"q must be in (0, 1], got {q}")
    a, b = _values(map_a), _values(map_b)
    if a.shape != b.shape:
        raise ShapeError(f"cannot compare maps of shapes {a.shape} and {b.shape}")
    ma, mb = top_fraction_mask(a, q), top_fraction_mask(b, q)
    denom = int(ma.sum()) + int(mb.sum())
    if denom == 0:
        return 1.0
    return 2.0 * int(np.sum(ma & mb)) / denom


@dataclass
class DiceCurve:
    modality: str
    points: list[tuple[int, float]] = field(default_factory=list)  # (k, dice(k-1, k))
    selected_k: int = 2
    threshold: float = DEFAULT_THRESHOLD
    q: float = DEFAULT_Q

    def csv_rows(self) -> list[tuple[str, int, float, int]]:
        return [(self.modality, k, d, int(k == self.selected_k)) for k, d in self.points]


def select_k(
    model: Predictor,
    samples: list[MultimodalSample],
    modality: str,
    k_max: int = 10,
    threshold: float = DEFAULT_THRESHOLD,
    q: float = DEFAULT_Q,
    threads: int = 1,
) -> DiceCurve:
    """Smallest k whose mean dice against k - 1 reaches ``threshold``.

    Falls back to ``k_max`` (with a warning) when the curve never gets there.
    """
    if not samples:
        raise ConfigError("select_k needs at least one sample")
    if k_max < 3:
        raise ConfigError(f"k_max must be >= 3 to compare adjacent k values, got {k_max}")
    per_sample: list[dict[int, AttributionMap]] = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        for s in samples:
            target = select_target(model.predict(s))
            per_sample.append({k: kaap_map(model, s, modality, k, target=target, threads=threads)
                               for k in range(2, k_max + 1)})
    curve = DiceCurve(modality, threshold=threshold, q=q)
    selected = None
    for k in range(3, k_max + 1):
        d = float(np.mean([dice(maps[k - 1], maps[k], q) for maps in per_sample]))
        curve.points.append((k, d))
        if selected is None and d >= threshold:
            selected = k
    if selected is None:
        warnings.warn(f"{modality}: dice never reached {threshold}; using k_max={k_max}", RuntimeWarning,
                      stacklevel=2)
        selected = k_max
    curve.selected_k = selected
    return curve
