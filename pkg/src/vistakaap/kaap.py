"""KP values, multi-scale KAAP attribution maps and modality importance.

All quantities are scalars at one target class. A map for modality ``m`` is
built with the other two modalities zeroed: for every granularity ``j`` in
``2..k_max`` the input is cut into ``j`` (1-D) or ``j*j`` (2-D) groups, each
group gets a KP value from a keep-only and a drop prediction, and that value
is spread over the group's elements with weight ``j/l`` or ``j**2/w**2``.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigError
from .partition import make_parts_1d, make_parts_2d, perturb, square_side
from .predictor import (
    MODALITIES,
    N_CLASSES,
    PAD_TOKEN,
    ModalityMask,
    MultimodalSample,
    Predictor,
)

DEFAULT_K = {"image": 7, "speech": 7, "text": 5}


@dataclass(frozen=True)
class KPWeights:
    k: int

    def __post_init__(self):
        if self.k < 2:
            raise ConfigError(f"k must be >= 2, got {self.k}")

    @property
    def w12(self) -> float:
        return 1.0 / self.k

    @property
    def w34(self) -> float:
        return 1.0 - 1.0 / self.k


def marginal_contribution(v_with: float, v_without: float) -> float:
    return v_with - v_without


def kp_value(mc_single: float, mc_full: float, k: int) -> float:
    """Weighted mix of the two marginal contributions of one feature group.

    ``mc_single`` is the gain of adding the group to the empty coalition and
    ``mc_full`` the gain of adding it to the other ``k - 1`` groups; the
    second weight is ``k - 1`` times the first and the two sum to one.
    """
    w = KPWeights(k)
    return w.w12 * mc_single + w.w34 * mc_full


KPFunction = Callable[[float, float, int], float]


@dataclass
class AttributionMap:
    modality: str
    values: np.ndarray
    normalized: bool
    target_class: int
    k_max: int
    raw_sum: float = 0.0

    @property
    def domain_kind(self) -> str:
        return {"image": "2d", "speech": "time", "text": "words"}[self.modality]


@dataclass(frozen=True)
class ModalityImportance:
    upsilon: float  # visual
    delta: float  # spoken
    tau: float  # textual
    target_class: int

    def as_dict(self) -> dict:
        return {"image": self.upsilon, "speech": self.delta, "text": self.tau}

    def total(self) -> float:
        return self.upsilon + self.delta + self.tau


def select_target(p_f, override: int | None = None) -> int:
    if override is not None:
        if not 0 <= int(override) < N_CLASSES:
            raise ConfigError(f"target class must be in 0..{N_CLASSES - 1}, got {override}")
        return int(override)
    # np.argmax returns the first maximum, i.e. the lowest index on ties
    return int(np.argmax(np.asarray(p_f, dtype=np.float64)))


def _fill(modality: str):
    return PAD_TOKEN if modality == "text" else 0.0


def _scheme(modality: str, x: np.ndarray, j: int):
    if modality == "text":
        return make_parts_1d(x.shape[0], j)
    return make_parts_2d(square_side(x), j)


def domain_extent(modality: str, x: np.ndarray) -> int:
    if modality == "text":
        return int(x.shape[0])
    return square_side(x)


def clamp_k(modality: str, x: np.ndarray, k_max: int) -> int:
    if k_max < 2:
        raise ConfigError(f"k_max must be >= 2, got {k_max}")
    extent = domain_extent(modality, x)
    if k_max > extent:
        warnings.warn(
            f"k_max={k_max} exceeds the {modality} domain size {extent}; clamped to {extent}",
            RuntimeWarning,
            stacklevel=3,
        )
        return extent
    return k_max


def finalize_map(raw: np.ndarray, modality: str, target: int, k_max: int) -> AttributionMap:
    if modality == "speech":
        raw = raw.mean(axis=0)  # (F, T) -> per time frame
    total = float(raw.sum())
    if total > 0:
        return AttributionMap(modality, raw / total, True, target, k_max, total)
    return AttributionMap(modality, raw, False, target, k_max, total)


def kaap_map(
    model: Predictor,
    sample: MultimodalSample,
    modality: str,
    k_max: int | None = None,
    target: int | None = None,
    threads: int = 1,
    kp_fn: KPFunction = kp_value,
) -> AttributionMap:
    """Multi-scale attribution map of one modality at the target class.

    ``target`` defaults to the model's predicted class on the full sample.
    Predictions may run on ``threads`` workers; accumulation always happens
    in (j, part) order so the result does not depend on the thread count.
    """
    if modality not in MODALITIES:
        raise ConfigError(f"unknown modality {modality!r}")
    if k_max is None:
        k_max = DEFAULT_K[modality]
    if target is None:
        target = select_target(model.predict(sample))
    target = select_target(None, target)
    x = sample.get(modality)
    if modality == "text" and x.shape[0] < 1:
        raise ConfigError("text attribution needs at least one token")
    k_max = clamp_k(modality, x, k_max)

    base = sample.masked(ModalityMask.only(modality))
    p_f = model.predict(base)[target]
    p_b = model.predict(sample.masked(ModalityMask.none()))[target]
    fill = _fill(modality)
    x_is_zero = not np.any(x != fill)

    jobs = []  # (j, part, keep-only input or None, drop input or None)
    for j in range(2, k_max + 1):
        for part in _scheme(modality, x, j):
            kept = perturb(x, part, "keep-only", fill)
            dropped = perturb(x, part, "drop", fill)
            # keep-only of an all-fill group is the baseline; dropping an
            # all-fill group leaves the input unchanged
            group_empty = not np.any(x[part.index] != fill)
            jobs.append((j, part, None if (group_empty or x_is_zero) else kept,
                         None if group_empty else dropped))

    def run(data):
        return model.predict(base.replace(**{modality: data}))[target]

    inputs = [d for job in jobs for d in job[2:] if d is not None]
    if threads > 1 and len(inputs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outputs = list(pool.map(run, inputs))
    else:
        outputs = [run(d) for d in inputs]

    raw = np.zeros(x.shape[:2] if modality != "text" else x.shape, dtype=np.float64)
    extent = domain_extent(modality, x)
    it = iter(outputs)
    for j, part, kept, dropped in jobs:
        p1 = p_b if kept is None else next(it)
        p2 = p_f if dropped is None else next(it)
        kp = kp_fn(marginal_contribution(p1, p_b), marginal_contribution(p_f, p2), j)
        weight = (j / extent) ** 2 if modality != "text" else j / extent
        raw[part.index] += weight * kp
    return finalize_map(raw, modality, target, k_max)


def modality_importance(model: Predictor, sample: MultimodalSample, target: int | None = None) -> ModalityImportance:
    """KP value at k = 3 of each modality, treating the three as players."""
    p_full = model.predict(sample)
    target = select_target(p_full, target)
    p_f = p_full[target]
    p_b = model.predict_masked(sample, ModalityMask.none())[target]
    scores = {}
    for m in MODALITIES:
        p_1 = model.predict_masked(sample, ModalityMask.only(m))[target]
        p_2 = model.predict_masked(sample, ModalityMask.all_but(m))[target]
        scores[m] = kp_value(marginal_contribution(p_1, p_b), marginal_contribution(p_f, p_2), 3)
    return ModalityImportance(scores["image"], scores["speech"], scores["text"], target)


@dataclass
class AttributionReport:
    target_class: int
    importance: ModalityImportance
    maps: dict[str, AttributionMap]
    k: dict[str, int]
    probs: np.ndarray = field(default_factory=lambda: np.zeros(N_CLASSES))

    def to_dict(self) -> dict:
        from .tensorio import tensor_to_record

        return {
            "target_class": self.target_class,
            "probs": [float(v) for v in self.probs],
            "modality_importance": self.importance.as_dict(),
            "image_map": tensor_to_record(self.maps["image"].values),
            "speech_map": [float(v) for v in self.maps["speech"].values],
            "text_map": [float(v) for v in self.maps["text"].values],
            "k": dict(self.k),
            "normalized": {m: self.maps[m].normalized for m in MODALITIES},
        }


def explain(
    model: Predictor,
    sample: MultimodalSample,
    k: dict[str, int] | None = None,
    target: int | None = None,
    threads: int = 1,
) -> AttributionReport:
    """Modality importance plus one KAAP map per modality (default k 7/7/5)."""
    ks = dict(DEFAULT_K)
    ks.update(k or {})
    probs = model.predict(sample)
    target = select_target(probs, target)
    importance = modality_importance(model, sample, target)
    maps = {}
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        for m in MODALITIES:
            maps[m] = kaap_map(model, sample, m, ks[m], target=target, threads=threads)
    for w in caught:
        warnings.warn(w.message, w.category, stacklevel=2)
    used = {m: maps[m].k_max for m in MODALITIES}
    return AttributionReport(target, importance, maps, used, probs)
