"""Ground-truth engines: exhaustive Shapley values and slow literal KAAP.

Nothing here shares code paths with :mod:`vistakaap.kaap` beyond the
predictor interface; the partitions are recomputed locally on purpose.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from math import factorial

import numpy as np

from .errors import ConfigError
from .kaap import AttributionMap, ModalityImportance
from .predictor import MultimodalSample, Predictor, ValueFunction

MAX_PLAYERS = 16
MAX_REFERENCE_SIDE = 32


@dataclass(frozen=True)
class ShapleyResult:
    phi: np.ndarray
    v_full: float
    v_empty: float


def exact_shapley(game: ValueFunction, n: int | None = None) -> ShapleyResult:
    """Shapley values by enumerating every coalition in bitmask order."""
    n = game.n if n is None else n
    if n != game.n:
        raise ConfigError(f"game has {game.n} players, asked for {n}")
    if n > MAX_PLAYERS:
        raise ConfigError(f"exact enumeration limited to {MAX_PLAYERS} players, got {n}")
    weight = [factorial(s) * factorial(n - s - 1) / factorial(n) for s in range(n)]
    phi = np.zeros(n)
    for i in range(n):
        bit = 1 << i
        total = 0.0
        for S in range(1 << n):
            if S & bit:
                continue
            total += weight[bin(S).count("1")] * (game(S | bit) - game(S))
        phi[i] = total
    return ShapleyResult(phi, game((1 << n) - 1), game(0))


def _make_parts(w, i):
    # literal remainder-first split of range(w) into i contiguous index lists
    size, extra = divmod(w, i)
    parts, start = [], 0
    for p in range(i):
        stop = start + size + (1 if p < extra else 0)
        parts.append(list(range(start, stop)))
        start = stop
    return parts


def _predict_type(model, sample, data, type_):
    # probability prediction with every other modality zeroed
    zero_img = np.zeros_like(sample.image)
    zero_sp = np.zeros_like(sample.speech)
    zero_txt = np.zeros_like(sample.text)
    if type_ == "image":
        s = MultimodalSample(data, zero_sp, zero_txt)
    elif type_ == "text":
        s = MultimodalSample(zero_img, zero_sp, data)
    elif type_ == "speech":
        s = MultimodalSample(zero_img, data, zero_txt)
    else:
        raise ConfigError(f"unknown type {type_!r}")
    return model.predict(s)


def reference_kaap(
    model: Predictor,
    sample: MultimodalSample,
    modality: str,
    k_max: int,
    target: int | None = None,
) -> AttributionMap:
    """Straight-line KAAP for one modality; slow by design."""
    data = sample.get(modality)
    if target is None:
        target = int(np.argmax(model.predict(sample)))
    if modality == "text":
        w = data.shape[0]
        if w < 1:
            raise ConfigError("text attribution needs at least one token")
    else:
        if data.shape[0] != data.shape[1]:
            raise ConfigError("reference KAAP needs a square input")
        w = data.shape[0]
    if w > MAX_REFERENCE_SIDE:
        raise ConfigError(f"reference KAAP limited to {MAX_REFERENCE_SIDE} per axis, got {w}")
    if k_max < 2:
        raise ConfigError(f"k_max must be >= 2, got {k_max}")
    if k_max > w:
        warnings.warn(f"k_max={k_max} exceeds domain size {w}; clamped", RuntimeWarning, stacklevel=2)
        k_max = w

    p_f = _predict_type(model, sample, data, modality)[target]
    p_b = _predict_type(model, sample, np.zeros_like(data), modality)[target]

    if modality == "text":
        kaap = [0.0] * w
    else:
        kaap = [[0.0] * w for _ in range(w)]

    for i in range(2, k_max + 1):
        parts = _make_parts(w, i)
        if modality != "text":
            parts = [(rows, cols) for rows in parts for cols in parts]
        for j in range(len(parts)):
            part = parts[j]
            data_1 = np.zeros_like(data)
            data_2 = data.copy()
            if modality == "text":
                for e in part:
                    data_1[e] = data[e]
                    data_2[e] = 0
            else:
                rows, cols = part
                for r in rows:
                    for c in cols:
                        data_1[r, c] = data[r, c]
                        data_2[r, c] = 0
            p_1 = _predict_type(model, sample, data_1, modality)[target]
            p_2 = _predict_type(model, sample, data_2, modality)[target]
            kp_values = (1.0 / i) * (p_1 - p_b) + (1.0 - 1.0 / i) * (p_f - p_2)
            if modality == "text":
                for e in part:
                    kaap[e] += (i / w) * kp_values
            else:
                rows, cols = part
                for r in rows:
                    for c in cols:
                        kaap[r][c] += (i / w) ** 2 * kp_values

    if modality == "speech":
        # average over frequency (rows) to one value per time frame
        kaap = [sum(kaap[r][c] for r in range(w)) / w for c in range(w)]
    values = np.array(kaap, dtype=np.float64)
    total = float(np.sum(values))
    if total > 0:
        return AttributionMap(modality, values / total, True, target, k_max, total)
    return AttributionMap(modality, values, False, target, k_max, total)


def reference_modality_importance(model: Predictor, sample: MultimodalSample, target: int | None = None) -> ModalityImportance:
    """Eight predictions and three k=3 formulas, written out one by one."""
    img, text, speech = sample.image, sample.text, sample.speech
    z_img, z_text, z_speech = np.zeros_like(img), np.zeros_like(text), np.zeros_like(speech)

    def proba(i, t, s):
        return model.predict(MultimodalSample(i, s, t))

    p_f = proba(img, text, speech)
    p_b = proba(z_img, z_text, z_speech)
    c = int(np.argmax(p_f)) if target is None else int(target)
    p_i1 = proba(img, z_text, z_speech)
    p_i2 = proba(z_img, text, speech)
    s_i = 1 / 3 * (p_i1[c] - p_b[c]) + 2 / 3 * (p_f[c] - p_i2[c])
    p_t1 = proba(z_img, text, z_speech)
    p_t2 = proba(img, z_text, speech)
    s_t = 1 / 3 * (p_t1[c] - p_b[c]) + 2 / 3 * (p_f[c] - p_t2[c])
    p_s1 = proba(z_img, z_text, speech)
    p_s2 = proba(img, text, z_speech)
    s_s = 1 / 3 * (p_s1[c] - p_b[c]) + 2 / 3 * (p_f[c] - p_s2[c])
    return ModalityImportance(s_i, s_s, s_t, c)
