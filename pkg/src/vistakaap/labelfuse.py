"""Ground-truth label construction from per-modality class probabilities.

The three unimodal probability vectors are averaged and the argmax becomes
the label; records whose fused confidence falls below ``tau`` times the
maximum confidence seen for their class are discarded.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ShapeError
from .predictor import CLASSES, N_CLASSES
from .tensorio import fmt_float

EXTENDED_LABELS = {"angry": 0, "happy": 1, "hate": 2, "sad": 3, "excitement": 1, "disgust": 2}
INPUT_COLUMNS = (
    ["id"]
    + [f"img_p{i}" for i in range(N_CLASSES)]
    + [f"sp_p{i}" for i in range(N_CLASSES)]
    + [f"txt_p{i}" for i in range(N_CLASSES)]
)


def _check_probs(p, name: str) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    if p.shape != (N_CLASSES,):
        raise ShapeError(f"{name} must have {N_CLASSES} entries, got {p.shape}")
    if not np.all(np.isfinite(p)) or np.any(p < 0) or np.any(p > 1) or abs(p.sum() - 1.0) > 1e-6:
        raise ConfigError(f"{name} is not a probability vector: {p.tolist()}")
    return p


@dataclass(frozen=True)
class ModalityProbRecord:
    image_probs: np.ndarray
    speech_probs: np.ndarray
    text_probs: np.ndarray
    sample_id: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "image_probs", _check_probs(self.image_probs, "image_probs"))
        object.__setattr__(self, "speech_probs", _check_probs(self.speech_probs, "speech_probs"))
        object.__setattr__(self, "text_probs", _check_probs(self.text_probs, "text_probs"))


@dataclass(frozen=True)
class FusedLabel:
    averaged_probs: np.ndarray
    label: int
    confidence: float
    sample_id: str | None = None

    @property
    def label_name(self) -> str:
        return CLASSES[self.label]


def fuse_label(rec: ModalityProbRecord) -> FusedLabel:
    avg = (rec.image_probs + rec.speech_probs + rec.text_probs) / 3.0
    label = int(np.argmax(avg))  # first maximum: lowest index wins ties
    return FusedLabel(avg, label, float(avg[label]), rec.sample_id)


def relabel(label: str) -> int:
    """Map an extended emotion name onto the four classes."""
    try:
        return EXTENDED_LABELS[label.strip().lower()]
    except KeyError:
        raise ConfigError(f"unknown emotion label {label!r}") from None


@dataclass
class FilterReport:
    tau: float
    class_max: dict[int, float]
    kept_counts: dict[int, int]
    total_counts: dict[int, int]
    notes: list[str] = field(default_factory=list)

    def kept_ratio(self) -> dict[int, float]:
        """Share of each class among the kept records (0 when nothing is kept)."""
        total = sum(self.kept_counts.values())
        return {c: (self.kept_counts.get(c, 0) / total if total else 0.0) for c in range(N_CLASSES)}


def class_maxima(records: list[FusedLabel]) -> dict[int, float]:
    out: dict[int, float] = {}
    for r in records:
        out[r.label] = max(out.get(r.label, -np.inf), r.confidence)
    return out


def threshold_filter(records: list[FusedLabel], tau: float) -> tuple[list[FusedLabel], FilterReport]:
    """Keep records whose confidence is at least ``tau`` times their class maximum."""
    if not 0 <= tau <= 1:
        raise ConfigError(f"tau must be in [0, 1], got {tau}")
    cmax = class_maxima(records)  # first pass
    kept = [r for r in records if r.confidence >= tau * cmax[r.label]]
    totals = {c: 0 for c in range(N_CLASSES)}
    counts = {c: 0 for c in range(N_CLASSES)}
    for r in records:
        totals[r.label] += 1
    for r in kept:
        counts[r.label] += 1
    notes = [f"class {CLASSES[c]} has no records; skipped" for c in range(N_CLASSES) if totals[c] == 0]
    return kept, FilterReport(tau, cmax, counts, totals, notes)


def threshold_sweep(records: list[FusedLabel], taus) -> list[tuple[float, int, float]]:
    """(tau, class, kept_ratio) rows, one per class per tau."""
    rows = []
    for tau in taus:
        _, rep = threshold_filter(records, tau)
        ratio = rep.kept_ratio()
        rows += [(float(tau), c, ratio[c]) for c in range(N_CLASSES)]
    return rows


# CSV surfaces ---------------------------------------------------------------

def read_records_csv(text: str) -> list[ModalityProbRecord]:
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None:
        raise ConfigError("empty CSV input")
    missing = [c for c in INPUT_COLUMNS if c not in reader.fieldnames]
    if missing:
        raise ConfigError(f"CSV is missing columns: {missing}")
    out = []
    for line, row in enumerate(reader, start=2):
        vals = {}
        for col in INPUT_COLUMNS[1:]:
            cell = (row.get(col) or "").strip()
            if not cell:
                raise ConfigError(f"line {line}: missing value for {col}")
            try:
                vals[col] = float(cell)
            except ValueError:
                raise ConfigError(f"line {line}: {col}={cell!r} is not a number") from None
        out.append(ModalityProbRecord(
            [vals[f"img_p{i}"] for i in range(N_CLASSES)],
            [vals[f"sp_p{i}"] for i in range(N_CLASSES)],
            [vals[f"txt_p{i}"] for i in range(N_CLASSES)],
            sample_id=row["id"],
        ))
    return out


def _csv(rows: list[list[str]]) -> str:
    return "".join(",".join(r) + "\n" for r in rows)


def fused_csv(recs: list[ModalityProbRecord], fused: list[FusedLabel], kept_ids: set[int]) -> str:
    rows = [INPUT_COLUMNS + ["label", "confidence", "kept"]]
    for i, (rec, f) in enumerate(zip(recs, fused)):
        probs = list(rec.image_probs) + list(rec.speech_probs) + list(rec.text_probs)
        rows.append([str(rec.sample_id)] + [fmt_float(p) for p in probs]
                    + [CLASSES[f.label], fmt_float(f.confidence), str(int(i in kept_ids))])
    return _csv(rows)


def sweep_csv(rows: list[tuple[float, int, float]]) -> str:
    return _csv([["tau", "class", "kept_ratio"]] + [[fmt_float(t), CLASSES[c], fmt_float(r)] for t, c, r in rows])
