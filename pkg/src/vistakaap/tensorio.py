"""Tensor records and deterministic text serialization.

A tensor record is ``{"shape": [...], "data": [row-major floats]}``. Every
file this package writes goes through :func:`dumps_json` or :func:`fmt_float`
so that identical inputs give byte-identical files.
"""

from __future__ import annotations

import json
import math
from typing import Any

import numpy as np

from .errors import NumericError, ShapeError


def fmt_float(x: float) -> str:
    x = float(x)
    if not math.isfinite(x):
        raise NumericError(f"cannot serialize non-finite value {x!r}")
    if x == 0.0:
        # collapse -0.0 so sign noise never changes file bytes
        return "0"
    return format(x, ".17g")


def tensor_to_record(arr: np.ndarray) -> dict:
    arr = np.asarray(arr, dtype=np.float64)
    return {"shape": [int(s) for s in arr.shape], "data": [float(v) for v in arr.ravel()]}


def record_to_tensor(rec: dict) -> np.ndarray:
    try:
        shape = [int(s) for s in rec["shape"]]
        data = np.asarray(rec["data"], dtype=np.float64)
    except (KeyError, TypeError, ValueError) as exc:
        raise ShapeError(f"malformed tensor record: {exc}") from exc
    if any(s < 1 for s in shape):
        raise ShapeError(f"tensor shape must be positive, got {shape}")
    if int(np.prod(shape)) != data.size:
        raise ShapeError(f"shape {shape} needs {int(np.prod(shape))} values, got {data.size}")
    if not np.all(np.isfinite(data)):
        raise NumericError("tensor record contains non-finite values")
    return data.reshape(shape)


def _emit(obj: Any, out: list[str], indent: int, level: int) -> None:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if obj is None:
        out.append("null")
    elif isinstance(obj, bool):
        out.append("true" if obj else "false")
    elif isinstance(obj, (int, np.integer)):
        out.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        out.append(fmt_float(obj))
    elif isinstance(obj, str):
        out.append(json.dumps(obj))
    elif isinstance(obj, dict):
        if not obj:
            out.append("{}")
            return
        out.append("{\n")
        items = sorted(obj.items())
        for i, (k, v) in enumerate(items):
            out.append(f"{pad}{json.dumps(str(k))}: ")
            _emit(v, out, indent, level + 1)
            out.append(",\n" if i < len(items) - 1 else "\n")
        out.append(end + "}")
    elif isinstance(obj, (list, tuple, np.ndarray)):
        seq = list(obj)
        # numeric rows stay on one line; nested structures get one item per line
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in seq):
            parts: list[str] = []
            for v in seq:
                _emit(v, parts, indent, level + 1)
                parts.append(", ")
            out.append("[" + "".join(parts[:-1]) + "]")
            return
        out.append("[\n")
        for i, v in enumerate(seq):
            out.append(pad)
            _emit(v, out, indent, level + 1)
            out.append(",\n" if i < len(seq) - 1 else "\n")
        out.append(end + "]")
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps_json(obj: Any, indent: int = 1) -> str:
    """Serialize with sorted keys and 17-significant-digit floats."""
    out: list[str] = []
    _emit(obj, out, indent, 0)
    out.append("\n")
    return "".join(out)


def dumps_jsonl_record(obj: dict) -> str:
    out: list[str] = []
    _emit(obj, out, 0, 0)
    return "".join(out).replace("\n", "") + "\n"


def write_text(path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
