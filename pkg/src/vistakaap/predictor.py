"""Black-box predictor contract, masked prediction and built-in toy models.

A predictor maps a :class:`MultimodalSample` to a length-4 vector of
per-class scores. Probability-mode predictors return a softmax output;
score-mode predictors (used by the oracle games) may return any finite reals.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ConfigError, NumericError, ShapeError
from .tensorio import record_to_tensor, tensor_to_record

CLASSES = ("angry", "happy", "hate", "sad")
N_CLASSES = len(CLASSES)
PAD_TOKEN = 0
MODALITIES = ("image", "speech", "text")


def softmax(z: np.ndarray, axis: int = -1) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(z - z.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


@dataclass(frozen=True)
class MultimodalSample:
    """One (image, speech spectrogram, token sequence) triple.

    ``image`` is ``(H, W, C)`` in [0, 1], ``speech`` is ``(F, T)`` and
    ``text`` is a 1-D array of non-negative token ids (``PAD_TOKEN`` = 0).
    Arrays are copied and frozen on construction.
    """

    image: np.ndarray
    speech: np.ndarray
    text: np.ndarray
    label: int | None = None

    def __post_init__(self):
        image = np.array(self.image, dtype=np.float64)
        speech = np.array(self.speech, dtype=np.float64)
        text = np.array(self.text, dtype=np.int64).reshape(-1)
        if image.ndim != 3 or min(image.shape) < 1:
            raise ShapeError(f"image must be (H, W, C) with positive sizes, got {image.shape}")
        if speech.ndim != 2 or min(speech.shape) < 1:
            raise ShapeError(f"speech must be (F, T) with positive sizes, got {speech.shape}")
        if not (np.all(np.isfinite(image)) and np.all(np.isfinite(speech))):
            raise NumericError("sample contains non-finite values")
        if text.size and text.min() < 0:
            raise ShapeError("token ids must be non-negative")
        if self.label is not None and not 0 <= int(self.label) < N_CLASSES:
            raise ConfigError(f"label must be in 0..{N_CLASSES - 1}, got {self.label}")
        for a in (image, speech, text):
            a.setflags(write=False)
        object.__setattr__(self, "image", image)
        object.__setattr__(self, "speech", speech)
        object.__setattr__(self, "text", text)

    def replace(self, **changes) -> "MultimodalSample":
        fields = {"image": self.image, "speech": self.speech, "text": self.text, "label": self.label}
        fields.update(changes)
        return MultimodalSample(**fields)

    def masked(self, mask: "ModalityMask") -> "MultimodalSample":
        return MultimodalSample(
            image=self.image if mask.include_image else np.zeros_like(self.image),
            speech=self.speech if mask.include_speech else np.zeros_like(self.speech),
            text=self.text if mask.include_text else np.full_like(self.text, PAD_TOKEN),
            label=self.label,
        )

    def get(self, modality: str) -> np.ndarray:
        return getattr(self, modality)

    def to_dict(self) -> dict:
        d = {
            "image": tensor_to_record(self.image),
            "speech": tensor_to_record(self.speech),
            "text": [int(t) for t in self.text],
        }
        if self.label is not None:
            d["label"] = int(self.label)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "MultimodalSample":
        try:
            return cls(
                image=record_to_tensor(d["image"]),
                speech=record_to_tensor(d["speech"]),
                text=np.asarray(d["text"], dtype=np.int64),
                label=d.get("label"),
            )
        except KeyError as exc:
            raise ShapeError(f"sample record missing field {exc}") from exc


@dataclass(frozen=True)
class ModalityMask:
    include_image: bool = True
    include_speech: bool = True
    include_text: bool = True

    @classmethod
    def all(cls) -> "ModalityMask":
        return cls(True, True, True)

    @classmethod
    def none(cls) -> "ModalityMask":
        return cls(False, False, False)

    @classmethod
    def only(cls, modality: str) -> "ModalityMask":
        _check_modality(modality)
        return cls(*(m == modality for m in MODALITIES))

    @classmethod
    def all_but(cls, modality: str) -> "ModalityMask":
        _check_modality(modality)
        return cls(*(m != modality for m in MODALITIES))

    @classmethod
    def from_bits(cls, bits: int) -> "ModalityMask":
        """bit 0 = image, bit 1 = speech, bit 2 = text."""
        return cls(bool(bits & 1), bool(bits & 2), bool(bits & 4))

    @property
    def bits(self) -> int:
        return int(self.include_image) | int(self.include_speech) << 1 | int(self.include_text) << 2


def _check_modality(modality: str) -> None:
    if modality not in MODALITIES:
        raise ConfigError(f"unknown modality {modality!r}; expected one of {MODALITIES}")


@dataclass(frozen=True)
class InputSpec:
    image_shape: tuple[int, int, int] = (16, 16, 3)
    speech_shape: tuple[int, int] = (16, 16)
    text_length: int = 6
    vocab_size: int = 16

    def check(self, sample: MultimodalSample) -> None:
        if sample.image.shape != tuple(self.image_shape):
            raise ShapeError(f"image shape {sample.image.shape} != expected {tuple(self.image_shape)}")
        if sample.speech.shape != tuple(self.speech_shape):
            raise ShapeError(f"speech shape {sample.speech.shape} != expected {tuple(self.speech_shape)}")
        if sample.text.size != self.text_length:
            raise ShapeError(f"text length {sample.text.size} != expected {self.text_length}")
        if sample.text.size and sample.text.max() >= self.vocab_size:
            raise ShapeError(f"token id {int(sample.text.max())} outside vocabulary of {self.vocab_size}")

    def to_dict(self) -> dict:
        return {
            "image_shape": list(self.image_shape),
            "speech_shape": list(self.speech_shape),
            "text_length": self.text_length,
            "vocab_size": self.vocab_size,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "InputSpec":
        base = cls()
        return cls(
            image_shape=tuple(int(v) for v in d.get("image_shape", base.image_shape)),
            speech_shape=tuple(int(v) for v in d.get("speech_shape", base.speech_shape)),
            text_length=int(d.get("text_length", base.text_length)),
            vocab_size=int(d.get("vocab_size", base.vocab_size)),
        )

    def zeros(self) -> MultimodalSample:
        return MultimodalSample(
            image=np.zeros(self.image_shape),
            speech=np.zeros(self.speech_shape),
            text=np.full(self.text_length, PAD_TOKEN),
        )

    def random_sample(self, rng: np.random.Generator, label: int | None = None) -> MultimodalSample:
        return MultimodalSample(
            image=rng.random(self.image_shape),
            speech=rng.normal(size=self.speech_shape),
            text=rng.integers(1, self.vocab_size, size=self.text_length),
            label=label,
        )


class Predictor:
    """Base class. Subclasses implement :meth:`_scores` as a pure function.

    Instances are treated as immutable after construction, so ``predict`` is
    safe to call from several threads at once.
    """

    kind = "abstract"
    probability = True

    def __init__(self, spec: InputSpec):
        self.spec = spec

    def _scores(self, sample: MultimodalSample) -> np.ndarray:
        raise NotImplementedError

    def predict(self, sample: MultimodalSample) -> np.ndarray:
        self.spec.check(sample)
        out = np.asarray(self._scores(sample), dtype=np.float64).reshape(-1)
        if out.shape != (N_CLASSES,):
            raise ShapeError(f"{self.kind} model returned {out.shape[0]} scores, expected {N_CLASSES}")
        if not np.all(np.isfinite(out)):
            raise NumericError(f"{self.kind} model produced non-finite output")
        return out

    def predict_masked(self, sample: MultimodalSample, mask: ModalityMask) -> np.ndarray:
        if mask == ModalityMask.all():
            return self.predict(sample)
        return self.predict(sample.masked(mask))

    # serialization hooks
    def config(self) -> dict:
        return {"input": self.spec.to_dict()}

    def weights(self) -> list[np.ndarray]:
        return []


def predict(model: Predictor, sample: MultimodalSample) -> np.ndarray:
    return model.predict(sample)


def predict_masked(model: Predictor, sample: MultimodalSample, mask: ModalityMask) -> np.ndarray:
    return model.predict_masked(sample, mask)


def modality_present(sample: MultimodalSample, modality: str) -> bool:
    x = sample.get(modality)
    if modality == "text":
        return bool(np.any(x != PAD_TOKEN))
    return bool(np.any(x != 0))


class ConstantModel(Predictor):
    kind = "constant"

    def __init__(self, spec: InputSpec, value: Sequence[float] | float = 0.25, probability: bool | None = None):
        super().__init__(spec)
        v = np.broadcast_to(np.asarray(value, dtype=np.float64), (N_CLASSES,)).copy()
        v.setflags(write=False)
        self.value = v
        if probability is None:
            probability = bool(np.all(v >= 0) and abs(v.sum() - 1.0) <= 1e-9)
        self.probability = probability

    def _scores(self, sample):
        return self.value.copy()

    def config(self):
        return {**super().config(), "value": self.value.tolist()}


class AdditiveModel(Predictor):
    """Scores ``b + a_image + a_speech + a_text``, optionally softmaxed.

    Each modality contributes ``W_m @ features_m`` plus a fixed offset
    ``a_m`` that is added only while the modality is present (non-zero).
    Text features are a bag of token embeddings with the padding row zero.
    """

    kind = "additive"

    def __init__(
        self,
        spec: InputSpec,
        bias: np.ndarray,
        w_image: np.ndarray,
        w_speech: np.ndarray,
        w_text: np.ndarray,
        offsets: np.ndarray | None = None,
        output: str = "scores",
    ):
        super().__init__(spec)
        if output not in ("scores", "probs"):
            raise ConfigError(f"additive output must be 'scores' or 'probs', got {output!r}")
        H, W, C = spec.image_shape
        F, T = spec.speech_shape
        self.bias = _frozen(bias, (N_CLASSES,), "bias")
        self.w_image = _frozen(w_image, (N_CLASSES, H * W * C), "w_image")
        self.w_speech = _frozen(w_speech, (N_CLASSES, F * T), "w_speech")
        w_text = np.array(w_text, dtype=np.float64)
        if w_text.shape != (spec.vocab_size, N_CLASSES):
            raise ConfigError(f"w_text must be {(spec.vocab_size, N_CLASSES)}, got {w_text.shape}")
        w_text[PAD_TOKEN] = 0.0
        self.w_text = _frozen(w_text, w_text.shape, "w_text")
        if offsets is None:
            offsets = np.zeros((3, N_CLASSES))
        self.offsets = _frozen(offsets, (3, N_CLASSES), "offsets")
        self.output = output
        self.probability = output == "probs"

    def contributions(self, sample: MultimodalSample) -> dict[str, np.ndarray]:
        """Per-modality additive terms for ``sample`` (before any softmax)."""
        out = {
            "image": self.w_image @ sample.image.ravel(),
            "speech": self.w_speech @ sample.speech.ravel(),
            "text": self.w_text[sample.text].sum(axis=0) if sample.text.size else np.zeros(N_CLASSES),
        }
        for m_idx, m in enumerate(MODALITIES):
            if modality_present(sample, m):
                out[m] = out[m] + self.offsets[m_idx]
        return out

    def _scores(self, sample):
        c = self.contributions(sample)
        z = self.bias + c["image"] + c["speech"] + c["text"]
        return softmax(z) if self.probability else z

    def config(self):
        return {**super().config(), "output": self.output}

    def weights(self):
        return [self.bias, self.w_image, self.w_speech, self.w_text, self.offsets]

    @classmethod
    def random(cls, spec: InputSpec, seed: int, scale: float = 1.0, output: str = "scores") -> "AdditiveModel":
        rng = np.random.default_rng(seed)
        H, W, C = spec.image_shape
        F, T = spec.speech_shape
        return cls(
            spec,
            bias=rng.normal(scale=scale, size=N_CLASSES),
            w_image=rng.normal(scale=scale / (H * W * C), size=(N_CLASSES, H * W * C)),
            w_speech=rng.normal(scale=scale / (F * T), size=(N_CLASSES, F * T)),
            w_text=rng.normal(scale=scale / max(spec.text_length, 1), size=(spec.vocab_size, N_CLASSES)),
            offsets=rng.normal(scale=scale, size=(3, N_CLASSES)),
            output=output,
        )


@dataclass(frozen=True)
class ValueFunction:
    """A cooperative game on ``n`` players, tabulated by coalition bitmask."""

    n: int
    values: tuple[float, ...] = field(default=())

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        if len(vals) != 1 << self.n:
            raise ConfigError(f"game on {self.n} players needs {1 << self.n} values, got {len(vals)}")
        if not all(math.isfinite(v) for v in vals):
            raise NumericError("game values must be finite")
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_callable(cls, n: int, fn: Callable[[frozenset], float]) -> "ValueFunction":
        return cls(n, tuple(fn(frozenset(i for i in range(n) if s >> i & 1)) for s in range(1 << n)))

    def __call__(self, coalition: int | Iterable[int]) -> float:
        if not isinstance(coalition, (int, np.integer)):
            coalition = sum(1 << i for i in set(coalition))
        return self.values[int(coalition)]


class TableGameModel(Predictor):
    """Exposes a 3-player game through the modality-mask interface.

    Players are (image, speech, text); a modality counts as present when any
    of its entries is non-zero. The game value is broadcast to all classes.
    """

    kind = "table-game"
    probability = False

    def __init__(self, spec: InputSpec, game: ValueFunction):
        super().__init__(spec)
        if game.n != 3:
            raise ConfigError(f"table-game needs a 3-player game, got {game.n}")
        self.game = game

    def _scores(self, sample):
        bits = sum(1 << i for i, m in enumerate(MODALITIES) if modality_present(sample, m))
        return np.full(N_CLASSES, self.game(bits))

    def config(self):
        return {**super().config(), "values": list(self.game.values)}


def _frozen(a, shape, name) -> np.ndarray:
    a = np.array(a, dtype=np.float64)
    if a.shape != tuple(shape):
        raise ConfigError(f"{name} must have shape {tuple(shape)}, got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NumericError(f"{name} contains non-finite values")
    a.setflags(write=False)
    return a


def make_toy_model(kind: str, config: dict | None = None) -> Predictor:
    """Build one of the built-in predictors.

    ``constant``: ``value`` (scalar or 4-vector). ``additive``: either
    explicit ``bias``/``w_image``/``w_speech``/``w_text``/``offsets`` or a
    ``seed``; ``output`` is ``"scores"`` or ``"probs"``. ``table-game``:
    ``values``, 8 game values by bitmask (image=1, speech=2, text=4).
    ``fusion``: ``seed``, ``D``, ``variant`` and optional ``input``.
    """
    config = dict(config or {})
    spec = InputSpec.from_dict(config.get("input", {}))
    if kind == "constant":
        return ConstantModel(spec, config.get("value", 0.25), config.get("probability"))
    if kind == "additive":
        if "bias" in config:
            return AdditiveModel(
                spec,
                bias=config["bias"],
                w_image=config["w_image"],
                w_speech=config["w_speech"],
                w_text=config["w_text"],
                offsets=config.get("offsets"),
                output=config.get("output", "scores"),
            )
        return AdditiveModel.random(spec, int(config.get("seed", 0)), float(config.get("scale", 1.0)),
                                    config.get("output", "scores"))
    if kind == "table-game":
        if "values" not in config:
            raise ConfigError("table-game config needs 'values'")
        return TableGameModel(spec, ValueFunction(3, tuple(config["values"])))
    if kind == "fusion":
        from .fusionnet import FusionPredictor, build_topology

        topo = build_topology(
            seed=int(config.get("seed", 0)),
            D=int(config.get("D", 32)),
            variant=config.get("variant", "vista"),
            spec=spec,
        )
        return FusionPredictor(topo)
    raise ConfigError(f"unknown model kind {kind!r}")


def model_to_dict(model: Predictor) -> dict:
    return {
        "kind": model.kind,
        "config": model.config(),
        "weights": [tensor_to_record(w) for w in model.weights()],
    }


def model_from_dict(d: dict) -> Predictor:
    try:
        kind = d["kind"]
        config = dict(d.get("config", {}))
        weights = [record_to_tensor(r) for r in d.get("weights", [])]
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"malformed model document: {exc}") from exc
    spec = InputSpec.from_dict(config.get("input", {}))
    if kind == "constant":
        return ConstantModel(spec, config.get("value", 0.25))
    if kind == "additive":
        if len(weights) != 5:
            raise ConfigError(f"additive model needs 5 weight tensors, got {len(weights)}")
        bias, wi, ws, wt, off = weights
        return AdditiveModel(spec, bias, wi, ws, wt, off, config.get("output", "scores"))
    if kind == "table-game":
        return TableGameModel(spec, ValueFunction(3, tuple(config["values"])))
    if kind == "fusion":
        from .fusionnet import FusionPredictor, topology_from_dict

        return FusionPredictor(topology_from_dict(config, weights))
    raise ConfigError(f"unknown model kind {kind!r}")


def save_model(model: Predictor, path) -> None:
    from .tensorio import dumps_json, write_text

    write_text(path, dumps_json(model_to_dict(model)))


def load_model(path) -> Predictor:
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
    return model_from_dict(doc)
