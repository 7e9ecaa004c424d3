"""Mini-batch training loop, synthetic data and masked evaluation."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..errors import ConfigError, NumericError
from ..predictor import MODALITIES, N_CLASSES, InputSpec, ModalityMask, MultimodalSample
from .network import FusionTopology, gradients, mean_loss


@dataclass
class TrainConfig:
    epochs: int = 50
    lr: float = 1e-4
    batch_size: int = 64
    optimizer: str = "sgd"  # "sgd" or "adam"
    patience: int | None = 5
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8

    def validate(self) -> None:
        if self.epochs <= 0:
            raise ConfigError(f"epochs must be positive, got {self.epochs}")
        # lr == 0 is allowed and leaves parameters untouched
        if not self.lr >= 0:
            raise ConfigError(f"lr must be non-negative, got {self.lr}")
        if self.batch_size <= 0:
            raise ConfigError(f"batch_size must be positive, got {self.batch_size}")
        if self.optimizer not in ("sgd", "adam"):
            raise ConfigError(f"optimizer must be 'sgd' or 'adam', got {self.optimizer!r}")


@dataclass
class TrainingReport:
    records: list[dict] = field(default_factory=list)
    stopped_early: bool = False
    steps: int = 0

    @property
    def final_train_accuracy(self) -> float:
        return self.records[-1]["accuracy"] if self.records else float("nan")


def accuracy(topology: FusionTopology, samples: list[MultimodalSample], mask: ModalityMask | None = None) -> float:
    if not samples:
        return float("nan")
    if mask is not None and mask != ModalityMask.all():
        samples = [s.masked(mask) for s in samples]
    probs = topology.forward_batch(samples).probs
    labels = np.array([s.label for s in samples])
    return float(np.mean(np.argmax(probs, axis=1) == labels))


def effective_weights(topology: FusionTopology) -> dict[str, list[float]]:
    return {wa.name: [float(v) for v in wa.effective] for wa in topology.weighted_add_layers()}


def train(
    topology: FusionTopology,
    dataset: list[MultimodalSample],
    config: TrainConfig | None = None,
    val_set: list[MultimodalSample] | None = None,
    on_step: Callable[[FusionTopology, int], None] | None = None,
    **overrides,
) -> TrainingReport:
    """Train ``topology`` in place.

    Stops early once the validation loss has not improved for
    ``config.patience`` epochs (only when ``val_set`` is given). ``on_step``
    is called after every parameter update.
    """
    config = config or TrainConfig()
    for k, v in overrides.items():
        setattr(config, k, v)
    config.validate()
    if not dataset:
        raise ConfigError("training set is empty")
    if any(s.label is None for s in dataset):
        raise ConfigError("every training sample needs a label")

    rng = np.random.default_rng(config.seed)
    params = dict(topology.parameters())
    m1 = {k: np.zeros_like(p) for k, p in params.items()}
    m2 = {k: np.zeros_like(p) for k, p in params.items()}
    report = TrainingReport()
    best_val, stale = np.inf, 0

    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(dataset))
        losses = []
        for start in range(0, len(order), config.batch_size):
            batch = [dataset[i] for i in order[start:start + config.batch_size]]
            value, grads = gradients(topology, batch)
            if not np.isfinite(value):
                raise NumericError(f"training loss diverged at epoch {epoch}")
            losses.append(value * len(batch))
            report.steps += 1
            if config.lr > 0:
                t = report.steps
                for name, p in params.items():
                    g = grads[name]
                    if config.optimizer == "sgd":
                        p -= config.lr * g
                    else:
                        m1[name] = config.beta1 * m1[name] + (1 - config.beta1) * g
                        m2[name] = config.beta2 * m2[name] + (1 - config.beta2) * g * g
                        mhat = m1[name] / (1 - config.beta1**t)
                        vhat = m2[name] / (1 - config.beta2**t)
                        p -= config.lr * mhat / (np.sqrt(vhat) + config.adam_eps)
            if on_step is not None:
                on_step(topology, report.steps)

        record = {
            "epoch": epoch,
            "loss": float(np.sum(losses) / len(dataset)),
            "accuracy": accuracy(topology, dataset),
            "weights": effective_weights(topology),
        }
        if val_set:
            vloss = mean_loss(topology, val_set)
            record["val_loss"] = vloss
            record["val_accuracy"] = accuracy(topology, val_set)
        report.records.append(record)

        if val_set and config.patience is not None:
            if record["val_loss"] < best_val:
                best_val, stale = record["val_loss"], 0
            else:
                stale += 1
                if stale >= config.patience:
                    report.stopped_early = True
                    break
    return report


def make_synthetic_dataset(
    n: int = 500,
    seed: int = 7,
    spec: InputSpec | None = None,
    noise: float = 0.15,
    corrupt_prob: float = 0.6,
) -> list[MultimodalSample]:
    """Seeded 4-class trimodal data where the modalities jointly decide the label.

    Each modality carries a class prototype plus noise. With probability
    ``corrupt_prob`` one modality (chosen uniformly) carries the prototype of
    a random other class instead, so any single modality is wrong for some
    samples while the two clean modalities always agree on the label. A
    per-modality sum of prototype scores therefore separates the classes.
    """
    spec = spec or InputSpec()
    rng = np.random.default_rng(seed)
    img_proto = rng.random((N_CLASSES,) + tuple(spec.image_shape))
    sp_proto = rng.normal(size=(N_CLASSES,) + tuple(spec.speech_shape))
    n_tok = spec.vocab_size - 1
    if n_tok < N_CLASSES:
        raise ConfigError("vocabulary too small for the synthetic text prototypes")
    # each class owns a disjoint slice of the non-padding vocabulary
    tok_groups = np.array_split(np.arange(1, spec.vocab_size), N_CLASSES)

    samples = []
    for i in range(n):
        y = i % N_CLASSES
        shown = {m: y for m in MODALITIES}
        if rng.random() < corrupt_prob:
            m = MODALITIES[rng.integers(3)]
            shown[m] = int((y + rng.integers(1, N_CLASSES)) % N_CLASSES)
        image = np.clip(img_proto[shown["image"]] + rng.normal(scale=noise, size=spec.image_shape), 0.0, 1.0)
        speech = sp_proto[shown["speech"]] + rng.normal(scale=noise * 2, size=spec.speech_shape)
        text = rng.choice(tok_groups[shown["text"]], size=spec.text_length)
        samples.append(MultimodalSample(image, speech, text, label=y))
    perm = rng.permutation(n)
    return [samples[i] for i in perm]


def split(samples: list, train_fraction: float = 0.8) -> tuple[list, list]:
    cut = int(round(len(samples) * train_fraction))
    return samples[:cut], samples[cut:]


def modality_ablation(topology: FusionTopology, samples: list[MultimodalSample]) -> dict[str, float]:
    """Accuracy with all modalities and with each single modality (others zeroed)."""
    out = {"all": accuracy(topology, samples)}
    for m in MODALITIES:
        out[m] = accuracy(topology, samples, ModalityMask.only(m))
    return out
