"""Hybrid intermediate/late fusion network with learnable WeightedAdd layers.

Each modality m feeds a deeper "pre-trained-like" stack P_m and a shallower
"simpler" stack S_m, both ending in width D. Pairs (P_a, S_b) are fused by a
two-input WeightedAdd, passed through a per-pair head of two dense layers of
width 4*D, and the pair logits are fused by a final WeightedAdd followed by
a dense layer to the four classes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError, RejectedConfigurationError, ShapeError
from ..predictor import (
    MODALITIES,
    N_CLASSES,
    PAD_TOKEN,
    InputSpec,
    MultimodalSample,
    Predictor,
)
from .autograd import Var, affine, mean_loss_from_logits, relu, softmax_rows, softmax_weights, weighted_add

# (pre-trained modality, simpler modality)
VISTA_PAIRS = (
    ("image", "speech"),
    ("image", "text"),
    ("speech", "image"),
    ("speech", "text"),
    ("text", "image"),
    ("text", "speech"),
)

BASELINE_PAIRS = {
    "baseline#1": (("image", "image"), ("speech", "speech"), ("text", "text")),
    "baseline#2": (("image", "image"), ("speech", "text"), ("text", "speech")),
    "baseline#3": (("image", "speech"), ("speech", "image"), ("text", "text")),
    "baseline#4": (("image", "speech"), ("speech", "text"), ("text", "image")),
    "baseline#5": (("image", "text"), ("speech", "image"), ("text", "speech")),
    "baseline#6": (("image", "text"), ("speech", "speech"), ("text", "image")),
}

VARIANTS = ("vista",) + tuple(BASELINE_PAIRS)

RAW_INIT = 0.05


def pairs_for(variant: str) -> tuple[tuple[str, str], ...]:
    if variant == "vista":
        return VISTA_PAIRS
    if variant == "baseline#1":
        raise RejectedConfigurationError(
            "baseline#1 pairs every pre-trained network with the simpler network of the same "
            "modality, so no information crosses modalities; this configuration is discarded"
        )
    if variant not in BASELINE_PAIRS:
        raise ConfigError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    return BASELINE_PAIRS[variant]


def input_width(spec: InputSpec, modality: str) -> int:
    if modality == "image":
        return int(np.prod(spec.image_shape))
    if modality == "speech":
        return int(np.prod(spec.speech_shape))
    return spec.text_length * spec.vocab_size


def featurize(samples: list[MultimodalSample], spec: InputSpec) -> dict[str, np.ndarray]:
    """Stack samples into flat per-modality batch matrices.

    Text becomes a one-hot (position, token) grid with the padding row left
    empty, so an all-padding sequence is an all-zero feature vector.
    """
    B = len(samples)
    for s in samples:
        spec.check(s)
    img = np.stack([s.image.ravel() for s in samples]) if B else np.zeros((0, input_width(spec, "image")))
    sp = np.stack([s.speech.ravel() for s in samples]) if B else np.zeros((0, input_width(spec, "speech")))
    L, V = spec.text_length, spec.vocab_size
    txt = np.zeros((B, L, V))
    for b, s in enumerate(samples):
        pos = np.nonzero(s.text != PAD_TOKEN)[0]
        txt[b, pos, s.text[pos]] = 1.0
    return {"image": img, "speech": sp, "text": txt.reshape(B, L * V)}


@dataclass
class Dense:
    name: str
    W: np.ndarray
    b: np.ndarray


@dataclass
class WeightedAddLayer:
    name: str
    raw: np.ndarray

    @property
    def effective(self) -> np.ndarray:
        return softmax_weights(self.raw)

    def apply(self, inputs: list[np.ndarray]) -> np.ndarray:
        if len(inputs) != self.raw.size:
            raise ConfigError(f"{self.name}: expected {self.raw.size} inputs, got {len(inputs)}")
        shape = np.shape(inputs[0])
        if any(np.shape(x) != shape for x in inputs):
            raise ShapeError(f"{self.name}: inputs must share one shape")
        a = self.effective
        return sum(a[j] * np.asarray(x, dtype=np.float64) for j, x in enumerate(inputs))


def weighted_add_op(inputs: list[np.ndarray], layer: WeightedAddLayer) -> np.ndarray:
    if not inputs:
        raise ConfigError("weighted_add needs at least one input")
    return layer.apply(inputs)


@dataclass
class FusionTopology:
    spec: InputSpec
    D: int
    variant: str
    seed: int
    pairs: tuple[tuple[str, str], ...]
    branches: dict[str, list[Dense]]  # keys "P_image", "S_text", ...
    pair_adds: list[WeightedAddLayer]
    heads: list[list[Dense]]
    final_add: WeightedAddLayer
    final: Dense
    hidden: int = 0

    # parameter bookkeeping -------------------------------------------------
    def parameters(self) -> list[tuple[str, np.ndarray]]:
        """All trainable arrays in a fixed order (checkpoint order)."""
        out: list[tuple[str, np.ndarray]] = []
        for key in sorted(self.branches):
            for layer in self.branches[key]:
                out += [(f"{layer.name}.W", layer.W), (f"{layer.name}.b", layer.b)]
        for wa in self.pair_adds:
            out.append((f"{wa.name}.raw", wa.raw))
        for head in self.heads:
            for layer in head:
                out += [(f"{layer.name}.W", layer.W), (f"{layer.name}.b", layer.b)]
        out.append((f"{self.final_add.name}.raw", self.final_add.raw))
        out += [(f"{self.final.name}.W", self.final.W), (f"{self.final.name}.b", self.final.b)]
        return out

    def weighted_add_layers(self) -> list[WeightedAddLayer]:
        return list(self.pair_adds) + [self.final_add]

    def copy(self) -> "FusionTopology":
        return topology_from_dict(self.config(), [p.copy() for _, p in self.parameters()])

    def config(self) -> dict:
        return {
            "input": self.spec.to_dict(),
            "D": self.D,
            "hidden": self.hidden,
            "variant": self.variant,
            "seed": self.seed,
        }

    # forward ---------------------------------------------------------------
    def graph(self, feats: dict[str, np.ndarray], leaves: dict[str, Var] | None = None):
        """Build the computation graph; returns (logits, pair outputs, pair logits)."""
        if leaves is None:
            leaves = {name: Var(p, name=name) for name, p in self.parameters()}

        def dense(x, layer, act):
            h = affine(x, leaves[f"{layer.name}.W"], leaves[f"{layer.name}.b"], layer.name)
            return relu(h, layer.name + ".relu") if act else h

        inputs = {m: Var(feats[m], name=f"input.{m}") for m in MODALITIES}
        emb = {}
        for key, layers in self.branches.items():
            h = inputs[key[2:]]
            for layer in layers:
                h = dense(h, layer, True)
            emb[key] = h
        pair_out, pair_logits = [], []
        for (pm, sm), wa, head in zip(self.pairs, self.pair_adds, self.heads):
            o = weighted_add([emb["P_" + pm], emb["S_" + sm]], leaves[f"{wa.name}.raw"], wa.name)
            pair_out.append(o)
            h = dense(o, head[0], True)
            pair_logits.append(dense(h, head[1], False))
        fused = weighted_add(pair_logits, leaves[f"{self.final_add.name}.raw"], self.final_add.name)
        logits = dense(fused, self.final, False)
        return logits, pair_out, pair_logits, leaves

    def forward_batch(self, samples: list[MultimodalSample]) -> "ForwardResult":
        logits, pair_out, pair_logits, _ = self.graph(featurize(samples, self.spec))
        return ForwardResult(
            probs=softmax_rows(logits.value),
            logits=logits.value,
            pair_outputs=[o.value for o in pair_out],
            pair_logits=[o.value for o in pair_logits],
        )


@dataclass
class ForwardResult:
    probs: np.ndarray
    logits: np.ndarray
    pair_outputs: list[np.ndarray] = field(default_factory=list)
    pair_logits: list[np.ndarray] = field(default_factory=list)


def _dense(rng: np.random.Generator, name: str, n_in: int, n_out: int) -> Dense:
    # He-uniform for ReLU stacks
    limit = np.sqrt(6.0 / n_in)
    return Dense(name, rng.uniform(-limit, limit, size=(n_in, n_out)), np.zeros(n_out))


def build_topology(
    seed: int = 0,
    D: int = 32,
    variant: str = "vista",
    spec: InputSpec | None = None,
    hidden: int | None = None,
) -> FusionTopology:
    pairs = pairs_for(variant)
    if D < 1:
        raise ConfigError(f"D must be positive, got {D}")
    spec = spec or InputSpec()
    hidden = hidden or 2 * D
    rng = np.random.default_rng(seed)
    branches: dict[str, list[Dense]] = {}
    for m in MODALITIES:
        n_in = input_width(spec, m)
        branches["P_" + m] = [
            _dense(rng, f"P_{m}.0", n_in, hidden),
            _dense(rng, f"P_{m}.1", hidden, hidden),
            _dense(rng, f"P_{m}.out", hidden, D),
        ]
        branches["S_" + m] = [
            _dense(rng, f"S_{m}.0", n_in, hidden),
            _dense(rng, f"S_{m}.out", hidden, D),
        ]
    pair_adds, heads = [], []
    for idx, (pm, sm) in enumerate(pairs, start=1):
        pair_adds.append(WeightedAddLayer(f"O{idx}.add", rng.uniform(-RAW_INIT, RAW_INIT, size=2)))
        heads.append([_dense(rng, f"O{idx}.head0", D, 4 * D), _dense(rng, f"O{idx}.head1", 4 * D, 4 * D)])
    final_add = WeightedAddLayer("O.add", rng.uniform(-RAW_INIT, RAW_INIT, size=len(pairs)))
    final = _dense(rng, "O.dense", 4 * D, N_CLASSES)
    return FusionTopology(spec, D, variant, seed, pairs, branches, pair_adds, heads, final_add, final, hidden)


def topology_from_dict(config: dict, weights: list[np.ndarray]) -> FusionTopology:
    topo = build_topology(
        seed=int(config.get("seed", 0)),
        D=int(config["D"]),
        variant=config.get("variant", "vista"),
        spec=InputSpec.from_dict(config.get("input", {})),
        hidden=int(config.get("hidden", 0)) or None,
    )
    params = topo.parameters()
    if len(weights) != len(params):
        raise ConfigError(f"checkpoint has {len(weights)} tensors, topology needs {len(params)}")
    for (name, p), w in zip(params, weights):
        w = np.asarray(w, dtype=np.float64).reshape(-1) if p.ndim == 1 else np.asarray(w, dtype=np.float64)
        if w.shape != p.shape:
            raise ShapeError(f"checkpoint tensor for {name} has shape {w.shape}, expected {p.shape}")
        p[...] = w
    return topo


def forward(topology: FusionTopology, sample: MultimodalSample) -> np.ndarray:
    return topology.forward_batch([sample]).probs[0]


def loss(pred, target: int) -> float:
    """0.5 * cross-entropy + 0.5 * focal (gamma 2) for one probability vector."""
    from .autograd import mixed_loss_terms

    pred = np.asarray(pred, dtype=np.float64)
    if not 0 <= int(target) < N_CLASSES:
        raise ConfigError(f"target must be in 0..{N_CLASSES - 1}, got {target}")
    value, _ = mixed_loss_terms(np.array([pred[int(target)]]))
    return float(value[0])


def gradients(topology: FusionTopology, batch: list[MultimodalSample]) -> tuple[float, dict[str, np.ndarray]]:
    """Mean loss over ``batch`` and its exact gradient for every parameter."""
    if not batch:
        raise ConfigError("gradients need a non-empty batch")
    if any(s.label is None for s in batch):
        raise ConfigError("every sample in a training batch needs a label")
    targets = np.array([s.label for s in batch])
    logits, _, _, leaves = topology.graph(featurize(batch, topology.spec))
    L = mean_loss_from_logits(logits, targets)
    L.backward()
    grads = {}
    for name, p in topology.parameters():
        g = leaves[name].grad
        grads[name] = np.zeros_like(p) if g is None else g
    return float(L.value), grads


def mean_loss(topology: FusionTopology, batch: list[MultimodalSample]) -> float:
    probs = topology.forward_batch(batch).probs
    targets = np.array([s.label for s in batch])
    from .autograd import mixed_loss_terms

    per, _ = mixed_loss_terms(probs[np.arange(len(batch)), targets])
    return float(per.mean())


class FusionPredictor(Predictor):
    kind = "fusion"
    probability = True

    def __init__(self, topology: FusionTopology):
        super().__init__(topology.spec)
        self.topology = topology

    def _scores(self, sample):
        return forward(self.topology, sample)

    def config(self):
        return self.topology.config()

    def weights(self):
        return [p for _, p in self.topology.parameters()]
