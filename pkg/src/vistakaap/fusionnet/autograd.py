"""A small reverse-mode autodiff over numpy arrays.

Only the operations the fusion network needs are provided: affine maps,
ReLU, softmax-weighted sums and the mixed focal / cross-entropy loss.
Every node records its layer name so a non-finite value can be traced.
"""

from __future__ import annotations

import numpy as np

from ..errors import NumericError

FOCAL_GAMMA = 2.0
EPS = 1e-12


class Var:
    __slots__ = ("value", "grad", "parents", "name")

    def __init__(self, value, parents=(), name: str = ""):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self.parents = parents  # tuple of (Var, fn mapping upstream grad -> grad for that parent)
        self.name = name
        if not np.all(np.isfinite(self.value)):
            raise NumericError(f"non-finite value produced by layer {name or '<leaf>'}")

    def backward(self) -> None:
        order: list[Var] = []
        seen: set[int] = set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent, _ in node.parents:
                if id(parent) not in seen:
                    stack.append((parent, False))
        for node in order:
            node.grad = None
        self.grad = np.ones_like(self.value)
        for node in reversed(order):
            if node.grad is None:
                continue
            for parent, fn in node.parents:
                g = fn(node.grad)
                if not np.all(np.isfinite(g)):
                    raise NumericError(f"non-finite gradient flowing into layer {parent.name or '<leaf>'}")
                parent.grad = g if parent.grad is None else parent.grad + g


def affine(x: Var, W: Var, b: Var, name: str) -> Var:
    """``x @ W + b`` for a batch ``x`` of shape (B, in)."""
    out = x.value @ W.value + b.value
    return Var(
        out,
        (
            (x, lambda g: g @ W.value.T),
            (W, lambda g: x.value.T @ g),
            (b, lambda g: g.sum(axis=0)),
        ),
        name,
    )


def relu(x: Var, name: str) -> Var:
    mask = x.value > 0
    return Var(np.where(mask, x.value, 0.0), ((x, lambda g: g * mask),), name)


def softmax_weights(raw: np.ndarray) -> np.ndarray:
    e = np.exp(raw - raw.max())
    return e / e.sum()


def weighted_add(inputs: list[Var], raw: Var, name: str) -> Var:
    """``sum_j softmax(raw)_j * inputs[j]``."""
    a = softmax_weights(raw.value)
    out = sum(a[j] * x.value for j, x in enumerate(inputs))

    def raw_grad(g):
        da = np.array([np.sum(g * x.value) for x in inputs])
        return a * (da - np.dot(a, da))

    parents = tuple((x, (lambda g, aj=a[j]: aj * g)) for j, x in enumerate(inputs))
    return Var(out, parents + ((raw, raw_grad),), name)


def softmax_rows(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def mixed_loss_terms(p_t: np.ndarray, gamma: float = FOCAL_GAMMA) -> tuple[np.ndarray, np.ndarray]:
    """Per-sample loss and its derivative with respect to ``p_t``.

    loss = 0.5 * CE + 0.5 * (1 - p_t)**gamma * CE, CE = -log(max(p_t, eps)).
    """
    p = np.maximum(p_t, EPS)
    ce = -np.log(p)
    focal = (1.0 - p) ** gamma * ce
    dce = -1.0 / p
    dfocal = -gamma * (1.0 - p) ** (gamma - 1.0) * ce + (1.0 - p) ** gamma * dce
    d = 0.5 * dce + 0.5 * dfocal
    d = np.where(p_t > EPS, d, 0.0)  # clamped region is flat
    return 0.5 * ce + 0.5 * focal, d


def mean_loss_from_logits(logits: Var, targets: np.ndarray, name: str = "loss") -> Var:
    z = logits.value
    probs = softmax_rows(z)
    rows = np.arange(z.shape[0])
    p_t = probs[rows, targets]
    per, d_pt = mixed_loss_terms(p_t)

    def grad(g):
        # d p_t / d z_j = p_t * (onehot_j - p_j)
        onehot = np.zeros_like(probs)
        onehot[rows, targets] = 1.0
        dz = (d_pt * p_t)[:, None] * (onehot - probs)
        return float(g) * dz / z.shape[0]

    return Var(per.mean(), ((logits, grad),), name)
