"""Model parameterization, softmax cross-entropy, and local SGD.

Models are flat float64 vectors plus an architecture descriptor, so aggregation
is plain vector arithmetic.
"""

import hashlib
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from src.core.errors import ModelShapeError

Seed = Union[int, Sequence[int]]


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    input_dim: int
    num_classes: int
    hidden: Tuple[int, ...] = ()

    def __post_init__(self):
        if self.kind not in ("logistic", "mlp"):
            raise ModelShapeError(f"unknown architecture: {self.kind}")
        if self.kind == "mlp" and len(self.hidden) != 1:
            raise ModelShapeError("mlp takes exactly one hidden layer width")

    @property
    def widths(self) -> Tuple[int, ...]:
        return (self.input_dim,) + tuple(self.hidden) + (self.num_classes,)

    @property
    def num_params(self) -> int:
        w = self.widths
        return sum(w[i] * w[i + 1] + w[i + 1] for i in range(len(w) - 1))

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "input_dim": self.input_dim,
            "num_classes": self.num_classes,
            "hidden": list(self.hidden),
        }


@dataclass(frozen=True)
class ModelParams:
    spec: ModelSpec
    vector: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.vector.ndim != 1 or len(self.vector) != self.spec.num_params:
            raise ModelShapeError(
                f"parameter vector has {self.vector.size} entries, {self.spec.kind} needs {self.spec.num_params}"
            )
        if not np.all(np.isfinite(self.vector)):
            raise ModelShapeError("parameter vector has non-finite entries")

    @property
    def num_params(self) -> int:
        return self.spec.num_params

    def with_vector(self, vector: np.ndarray) -> "ModelParams":
        return ModelParams(self.spec, np.asarray(vector, dtype=np.float64))

    def checksum(self) -> str:
        return hashlib.sha256(self.vector.astype("<f8").tobytes()).hexdigest()


def build_model_spec(kind: str, input_dim: int, num_classes: int, hidden_units: int = 27) -> ModelSpec:
    return ModelSpec(kind, input_dim, num_classes, (hidden_units,) if kind == "mlp" else ())


def init_model(spec: ModelSpec, seed: int) -> ModelParams:
    """Seeded random initialization shared by every server and the cloud.

    Weights are scaled by 1/sqrt(fan_in); biases start at zero.
    """
    rng = np.random.default_rng(seed)
    parts = []
    w = spec.widths
    for i in range(len(w) - 1):
        parts.append(rng.standard_normal(w[i] * w[i + 1]) / np.sqrt(w[i]))
        parts.append(np.zeros(w[i + 1]))
    return ModelParams(spec, np.concatenate(parts))


def _unpack(spec: ModelSpec, vector: np.ndarray):
    layers = []
    offset = 0
    w = spec.widths
    for i in range(len(w) - 1):
        size = w[i] * w[i + 1]
        W = vector[offset:offset + size].reshape(w[i], w[i + 1])
        offset += size
        b = vector[offset:offset + w[i + 1]]
        offset += w[i + 1]
        layers.append((W, b))
    return layers


def _check_batch(spec: ModelSpec, X: np.ndarray, y: np.ndarray) -> None:
    if len(y) == 0:
        raise ModelShapeError("empty batch")
    if X.ndim != 2 or X.shape[1] != spec.input_dim:
        raise ModelShapeError(f"batch has {X.shape[-1]} features, model expects {spec.input_dim}")
    if len(X) != len(y):
        raise ModelShapeError("features and labels differ in length")
    if y.min() < 0 or y.max() >= spec.num_classes:
        raise ModelShapeError(f"labels outside [0, {spec.num_classes})")


def _forward(spec: ModelSpec, vector: np.ndarray, X: np.ndarray):
    layers = _unpack(spec, vector)
    activations = [X]
    h = X
    for W, b in layers[:-1]:
        h = np.tanh(h @ W + b)
        activations.append(h)
    W, b = layers[-1]
    return layers, activations, h @ W + b


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def loss_and_grad(m: ModelParams, X: np.ndarray, y: np.ndarray) -> Tuple[float, np.ndarray]:
    """Mean softmax cross-entropy and its gradient.

    Args:
        m: Model
        X: Batch features (n x d)
        y: Batch labels in [0, C)

    Returns:
        Tuple of (loss, gradient with the same length as the parameter vector)
    """
    _check_batch(m.spec, X, y)
    n = len(y)
    layers, activations, logits = _forward(m.spec, m.vector, X)
    log_probs = _log_softmax(logits)
    loss = -float(log_probs[np.arange(n), y].mean())

    delta = np.exp(log_probs)
    delta[np.arange(n), y] -= 1.0
    delta /= n

    grads = []
    for i in range(len(layers) - 1, -1, -1):
        W, _ = layers[i]
        a = activations[i]
        grads.append(delta.sum(axis=0))
        grads.append((a.T @ delta).ravel())
        if i > 0:
            delta = (delta @ W.T) * (1.0 - a ** 2)
    return loss, np.concatenate(grads[::-1])


@dataclass(frozen=True)
class ClassGradients:
    """Per-class mean gradients of a shard; rows of absent classes are NaN."""

    gradients: np.ndarray
    counts: np.ndarray

    @property
    def defined(self) -> np.ndarray:
        return self.counts > 0

    @property
    def histogram(self) -> np.ndarray:
        return self.counts / self.counts.sum()

    def combine(self, weights: Optional[np.ndarray] = None) -> np.ndarray:
        """sum_i P(i) * g_i over defined classes (shard histogram by default)."""
        weights = self.histogram if weights is None else np.asarray(weights)
        total = np.zeros(self.gradients.shape[1])
        for i in np.flatnonzero(self.defined):
            if weights[i] != 0:
                total += weights[i] * self.gradients[i]
        return total

    def max_norm(self) -> float:
        return float(np.linalg.norm(self.gradients[self.defined], axis=1).max())


def per_class_grad_decomposition(m: ModelParams, X: np.ndarray, y: np.ndarray) -> ClassGradients:
    """Split the shard gradient into per-class mean gradients.

    The histogram-weighted sum of the components equals the full-shard gradient.
    """
    _check_batch(m.spec, X, y)
    C = m.spec.num_classes
    counts = np.bincount(y, minlength=C)
    gradients = np.full((C, m.num_params), np.nan)
    for i in np.flatnonzero(counts):
        mask = y == i
        _, gradients[i] = loss_and_grad(m, X[mask], y[mask])
    return ClassGradients(gradients, counts)


@dataclass(frozen=True)
class LrSchedule:
    """Learning rate per (1-based round, local step).

    exponential: eta0 * decay^(r-1)
    theoretical: 1 / (r (E - 1)), needs r >= 1 and E >= 2
    constant:    eta0
    """

    kind: str = "exponential"
    eta0: float = 0.01
    decay: float = 0.995
    local_steps: int = 5

    def __post_init__(self):
        if self.kind not in ("exponential", "theoretical", "constant"):
            raise ValueError(f"unknown schedule: {self.kind}")
        if self.kind == "theoretical" and self.local_steps < 2:
            raise ValueError("theoretical schedule needs E >= 2")
        if self.kind == "exponential" and not (self.eta0 > 0 and self.decay > 0):
            raise ValueError("exponential schedule needs eta0 > 0 and decay > 0")
        if self.kind == "constant" and self.eta0 < 0:
            raise ValueError("learning rate must be non-negative")

    def rate(self, round_number: int, step: int = 0) -> float:
        if self.kind == "theoretical":
            if round_number < 1:
                raise ValueError("theoretical schedule is undefined for round 0")
            return 1.0 / (round_number * (self.local_steps - 1))
        if self.kind == "exponential":
            return self.eta0 * self.decay ** (round_number - 1)
        return self.eta0


def local_sgd(
    m0: ModelParams,
    X: np.ndarray,
    y: np.ndarray,
    epochs: int,
    batch_size: Optional[int],
    sched: LrSchedule,
    round_number: int,
    seed: Seed,
    iteration_mode: bool = False,
) -> ModelParams:
    """Mini-batch SGD on one client shard.

    In epoch mode (default) ``epochs`` full passes are made over a fresh permutation
    each time, keeping the last short batch. In iteration mode ``epochs`` counts single
    mini-batch steps. ``batch_size=None`` means full batch.

    Returns:
        New model; ``m0`` is left untouched
    """
    if len(y) == 0:
        raise ModelShapeError("empty shard")
    if epochs < 1:
        raise ValueError("epochs must be >= 1")
    rng = np.random.default_rng(seed)
    n = len(y)
    size = n if batch_size is None or batch_size >= n else batch_size
    w = m0.vector.copy()
    spec = m0.spec

    def step(batch: np.ndarray, eta: float) -> None:
        nonlocal w
        _, grad = loss_and_grad(ModelParams(spec, w), X[batch], y[batch])
        w = w - eta * grad

    if iteration_mode:
        order = rng.permutation(n)
        cursor = 0
        for e in range(epochs):
            if cursor + size > n:
                order = rng.permutation(n)
                cursor = 0
            step(order[cursor:cursor + size], sched.rate(round_number, e))
            cursor += size
    else:
        for e in range(epochs):
            eta = sched.rate(round_number, e)
            order = rng.permutation(n) if size < n else np.arange(n)
            for start in range(0, n, size):
                step(order[start:start + size], eta)
    return ModelParams(spec, w)


def predict(m: ModelParams, X: np.ndarray) -> np.ndarray:
    """Arg-max class; ties go to the lowest class index."""
    _, _, logits = _forward(m.spec, m.vector, X)
    return np.argmax(logits, axis=1)


def evaluate(m: ModelParams, X: np.ndarray, y: np.ndarray) -> Tuple[float, float]:
    """Accuracy in [0, 1] and mean cross-entropy on a labelled set."""
    _check_batch(m.spec, X, y)
    _, _, logits = _forward(m.spec, m.vector, X)
    log_probs = _log_softmax(logits)
    accuracy = float(np.mean(np.argmax(logits, axis=1) == y))
    loss = -float(log_probs[np.arange(len(y)), y].mean())
    return accuracy, loss
