"""Fully connected ReLU binary classifier.

Initialization, forward pass, cross-entropy loss, analytic gradients,
hard-label prediction and fingerprinting on a fixed ordered input set.
All arithmetic is 64-bit; every operation is pure given (params, data, seed).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "NetworkSpec",
    "Params",
    "FunctionFingerprint",
    "LabeledSet",
    "init_params",
    "forward",
    "loss_ce",
    "grad",
    "predict_labels",
    "fingerprint",
    "classification_error",
    "sigmoid",
    "PROB_CLAMP",
]

# Predicted probabilities are clamped to [PROB_CLAMP, 1 - PROB_CLAMP] in the
# cross-entropy loss so that log() never sees 0.
PROB_CLAMP = 1e-12


@dataclass(frozen=True)
class NetworkSpec:
    """Architecture and initialization scales of a ReLU net with one output unit.

    ``layer_sizes`` runs (input dim, hidden widths..., output dim); the output
    dim must be 1 and at least one hidden layer is required.  Weights of layer
    l are drawn N(0, sigma_w^2 / fan_in_l) and biases N(0, sigma_b^2); this
    scaled convention keeps sampled networks consistent with the analytic
    infinite-width kernel for the same (sigma_w, sigma_b).
    """

    layer_sizes: tuple[int, ...]
    sigma_w: float = 1.0
    sigma_b: float = 0.1

    def __post_init__(self) -> None:
        sizes = tuple(int(s) for s in self.layer_sizes)
        object.__setattr__(self, "layer_sizes", sizes)
        if len(sizes) < 3:
            raise ValueError("need at least one hidden layer")
        if any(s <= 0 for s in sizes):
            raise ValueError("all layer sizes must be positive")
        if sizes[-1] != 1:
            raise ValueError("output dimension must be exactly 1")
        if not self.sigma_w > 0:
            raise ValueError("sigma_w must be > 0")
        if self.sigma_b < 0:
            raise ValueError("sigma_b must be >= 0")

    @property
    def input_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_hidden_layers(self) -> int:
        return len(self.layer_sizes) - 2

    @property
    def n_weight_layers(self) -> int:
        return len(self.layer_sizes) - 1

    @property
    def n_params(self) -> int:
        return sum(
            fo * fi + fo
            for fi, fo in zip(self.layer_sizes[:-1], self.layer_sizes[1:])
        )


class Params:
    """Per-layer weight matrices (fan_out x fan_in) and bias vectors."""

    __slots__ = ("weights", "biases")

    def __init__(self, weights, biases):
        if len(weights) != len(biases):
            raise ValueError("weights and biases must have one entry per layer")
        self.weights = [np.asarray(W, dtype=np.float64) for W in weights]
        self.biases = [np.asarray(b, dtype=np.float64) for b in biases]
        prev_out = None
        for l, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.ndim != 2 or b.ndim != 1 or W.shape[0] != b.shape[0]:
                raise ValueError(f"inconsistent shapes in layer {l}")
            if prev_out is not None and W.shape[1] != prev_out:
                raise ValueError(f"layer {l} fan_in does not match layer {l - 1} fan_out")
            prev_out = W.shape[0]
            if not (np.all(np.isfinite(W)) and np.all(np.isfinite(b))):
                raise ValueError(f"non-finite entries in layer {l}")

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    @property
    def layer_sizes(self) -> tuple[int, ...]:
        return (self.weights[0].shape[1],) + tuple(W.shape[0] for W in self.weights)

    @property
    def n_params(self) -> int:
        return sum(W.size + b.size for W, b in zip(self.weights, self.biases))

    def copy(self) -> "Params":
        return Params([W.copy() for W in self.weights], [b.copy() for b in self.biases])

    def to_vector(self) -> np.ndarray:
        """Flatten as W_1, b_1, W_2, b_2, ... in C order."""
        parts = []
        for W, b in zip(self.weights, self.biases):
            parts.append(W.ravel())
            parts.append(b)
        return np.concatenate(parts)

    def with_vector(self, vec: np.ndarray) -> "Params":
        """New Params with the same shapes, entries taken from a flat vector."""
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != (self.n_params,):
            raise ValueError(f"expected vector of length {self.n_params}")
        weights, biases, k = [], [], 0
        for W, b in zip(self.weights, self.biases):
            weights.append(vec[k : k + W.size].reshape(W.shape).copy())
            k += W.size
            biases.append(vec[k : k + b.size].copy())
            k += b.size
        return Params(weights, biases)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Params):
            return NotImplemented
        return len(self.weights) == len(other.weights) and all(
            np.array_equal(a, b) for a, b in zip(self.weights, other.weights)
        ) and all(np.array_equal(a, b) for a, b in zip(self.biases, other.biases))


class FunctionFingerprint:
    """Ordered bit vector of predicted labels on a fixed ordered input list."""

    __slots__ = ("bits",)

    def __init__(self, bits):
        arr = np.asarray(bits)
        if arr.ndim != 1:
            raise ValueError("fingerprint bits must be one-dimensional")
        if arr.dtype == bool:
            arr = arr.astype(np.uint8)
        arr = np.asarray(arr, dtype=np.uint8)
        if arr.size and not np.all((arr == 0) | (arr == 1)):
            raise ValueError("fingerprint entries must be 0 or 1")
        arr.setflags(write=False)
        self.bits = arr

    def __len__(self) -> int:
        return int(self.bits.size)

    def __eq__(self, other) -> bool:
        if isinstance(other, FunctionFingerprint):
            return np.array_equal(self.bits, other.bits)
        return NotImplemented

    def __hash__(self) -> int:
        return hash(self.bits.tobytes())

    def packed(self) -> bytes:
        """Compact byte key (bit-packed, big-endian within bytes)."""
        return np.packbits(self.bits).tobytes()

    def to_bitstring(self) -> str:
        return "".join("1" if b else "0" for b in self.bits)

    @classmethod
    def from_bitstring(cls, s: str) -> "FunctionFingerprint":
        s = "".join(s.split())
        if any(c not in "01" for c in s):
            raise ValueError("bitstring may only contain 0/1 and whitespace")
        return cls(np.frombuffer(s.encode(), dtype=np.uint8) - ord("0"))

    def __repr__(self) -> str:
        s = self.to_bitstring()
        if len(s) > 32:
            s = s[:32] + "..."
        return f"FunctionFingerprint({s}, len={len(self)})"


class LabeledSet:
    """Input matrix (count x dim) with one 0/1 label per row."""

    __slots__ = ("inputs", "labels")

    def __init__(self, inputs, labels):
        self.inputs = np.asarray(inputs, dtype=np.float64)
        self.labels = np.asarray(labels, dtype=np.uint8)
        if self.inputs.ndim != 2:
            raise ValueError("inputs must be a 2-D matrix")
        if self.labels.ndim != 1 or self.labels.shape[0] != self.inputs.shape[0]:
            raise ValueError("label count must equal input row count")
        if self.labels.size and not np.all((self.labels == 0) | (self.labels == 1)):
            raise ValueError("labels must be 0 or 1")

    def __len__(self) -> int:
        return int(self.inputs.shape[0])

    @property
    def input_dim(self) -> int:
        return int(self.inputs.shape[1])

    def subset(self, idx) -> "LabeledSet":
        return LabeledSet(self.inputs[idx], self.labels[idx])

    @staticmethod
    def concat(*sets: "LabeledSet") -> "LabeledSet":
        return LabeledSet(
            np.concatenate([s.inputs for s in sets], axis=0),
            np.concatenate([s.labels for s in sets]),
        )


def init_params(spec: NetworkSpec, seed) -> Params:
    """Sample Params: W_l ~ N(0, sigma_w^2/fan_in_l), b_l ~ N(0, sigma_b^2).

    ``seed`` may be an int or a numpy Generator; results are deterministic
    given the same seed.
    """
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(spec.layer_sizes[:-1], spec.layer_sizes[1:]):
        weights.append(rng.standard_normal((fan_out, fan_in)) * (spec.sigma_w / np.sqrt(fan_in)))
        biases.append(rng.standard_normal(fan_out) * spec.sigma_b)
    return Params(weights, biases)


def _check_input_dim(params: Params, X: np.ndarray) -> None:
    want = params.weights[0].shape[1]
    if X.shape[-1] != want:
        raise ValueError(f"input dim {X.shape[-1]} does not match network input dim {want}")


def _forward_batch(params: Params, X: np.ndarray) -> np.ndarray:
    """Pre-activation of the output unit for a batch X (n x d) -> (n,)."""
    a = X
    last = params.n_layers - 1
    for l, (W, b) in enumerate(zip(params.weights, params.biases)):
        z = a @ W.T + b
        a = z if l == last else np.maximum(z, 0.0)
    return a[:, 0]


def forward(params: Params, x) -> float | np.ndarray:
    """Output pre-activation z = W_L phi(... phi(W_1 x + b_1) ...) + b_L.

    Accepts a single input vector (returns a float) or an input matrix
    (returns one value per row).
    """
    x = np.asarray(x, dtype=np.float64)
    _check_input_dim(params, x)
    if x.ndim == 1:
        return float(_forward_batch(params, x[None, :])[0])
    return _forward_batch(params, x)


def sigmoid(z: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function."""
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def loss_ce(params: Params, data: LabeledSet) -> float:
    """Mean cross-entropy -[y ln p + (1-y) ln(1-p)] with p = sigmoid(z), clamped."""
    if len(data) == 0:
        raise ValueError("loss_ce needs at least one example")
    _check_input_dim(params, data.inputs)
    z = _forward_batch(params, data.inputs)
    p = np.clip(sigmoid(z), PROB_CLAMP, 1.0 - PROB_CLAMP)
    y = data.labels.astype(np.float64)
    return float(-np.mean(y * np.log(p) + (1.0 - y) * np.log1p(-p)))


def grad(params: Params, data: LabeledSet) -> Params:
    """Exact gradient of loss_ce with respect to every weight and bias.

    Returned as a Params-shaped container.  The subgradient at dead ReLUs
    (z = 0) is taken to be 0; the probability clamp is ignored, so this is
    the gradient of the unclamped loss (they agree away from |z| ~ 28).
    """
    n = len(data)
    if n == 0:
        raise ValueError("grad needs at least one example")
    _check_input_dim(params, data.inputs)
    last = params.n_layers - 1
    acts = [data.inputs]
    zs = []
    a = data.inputs
    for l, (W, b) in enumerate(zip(params.weights, params.biases)):
        z = a @ W.T + b
        zs.append(z)
        a = z if l == last else np.maximum(z, 0.0)
        acts.append(a)
    zout = zs[-1][:, 0]
    d = ((sigmoid(zout) - data.labels.astype(np.float64)) / n)[:, None]
    g_w = [None] * params.n_layers
    g_b = [None] * params.n_layers
    for l in range(last, -1, -1):
        g_w[l] = d.T @ acts[l]
        g_b[l] = d.sum(axis=0)
        if l > 0:
            d = (d @ params.weights[l]) * (zs[l - 1] > 0)
    return Params(g_w, g_b)


def predict_labels(params: Params, inputs) -> np.ndarray:
    """Hard labels: 1 iff the output pre-activation z >= 0 (the z = 0 tie is 1)."""
    X = np.asarray(inputs, dtype=np.float64)
    _check_input_dim(params, X)
    if X.ndim == 1:
        X = X[None, :]
    return (_forward_batch(params, X) >= 0.0).astype(np.uint8)


def fingerprint(params: Params, ordered_inputs) -> FunctionFingerprint:
    """Restriction of the network's hard-label function to an ordered input list."""
    return FunctionFingerprint(predict_labels(params, ordered_inputs))


def classification_error(params: Params, data: LabeledSet) -> float:
    """Fraction of examples whose predicted label disagrees with the stored label."""
    if len(data) == 0:
        raise ValueError("classification_error needs at least one example")
    return float(np.mean(predict_labels(params, data.inputs) != data.labels))
