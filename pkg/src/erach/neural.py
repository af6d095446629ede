"""Small multilayer-perceptron engine with exact reverse-mode gradients.

Weights are stored input-major, ``W.shape == (fan_in, fan_out)``, so a batch
``X`` of shape (B, fan_in) maps to ``X @ W + b``. Hidden layers use ReLU and
the output layer is linear.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

CHECKPOINT_MAGIC = b"ERACHMLP"
CHECKPOINT_VERSION = 1


@dataclass
class MlpParams:
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ValueError("need one bias per weight matrix and at least one layer")
        for l, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.ndim != 2 or b.shape != (W.shape[1],):
                raise ValueError(f"layer {l}: weight {W.shape} and bias {b.shape} do not match")
            if l and W.shape[0] != self.weights[l - 1].shape[1]:
                raise ValueError(f"layer {l} input does not chain from layer {l - 1}")

    @property
    def layer_dims(self) -> list[int]:
        return [self.weights[0].shape[0]] + [W.shape[1] for W in self.weights]

    def arrays(self) -> list[np.ndarray]:
        return [a for pair in zip(self.weights, self.biases) for a in pair]

    def copy(self) -> "MlpParams":
        return MlpParams([W.copy() for W in self.weights], [b.copy() for b in self.biases])

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.arrays())

    def checksum(self) -> str:
        import hashlib

        h = hashlib.sha256()
        for a in self.arrays():
            h.update(np.ascontiguousarray(a, dtype="<f8").tobytes())
        return h.hexdigest()


@dataclass
class GradientSet:
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @classmethod
    def zeros_like(cls, params: MlpParams) -> "GradientSet":
        return cls([np.zeros_like(W) for W in params.weights], [np.zeros_like(b) for b in params.biases])

    def arrays(self) -> list[np.ndarray]:
        return [a for pair in zip(self.weights, self.biases) for a in pair]

    def add_(self, other: "GradientSet") -> "GradientSet":
        for a, b in zip(self.arrays(), other.arrays()):
            a += b
        return self

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.arrays())


def init_mlp(layer_dims, rng: np.random.Generator) -> MlpParams:
    """He-uniform weights (limit sqrt(6 / fan_in)) and zero biases."""
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:]):
        limit = np.sqrt(6.0 / max(fan_in, 1))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpParams(weights, biases)


@dataclass
class ForwardCache:
    inputs: list[np.ndarray]
    pre_activations: list[np.ndarray]
    single: bool


def forward(params: MlpParams, x) -> tuple[np.ndarray, ForwardCache]:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    h = x[None, :] if single else x
    if h.shape[1] != params.weights[0].shape[0]:
        raise ValueError(f"input width {h.shape[1]} != network input {params.weights[0].shape[0]}")
    inputs, pre = [], []
    last = len(params.weights) - 1
    for l, (W, b) in enumerate(zip(params.weights, params.biases)):
        inputs.append(h)
        z = h @ W + b
        pre.append(z)
        h = np.maximum(z, 0.0) if l < last else z
    return (h[0] if single else h), ForwardCache(inputs, pre, single)


def backward(params: MlpParams, cache: ForwardCache, grad_out) -> GradientSet:
    """Gradients of sum(grad_out * output) w.r.t. every parameter, summed over the batch."""
    g = np.asarray(grad_out, dtype=np.float64)
    if cache.single:
        g = g[None, :]
    n = len(params.weights)
    gw, gb = [None] * n, [None] * n
    for l in range(n - 1, -1, -1):
        if l < n - 1:
            g = g * (cache.pre_activations[l] > 0)
        gw[l] = cache.inputs[l].T @ g
        gb[l] = g.sum(axis=0)
        if l:
            g = g @ params.weights[l].T
    return GradientSet(gw, gb)


def policy_head(logits):
    """Softmax probabilities, log-probabilities and entropy (per row for 2-D input)."""
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=-1, keepdims=True))
    p = np.exp(logp)
    entropy = -(p * logp).sum(axis=-1)
    return p, logp, entropy


def entropy_grad(p, logp, entropy):
    """dH/dlogits for a softmax policy."""
    return -p * (logp + np.asarray(entropy)[..., None])


@dataclass
class RmsPropState:
    learning_rate: float = 1e-4
    decay: float = 0.99
    epsilon: float = 1e-8
    accumulators: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        if self.learning_rate < 0 or not 0 <= self.decay < 1 or self.epsilon <= 0:
            raise ValueError("invalid RMSprop hyperparameters")

    @classmethod
    def for_params(cls, params: MlpParams, **kw) -> "RmsPropState":
        state = cls(**kw)
        state.accumulators = [np.zeros_like(a) for a in params.arrays()]
        return state


def rmsprop_step(params: MlpParams, grads: GradientSet, state: RmsPropState) -> MlpParams:
    """In-place RMSprop descent step; returns ``params``."""
    if not state.accumulators:
        state.accumulators = [np.zeros_like(a) for a in params.arrays()]
    for p, g, acc in zip(params.arrays(), grads.arrays(), state.accumulators):
        if p.shape != g.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        acc *= state.decay
        acc += (1.0 - state.decay) * g * g
        p -= state.learning_rate * g / (np.sqrt(acc) + state.epsilon)
    return params


def save_checkpoint(path, params: MlpParams) -> None:
    """Binary layout: magic, version, layer count, dims (uint32), then float64 LE arrays."""
    dims = params.layer_dims
    with open(Path(path), "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<II", CHECKPOINT_VERSION, len(dims)))
        fh.write(struct.pack(f"<{len(dims)}I", *dims))
        for a in params.arrays():
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def load_checkpoint(path) -> MlpParams:
    data = Path(path).read_bytes()
    if data[:8] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not an MLP checkpoint")
    version, n = struct.unpack_from("<II", data, 8)
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    dims = struct.unpack_from(f"<{n}I", data, 16)
    offset = 16 + 4 * n
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        W = np.frombuffer(data, dtype="<f8", count=fan_in * fan_out, offset=offset).reshape(fan_in, fan_out)
        offset += W.nbytes
        b = np.frombuffer(data, dtype="<f8", count=fan_out, offset=offset)
        offset += b.nbytes
        weights.append(W.astype(np.float64))
        biases.append(b.astype(np.float64))
    if offset != len(data):
        raise ValueError(f"{path}: trailing bytes in checkpoint")
    return MlpParams(weights, biases)
