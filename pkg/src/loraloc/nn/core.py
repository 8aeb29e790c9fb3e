"""Minimal dense-network engine shared by the baseline DNN and the DQN.

Plain float64 forward/backprop over a fixed stack of affine layers with
ReLU or linear activations, inverted dropout, Adam, MAE/MSE losses, and
a finite-difference verification hook. No autograd, no GPU; the heavy
array work is delegated to the selected kernel backend.
"""

import io
import json
import os
import zipfile
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import backend

CHECKPOINT_FORMAT = "loraloc-net-v1"


class TrainingDivergedError(RuntimeError):
    """Raised when gradients or losses stop being finite."""


@dataclass(frozen=True)
class LayerSpec:
    input_dim: int
    output_dim: int
    activation: str = "relu"  # "relu" or "linear"
    dropout_rate: float = 0.0  # applied after the activation, train mode only

    def __post_init__(self):
        if self.input_dim <= 0 or self.output_dim <= 0:
            raise ValueError("layer dimensions must be positive")
        if self.activation not in ("relu", "linear"):
            raise ValueError(f"unknown activation {self.activation!r}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must be in [0, 1)")


@dataclass
class Network:
    """A dense stack: per-layer weight matrices (in, out) and bias vectors."""

    specs: Tuple[LayerSpec, ...]
    weights: List[np.ndarray]
    biases: List[np.ndarray]

    def __post_init__(self):
        for a, b in zip(self.specs, self.specs[1:]):
            if a.output_dim != b.input_dim:
                raise ValueError("adjacent layer dimensions must chain")
        for spec, w, bias in zip(self.specs, self.weights, self.biases):
            if w.shape != (spec.input_dim, spec.output_dim) or bias.shape != (spec.output_dim,):
                raise ValueError("parameter shapes must match the layer specs")

    @property
    def input_dim(self) -> int:
        return self.specs[0].input_dim

    @property
    def output_dim(self) -> int:
        return self.specs[-1].output_dim

    def param_count(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def copy(self) -> "Network":
        return Network(
            specs=self.specs,
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
        )

    def copy_params_from(self, other: "Network") -> None:
        for mine, theirs in zip(self.weights, other.weights):
            mine[:] = theirs
        for mine, theirs in zip(self.biases, other.biases):
            mine[:] = theirs


def stack_specs(input_dim: int, hidden: Sequence[int], output_dim: int,
                dropout: Sequence[float] = ()) -> Tuple[LayerSpec, ...]:
    """ReLU hidden layers + linear output; dropout rates attach to the first hidden layers."""
    dims = [input_dim, *hidden]
    specs = []
    for i, (din, dout) in enumerate(zip(dims, dims[1:])):
        rate = dropout[i] if i < len(dropout) else 0.0
        specs.append(LayerSpec(din, dout, "relu", rate))
    specs.append(LayerSpec(dims[-1], output_dim, "linear", 0.0))
    return tuple(specs)


def init_network(specs: Sequence[LayerSpec], seed: int) -> Network:
    """Seeded uniform init: He-style scaling for ReLU layers, Glorot for linear."""
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for spec in specs:
        if spec.activation == "relu":
            limit = np.sqrt(6.0 / spec.input_dim)
        else:
            limit = np.sqrt(6.0 / (spec.input_dim + spec.output_dim))
        weights.append(rng.uniform(-limit, limit, size=(spec.input_dim, spec.output_dim)))
        biases.append(np.zeros(spec.output_dim))
    return Network(specs=tuple(specs), weights=weights, biases=biases)


def forward(
    net: Network,
    x: np.ndarray,
    mode: str = "eval",
    rng: Optional[np.random.Generator] = None,
    dropout_masks: Optional[List[Optional[np.ndarray]]] = None,
):
    """Run the stack; returns (output, cache). cache is None in eval mode.

    Eval mode is deterministic and dropout-free. Train mode applies
    inverted dropout (survivors scaled by 1/(1-p)) using masks drawn from
    `rng`, or the caller-fixed `dropout_masks` (one entry per layer; used
    by the finite-difference hook to freeze the realized composition).
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"unknown mode {mode!r}")
    arr = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if arr.shape[1] != net.input_dim:
        raise ValueError(f"input dim {arr.shape[1]} != network input dim {net.input_dim}")
    train = mode == "train"
    cache = [] if train else None
    out = np.ascontiguousarray(arr)
    for i, spec in enumerate(net.specs):
        x_in = out
        act = backend.affine_act(x_in, net.weights[i], net.biases[i], spec.activation == "relu")
        mask = None
        dropped = act
        if train and spec.dropout_rate > 0.0:
            if dropout_masks is not None:
                mask = dropout_masks[i]
            elif rng is not None:
                mask = (rng.random(act.shape) >= spec.dropout_rate) / (1.0 - spec.dropout_rate)
            else:
                raise ValueError("train-mode forward with dropout needs an rng or fixed masks")
            if mask is not None:
                dropped = act * mask
        if train:
            # act doubles as the ReLU mask source: act > 0 iff pre-activation > 0
            cache.append((x_in, act, mask))
        out = dropped
    if np.asarray(x).ndim == 1:
        return (out[0], cache)
    return out, cache


def backward(net: Network, cache, loss_grad: np.ndarray):
    """Exact reverse-mode gradients for the realized composition.

    `cache` comes from a train-mode forward; returns one (dW, db) pair
    per layer. `loss_grad` is the gradient of the loss w.r.t. the network
    output, shape (n, output_dim).
    """
    if cache is None or len(cache) != len(net.specs):
        raise ValueError("backward needs the cache from a train-mode forward")
    dout = np.atleast_2d(np.array(loss_grad, dtype=np.float64))
    grads: List[Tuple[np.ndarray, np.ndarray]] = [None] * len(net.specs)
    for i in range(len(net.specs) - 1, -1, -1):
        x_in, act, mask = cache[i]
        if mask is not None:
            dout = dout * mask
        relu_mask = act if net.specs[i].activation == "relu" else None
        dx, dw, db = backend.affine_backward_masked(x_in, net.weights[i], dout, relu_mask)
        grads[i] = (dw, db)
        dout = dx
    return grads


def mae_loss(predictions: np.ndarray, targets: np.ndarray):
    """Mean absolute error and its subgradient (0 at exact equality)."""
    p = np.atleast_2d(np.asarray(predictions, dtype=np.float64))
    t = np.atleast_2d(np.asarray(targets, dtype=np.float64))
    if p.shape != t.shape:
        raise ValueError("predictions and targets must have matching shapes")
    diff = p - t
    return float(np.abs(diff).mean()), np.sign(diff) / diff.size


def mse_loss(predictions: np.ndarray, targets: np.ndarray):
    """Mean squared error and its gradient."""
    p = np.atleast_2d(np.asarray(predictions, dtype=np.float64))
    t = np.atleast_2d(np.asarray(targets, dtype=np.float64))
    if p.shape != t.shape:
        raise ValueError("predictions and targets must have matching shapes")
    diff = p - t
    return float((diff * diff).mean()), 2.0 * diff / diff.size


@dataclass
class AdamState:
    """Adam accumulators; step_count increments once per update."""

    learning_rate: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: List[np.ndarray] = field(default_factory=list)
    v: List[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_network(cls, net: Network, learning_rate: float, beta1: float = 0.9, beta2: float = 0.999) -> "AdamState":
        params = [p for pair in zip(net.weights, net.biases) for p in pair]
        return cls(
            learning_rate=learning_rate,
            beta1=beta1,
            beta2=beta2,
            m=[np.zeros(p.size) for p in params],
            v=[np.zeros(p.size) for p in params],
        )


def adam_step(state: AdamState, net: Network, grads) -> None:
    """One in-place Adam update of every parameter from per-layer (dW, db)."""
    flat_grads = [g for pair in grads for g in pair]
    for g in flat_grads:
        if not np.all(np.isfinite(g)):
            raise TrainingDivergedError("non-finite gradient; training diverged")
    state.step_count += 1
    params = [p for pair in zip(net.weights, net.biases) for p in pair]
    for p, g, m, v in zip(params, flat_grads, state.m, state.v):
        backend.adam_update(
            p.reshape(-1), np.ascontiguousarray(g.reshape(-1)), m, v,
            state.step_count, state.learning_rate, state.beta1, state.beta2, state.eps,
        )


def finite_difference_check(
    net: Network,
    x: np.ndarray,
    targets: np.ndarray,
    h: float = 1e-5,
    coords_per_layer: int = 10,
    seed: int = 0,
) -> float:
    """Max relative error of backprop vs central differences on the MSE loss.

    Probes `coords_per_layer` random weight/bias coordinates per layer.
    Dropout masks, if any, are drawn once and frozen so both sides
    differentiate the same realized composition.
    """
    rng = np.random.default_rng(seed)
    masks = []
    for spec in net.specs:
        if spec.dropout_rate > 0.0:
            shape = (np.atleast_2d(x).shape[0], spec.output_dim)
            masks.append((rng.random(shape) >= spec.dropout_rate) / (1.0 - spec.dropout_rate))
        else:
            masks.append(None)

    def loss_at() -> float:
        out, _ = forward(net, x, mode="train", dropout_masks=masks)
        return mse_loss(out, targets)[0]

    out, cache = forward(net, x, mode="train", dropout_masks=masks)
    _, grad = mse_loss(out, targets)
    grads = backward(net, cache, grad)

    worst = 0.0
    for i in range(len(net.specs)):
        for param, grad_arr in ((net.weights[i], grads[i][0]), (net.biases[i], grads[i][1])):
            flat = param.reshape(-1)
            gflat = grad_arr.reshape(-1)
            picks = rng.choice(flat.size, size=min(coords_per_layer, flat.size), replace=False)
            for j in picks:
                orig = flat[j]
                flat[j] = orig + h
                hi = loss_at()
                flat[j] = orig - h
                lo = loss_at()
                flat[j] = orig
                numeric = (hi - lo) / (2.0 * h)
                denom = max(abs(numeric), abs(gflat[j]), 1e-8)
                worst = max(worst, abs(numeric - gflat[j]) / denom)
    return worst


def save_checkpoint(path, net: Network, meta: Optional[dict] = None) -> None:
    """Write a versioned checkpoint: layer specs + parameters + metadata.

    Layout: a zip archive holding `manifest.json` (format tag, layer
    specs, user metadata such as normalization parameters and the RNG
    seed) and `params.npz` (w0, b0, w1, b1, ...).
    """
    manifest = {
        "format": CHECKPOINT_FORMAT,
        "layers": [
            {
                "input_dim": s.input_dim,
                "output_dim": s.output_dim,
                "activation": s.activation,
                "dropout_rate": s.dropout_rate,
            }
            for s in net.specs
        ],
        "meta": meta or {},
    }
    buf = io.BytesIO()
    arrays = {}
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        arrays[f"w{i}"] = w
        arrays[f"b{i}"] = b
    np.savez(buf, **arrays)
    path = os.fspath(path)
    tmp = path + ".tmp"
    with zipfile.ZipFile(tmp, "w") as zf:
        zf.writestr("manifest.json", json.dumps(manifest, indent=2, sort_keys=True))
        zf.writestr("params.npz", buf.getvalue())
    os.replace(tmp, path)


def load_checkpoint(path) -> Tuple[Network, dict]:
    """Read a checkpoint written by save_checkpoint; returns (net, meta)."""
    with zipfile.ZipFile(path, "r") as zf:
        manifest = json.loads(zf.read("manifest.json"))
        if manifest.get("format") != CHECKPOINT_FORMAT:
            raise ValueError(f"unsupported checkpoint format {manifest.get('format')!r}")
        with zf.open("params.npz") as fh:
            params = np.load(io.BytesIO(fh.read()))
            specs = tuple(LayerSpec(**layer) for layer in manifest["layers"])
            weights = [np.ascontiguousarray(params[f"w{i}"]) for i in range(len(specs))]
            biases = [np.ascontiguousarray(params[f"b{i}"]) for i in range(len(specs))]
    return Network(specs=specs, weights=weights, biases=biases), manifest["meta"]
