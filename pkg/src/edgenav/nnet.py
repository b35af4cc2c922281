"""Small dense networks with hand-written backprop and RMSProp.

Everything is float64.  Inputs may be a single vector or a batch (rows);
gradients are summed over the batch.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ContractViolation, ValidationError

CHECKPOINT_FORMAT = "edgenav-mlp"
CHECKPOINT_VERSION = 1


class Mlp:
    """Dense network: tanh on hidden layers, identity on the output layer."""

    def __init__(
        self,
        widths: Sequence[int],
        rng: np.random.Generator | int | None = 0,
        out_scale: float = 1.0,
        zero: bool = False,
    ) -> None:
        widths = [int(w) for w in widths]
        if len(widths) < 2 or any(w < 1 for w in widths):
            raise ValidationError(f"invalid layer widths {widths}")
        self.widths = widths
        rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        for i, (fan_in, fan_out) in enumerate(zip(widths, widths[1:])):
            if zero:
                w = np.zeros((fan_in, fan_out))
            else:
                bound = np.sqrt(6.0 / (fan_in + fan_out))
                w = rng.uniform(-bound, bound, size=(fan_in, fan_out))
                if i == len(widths) - 2:
                    w *= out_scale
            self.weights.append(w)
            self.biases.append(np.zeros(fan_out))
        self.version = 0

    @property
    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def set_params(self, params: Sequence[np.ndarray]) -> None:
        if len(params) != 2 * len(self.weights):
            raise ValidationError("parameter count mismatch")
        for i in range(len(self.weights)):
            w, b = np.asarray(params[2 * i], dtype=float), np.asarray(params[2 * i + 1], dtype=float)
            if w.shape != self.weights[i].shape or b.shape != self.biases[i].shape:
                raise ValidationError("parameter shape mismatch")
            self.weights[i] = w.copy()
            self.biases[i] = b.copy()
        self.version += 1

    def copy(self) -> "Mlp":
        net = Mlp(self.widths, zero=True)
        net.set_params(self.params)
        return net

    def __call__(self, x) -> np.ndarray:
        return forward(self, x)[0]


@dataclass
class ForwardCache:
    inputs: list[np.ndarray]
    activations: list[np.ndarray]
    squeeze: bool
    version: int
    net_id: int


def forward(net: Mlp, x) -> tuple[np.ndarray, ForwardCache]:
    x = np.asarray(x, dtype=float)
    squeeze = x.ndim == 1
    h = x[None, :] if squeeze else x
    if h.ndim != 2 or h.shape[1] != net.widths[0]:
        raise ValidationError(f"input width {h.shape[-1]} does not match network input {net.widths[0]}")
    inputs, acts = [], []
    last = len(net.weights) - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        inputs.append(h)
        z = h @ w + b
        h = z if i == last else np.tanh(z)
        acts.append(h)
    out = h[0] if squeeze else h
    return out, ForwardCache(inputs, acts, squeeze, net.version, id(net))


def backward(net: Mlp, cache: ForwardCache, output_gradient) -> list[np.ndarray]:
    """Gradients of ``sum(output * output_gradient)`` in ``net.params`` order."""
    if cache.net_id != id(net) or cache.version != net.version:
        raise ContractViolation("forward cache is stale: parameters changed since forward()")
    g = np.asarray(output_gradient, dtype=float)
    if cache.squeeze:
        g = g[None, :]
    if g.shape != cache.activations[-1].shape:
        raise ValidationError("output gradient shape does not match network output")
    grads: list[np.ndarray] = [None] * (2 * len(net.weights))  # type: ignore[list-item]
    for i in range(len(net.weights) - 1, -1, -1):
        if i != len(net.weights) - 1:
            g = g * (1.0 - cache.activations[i] ** 2)
        grads[2 * i] = cache.inputs[i].T @ g
        grads[2 * i + 1] = g.sum(axis=0)
        g = g @ net.weights[i].T
    return grads


def softmax(logits) -> np.ndarray:
    z = np.asarray(logits, dtype=float)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits) -> np.ndarray:
    z = np.asarray(logits, dtype=float)
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


@dataclass
class RmsProp:
    lr: float = 7e-4
    decay: float = 0.99
    eps: float = 1e-5
    accumulators: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.lr >= 0 or not 0.0 <= self.decay < 1.0 or not self.eps > 0:
            raise ValidationError("invalid RMSProp hyper-parameters")

    def step(self, net: Mlp, grads: Sequence[np.ndarray]) -> None:
        """In-place update of ``net``'s parameters."""
        params = net.params
        if len(grads) != len(params) or any(g.shape != p.shape for g, p in zip(grads, params)):
            raise ValidationError("gradient shapes do not match parameters")
        if not self.accumulators:
            self.accumulators = [np.zeros_like(p) for p in params]
        for p, g, acc in zip(params, grads, self.accumulators):
            acc *= self.decay
            acc += (1.0 - self.decay) * g * g
            p -= self.lr * g / np.sqrt(acc + self.eps)
        net.version += 1


def rmsprop_step(opt: RmsProp, params: Sequence[np.ndarray], grads: Sequence[np.ndarray]) -> list[np.ndarray]:
    """Functional form: returns updated copies and advances ``opt``'s accumulators."""
    if len(grads) != len(params) or any(np.shape(g) != np.shape(p) for g, p in zip(grads, params)):
        raise ValidationError("gradient shapes do not match parameters")
    if not opt.accumulators:
        opt.accumulators = [np.zeros_like(np.asarray(p, dtype=float)) for p in params]
    out = []
    for p, g, acc in zip(params, grads, opt.accumulators):
        g = np.asarray(g, dtype=float)
        acc *= opt.decay
        acc += (1.0 - opt.decay) * g * g
        out.append(np.asarray(p, dtype=float) - opt.lr * g / np.sqrt(acc + opt.eps))
    return out


# ----------------------------------------------------------------------------
# checkpoints


def save_networks(path: str | Path, nets: dict[str, Mlp], opts: dict[str, RmsProp] | None = None, meta: dict | None = None) -> None:
    """Write networks (+ optimizer state) to a single ``.npz`` with a JSON header."""
    opts = opts or {}
    header = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "networks": {name: net.widths for name, net in nets.items()},
        "optimizers": {name: {"lr": o.lr, "decay": o.decay, "eps": o.eps, "n": len(o.accumulators)} for name, o in opts.items()},
        "meta": meta or {},
    }
    arrays = {"header": np.frombuffer(json.dumps(header, sort_keys=True).encode(), dtype=np.uint8)}
    for name, net in nets.items():
        for i, p in enumerate(net.params):
            arrays[f"net/{name}/{i}"] = p
    for name, o in opts.items():
        for i, a in enumerate(o.accumulators):
            arrays[f"opt/{name}/{i}"] = a
    buf = io.BytesIO()
    np.savez(buf, **arrays)
    Path(path).write_bytes(buf.getvalue())


def load_networks(path: str | Path) -> tuple[dict[str, Mlp], dict[str, RmsProp], dict]:
    with np.load(Path(path)) as data:
        header = json.loads(bytes(data["header"]).decode())
        if header.get("format") != CHECKPOINT_FORMAT:
            raise ValidationError(f"{path} is not an edgenav checkpoint")
        if header.get("version") != CHECKPOINT_VERSION:
            raise ValidationError(f"unsupported checkpoint version {header.get('version')}")
        nets = {}
        for name, widths in header["networks"].items():
            net = Mlp(widths, zero=True)
            net.set_params([data[f"net/{name}/{i}"] for i in range(2 * (len(widths) - 1))])
            net.version = 0
            nets[name] = net
        opts = {}
        for name, o in header["optimizers"].items():
            opts[name] = RmsProp(o["lr"], o["decay"], o["eps"], [data[f"opt/{name}/{i}"].copy() for i in range(o["n"])])
    return nets, opts, header["meta"]
