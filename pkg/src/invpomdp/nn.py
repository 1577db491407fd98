"""Small dense networks in numpy: forward/backward pass, Adam, soft updates."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

FORMAT = "invpomdp-mlp"
FORMAT_VERSION = 1

HIDDEN_ACTIVATIONS = ("relu", "tanh")
OUTPUT_ACTIVATIONS = ("linear", "scaled_sigmoid")


@dataclass
class Mlp:
    """Weights are stored ``(fan_in, fan_out)`` so a batch runs as ``x @ W + b``.

    A ``scaled_sigmoid`` output is ``out_shift + out_scale * logistic(z)``.
    """

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activations: list[str]
    out_scale: float = 1.0
    out_shift: float = 0.0

    def __post_init__(self):
        if not (len(self.weights) == len(self.biases) == len(self.activations)):
            raise ValueError("one weight, bias and activation per layer")
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            if b.shape != (w.shape[1],):
                raise ValueError(f"layer {k}: bias shape {b.shape} != ({w.shape[1]},)")
            if k and w.shape[0] != self.weights[k - 1].shape[1]:
                raise ValueError(f"layer {k}: input width does not chain")
        for act in self.activations[:-1]:
            if act not in HIDDEN_ACTIVATIONS:
                raise ValueError(f"unknown hidden activation {act!r}")
        if self.activations[-1] not in OUTPUT_ACTIVATIONS:
            raise ValueError(f"unknown output activation {self.activations[-1]!r}")

    @property
    def in_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def shapes(self) -> list[tuple[int, int]]:
        return [w.shape for w in self.weights]

    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def copy(self) -> "Mlp":
        return Mlp([w.copy() for w in self.weights], [b.copy() for b in self.biases],
                   list(self.activations), self.out_scale, self.out_shift)

    def n_params(self) -> int:
        return sum(p.size for p in self.params())

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(p)) for p in self.params())


def init_mlp(sizes: list[int], rng: np.random.Generator, hidden: str = "relu",
             output: str = "linear", out_scale: float = 1.0, out_shift: float = 0.0) -> Mlp:
    """Uniform fan-in initialisation, U(-1/sqrt(fan_in), 1/sqrt(fan_in))."""
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(rng.uniform(-bound, bound, size=fan_out))
    acts = [hidden] * (len(sizes) - 2) + [output]
    return Mlp(weights, biases, acts, out_scale, out_shift)


def _act(name, z):
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "tanh":
        return np.tanh(z)
    if name == "linear":
        return z
    return 1.0 / (1.0 + np.exp(-z))


def forward(net: Mlp, x: np.ndarray) -> np.ndarray:
    """Batch forward pass.  ``x`` is ``(batch, in_dim)`` or a single vector."""
    single = np.ndim(x) == 1
    h = np.atleast_2d(np.asarray(x, dtype=float))
    for w, b, act in zip(net.weights, net.biases, net.activations):
        h = _act(act, h @ w + b)
    if net.activations[-1] == "scaled_sigmoid":
        h = net.out_shift + net.out_scale * h
    return h[0] if single else h


def forward_cached(net: Mlp, x: np.ndarray):
    """Forward pass that also returns the per-layer inputs and activations."""
    h = np.atleast_2d(np.asarray(x, dtype=float))
    inputs, outs = [], []
    for w, b, act in zip(net.weights, net.biases, net.activations):
        inputs.append(h)
        h = _act(act, h @ w + b)
        outs.append(h)
    y = net.out_shift + net.out_scale * h if net.activations[-1] == "scaled_sigmoid" else h
    return y, (inputs, outs)


def backward(net: Mlp, cache, grad_out: np.ndarray):
    """Reverse pass given dL/d(output) and the cache of :func:`forward_cached`.

    Returns ``(grads, grad_input)`` with ``grads`` ordered like
    :meth:`Mlp.params`.
    """
    inputs, outs = cache
    g = np.asarray(grad_out, dtype=float).reshape(outs[-1].shape)
    grads = [None] * (2 * len(net.weights))
    for k in range(len(net.weights) - 1, -1, -1):
        act, h = net.activations[k], outs[k]
        if act == "relu":
            g = g * (h > 0)
        elif act == "tanh":
            g = g * (1.0 - h * h)
        elif act == "scaled_sigmoid":
            g = g * (net.out_scale * h * (1.0 - h))
        grads[2 * k] = inputs[k].T @ g
        grads[2 * k + 1] = g.sum(axis=0)
        if k:
            g = g @ net.weights[k].T
        else:
            g_in = g @ net.weights[0].T
    return grads, g_in


def grad(net: Mlp, x: np.ndarray, grad_out: np.ndarray):
    _, cache = forward_cached(net, x)
    return backward(net, cache, grad_out)


@dataclass
class AdamState:
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_net(cls, net: Mlp, lr: float, beta1: float = 0.9, beta2: float = 0.999,
                eps: float = 1e-8) -> "AdamState":
        ps = net.params()
        return cls(lr=lr, beta1=beta1, beta2=beta2, eps=eps,
                   m=[np.zeros_like(p) for p in ps], v=[np.zeros_like(p) for p in ps])


def adam_step(params: list[np.ndarray], grads: list[np.ndarray], state: AdamState) -> None:
    """Bias-corrected Adam, updating ``params`` and ``state`` in place."""
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


def soft_update(target: Mlp, source: Mlp, tau: float) -> None:
    for t, s in zip(target.params(), source.params()):
        t *= 1.0 - tau
        t += tau * s


def to_dict(net: Mlp) -> dict:
    return {
        "format": FORMAT,
        "version": FORMAT_VERSION,
        "activations": list(net.activations),
        "out_scale": net.out_scale,
        "out_shift": net.out_shift,
        "layers": [
            {"shape": list(w.shape), "weights": w.ravel().tolist(), "bias": b.tolist()}
            for w, b in zip(net.weights, net.biases)
        ],
    }


def from_dict(d: dict) -> Mlp:
    if d.get("format") != FORMAT:
        raise ValueError("not a network file")
    if d.get("version") != FORMAT_VERSION:
        raise ValueError(f"unsupported network format version {d.get('version')!r}")
    weights = [np.array(layer["weights"], dtype=float).reshape(layer["shape"])
               for layer in d["layers"]]
    biases = [np.array(layer["bias"], dtype=float) for layer in d["layers"]]
    return Mlp(weights, biases, list(d["activations"]), float(d["out_scale"]),
               float(d.get("out_shift", 0.0)))


def save(net: Mlp, path: str | Path) -> None:
    Path(path).write_text(json.dumps(to_dict(net)))


def load(path: str | Path) -> Mlp:
    return from_dict(json.loads(Path(path).read_text()))
