"""Feed-forward scorer: embeddings -> hidden layers -> one score per decision.

The score of decision d in a state is the last hidden representation
dotted with the decision's weight vector (plus a bias), so scores are
linear in the final layer.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Mapping, Sequence

import numpy as np

from .features import FeatureTemplate

ACTIVATIONS = ("relu", "tanh", "identity")

TRAINABLE_SUBSETS = ("theta_d", "W2+theta_d", "W1+W2+theta_d", "full")


class Params:
    """Named float64 arrays. ``version`` changes whenever values are updated."""

    def __init__(self, arrays: Mapping[str, np.ndarray]):
        self.arrays = {k: np.asarray(v, dtype=np.float64) for k, v in arrays.items()}
        self.version = 0

    def __getitem__(self, name):
        return self.arrays[name]

    def __setitem__(self, name, value):
        self.arrays[name] = value

    def __iter__(self) -> Iterator[str]:
        return iter(self.arrays)

    def __contains__(self, name):
        return name in self.arrays

    def items(self):
        return self.arrays.items()

    def keys(self):
        return self.arrays.keys()

    def copy(self) -> "Params":
        return Params({k: v.copy() for k, v in self.arrays.items()})

    def zeros_like(self) -> "Params":
        return Params({k: np.zeros_like(v) for k, v in self.arrays.items()})

    @property
    def n_hidden(self) -> int:
        return sum(1 for k in self.arrays if k.startswith("W") and k != "Wd")

    @property
    def size(self) -> int:
        return sum(v.size for v in self.arrays.values())

    def flat(self) -> np.ndarray:
        return np.concatenate([v.ravel() for v in self.arrays.values()])

    def shapes(self) -> dict[str, tuple]:
        return {k: v.shape for k, v in self.arrays.items()}

    def add_(self, other: "Params", scale: float = 1.0) -> None:
        for k in self.arrays:
            self.arrays[k] += scale * other.arrays[k]

    def equals(self, other: "Params") -> bool:
        return self.shapes() == other.shapes() and all(
            np.array_equal(v, other.arrays[k]) for k, v in self.arrays.items()
        )


Gradients = Params


def init_params(template: FeatureTemplate, hidden_sizes: Sequence[int], n_actions: int,
                seed: int = 0, bias: float = 0.1) -> Params:
    """Uniform Glorot-style initialization, deterministic in ``seed``."""
    rng = np.random.default_rng(seed)

    def uniform(fan_in, fan_out):
        r = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-r, r, size=(fan_in, fan_out))

    arrays = {}
    for g in template.groups:
        arrays[f"emb.{g.name}"] = uniform(len(g.vocab), g.dim)
    width = template.input_width
    for i, h in enumerate(hidden_sizes, 1):
        arrays[f"W{i}"] = uniform(width, h)
        arrays[f"b{i}"] = np.full(h, bias)
        width = h
    arrays["Wd"] = uniform(width, n_actions)
    arrays["bd"] = np.full(n_actions, bias)
    return Params(arrays)


def check_shapes(params: Params, template: FeatureTemplate, n_actions: int) -> None:
    width = template.input_width
    for g in template.groups:
        e = params.arrays.get(f"emb.{g.name}")
        if e is None or e.shape != (len(g.vocab), g.dim):
            raise ValueError(f"embedding for group {g.name!r} does not match its vocabulary/dim")
    for i in range(1, params.n_hidden + 1):
        W = params[f"W{i}"]
        if W.shape[0] != width or params[f"b{i}"].shape != (W.shape[1],):
            raise ValueError(f"hidden layer {i} expects input width {W.shape[0]}, got {width}")
        width = W.shape[1]
    if params["Wd"].shape != (width, n_actions) or params["bd"].shape != (n_actions,):
        raise ValueError("final layer shape does not match the decision vocabulary")


def _act(z, kind):
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "tanh":
        return np.tanh(z)
    return z


def _act_grad(z, a, kind):
    if kind == "relu":
        return (z > 0).astype(np.float64)
    if kind == "tanh":
        return 1.0 - a * a
    return np.ones_like(z)


@dataclass
class Cache:
    batch: dict
    layers: list          # (input, preactivation, activation) per hidden layer
    top: np.ndarray       # last hidden representation
    version: int
    params_id: int


def embed(batch, params: Params, template: FeatureTemplate) -> np.ndarray:
    parts = []
    for g in template.groups:
        ids, w = batch[g.name]
        e = params[f"emb.{g.name}"][ids] * w[..., None]      # (N, arity, bag, dim)
        parts.append(e.sum(axis=2).reshape(ids.shape[0], -1))
    return np.concatenate(parts, axis=1)


def forward(batch, params: Params, template: FeatureTemplate, activation: str = "relu"):
    """Scores for a batch of feature vectors: (N, n_actions) and a backprop cache."""
    x = embed(batch, params, template)
    layers = []
    h = x
    for i in range(1, params.n_hidden + 1):
        z = h @ params[f"W{i}"] + params[f"b{i}"]
        a = _act(z, activation)
        layers.append((h, z, a))
        h = a
    scores = h @ params["Wd"] + params["bd"]
    return scores, Cache(batch, layers, h, params.version, id(params))


def backward(cache: Cache, upstream: np.ndarray, params: Params, template: FeatureTemplate,
             activation: str = "relu") -> Gradients:
    """Gradient of sum(scores * upstream) with respect to every parameter."""
    if cache.version != params.version or cache.params_id != id(params):
        raise RuntimeError("stale cache: parameters changed since the forward pass")
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape != (cache.top.shape[0], params["Wd"].shape[1]):
        raise ValueError(f"upstream shape {upstream.shape} does not match scores")
    grads = {}
    grads["Wd"] = cache.top.T @ upstream
    grads["bd"] = upstream.sum(axis=0)
    g = upstream @ params["Wd"].T
    for i in range(params.n_hidden, 0, -1):
        h_in, z, a = cache.layers[i - 1]
        g = g * _act_grad(z, a, activation)
        grads[f"W{i}"] = h_in.T @ g
        grads[f"b{i}"] = g.sum(axis=0)
        g = g @ params[f"W{i}"].T
    offset = 0
    for grp in template.groups:
        ids, w = cache.batch[grp.name]
        n, arity, _ = ids.shape
        gs = g[:, offset:offset + grp.width].reshape(n, arity, 1, grp.dim)
        offset += grp.width
        ge = np.zeros_like(params[f"emb.{grp.name}"])
        np.add.at(ge, ids, w[..., None] * gs)
        grads[f"emb.{grp.name}"] = ge
    return Params({k: grads[k] for k in params.keys()})


def trainable_names(params: Params, subset: str) -> set[str]:
    if subset not in TRAINABLE_SUBSETS:
        raise ValueError(f"unknown trainable subset {subset!r}; expected one of {TRAINABLE_SUBSETS}")
    if subset == "full":
        return set(params.keys())
    names = {"Wd", "bd"}
    if subset in ("W2+theta_d", "W1+W2+theta_d"):
        names |= {k for k in ("W2", "b2") if k in params}
    if subset == "W1+W2+theta_d":
        names |= {k for k in params.keys() if k[0] in "Wb" and k[1:].isdigit()}
    return names


def restrict_trainable(grads: Gradients, subset: str) -> Gradients:
    """Zero the gradients of parameters outside ``subset``."""
    keep = trainable_names(grads, subset)
    return Params({k: (v if k in keep else np.zeros_like(v)) for k, v in grads.items()})
