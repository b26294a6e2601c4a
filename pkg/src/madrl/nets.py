"""Small dense networks shared by the critic, direction maps, and LRU heads."""

from __future__ import annotations

import numpy as np

from . import autodiff as ad


def mlp_init(rng: np.random.Generator, sizes, prefix: str, w_scale: float = 1.0,
             final_scale: float = 1.0) -> dict:
    """Parameters for a tanh MLP with layer sizes (n_in, ..., n_out).

    Weights are stored (fan_in, fan_out) so forward passes are `x @ w + b`.
    Biases start at zero: a freshly initialized network maps 0 to 0, which
    keeps untrained stable operators decaying (no constant drive).
    """
    params = {}
    n_layers = len(sizes) - 1
    for i, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        scale = w_scale / np.sqrt(n_in)
        if i == n_layers - 1:
            scale *= final_scale
        params[f"{prefix}.w{i}"] = rng.normal(scale=scale, size=(n_in, n_out))
        params[f"{prefix}.b{i}"] = np.zeros(n_out)
    return params


def mlp_apply(params, prefix: str, x):
    """tanh hidden layers, linear output; works on arrays or Tensors."""
    i = 0
    out = x
    while f"{prefix}.w{i + 1}" in params:
        out = ad.tanh(out @ params[f"{prefix}.w{i}"] + params[f"{prefix}.b{i}"])
        i += 1
    return out @ params[f"{prefix}.w{i}"] + params[f"{prefix}.b{i}"]


def count_params(arrays: dict) -> int:
    return int(sum(np.asarray(a).size for a in arrays.values()))
