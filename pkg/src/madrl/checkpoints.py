"""Versioned JSON checkpoints: named real arrays plus a small header."""

from __future__ import annotations

import json

import numpy as np

from .autodiff import ParamVector
from .policies import MadPolicy

FORMAT_VERSION = 1


def save_arrays(path, arrays: dict, meta: dict | None = None) -> None:
    payload = {
        "format_version": FORMAT_VERSION,
        "meta": meta or {},
        "arrays": {name: np.asarray(a).tolist() for name, a in arrays.items()},
    }
    with open(path, "w") as fh:
        json.dump(payload, fh)


def load_arrays(path):
    with open(path) as fh:
        payload = json.load(fh)
    version = payload.get("format_version")
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint format_version {version!r}")
    arrays = {name: np.asarray(a, dtype=float) for name, a in payload["arrays"].items()}
    return arrays, payload.get("meta", {})


def save_policy(path, policy: MadPolicy, extra_meta: dict | None = None) -> None:
    meta = {
        "kind": "policy",
        "mode": policy.mode,
        "n": policy.n,
        "m": policy.m,
        "model_based": policy.nominal is not None,
    }
    if extra_meta:
        meta.update(extra_meta)
    save_arrays(path, policy.params.arrays(), meta)


def load_policy(path, nominal=None) -> MadPolicy:
    arrays, meta = load_arrays(path)
    if meta.get("kind") != "policy":
        raise ValueError(f"{path} is not a policy checkpoint")
    mode = meta["mode"]
    if meta.get("model_based") and nominal is None:
        raise ValueError(
            f"checkpoint holds a {mode} policy that needs a nominal model; "
            "pass one built from the run configuration")
    return MadPolicy(mode, ParamVector(arrays), int(meta["n"]), int(meta["m"]), nominal)
