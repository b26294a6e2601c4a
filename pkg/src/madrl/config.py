"""Run configuration: YAML files over defaults, with dotted-path overrides.

Every plant, loss, policy-architecture, and trainer constant is addressable,
e.g. ``--set ddpg.episodes=50 --set env.init_half_width=0.3``.
"""

from __future__ import annotations

import copy

import numpy as np
import yaml

from . import corridor, ddpg, plant, policies


class ConfigError(ValueError):
    pass


def default_config() -> dict:
    return {
        "env": {
            "corridor": {
                "m": [1.0, 1.0],
                "b1": [1.0, 1.0],
                "b2": [0.3, 0.3],
                "ts": 0.05,
                "gains": [[1.0, 1.0], [1.0, 1.0]],
                "targets": [[-1.0, 2.0], [1.0, 2.0]],
            },
            "s_state": [1.0, 1.0, 0.1, 0.1, 1.0, 1.0, 0.1, 0.1],
            "s_input": [0.01, 0.01, 0.01, 0.01],
            "s_ca": 1.0,
            "d_min": 0.5,
            "eps": 1e-3,
            "s_obs": 1.0,
            "obstacles": [
                {"mu": [-0.6, 0.0], "sigma": 0.15},
                {"mu": [0.6, 0.0], "sigma": 0.15},
            ],
            "alpha": 0.99,
            "sigma_w": 0.02,
            "w_clip_sigmas": 4.0,
            "init_centers": [[1.0, -2.0], [-1.0, -2.0]],
            "init_half_width": 0.2,
            "radius": 0.25,
        },
        "policy": {
            "mode": "MAD",
            "model": "exact",  # exact | mismatched | none
            "n_xi": 8,
            "d_hidden": 16,
            "mlp_hidden": 16,
            "r_min": 0.4,
            "r_max": 0.9,
            "direction_hidden": 16,
            "baseline_hidden": 32,
            "output_scale": 0.3,
        },
        "ddpg": {
            "episodes": 500,
            "horizon": 100,
            "warmup": 1000,
            "batch": 64,
            "buffer": 100000,
            "lr_actor": 1e-5,
            "lr_critic": 1e-3,
            "tau": 5e-3,
            "sigma": 0.1,
            "alpha": 0.99,
            "reward_scale": 0.01,
            "q_target_max": 0.0,
            "actor_weight_decay": 1e-4,
            "time_limit_bootstrap": True,
            "optimizer": "adam",
            "update_every": 1,
            "eval_every": 1,
            "n_eval": 4,
            "eval_seed": 9000,
            "checkpoint_every": 100,
            "seed": 0,
        },
        "eval": {
            "n_rollouts": 20,
            "horizon": 100,
            "seed": 5000,
        },
        "verify": {
            "checks": ["base_stability", "random_policy_stability", "inclusion",
                       "robustness_truth_table", "mismatch_residual",
                       "unstable_negative_control"],
            "seed": 0,
            "n_probes": 4,
            "T_list": [200, 400, 800],
            "threshold": 0.05,
            "p": 2,
            "n_random_policies": 12,
            "inclusion_rollouts": 10,
            "inclusion_tol": 1e-9,
            "inject_unstable": False,
        },
    }


def _merge(base: dict, override: dict, path: str = "") -> dict:
    out = dict(base)
    for key, value in override.items():
        here = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigError(f"unknown config key {here!r}")
        if isinstance(base[key], dict) and isinstance(value, dict):
            out[key] = _merge(base[key], value, here)
        else:
            out[key] = value
    return out


def load_config(path=None) -> dict:
    cfg = default_config()
    if path is not None:
        with open(path) as fh:
            user = yaml.safe_load(fh) or {}
        cfg = _merge(cfg, user)
    return cfg


def apply_overrides(cfg: dict, assignments) -> dict:
    """Apply ``a.b.c=value`` strings; values are parsed as YAML scalars."""
    cfg = copy.deepcopy(cfg)
    for item in assignments or []:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        dotted, raw = item.split("=", 1)
        node = cfg
        keys = dotted.strip().split(".")
        for key in keys[:-1]:
            if key not in node or not isinstance(node[key], dict):
                raise ConfigError(f"unknown config table {key!r} in {dotted!r}")
            node = node[key]
        if keys[-1] not in node:
            raise ConfigError(f"unknown config key {dotted!r}")
        node[keys[-1]] = yaml.safe_load(raw)
    return cfg


def validate(cfg: dict) -> None:
    """Raise ConfigError on inconsistent settings, before any side effects."""
    mode = cfg["policy"]["mode"]
    model = cfg["policy"]["model"]
    if mode not in policies.MODES:
        raise ConfigError(f"unknown policy mode {mode!r}; expected one of {policies.MODES}")
    if model not in ("exact", "mismatched", "none"):
        raise ConfigError(f"unknown model kind {model!r}")
    if model == "none" and mode in policies.MODEL_BASED_MODES:
        raise ConfigError(
            f"mode {mode!r} reconstructs disturbances and cannot run model-free; "
            "choose AD or MLP, or provide a model")
    try:
        build_env_config(cfg)
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"invalid environment config: {exc}") from exc
    try:
        build_ddpg_config(cfg)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"invalid trainer config: {exc}") from exc


def _build_obstacle(spec: dict) -> corridor.Obstacle:
    mu = np.asarray(spec["mu"], dtype=float)
    if "cov" in spec:
        cov = np.asarray(spec["cov"], dtype=float)
    else:
        cov = float(spec["sigma"]) ** 2 * np.eye(2)
    return corridor.Obstacle(mu, cov)


def build_env_config(cfg: dict) -> corridor.EnvConfig:
    e = cfg["env"]
    params = plant.CorridorParams(
        m=e["corridor"]["m"], b1=e["corridor"]["b1"], b2=e["corridor"]["b2"],
        ts=e["corridor"]["ts"], gains=e["corridor"]["gains"],
        targets=e["corridor"]["targets"])
    return corridor.EnvConfig(
        corridor=params,
        s_state=e["s_state"], s_input=e["s_input"], s_ca=e["s_ca"],
        d_min=e["d_min"], eps=e["eps"], s_obs=e["s_obs"],
        obstacles=[_build_obstacle(o) for o in e["obstacles"]],
        alpha=e["alpha"], sigma_w=e["sigma_w"], w_clip_sigmas=e["w_clip_sigmas"],
        init_centers=e["init_centers"], init_half_width=e["init_half_width"],
        radius=e["radius"])


def build_ddpg_config(cfg: dict) -> ddpg.DdpgConfig:
    return ddpg.DdpgConfig(**cfg["ddpg"])


def build_policy(cfg: dict, env: corridor.CorridorEnv, seed=None) -> policies.MadPolicy:
    p = cfg["policy"]
    nominal = env.nominal(p["model"])
    rng = np.random.default_rng(
        [cfg["ddpg"]["seed"] if seed is None else seed, 0xACT])
    return policies.make_policy(
        p["mode"], env.n, env.m, rng, nominal=nominal,
        n_xi=p["n_xi"], d_hidden=p["d_hidden"], mlp_hidden=p["mlp_hidden"],
        r_min=p["r_min"], r_max=p["r_max"],
        direction_hidden=p["direction_hidden"],
        baseline_hidden=p["baseline_hidden"], output_scale=p["output_scale"])


def dump_config(cfg: dict, path) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(cfg, fh, sort_keys=True)
