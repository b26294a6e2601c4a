"""Executable checks for the toolkit's stability and inclusion claims.

Every check returns a plain dict report {name, pass, metrics, thresholds,
seeds} that serializes to JSON. Empirical stability checks are falsifiable
proxies, never proofs: gain estimates are probe-based lower bounds and the
reports say so.
"""

from __future__ import annotations

import math

import numpy as np

from . import corridor, plant, stable_ops
from .autodiff import ParamVector
from .plant import RolloutDiverged
from .policies import MadPolicy
from .signals import Signal, lp_norm, stack, tail_ratio


def check_robustness_condition(gamma_m: float, gamma_delta: float,
                               gamma_f: float) -> bool:
    """Small-gain style condition gamma_m < 1 / (gamma_delta * (gamma_f + 1)).

    A perfect model (gamma_delta = 0) imposes no bound; an unbounded mismatch
    (gamma_delta = inf) admits only a zero magnitude operator.
    """
    if gamma_delta == 0.0:
        return True
    if math.isinf(gamma_delta):
        return gamma_m == 0.0
    return gamma_m < 1.0 / (gamma_delta * (gamma_f + 1.0))


def certify_policy_gain(theta1: dict, gamma_delta: float, gamma_f: float,
                        probes, p=2, margin: float = 0.1) -> dict:
    """Probe-based certificate for the magnitude operator's gain budget.

    Estimates the operator's gain (a lower bound; the true gain may be
    larger, which the report states) and, when the budget is violated,
    returns the output rescale factor that meets it with the given margin.
    """
    gain_est = stable_ops.estimate_gain(
        lambda w: stable_ops.run_lru(theta1, "m.", w), probes, p)
    certified = check_robustness_condition(gain_est, gamma_delta, gamma_f)
    if certified or gain_est == 0.0:
        rescale = 1.0
    else:
        bound = 1.0 / (gamma_delta * (gamma_f + 1.0))
        rescale = (1.0 - margin) * bound / gain_est
    return {
        "name": "certify_policy_gain",
        "pass": bool(certified),
        "metrics": {"gamma_m_lower_bound": gain_est, "rescale": rescale,
                    "caveat": "gain estimate is a probe lower bound, not the true gain"},
        "thresholds": {"gamma_delta": gamma_delta, "gamma_f": gamma_f,
                       "margin": margin},
        "seeds": [],
    }


def check_stability(system, n_probes: int, T_list, p, threshold: float,
                    seed: int = 0, support: int = 12, probe_scale: float = 0.3,
                    name: str = "stability") -> dict:
    """Empirical closed-loop lp-stability proxy.

    `system(w, T)` must return the deviation pair signals (x, u) of a rollout
    driven by the finitely supported disturbance w. Passes when the worst
    tail ratio at split 3T/4 is below the threshold at the largest horizon
    and decreases as the horizon grows. A diverged rollout fails outright.
    """
    T_list = sorted(T_list)
    rng = np.random.default_rng(seed)
    dim = system.noise_dim
    worst = {T: 0.0 for T in T_list}
    metrics_x = {T: 0.0 for T in T_list}
    diverged = False
    for _ in range(n_probes):
        probe_data = np.zeros((max(T_list) + 1, dim))
        probe_data[:support] = rng.normal(scale=probe_scale, size=(support, dim))
        for T in T_list:
            w = Signal(probe_data[: T + 1])
            try:
                x, u = system(w, T)
            except RolloutDiverged:
                diverged = True
                continue
            split = (3 * T) // 4
            worst[T] = max(worst[T], tail_ratio(stack(x, u), p, split))
            metrics_x[T] = max(metrics_x[T], tail_ratio(x, p, split))
    ratios = [worst[T] for T in T_list]
    decreasing = all(a > b for a, b in zip(ratios[:-1], ratios[1:])) or ratios[-1] == 0.0
    ok = (not diverged) and ratios[-1] < threshold and decreasing
    return {
        "name": name,
        "pass": bool(ok),
        "metrics": {"tail_ratio_pair": {str(T): worst[T] for T in T_list},
                    "tail_ratio_x": {str(T): metrics_x[T] for T in T_list},
                    "diverged": diverged},
        "thresholds": {"tail_ratio": threshold, "split": "3T/4", "p": p,
                       "note": "empirical proxy for lp stability, not a proof"},
        "seeds": [seed],
    }


class CorridorSystem:
    """Adapter: disturbance signal -> deviation (x, u) pair on the corridor.

    The probe's slot 0 is the initial deviation; fresh policy state per call.
    """

    def __init__(self, cfg: corridor.EnvConfig, policy=None):
        self.cfg = cfg
        self.policy = policy
        self.noise_dim = 8

    def __call__(self, w: Signal, T: int):
        center = self.cfg.equilibrium()
        x0 = center + w[0]
        x, u = corridor.rollout_policy(self.cfg, self.policy, x0, w, T)
        return Signal(x.data - center), u


class ToySystem:
    """One-dimensional stable plant x+ = a x + u + w for negative controls."""

    def __init__(self, a: float = 0.9, policy_gain: float = 0.0):
        self.a = a
        self.k = policy_gain
        self.noise_dim = 1

    def __call__(self, w: Signal, T: int):
        x = float(w[0][0])
        xs, us = [x], []
        for t in range(T):
            u = self.k * x
            us.append(u)
            x = self.a * x + u + float(w[t + 1][0])
            if not np.isfinite(x):
                raise RolloutDiverged(t + 1)
            xs.append(x)
        us.append(self.k * x)
        return Signal(np.array(xs)), Signal(np.array(us))


def check_inclusion(theta1: dict, n_rollouts: int, tol: float = 1e-9,
                    cfg: corridor.EnvConfig | None = None, T: int = 50,
                    seed: int = 0, theta1_other: dict | None = None) -> dict:
    """Self-directed (MA) and pure disturbance-feedback (DF) policies built on
    the same magnitude operator must produce identical inputs in closed loop.

    `theta1_other` substitutes a different operator into the MA side; used as
    a negative control (the check must then fail).
    """
    cfg = cfg or corridor.EnvConfig()
    nominal = cfg.nominal_model("exact")
    ma = MadPolicy("MA", ParamVector(theta1_other or theta1), 8, 4, nominal)
    df = MadPolicy("DF", ParamVector(theta1), 8, 4, nominal)
    worst = 0.0
    for i in range(n_rollouts):
        rng = np.random.default_rng([seed, i])
        x0 = corridor.sample_init(cfg, "train", rng)
        w = corridor.sample_disturbance(cfg, T, rng)
        _, u_ma = corridor.rollout_policy(cfg, ma, x0, w, T)
        _, u_df = corridor.rollout_policy(cfg, df, x0, w, T)
        worst = max(worst, float(np.max(np.abs(u_ma.data - u_df.data))))
    return {
        "name": "inclusion_ma_equals_df",
        "pass": bool(worst <= tol),
        "metrics": {"max_abs_input_gap": worst, "rollouts": n_rollouts},
        "thresholds": {"tol": tol},
        "seeds": [seed],
    }


def check_mismatch_residual(cfg: corridor.EnvConfig, policy, n_rollouts: int = 3,
                            T: int = 80, seed: int = 0, tol: float = 1e-10,
                            drag_scale: float = 1.1) -> dict:
    """The reconstructed disturbance must equal mismatch-plus-noise exactly.

    Rolls the true plant, reconstructs against a drag-perturbed nominal model,
    and compares with the side-by-side evaluation of both models. Also logs
    the norm bookkeeping ||w_hat|| vs ||w|| as informational output.
    """
    c = cfg.corridor
    nominal_params = plant.CorridorParams(
        m=c.m, b1=drag_scale * c.b1, b2=drag_scale * c.b2, ts=c.ts,
        gains=c.gains, targets=c.targets)
    nominal = plant.NominalModel.from_corridor(nominal_params)
    worst = 0.0
    norms = []
    for i in range(n_rollouts):
        rng = np.random.default_rng([seed, i])
        x0 = corridor.sample_init(cfg, "train", rng)
        w = corridor.sample_disturbance(cfg, T, rng, x0_dev=x0 - cfg.equilibrium())
        x, u = corridor.rollout_policy(cfg, policy, x0, w, T)
        for t in range(1, T + 1):
            w_hat = plant.reconstruct_disturbance(nominal, x[t], x[t - 1], u[t - 1])
            delta = plant.step(c, x[t - 1], u[t - 1], np.zeros(8)) \
                - nominal.step_fn(x[t - 1], u[t - 1])
            worst = max(worst, float(np.max(np.abs(w_hat - (delta + w[t])))))
        w_hat_sig = Signal(np.array([
            x[0] - cfg.equilibrium(),
            *[plant.reconstruct_disturbance(nominal, x[t], x[t - 1], u[t - 1])
              for t in range(1, T + 1)]]))
        norms.append({"w_hat": lp_norm(w_hat_sig, 2), "w": lp_norm(w, 2)})
    return {
        "name": "mismatch_residual_identity",
        "pass": bool(worst <= tol),
        "metrics": {"max_identity_gap": worst, "norms": norms},
        "thresholds": {"tol": tol},
        "seeds": [seed],
    }


def robustness_truth_table() -> dict:
    """Hand-checkable cases of the robustness condition, including limits."""
    cases = [
        {"gamma_m": 0.9, "gamma_delta": 0.5, "gamma_f": 1.0, "expect": True},
        {"gamma_m": 1.1, "gamma_delta": 0.5, "gamma_f": 1.0, "expect": False},
        {"gamma_m": 1e9, "gamma_delta": 0.0, "gamma_f": 1e9, "expect": True},
        {"gamma_m": 0.0, "gamma_delta": math.inf, "gamma_f": 1.0, "expect": True},
        {"gamma_m": 1e-12, "gamma_delta": math.inf, "gamma_f": 1.0, "expect": False},
    ]
    results = []
    ok = True
    for case in cases:
        got = check_robustness_condition(case["gamma_m"], case["gamma_delta"],
                                         case["gamma_f"])
        results.append({**case, "got": got})
        ok = ok and (got == case["expect"])
    return {
        "name": "robustness_condition_truth_table",
        "pass": bool(ok),
        "metrics": {"cases": results},
        "thresholds": {},
        "seeds": [],
    }
