"""Stable-by-construction linear recurrent units (LRUs) and gain utilities.

An LRU is a diagonal complex linear recursion with a normalized input map and
a nonlinear output head:

    xi_{t+1} = Lambda xi_t + Gamma(Lambda) B v_t
    y_t      = head(Re(C xi_t) + D v_t) + F v_t

The diagonal entries are parameterized as lambda = exp(-exp(nu)) * exp(i*theta)
so |lambda| < 1 for every real nu: no gradient step can destabilize the
recursion. Gamma(Lambda) = diag(sqrt(1 - |lambda|^2)) normalizes each mode to
unit impulse energy. Complex quantities are stored as real/imag pairs and the
internal state is a `(xi_re, xi_im)` array pair.

All forward functions are written against :mod:`madrl.autodiff` ops, so they
run on plain arrays for rollouts and on Tensors for gradient computation.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from . import nets
from .signals import Signal, lp_norm


def lru_init(rng: np.random.Generator, n_xi: int, n_in: int, n_out: int,
             d_hidden: int = 16, mlp_hidden: int | None = 16,
             r_min: float = 0.4, r_max: float = 0.9,
             prefix: str = "", output_scale: float = 1.0) -> dict:
    """Random LRU parameters with eigenvalue magnitudes in [r_min, r_max).

    `mlp_hidden=None` drops the output head (then d_hidden must equal n_out),
    leaving the purely linear core; useful for closed-form gain checks.
    """
    if not (0.0 <= r_min < r_max < 1.0):
        raise ValueError(f"need 0 <= r_min < r_max < 1, got [{r_min}, {r_max}]")
    radii = rng.uniform(r_min, r_max, size=n_xi)
    params = {
        f"{prefix}nu": np.log(-np.log(radii)),
        f"{prefix}theta": rng.uniform(0.0, 2.0 * np.pi, size=n_xi),
        f"{prefix}b_re": rng.normal(scale=1.0 / np.sqrt(2 * n_in), size=(n_in, n_xi)),
        f"{prefix}b_im": rng.normal(scale=1.0 / np.sqrt(2 * n_in), size=(n_in, n_xi)),
        f"{prefix}c_re": rng.normal(scale=1.0 / np.sqrt(n_xi), size=(n_xi, d_hidden)),
        f"{prefix}c_im": rng.normal(scale=1.0 / np.sqrt(n_xi), size=(n_xi, d_hidden)),
        f"{prefix}d": rng.normal(scale=1.0 / np.sqrt(n_in), size=(n_in, d_hidden)),
        f"{prefix}f": rng.normal(scale=output_scale / np.sqrt(n_in), size=(n_in, n_out)),
    }
    if mlp_hidden is not None:
        params.update(nets.mlp_init(rng, (d_hidden, mlp_hidden, n_out),
                                    f"{prefix}head", final_scale=output_scale))
    elif d_hidden != n_out:
        raise ValueError("identity head requires d_hidden == n_out")
    return params


def lru_modes(params, prefix: str = ""):
    """Realized (lambda_re, lambda_im, gamma) from the unconstrained params."""
    mag = ad.exp(-ad.exp(params[f"{prefix}nu"]))
    lam_re = mag * ad.cos(params[f"{prefix}theta"])
    lam_im = mag * ad.sin(params[f"{prefix}theta"])
    gamma = ad.sqrt(1.0 - mag * mag)
    return lam_re, lam_im, gamma


def zero_state(params, prefix: str = ""):
    n_xi = ad.value_of(params[f"{prefix}nu"]).shape[0]
    return np.zeros(n_xi), np.zeros(n_xi)


def lru_output(params, prefix: str, xi_re, xi_im, v):
    """Output read from the current state and input, before the state advances."""
    z = xi_re @ params[f"{prefix}c_re"] - xi_im @ params[f"{prefix}c_im"] \
        + v @ params[f"{prefix}d"]
    feedthrough = v @ params[f"{prefix}f"]
    if f"{prefix}head.w0" in params:
        return nets.mlp_apply(params, f"{prefix}head", z) + feedthrough
    return z + feedthrough


def lru_advance(params, prefix: str, state, v, modes=None):
    """State update xi_{t+1} = Lambda xi_t + Gamma B v_t, in real/imag parts."""
    lam_re, lam_im, gamma = modes if modes is not None else lru_modes(params, prefix)
    xi_re, xi_im = state
    next_re = lam_re * xi_re - lam_im * xi_im + gamma * (v @ params[f"{prefix}b_re"])
    next_im = lam_re * xi_im + lam_im * xi_re + gamma * (v @ params[f"{prefix}b_im"])
    return next_re, next_im


def lru_step(params, prefix: str, state, v, modes=None):
    """One recursion step: returns (next_state, y_t) with y_t read at xi_t."""
    y = lru_output(params, prefix, state[0], state[1], v)
    return lru_advance(params, prefix, state, v, modes=modes), y


def run_lru(params, prefix: str, v: Signal) -> Signal:
    """Fold lru_step over a signal from the zero state; length-preserving."""
    modes = lru_modes(params, prefix)
    state = zero_state(params, prefix)
    outputs = []
    for t in range(len(v)):
        state, y = lru_step(params, prefix, state, v[t], modes=modes)
        outputs.append(y)
    return Signal(np.array(outputs))


def unrolled_output_energy(params, prefix: str, v_seq: np.ndarray):
    """Sum of squared outputs over an unrolled window; differentiable scalar.

    Gradient flows through the full recursion, including nu, theta, and B.
    """
    modes = lru_modes(params, prefix)
    state = zero_state(params, prefix)
    energy = 0.0
    for v in v_seq:
        state, y = lru_step(params, prefix, state, v, modes=modes)
        energy = energy + ad.total(ad.square(y))
    return energy


def stability_margin(params, prefix: str = "") -> float:
    """max_i |lambda_i|; below 1 for every finite parameter value."""
    nu = ad.value_of(params[f"{prefix}nu"])
    return float(np.exp(-np.exp(nu)).max())


def rescale_output(params, prefix: str, c: float) -> dict:
    """Scale the operator's output by c >= 0 without touching its dynamics.

    With an MLP head, the head's final layer and F are scaled, so outputs (and
    any fixed-probe gain estimate) scale by exactly c.
    """
    if c < 0:
        raise ValueError("rescale factor must be nonnegative")
    out = {k: np.array(v, copy=True) for k, v in params.items()}
    out[f"{prefix}f"] *= c
    if f"{prefix}head.w0" in params:
        last = 0
        while f"{prefix}head.w{last + 1}" in params:
            last += 1
        out[f"{prefix}head.w{last}"] *= c
        out[f"{prefix}head.b{last}"] *= c
    else:
        out[f"{prefix}c_re"] *= c
        out[f"{prefix}c_im"] *= c
        out[f"{prefix}d"] *= c
    return out


def estimate_gain(op, probes, p=2) -> float:
    """Largest output/input norm ratio over the probe set.

    This is a lower bound on the true lp gain; it is reported as such and
    never as the gain itself.
    """
    best = 0.0
    for w in probes:
        denom = lp_norm(w, p)
        if denom == 0.0:
            raise ValueError("zero-norm probe cannot witness a gain")
        best = max(best, lp_norm(op(w), p) / denom)
    return best


def gain_probes(rng: np.random.Generator, dim: int, horizon: int, support: int,
                count: int, scale: float = 1.0) -> list:
    """Finitely supported random probes plus one impulse per coordinate."""
    probes = []
    for i in range(dim):
        e = np.zeros(dim)
        e[i] = scale
        probes.append(Signal.impulse(e, horizon))
    for _ in range(count):
        data = np.zeros((horizon + 1, dim))
        data[:support] = rng.normal(scale=scale, size=(support, dim))
        probes.append(Signal(data))
    return probes
