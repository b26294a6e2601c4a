"""Discrete-time plant stepping, the two-vehicle corridor dynamics, and
disturbance reconstruction against a nominal model.

State layout for the corridor plant: x = (p1, q1, p2, q2) with positions p in
meters and velocities q in m/s, dimension 8. A proportional base controller
toward each vehicle's target is embedded in the dynamics; the external input u
is additional force on top of it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .signals import Signal


class RolloutDiverged(RuntimeError):
    """A rollout produced a non-finite state; raised instead of clamping."""

    def __init__(self, t: int):
        super().__init__(f"non-finite state at step t={t}; closed loop is diverging")
        self.t = t


@dataclass
class CorridorParams:
    """Constants of the two-vehicle corridor plant."""

    m: np.ndarray = field(default_factory=lambda: np.array([1.0, 1.0]))
    b1: np.ndarray = field(default_factory=lambda: np.array([1.0, 1.0]))
    b2: np.ndarray = field(default_factory=lambda: np.array([0.3, 0.3]))
    ts: float = 0.05
    gains: np.ndarray = field(default_factory=lambda: np.ones((2, 2)))
    targets: np.ndarray = field(default_factory=lambda: np.array([[-1.0, 2.0], [1.0, 2.0]]))

    def __post_init__(self):
        self.m = np.asarray(self.m, dtype=float)
        self.b1 = np.asarray(self.b1, dtype=float)
        self.b2 = np.asarray(self.b2, dtype=float)
        self.gains = np.asarray(self.gains, dtype=float)
        self.targets = np.asarray(self.targets, dtype=float)
        if not np.all((0 < self.b2) & (self.b2 < self.b1)):
            raise ValueError("drag coefficients must satisfy 0 < b2 < b1")
        if self.ts <= 0:
            raise ValueError("sampling time must be positive")
        if not np.all(self.gains > 0) or not np.all(self.m > 0):
            raise ValueError("masses and base-controller gains must be positive")

    def equilibrium(self) -> np.ndarray:
        """Rest state at the targets: drag and spring force both vanish."""
        x = np.zeros(8)
        x[0:2] = self.targets[0]
        x[4:6] = self.targets[1]
        return x


def drag(params: CorridorParams, q: np.ndarray) -> np.ndarray:
    """Componentwise drag b1*q - b2*tanh(q) per vehicle; zero at rest."""
    return params.b1[:, None] * q - params.b2[:, None] * np.tanh(q)


def step(params: CorridorParams, x_prev: np.ndarray, u_prev: np.ndarray,
         w: np.ndarray) -> np.ndarray:
    """One Euler step of both vehicles under base controller plus u, plus w."""
    s = x_prev.reshape(2, 4)
    p, q = s[:, :2], s[:, 2:]
    force = params.gains * (params.targets - p) + u_prev.reshape(2, 2)
    p_next = p + params.ts * q
    q_next = q + (params.ts / params.m[:, None]) * (force - drag(params, q))
    return np.concatenate([p_next, q_next], axis=1).ravel() + w


@dataclass
class NominalModel:
    """A strictly causal model step x_t = f_hat(x_{t-1}, u_{t-1}).

    `gamma_delta` optionally records a gain bound on the mismatch between this
    model and the true plant (None means unknown).
    """

    step_fn: callable
    gamma_delta: float | None = None

    @classmethod
    def from_corridor(cls, params: CorridorParams, gamma_delta=None) -> "NominalModel":
        return cls(lambda x, u: step(params, x, u, np.zeros(8)), gamma_delta)

    def shifted(self, center: np.ndarray) -> "NominalModel":
        """The same model in deviation coordinates around `center`."""
        return NominalModel(
            lambda x, u: self.step_fn(x + center, u) - center, self.gamma_delta
        )


def reconstruct_disturbance(nominal: NominalModel, x_t, x_prev, u_prev) -> np.ndarray:
    """Residual w_hat_t = x_t - f_hat(x_{t-1}, u_{t-1}).

    Equals the injected disturbance exactly when the nominal model matches the
    plant; otherwise it also carries the model mismatch.
    """
    return np.asarray(x_t) - nominal.step_fn(np.asarray(x_prev), np.asarray(u_prev))


def rollout(step_fn, x0: np.ndarray, w: Signal, T: int, policy=None, m: int = None):
    """Closed-loop trajectories (x, u) of length T+1 under a per-step policy.

    step_fn(x, u, w_t) advances the plant. The disturbance signal must cover
    the horizon; w[0] is not applied (by convention it mirrors the initial
    condition, which enters through x0). A None policy applies u = 0.
    """
    if w.horizon < T:
        raise ValueError(f"disturbance horizon {w.horizon} < rollout horizon {T}")
    if policy is None and m is None:
        raise ValueError("zero policy needs an explicit input dimension m")
    x = np.array(x0, dtype=float)
    if policy is not None:
        policy.reset(x)
    xs, us = [x], []
    for t in range(T + 1):
        u = np.zeros(m) if policy is None else np.asarray(policy.step(x, t))
        us.append(u)
        if t == T:
            break
        x = step_fn(x, u, w[t + 1])
        if not np.all(np.isfinite(x)):
            raise RolloutDiverged(t + 1)
        xs.append(x)
    return Signal(np.array(xs)), Signal(np.array(us))
