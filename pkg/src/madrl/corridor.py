"""The corridor benchmark: two vehicles swap sides through a narrow passage.

Stage loss = quadratic tracking/effort + pairwise collision penalty + Gaussian
obstacle proximity. Policies observe the deviation from the rest state at the
targets, so a vehicle sitting at its goal produces a zero observation and, for
disturbance-feedback modes, a zero reconstructed-disturbance stream.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import plant
from .plant import CorridorParams, NominalModel, RolloutDiverged
from .signals import Signal


@dataclass
class Obstacle:
    mu: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=float)
        self.cov = np.asarray(self.cov, dtype=float)
        if not np.allclose(self.cov, self.cov.T) or np.any(np.linalg.eigvalsh(self.cov) <= 0):
            raise ValueError("obstacle covariance must be symmetric positive definite")
        self.cov_inv = np.linalg.inv(self.cov)


def _default_obstacles():
    return [
        Obstacle(np.array([-0.6, 0.0]), 0.15**2 * np.eye(2)),
        Obstacle(np.array([0.6, 0.0]), 0.15**2 * np.eye(2)),
    ]


@dataclass
class EnvConfig:
    """Plant constants, loss weights, samplers, and discounting."""

    corridor: CorridorParams = field(default_factory=CorridorParams)
    s_state: np.ndarray = field(
        default_factory=lambda: np.array([1.0, 1.0, 0.1, 0.1, 1.0, 1.0, 0.1, 0.1]))
    s_input: np.ndarray = field(default_factory=lambda: np.full(4, 0.01))
    s_ca: float = 1.0
    d_min: float = 0.5
    eps: float = 1e-3
    s_obs: float = 1.0
    obstacles: list = field(default_factory=_default_obstacles)
    alpha: float = 0.99
    sigma_w: float = 0.02
    w_clip_sigmas: float = 4.0
    init_centers: np.ndarray = field(
        default_factory=lambda: np.array([[1.0, -2.0], [-1.0, -2.0]]))
    init_half_width: float = 0.2
    radius: float = 0.25

    def __post_init__(self):
        self.s_state = np.asarray(self.s_state, dtype=float)
        self.s_input = np.asarray(self.s_input, dtype=float)
        self.init_centers = np.asarray(self.init_centers, dtype=float)
        if np.any(self.s_state < 0) or np.any(self.s_input < 0):
            raise ValueError("quadratic loss weights must be nonnegative")
        if not (0.0 < self.alpha < 1.0):
            raise ValueError("discount must lie in (0, 1)")
        if self.s_ca <= 0 or self.s_obs <= 0 or self.eps <= 0 or self.d_min < 0:
            raise ValueError("collision/obstacle constants out of range")

    def equilibrium(self) -> np.ndarray:
        return self.corridor.equilibrium()

    def nominal_model(self, kind: str = "exact") -> NominalModel | None:
        """Model handed to disturbance-reconstructing policies, in deviation
        coordinates. `mismatched` perturbs the drag coefficients by +10%."""
        if kind == "none":
            return None
        if kind == "exact":
            params, gamma_delta = self.corridor, 0.0
        elif kind == "mismatched":
            c = self.corridor
            params = CorridorParams(m=c.m, b1=1.1 * c.b1, b2=1.1 * c.b2, ts=c.ts,
                                    gains=c.gains, targets=c.targets)
            gamma_delta = None
        else:
            raise ValueError(f"unknown model kind {kind!r}")
        base = NominalModel.from_corridor(params, gamma_delta)
        return base.shifted(self.equilibrium())


def stage_losses(cfg: EnvConfig, x: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Vectorized stage loss over rows of states/inputs; returns one value per row."""
    x = np.atleast_2d(x)
    u = np.atleast_2d(u)
    dx = x - cfg.equilibrium()
    l_traj = (dx**2 @ cfg.s_state) + (u**2 @ cfg.s_input)
    p1, p2 = x[:, 0:2], x[:, 4:6]
    d2 = np.sum((p1 - p2) ** 2, axis=1)
    # ordered pairs i != j: both (1,2) and (2,1) contribute
    l_ca = cfg.s_ca * 2.0 * (d2 < cfg.d_min**2) / (d2 + cfg.eps)
    l_obs = np.zeros(x.shape[0])
    for ob in cfg.obstacles:
        for p in (p1, p2):
            dp = p - ob.mu
            l_obs += np.exp(-0.5 * np.einsum("ti,ij,tj->t", dp, ob.cov_inv, dp))
    return l_traj + l_ca + cfg.s_obs * l_obs


def stage_loss(cfg: EnvConfig, x, u) -> float:
    return float(stage_losses(cfg, x, u)[0])


def discounted_return(cfg: EnvConfig, x: Signal, u: Signal, T_eval: int | None = None) -> float:
    """sum_{t=0}^{T_eval} alpha^t l(x_t, u_t)."""
    if T_eval is None:
        T_eval = x.horizon
    losses = stage_losses(cfg, x.data[: T_eval + 1], u.data[: T_eval + 1])
    return float(np.sum(cfg.alpha ** np.arange(T_eval + 1) * losses))


def truncation_bound(alpha: float, l_max: float, T_eval: int) -> float:
    """Geometric bound alpha^{T+1} l_max / (1 - alpha) on the discarded tail."""
    return alpha ** (T_eval + 1) * l_max / (1.0 - alpha)


def sample_init(cfg: EnvConfig, mode: str, rng: np.random.Generator) -> np.ndarray:
    """Initial state with zero velocities, positions uniform in per-agent boxes.

    `train` and `validation` share the boxes; `generalization` swaps the two
    agents' boxes (same draw, indices interchanged), so each agent approaches
    its target from the other agent's side.
    """
    if mode not in ("train", "validation", "generalization"):
        raise ValueError(f"unknown init mode {mode!r}")
    draws = cfg.init_centers + rng.uniform(
        -cfg.init_half_width, cfg.init_half_width, size=(2, 2))
    if mode == "generalization":
        draws = draws[::-1]
    x0 = np.zeros(8)
    x0[0:2], x0[4:6] = draws[0], draws[1]
    return x0


def sample_disturbance(cfg: EnvConfig, T: int, rng: np.random.Generator,
                       x0_dev: np.ndarray | None = None) -> Signal:
    """Clipped Gaussian process noise for steps 1..T; slot 0 carries the
    initial deviation so the whole excitation lives in one signal."""
    data = np.zeros((T + 1, 8))
    clip = cfg.w_clip_sigmas * cfg.sigma_w
    data[1:] = np.clip(rng.normal(scale=cfg.sigma_w, size=(T, 8)), -clip, clip)
    if x0_dev is not None:
        data[0] = x0_dev
    return Signal(data)


class _DeviationShim:
    """Feeds a policy deviation coordinates while the plant runs in absolute ones."""

    def __init__(self, policy, center):
        self.policy = policy
        self.center = center

    def reset(self, x0):
        self.policy.reset(x0 - self.center)

    def step(self, x, t):
        return self.policy.step(x - self.center, t)


def rollout_policy(cfg: EnvConfig, policy, x0: np.ndarray, w: Signal, T: int):
    """Closed-loop corridor trajectories; policy=None applies the base
    controller alone. Returned states are absolute."""
    step_fn = lambda x, u, wt: plant.step(cfg.corridor, x, u, wt)
    shim = None if policy is None else _DeviationShim(policy, cfg.equilibrium())
    return plant.rollout(step_fn, x0, w, T, policy=shim, m=4)


def evaluation_rollout(cfg: EnvConfig, policy, mode: str, seed, T: int):
    """One seeded rollout; the same seed gives the same (x0, w) for any policy."""
    rng = np.random.default_rng([int(seed), 0x5EED])
    x0 = sample_init(cfg, mode, rng)
    w = sample_disturbance(cfg, T, rng)
    return rollout_policy(cfg, policy, x0, w, T)


class CorridorEnv:
    """Episode interface over the corridor plant for the trainer.

    Holds the absolute plant state; observations are deviations from the rest
    state at the targets. step() reports the stage loss of the current state
    and the applied input, then advances.
    """

    def __init__(self, cfg: EnvConfig):
        self.cfg = cfg
        self.n = 8
        self.m = 4
        self._center = cfg.equilibrium()
        self._x = self._center.copy()

    def nominal(self, kind: str = "exact"):
        return self.cfg.nominal_model(kind)

    def sample_init(self, mode: str, rng) -> np.ndarray:
        return sample_init(self.cfg, mode, rng)

    def sample_disturbance(self, T: int, rng) -> Signal:
        return sample_disturbance(self.cfg, T, rng)

    def reset(self, x0: np.ndarray) -> np.ndarray:
        self._x = np.array(x0, dtype=float)
        return self._x - self._center

    def step(self, u: np.ndarray, w_t: np.ndarray):
        loss = stage_loss(self.cfg, self._x, u)
        self._x = plant.step(self.cfg.corridor, self._x, u, w_t)
        return self._x - self._center, loss


def improvement_pct(l_base: float, l_policy: float) -> float:
    """100 * (L_base - L_policy) / L_base; 0 for the base against itself."""
    return 100.0 * (l_base - l_policy) / l_base


def improvement_over_base(cfg: EnvConfig, policy, n_rollouts: int, seed: int,
                          mode: str = "validation", T: int = 100) -> float:
    """Percentage reduction of the mean discounted loss relative to the base
    controller, over shared-seed evaluations. Positive means better than base.

    Returns -inf when any policy rollout diverges.
    """
    base_losses, policy_losses = [], []
    for i in range(n_rollouts):
        xb, ub = evaluation_rollout(cfg, None, mode, seed + i, T)
        base_losses.append(discounted_return(cfg, xb, ub))
        try:
            xp, up = evaluation_rollout(cfg, policy, mode, seed + i, T)
        except RolloutDiverged:
            return float("-inf")
        policy_losses.append(discounted_return(cfg, xp, up))
    return improvement_pct(float(np.mean(base_losses)), float(np.mean(policy_losses)))
