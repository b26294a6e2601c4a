"""Deterministic actor-critic training with replay, target networks, and
memory-augmented states for recurrent (LRU-carrying) policies.

Policies with internal state are trained as memoryless maps over an augmented
state: the stored transition carries the raw observation plus the policy's
LRU states and current operator inputs, so one stored row is sufficient to
recompute the action. The recursion parameters themselves (eigenvalues, input
maps) do not enter the one-step action map and therefore receive no policy
gradient; they keep their initialization, which is what guarantees the
stability margin throughout training.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import nets
from .autodiff import ParamVector
from .plant import RolloutDiverged
from .policies import MadPolicy, policy_output, split_features


class TrainingDiverged(RuntimeError):
    pass


class StabilityViolation(AssertionError):
    pass


@dataclass
class DdpgConfig:
    episodes: int = 500
    horizon: int = 100
    warmup: int = 1000
    batch: int = 64
    buffer: int = 100_000
    lr_actor: float = 1e-4
    lr_critic: float = 1e-3
    tau: float = 5e-3
    sigma: float = 0.1
    alpha: float = 0.99
    reward_scale: float = 0.01
    # with rewards = -loss <= 0 the true Q never exceeds 0; capping the
    # bootstrap target there blocks the positive-overestimation spiral
    q_target_max: float | None = 0.0
    actor_weight_decay: float = 1e-4
    input_scales: dict | None = None
    # the corridor objective is an infinite-horizon discounted loss; episode
    # ends are time limits, not terminal states, so the value target keeps
    # bootstrapping through them (masking there corrupts the critic)
    time_limit_bootstrap: bool = True
    optimizer: str = "adam"
    update_every: int = 1
    eval_every: int = 1
    n_eval: int = 4
    eval_seed: int = 9000
    eval_horizon: int | None = None
    checkpoint_every: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if not (0.0 < self.alpha < 1.0):
            raise ValueError("discount must lie in (0, 1)")


class ReplayBuffer:
    """Fixed-capacity FIFO ring of transitions with uniform sampling."""

    def __init__(self, capacity: int, s_dim: int, u_dim: int):
        self.capacity = capacity
        self.s = np.zeros((capacity, s_dim))
        self.u = np.zeros((capacity, u_dim))
        self.r = np.zeros(capacity)
        self.s_next = np.zeros((capacity, s_dim))
        self.done = np.zeros(capacity)
        self._head = 0
        self._size = 0

    def __len__(self):
        return self._size

    def push(self, s, u, r, s_next, done) -> None:
        i = self._head
        self.s[i], self.u[i], self.r[i] = s, u, r
        self.s_next[i], self.done[i] = s_next, float(done)
        self._head = (self._head + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def sample(self, batch: int, rng: np.random.Generator) -> dict:
        idx = rng.integers(0, self._size, size=batch)
        return {"s": self.s[idx], "u": self.u[idx], "r": self.r[idx],
                "s_next": self.s_next[idx], "done": self.done[idx]}


class Adam:
    """Adam with optional decoupled weight decay restricted by a mask."""

    def __init__(self, params: ParamVector, lr: float, beta1=0.9, beta2=0.999,
                 eps=1e-8, weight_decay=0.0, decay_mask=None):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.weight_decay = weight_decay
        self.decay_mask = decay_mask if decay_mask is not None else np.ones(params.size)
        self.m = np.zeros(params.size)
        self.v = np.zeros(params.size)
        self.t = 0

    def step(self, grad_flat: np.ndarray) -> None:
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad_flat
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad_flat**2
        m_hat = self.m / (1 - self.beta1**self.t)
        v_hat = self.v / (1 - self.beta2**self.t)
        self.params.data -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
        if self.weight_decay:
            self.params.data -= self.lr * self.weight_decay * self.decay_mask * self.params.data


class Sgd:
    def __init__(self, params: ParamVector, lr: float):
        self.params = params
        self.lr = lr

    def step(self, grad_flat: np.ndarray) -> None:
        self.params.data -= self.lr * grad_flat


def actor_decay_mask(params: ParamVector) -> np.ndarray:
    """Exclude the recursion parameters (eigenvalues, input maps) from weight
    decay: they receive no policy gradient and should keep their init."""
    mask = np.ones(params.size)
    frozen = ("nu", "theta", "b_re", "b_im")
    for name in params.names():
        if name.split(".")[-1] in frozen:
            view = params.get(name)
            offset = params._index[name][0]
            mask[offset: offset + view.size] = 0.0
    return mask


def make_optimizer(kind: str, params: ParamVector, lr: float,
                   weight_decay: float = 0.0, decay_mask=None):
    if kind == "adam":
        return Adam(params, lr, weight_decay=weight_decay, decay_mask=decay_mask)
    return Sgd(params, lr)


def soft_update(target: ParamVector, source: ParamVector, tau: float) -> None:
    """target <- (1 - tau) * target + tau * source, elementwise."""
    target.data *= 1.0 - tau
    target.data += tau * source.data


def explore(u: np.ndarray, sigma: float, rng: np.random.Generator) -> np.ndarray:
    """Add zero-mean Gaussian exploration noise to the final action."""
    if sigma == 0.0:
        return u
    return u + sigma * rng.standard_normal(u.shape)


def critic_init(rng: np.random.Generator, s_dim: int, u_dim: int,
                hidden=(64, 64)) -> ParamVector:
    sizes = (s_dim + u_dim, *hidden, 1)
    return ParamVector(nets.mlp_init(rng, sizes, "q"))


class InputScale:
    """Fixed elementwise scaling of critic inputs.

    tanh layers saturate on raw corridor magnitudes (state deviations of
    several meters, actions of several newtons), which blinds the critic to
    differences between large actions; dividing by typical magnitudes keeps
    the first layer responsive. Constants, so training stays deterministic.
    """

    def __init__(self, layout, u_dim: int, group_scales: dict | None):
        scales = {"x": 4.0, "xi": 2.0, "wh": 4.0, "a_in": 4.0, "u": 4.0}
        if group_scales:
            scales.update(group_scales)
        s_parts = []
        for name, size in layout:
            group = "xi" if name.startswith("xi") else name
            s_parts.append(np.full(size, scales.get(group, 1.0)))
        self.inv_s = 1.0 / np.concatenate(s_parts)
        self.inv_u = np.full(u_dim, 1.0 / scales["u"])

    @classmethod
    def identity(cls, layout, u_dim: int):
        return cls(layout, u_dim, {k: 1.0 for k in ("x", "xi", "wh", "a_in", "u")})


def critic_value(params, s, u, scale: InputScale | None = None):
    if scale is not None:
        s = s * scale.inv_s
        u = u * scale.inv_u
    return nets.mlp_apply(params, "q", ad.concat([s, u], axis=-1))


def bellman_targets(critic_target: ParamVector, actor_target: ParamVector,
                    policy: MadPolicy, batch: dict, alpha: float,
                    q_target_max: float | None = None,
                    scale: InputScale | None = None) -> np.ndarray:
    """r + alpha * (1 - done) * Q_target(s', mu_target(s')), all in plain numpy.

    An optional ceiling on the target encodes prior knowledge of the return
    sign (rewards that are negated losses can never bootstrap above zero).
    """
    feats = split_features(policy.layout, batch["s_next"])
    u_next = policy_output(actor_target.arrays(), policy.mode, feats, policy.m)
    q_next = critic_value(critic_target.arrays(), batch["s_next"], u_next, scale).ravel()
    targets = batch["r"] + alpha * (1.0 - batch["done"]) * q_next
    if q_target_max is not None:
        targets = np.minimum(targets, q_target_max)
    return targets


def critic_update(critic: ParamVector, critic_target: ParamVector,
                  actor_target: ParamVector, policy: MadPolicy, batch: dict,
                  alpha: float, opt, q_target_max: float | None = None,
                  scale: InputScale | None = None) -> float:
    """One gradient step on the mean squared Bellman residual; returns the
    pre-step loss."""
    targets = bellman_targets(critic_target, actor_target, policy, batch, alpha,
                              q_target_max, scale)[:, None]

    def loss_fn(params):
        q = critic_value(params, batch["s"], batch["u"], scale)
        err = q - targets
        return ad.mean(ad.square(err))

    loss, g = ad.value_and_grad(loss_fn, critic)
    opt.step(g.data)
    return loss


def actor_update(policy: MadPolicy, critic: ParamVector, batch: dict, opt,
                 scale: InputScale | None = None) -> float:
    """Ascend E[Q(s, mu(s))] through the action map; critic parameters fixed.

    Raises StabilityViolation if any LRU left the open unit disk afterwards
    (structurally impossible for finite parameters, so this catches numerical
    blow-ups).
    """
    feats = split_features(policy.layout, batch["s"])
    critic_arrays = critic.arrays()

    def objective(params):
        u = policy_output(params, policy.mode, feats, policy.m)
        return ad.mean(critic_value(critic_arrays, batch["s"], u, scale))

    value, g = ad.value_and_grad(objective, policy.params)
    opt.step(-g.data)
    for name, margin in policy.stability_margins().items():
        if not margin < 1.0:
            raise StabilityViolation(f"{name} operator margin {margin} >= 1 after update")
    return value


def evaluate_policy(env, policy, mode: str, seed: int, T: int, alpha: float) -> float:
    """Discounted loss of one seeded rollout; +inf if the rollout diverges.

    The same seed reproduces the same initial state and disturbances for any
    policy, so comparisons against the base controller are paired.
    """
    rng = np.random.default_rng([int(seed), 0x5EED])
    x0 = env.sample_init(mode, rng)
    w = env.sample_disturbance(T, rng)
    obs = env.reset(x0)
    if policy is not None:
        policy.reset(obs)
    total = 0.0
    for t in range(T + 1):
        u = np.zeros(env.m) if policy is None else policy.step(obs, t)
        w_next = w[t + 1] if t < T else np.zeros(env.n)
        obs, loss = env.step(u, w_next)
        total += alpha**t * loss
        if not np.all(np.isfinite(obs)):
            return float("inf")
    return total


@dataclass
class TrainResult:
    policy: MadPolicy
    critic: ParamVector
    best_params: ParamVector
    best_improvement: float
    metrics: list = field(default_factory=list)
    margin_checks: int = 0
    margin_violations: int = 0

    def best_policy(self) -> MadPolicy:
        return MadPolicy(self.policy.mode, self.best_params.copy(),
                         self.policy.n, self.policy.m, self.policy.nominal)


def write_metrics_csv(path, rows) -> None:
    """Deterministic metrics table; identical runs produce identical bytes."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["episode", "return", "best_so_far", "improvement_pct"])
        for row in rows:
            writer.writerow([row["episode"], repr(row["return"]),
                             repr(row["best_so_far"]), repr(row["improvement_pct"])])


def write_timing_csv(path, rows) -> None:
    """Wall-clock per episode; kept out of metrics.csv, which must be
    bit-reproducible across runs."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["episode", "wall_ms"])
        for row in rows:
            writer.writerow([row["episode"], f"{row['wall_ms']:.3f}"])


def train(env, policy: MadPolicy, cfg: DdpgConfig, out_dir=None,
          checkpoint_hook=None) -> TrainResult:
    """Episode loop: roll out with exploration, store augmented transitions,
    per-step critic/actor/soft updates after warmup, per-episode validation.

    Deterministic given (env, policy parameters, cfg) on one thread.
    """
    T = cfg.horizon
    eval_T = cfg.eval_horizon if cfg.eval_horizon is not None else T
    init_rng = np.random.default_rng([cfg.seed, 1])
    episode_rng = np.random.default_rng([cfg.seed, 2])
    noise_rng = np.random.default_rng([cfg.seed, 3])
    sample_rng = np.random.default_rng([cfg.seed, 4])

    critic = critic_init(init_rng, policy.feature_dim, policy.m)
    critic_target = critic.copy()
    actor_target = policy.params.copy()
    critic_opt = make_optimizer(cfg.optimizer, critic, cfg.lr_critic)
    actor_opt = make_optimizer(cfg.optimizer, policy.params, cfg.lr_actor,
                               weight_decay=cfg.actor_weight_decay,
                               decay_mask=actor_decay_mask(policy.params))
    buffer = ReplayBuffer(cfg.buffer, policy.feature_dim, policy.m)
    scale = InputScale(policy.layout, policy.m, cfg.input_scales)

    base_losses = [evaluate_policy(env, None, "validation", cfg.eval_seed + i, eval_T, cfg.alpha)
                   for i in range(cfg.n_eval)]
    base_mean = float(np.mean(base_losses))

    result = TrainResult(policy=policy, critic=critic,
                         best_params=policy.params.copy(),
                         best_improvement=float("-inf"))
    timing = []
    total_steps = 0
    improvement = float("nan")

    for ep in range(cfg.episodes):
        t_start = time.perf_counter()
        x0 = env.sample_init("train", episode_rng)
        w = env.sample_disturbance(T, episode_rng)
        obs = env.reset(x0)
        policy.reset(obs)
        pending = None  # (s, u, r) waiting for the next augmented state
        ep_return = 0.0
        for t in range(T):
            u = policy.step(obs, t)
            s_t = policy.last_features
            if pending is not None:
                buffer.push(*pending, s_t, 0.0)
            u_app = explore(u, cfg.sigma, noise_rng)
            policy.set_applied(u_app)
            obs, loss = env.step(u_app, w[t + 1])
            if not (np.isfinite(loss) and np.all(np.isfinite(obs))):
                raise TrainingDiverged(f"non-finite rollout at episode {ep}, step {t}")
            ep_return += -(cfg.alpha**t) * loss
            pending = (s_t, u_app, -cfg.reward_scale * loss)
            total_steps += 1
            if total_steps >= cfg.warmup and len(buffer) >= cfg.batch \
                    and total_steps % cfg.update_every == 0:
                batch = buffer.sample(cfg.batch, sample_rng)
                c_loss = critic_update(critic, critic_target, actor_target,
                                       policy, batch, cfg.alpha, critic_opt,
                                       cfg.q_target_max, scale)
                if not np.isfinite(c_loss):
                    raise TrainingDiverged(f"non-finite critic loss at episode {ep}")
                actor_update(policy, critic, batch, actor_opt, scale)
                result.margin_checks += 1
                soft_update(critic_target, critic, cfg.tau)
                soft_update(actor_target, policy.params, cfg.tau)
        # episode-end transition: one more policy step materializes s_T
        policy.step(obs, T)
        done = 0.0 if cfg.time_limit_bootstrap else 1.0
        buffer.push(*pending, policy.last_features, done)

        if cfg.eval_every and ep % cfg.eval_every == 0:
            losses = [evaluate_policy(env, policy, "validation", cfg.eval_seed + i,
                                      eval_T, cfg.alpha) for i in range(cfg.n_eval)]
            improvement = 100.0 * (base_mean - float(np.mean(losses))) / base_mean
            if improvement > result.best_improvement:
                result.best_improvement = improvement
                result.best_params = policy.params.copy()
        result.metrics.append({
            "episode": ep,
            "return": ep_return,
            "best_so_far": result.best_improvement,
            "improvement_pct": improvement,
        })
        timing.append({"episode": ep,
                       "wall_ms": 1000.0 * (time.perf_counter() - t_start)})
        if checkpoint_hook and cfg.checkpoint_every and (ep + 1) % cfg.checkpoint_every == 0:
            checkpoint_hook(ep, policy)

    if out_dir is not None:
        from pathlib import Path
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_metrics_csv(out / "metrics.csv", result.metrics)
        write_timing_csv(out / "timing.csv", timing)
    return result
