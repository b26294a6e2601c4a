import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from madrl import corridor, ddpg, plant
from madrl.corridor import CorridorEnv, EnvConfig, Obstacle
from madrl.signals import Signal


@pytest.fixture(scope="module")
def cfg():
    return EnvConfig()


def reference_stage_loss(cfg, x, u):
    """Independent plain-python evaluation of the three loss terms."""
    xbar = cfg.equilibrium()
    l = 0.0
    for i in range(8):
        l += cfg.s_state[i] * (x[i] - xbar[i]) ** 2
    for j in range(4):
        l += cfg.s_input[j] * u[j] ** 2
    p = [x[0:2], x[4:6]]
    for i in range(2):
        for j in range(2):
            if i == j:
                continue
            d2 = float(np.sum((p[i] - p[j]) ** 2))
            if d2 < cfg.d_min**2:
                l += cfg.s_ca / (d2 + cfg.eps)
    for ob in cfg.obstacles:
        for i in range(2):
            dp = p[i] - ob.mu
            l += cfg.s_obs * math.exp(-0.5 * float(dp @ np.linalg.inv(ob.cov) @ dp))
    return l


def test_stage_loss_matches_reference_oracle(cfg):
    rng = np.random.default_rng(0)
    for _ in range(50):
        x = cfg.equilibrium() + rng.normal(scale=1.5, size=8)
        u = rng.normal(size=4)
        assert_allclose(corridor.stage_loss(cfg, x, u),
                        reference_stage_loss(cfg, x, u), rtol=1e-12)


def test_loss_at_targets_is_negligible(cfg):
    x = cfg.equilibrium()
    assert corridor.stage_loss(cfg, x, np.zeros(4)) < 1e-6


def test_collision_at_zero_distance(cfg):
    x = cfg.equilibrium().copy()
    x[0:2] = [0.0, 1.5]
    x[4:6] = [0.0, 1.5]
    expected_ca = cfg.s_ca * 2.0 / cfg.eps
    loss = corridor.stage_loss(cfg, x, np.zeros(4))
    assert loss == pytest.approx(expected_ca, rel=1e-3)


def test_collision_off_when_separated(cfg):
    x = cfg.equilibrium().copy()
    x[0:2] = [-5.0, 5.0]
    x[4:6] = [5.0, 5.0]
    # far from obstacles and each other: only the quadratic term remains
    ref = reference_stage_loss(cfg, x, np.zeros(4))
    dx = x - cfg.equilibrium()
    assert ref == pytest.approx(float(dx**2 @ cfg.s_state), rel=1e-9)


def test_vehicle_at_obstacle_mean(cfg):
    x = cfg.equilibrium().copy()
    ob = cfg.obstacles[0]
    x[0:2] = ob.mu
    x[4:6] = [5.0, 5.0]
    base = reference_stage_loss(cfg, x, np.zeros(4)) - cfg.s_obs * 1.0
    assert corridor.stage_loss(cfg, x, np.zeros(4)) == pytest.approx(
        base + cfg.s_obs, rel=1e-12)


def test_stage_loss_nonnegative(cfg):
    rng = np.random.default_rng(1)
    for _ in range(200):
        x = rng.normal(scale=3.0, size=8)
        u = rng.normal(scale=3.0, size=4)
        assert corridor.stage_loss(cfg, x, u) >= 0.0


def test_obstacle_covariance_must_be_pd():
    with pytest.raises(ValueError):
        Obstacle(np.zeros(2), np.array([[1.0, 2.0], [2.0, 1.0]]))


def test_config_validation():
    with pytest.raises(ValueError):
        EnvConfig(alpha=1.0)
    with pytest.raises(ValueError):
        EnvConfig(s_ca=0.0)
    with pytest.raises(ValueError):
        EnvConfig(s_state=[-1.0] * 8)


def test_discounted_return_zero_loss():
    cfg0 = EnvConfig(obstacles=[])
    x = Signal(np.tile(cfg0.equilibrium(), (11, 1)))
    u = Signal.zeros(10, 4)
    assert corridor.discounted_return(cfg0, x, u) == 0.0


def test_discounted_return_constant_loss_geometric_oracle():
    cfg0 = EnvConfig(obstacles=[], alpha=0.5)
    x = cfg0.equilibrium().copy()
    x[0] += 1.0  # constant unit squared deviation
    T = 12
    xs = Signal(np.tile(x, (T + 1, 1)))
    us = Signal.zeros(T, 4)
    expected = sum(0.5**t * 1.0 for t in range(T + 1))
    assert_allclose(corridor.discounted_return(cfg0, xs, us), expected, rtol=1e-12)


def test_discounted_return_single_step(cfg):
    rng = np.random.default_rng(2)
    x = Signal([cfg.equilibrium() + rng.normal(size=8)])
    u = Signal([rng.normal(size=4)])
    assert_allclose(corridor.discounted_return(cfg, x, u, T_eval=0),
                    corridor.stage_loss(cfg, x[0], u[0]), rtol=1e-12)


def test_return_monotone_under_pointwise_domination(cfg):
    rng = np.random.default_rng(3)
    xs = Signal(cfg.equilibrium() + rng.normal(scale=0.5, size=(21, 8)))
    u1 = Signal(rng.normal(scale=0.5, size=(21, 4)))
    u2 = Signal(2.0 * u1.data)  # dominates the effort term pointwise
    assert corridor.discounted_return(cfg, xs, u1) <= corridor.discounted_return(cfg, xs, u2)


def test_truncation_bound():
    assert_allclose(corridor.truncation_bound(0.5, 8.0, 3), 0.5**4 * 8.0 / 0.5)


def test_sample_init_zero_width_deterministic():
    cfg0 = EnvConfig(init_half_width=0.0)
    a = corridor.sample_init(cfg0, "train", np.random.default_rng(0))
    b = corridor.sample_init(cfg0, "train", np.random.default_rng(99))
    assert_allclose(a, b)
    assert_allclose(a[0:2], cfg0.init_centers[0])
    assert_allclose(a[2:4], 0.0)


def test_sample_init_containment(cfg):
    rng = np.random.default_rng(4)
    for _ in range(10_000):
        x0 = corridor.sample_init(cfg, "train", rng)
        for agent, sl in enumerate((slice(0, 2), slice(4, 6))):
            assert np.all(np.abs(x0[sl] - cfg.init_centers[agent]) <= cfg.init_half_width)


def test_generalization_is_agent_swap(cfg):
    train = corridor.sample_init(cfg, "train", np.random.default_rng(7))
    gen = corridor.sample_init(cfg, "generalization", np.random.default_rng(7))
    assert_allclose(gen[0:2], train[4:6])
    assert_allclose(gen[4:6], train[0:2])


def test_sample_init_unknown_mode(cfg):
    with pytest.raises(ValueError):
        corridor.sample_init(cfg, "test", np.random.default_rng(0))


def test_disturbance_clipping(cfg):
    w = corridor.sample_disturbance(cfg, 500, np.random.default_rng(5))
    bound = cfg.w_clip_sigmas * cfg.sigma_w
    assert np.max(np.abs(w.data[1:])) <= bound
    assert_allclose(w[0], np.zeros(8))


def test_improvement_formula():
    assert corridor.improvement_pct(10.0, 5.0) == 50.0
    assert corridor.improvement_pct(10.0, 10.0) == 0.0


def test_improvement_of_base_is_exactly_zero(cfg):
    assert corridor.improvement_over_base(cfg, None, 3, seed=0) == 0.0


def test_env_step_reports_loss_before_advancing(cfg):
    env = CorridorEnv(cfg)
    rng = np.random.default_rng(6)
    x0 = corridor.sample_init(cfg, "train", rng)
    obs = env.reset(x0)
    assert_allclose(obs, x0 - cfg.equilibrium())
    u = rng.normal(size=4)
    w_t = rng.normal(scale=0.01, size=8)
    obs_next, loss = env.step(u, w_t)
    assert loss == pytest.approx(corridor.stage_loss(cfg, x0, u), rel=1e-12)
    assert_allclose(obs_next + cfg.equilibrium(),
                    plant.step(cfg.corridor, x0, u, w_t))


def test_trainer_eval_matches_rollout_return(cfg):
    # the trainer's streaming evaluation and the signal-based return must agree
    env = CorridorEnv(cfg)
    seed, T = 123, 40
    streamed = ddpg.evaluate_policy(env, None, "validation", seed, T, cfg.alpha)
    x, u = corridor.evaluation_rollout(cfg, None, "validation", seed, T)
    assert_allclose(streamed, corridor.discounted_return(cfg, x, u), rtol=1e-12)


def test_nominal_model_kinds(cfg):
    assert cfg.nominal_model("none") is None
    exact = cfg.nominal_model("exact")
    mismatched = cfg.nominal_model("mismatched")
    x = np.zeros(8) + 0.3
    u = np.ones(4)
    assert not np.allclose(exact.step_fn(x, u), mismatched.step_fn(x, u))
    with pytest.raises(ValueError):
        cfg.nominal_model("weird")
