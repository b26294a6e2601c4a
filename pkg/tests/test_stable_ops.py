import numpy as np
import pytest
from numpy.testing import assert_allclose

from madrl import stable_ops as so
from madrl.signals import Signal, lp_norm, tail_ratio


def scalar_linear_lru(lam=0.5, b=1.0, c=1.0, d=0.0, f=0.0):
    """1-mode, 1-in, 1-out LRU with identity head (purely linear core)."""
    return {
        "nu": np.array([np.log(-np.log(lam))]),
        "theta": np.zeros(1),
        "b_re": np.array([[b]]),
        "b_im": np.zeros((1, 1)),
        "c_re": np.array([[c]]),
        "c_im": np.zeros((1, 1)),
        "d": np.array([[d]]),
        "f": np.array([[f]]),
    }


def test_init_determinism_bitwise():
    a = so.lru_init(np.random.default_rng(123), 6, 3, 2)
    b = so.lru_init(np.random.default_rng(123), 6, 3, 2)
    assert a.keys() == b.keys()
    for k in a:
        assert np.array_equal(a[k], b[k])


def test_init_margin_always_below_one():
    for seed in range(25):
        params = so.lru_init(np.random.default_rng(seed), 8, 4, 3)
        assert so.stability_margin(params) < 1.0


def test_init_degenerate_ring():
    params = so.lru_init(np.random.default_rng(0), 16, 2, 2, r_min=0.7 - 1e-9, r_max=0.7)
    mags = np.exp(-np.exp(params["nu"]))
    assert_allclose(mags, 0.7, atol=1e-8)


def test_init_invalid_ring():
    rng = np.random.default_rng(0)
    for r_min, r_max in ((0.9, 0.4), (-0.1, 0.5), (0.2, 1.0)):
        with pytest.raises(ValueError):
            so.lru_init(rng, 4, 2, 2, r_min=r_min, r_max=r_max)


def test_margin_closed_form():
    params = scalar_linear_lru()
    params["nu"] = np.zeros(1)
    assert_allclose(so.stability_margin(params), np.exp(-1.0), rtol=1e-15)
    params["nu"] = np.array([50.0])
    assert so.stability_margin(params) < 1e-10
    params["nu"] = np.array([-30.0])
    assert 1.0 - 1e-10 < so.stability_margin(params) < 1.0


def test_step_zero_everything():
    params = {k: np.zeros_like(v) for k, v in so.lru_init(
        np.random.default_rng(1), 4, 3, 2).items()}
    state = so.zero_state(params)
    _, y = so.lru_step(params, "", state, np.zeros(3))
    assert_allclose(y, np.zeros(2))


def test_step_pure_feedthrough():
    params = so.lru_init(np.random.default_rng(2), 4, 3, 3)
    for k in ("c_re", "c_im", "head.w0", "head.b0", "head.w1", "head.b1"):
        params[k] = np.zeros_like(params[k])
    params["f"] = np.eye(3)
    v = np.array([0.3, -1.0, 2.0])
    _, y = so.lru_step(params, "", so.zero_state(params), v)
    assert_allclose(y, v)


def test_hand_unrolled_scalar_recursion():
    lam, gamma = 0.5, np.sqrt(0.75)
    params = scalar_linear_lru(lam=lam)
    # oracle: unroll xi_{t+1} = lam xi_t + gamma v_t, y_t = xi_t by hand
    v = Signal.impulse([1.0], 5)
    expected_xi = [0.0, gamma, gamma * lam, gamma * lam**2, gamma * lam**3, gamma * lam**4]
    y = so.run_lru(params, "", v)
    assert_allclose(y.data.ravel(), expected_xi, rtol=1e-12, atol=1e-15)


def test_run_lru_single_step_matches_lru_step():
    params = so.lru_init(np.random.default_rng(3), 5, 2, 2)
    v = np.array([0.5, -0.25])
    _, y_step = so.lru_step(params, "", so.zero_state(params), v)
    y_run = so.run_lru(params, "", Signal([v]))
    assert_allclose(y_run[0], y_step)


def test_run_lru_zero_input_zero_biases():
    params = so.lru_init(np.random.default_rng(4), 6, 3, 2)
    y = so.run_lru(params, "", Signal.zeros(20, 3))
    assert_allclose(y.data, 0.0)


def test_run_lru_bias_drives_constant_response():
    params = so.lru_init(np.random.default_rng(5), 6, 3, 2)
    params["head.b1"] = np.array([0.7, -0.2])
    y = so.run_lru(params, "", Signal.zeros(20, 3))
    assert_allclose(y.data, np.tile([0.7, -0.2], (21, 1)))


def test_state_path_superposition():
    params = so.lru_init(np.random.default_rng(6), 5, 3, 2)
    modes = so.lru_modes(params)
    rng = np.random.default_rng(7)
    v1, v2 = rng.normal(size=(2, 15, 3))

    def states(v_seq):
        state = so.zero_state(params)
        out = []
        for v in v_seq:
            state = so.lru_advance(params, "", state, v, modes)
            out.append(np.concatenate(state))
        return np.array(out)

    lhs = states(v1 + v2)
    rhs = states(v1) + states(v2)
    assert_allclose(lhs, rhs, rtol=1e-10, atol=1e-12)


def test_untrained_tail_decays_with_padding():
    # zero-padded tails: responses of fresh operators must keep decaying
    rng = np.random.default_rng(8)
    for trial in range(50):
        params = so.lru_init(np.random.default_rng(100 + trial), 6, 2, 2)
        data = np.zeros((401, 2))
        data[:10] = rng.normal(size=(10, 2))
        ratios = []
        for T in (100, 200, 400):
            y = so.run_lru(params, "", Signal(data[: T + 1]))
            ratios.append(tail_ratio(y, 2, (3 * T) // 4))
        assert ratios[0] > ratios[1] > ratios[2] or ratios[-1] == 0.0


def test_estimate_gain_identity_and_scaling():
    rng = np.random.default_rng(9)
    probes = [Signal(rng.normal(size=(20, 3))) for _ in range(5)]
    assert_allclose(so.estimate_gain(lambda w: w, probes), 1.0, rtol=1e-15)
    double = lambda w: Signal(2.0 * w.data)
    assert_allclose(so.estimate_gain(double, probes), 2.0, rtol=1e-15)


def test_estimate_gain_rejects_zero_probe():
    with pytest.raises(ValueError):
        so.estimate_gain(lambda w: w, [Signal.zeros(5, 2)])


def test_gain_against_frequency_sweep_oracle():
    lam, b, c, d = 0.6, 1.0, 0.8, 0.3
    params = scalar_linear_lru(lam=lam, b=b, c=c, d=d)
    gamma = np.sqrt(1 - lam**2)
    # oracle: dense sweep of H(e^{iw}) = c*gamma*b*e^{-iw}/(1-lam*e^{-iw}) + d
    omega = np.linspace(0, np.pi, 20001)
    z = np.exp(1j * omega)
    h_inf = np.max(np.abs(c * gamma * b / (z - lam) + d))
    op = lambda w: so.run_lru(params, "", w)
    rng = np.random.default_rng(10)
    probes = so.gain_probes(rng, 1, 400, 30, 10)
    estimate = so.estimate_gain(op, probes, 2)
    assert estimate <= h_inf * (1 + 1e-9)
    assert estimate > 0.5 * h_inf  # probes should not be hopelessly loose


def test_rescale_output_scales_probe_norms_exactly():
    params = so.lru_init(np.random.default_rng(11), 5, 3, 2)
    rng = np.random.default_rng(12)
    probes = [Signal(rng.normal(size=(15, 3))) for _ in range(4)]
    base = [lp_norm(so.run_lru(params, "", w), 2) for w in probes]
    for c in (1.0, 0.5, 0.0):
        scaled = so.rescale_output(params, "", c)
        out = [lp_norm(so.run_lru(scaled, "", w), 2) for w in probes]
        assert_allclose(out, [c * v for v in base], rtol=1e-12, atol=1e-15)


def test_rescale_identity_head():
    params = scalar_linear_lru(lam=0.4, d=0.5, f=0.2)
    w = Signal(np.random.default_rng(13).normal(size=(10, 1)))
    base = so.run_lru(params, "", w)
    half = so.run_lru(so.rescale_output(params, "", 0.5), "", w)
    assert_allclose(half.data, 0.5 * base.data, rtol=1e-12)


def test_rescale_rejects_negative():
    params = scalar_linear_lru()
    with pytest.raises(ValueError):
        so.rescale_output(params, "", -0.5)


def test_identity_head_requires_matching_dims():
    with pytest.raises(ValueError):
        so.lru_init(np.random.default_rng(0), 4, 3, 2, d_hidden=5, mlp_hidden=None)
