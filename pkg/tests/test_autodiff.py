import numpy as np
import pytest
from numpy.testing import assert_allclose

from madrl import autodiff as ad
from madrl import nets
from madrl.autodiff import ParamVector, Tensor


def test_textbook_quadratic():
    pv = ParamVector({"theta": np.array([3.0])})
    g = ad.grad(lambda p: ad.total(ad.square(p["theta"])), pv)
    assert_allclose(g.data, [6.0])


def test_constant_function_zero_gradient():
    pv = ParamVector({"x": np.arange(4.0)})
    g = ad.grad(lambda p: ad.total(p["x"]) * 0.0, pv)
    assert_allclose(g.data, np.zeros(4))


def test_value_and_grad_agree_with_plain_eval():
    pv = ParamVector({"x": np.array([1.0, -2.0])})
    fn = lambda p: ad.total(ad.square(p["x"]))
    value, _ = ad.value_and_grad(fn, pv)
    assert value == 5.0


def test_linear_function_fd_is_near_exact():
    pv = ParamVector({"w": np.array([1.5, -0.5, 2.0])})
    c = np.array([2.0, 3.0, -1.0])
    report = ad.fd_check(lambda p: ad.total(p["w"] * c), pv)
    assert report.ok
    assert report.max_rel_err < 1e-8


def test_tanh_network_fd():
    rng = np.random.default_rng(0)
    pv = ParamVector(nets.mlp_init(rng, (4, 8, 2), "net"))
    x = rng.normal(size=(6, 4))
    fn = lambda p: ad.mean(ad.square(nets.mlp_apply(p, "net", x)))
    report = ad.fd_check(fn, pv, h=1e-5, tol=1e-4)
    assert report.ok, report.failures[:3]


def test_norm_at_zero_subgradient_and_flag():
    pv = ParamVector({"v": np.zeros(3)})
    fn = lambda p: ad.total(ad.norm_rows(p["v"]))
    with pytest.warns(RuntimeWarning, match="norm at zero"):
        g = ad.grad(fn, pv)
    assert_allclose(g.data, np.zeros(3))
    # fd_check converts the warning into a report flag instead of re-emitting
    report = ad.fd_check(fn, pv)
    assert report.flagged_zero_norm


def test_norm_rows_gradient_away_from_zero():
    rng = np.random.default_rng(1)
    pv = ParamVector({"v": rng.normal(size=(5, 3))})
    report = ad.fd_check(lambda p: ad.total(ad.norm_rows(p["v"])), pv)
    assert report.ok


@pytest.mark.parametrize("shape_a,shape_b", [((3,), (3, 4)), ((5, 3), (3, 2))])
def test_matmul_fd(shape_a, shape_b):
    rng = np.random.default_rng(2)
    pv = ParamVector({"a": rng.normal(size=shape_a), "b": rng.normal(size=shape_b)})
    fn = lambda p: ad.total(ad.square(p["a"] @ p["b"]))
    assert ad.fd_check(fn, pv).ok


def test_broadcast_mul_backward():
    rng = np.random.default_rng(3)
    pv = ParamVector({"mag": rng.normal(size=(4, 1)), "d": rng.normal(size=(4, 3))})
    fn = lambda p: ad.total(ad.square(p["mag"] * p["d"]))
    assert ad.fd_check(fn, pv).ok


def test_concat_backward():
    rng = np.random.default_rng(4)
    pv = ParamVector({"a": rng.normal(size=(2, 3)), "b": rng.normal(size=(2, 2))})
    const = rng.normal(size=(2, 4))
    fn = lambda p: ad.total(ad.square(ad.concat([p["a"], const, p["b"]], axis=-1)))
    assert ad.fd_check(fn, pv).ok


def test_trig_and_exp_chain_fd():
    pv = ParamVector({"nu": np.array([0.3, -1.2]), "th": np.array([0.7, 2.0])})

    def fn(p):
        mag = ad.exp(-ad.exp(p["nu"]))
        return ad.total(ad.square(mag * ad.cos(p["th"]))) \
            + ad.total(ad.square(ad.sqrt(1.0 - mag * mag) * ad.sin(p["th"])))

    assert ad.fd_check(fn, pv).ok


def test_numpy_path_matches_tensor_path():
    # the same forward code must produce identical values on arrays and Tensors
    rng = np.random.default_rng(5)
    arrays = nets.mlp_init(rng, (3, 6, 2), "f")
    x = rng.normal(size=(4, 3))
    raw = nets.mlp_apply(arrays, "f", x)
    taped = nets.mlp_apply({k: Tensor(v) for k, v in arrays.items()}, "f", x)
    assert_allclose(raw, taped.value, rtol=0, atol=0)


def test_ndarray_op_tensor_dispatch():
    t = Tensor(np.array([1.0, 2.0]))
    out = np.array([3.0, 4.0]) * t + np.array([1.0, 1.0])
    assert isinstance(out, Tensor)
    assert_allclose(out.value, [4.0, 9.0])


def test_shared_subgraph_accumulates():
    pv = ParamVector({"x": np.array([2.0])})
    # q = (x + 1) * (x - 3): dq/dx = 2x - 2 = 2
    fn = lambda p: ad.total((p["x"] + 1.0) * (p["x"] - 3.0))
    assert_allclose(ad.grad(fn, pv).data, [2.0])


def test_param_vector_views_share_storage():
    pv = ParamVector({"a": np.zeros((2, 2)), "b": np.ones(3)})
    pv.data[:] = np.arange(7.0)
    assert_allclose(pv.get("a"), [[0, 1], [2, 3]])
    assert_allclose(pv.get("b"), [4, 5, 6])
    pv.get("a")[0, 0] = 99.0
    assert pv.data[0] == 99.0


def test_param_vector_index_covers_exactly():
    pv = ParamVector({"a": np.zeros((2, 3)), "b": np.zeros(4)})
    assert pv.size == 10
    assert pv.coord_name(0) == ("a", 0)
    assert pv.coord_name(6) == ("b", 0)
    with pytest.raises(IndexError):
        pv.coord_name(10)


def test_grad_requires_tensor_output():
    pv = ParamVector({"x": np.ones(2)})
    with pytest.raises(TypeError):
        ad.grad(lambda p: 3.0, pv)
