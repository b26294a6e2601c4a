"""Magnitude-and-direction policies and their ablations.

One per-step action interface covers five modes:

* ``MAD``: u_t = |M(w_hat)_t + a(x0)_t| * D(x_t), magnitude from two stable
  LRU operators, direction from a tanh-squashed MLP with Euclidean norm <= 1.
* ``MA``: the self-directed decomposition, u_t = M(w_hat)_t + a(x0)_t. The
  direction is the magnitude vector's own unit vector (zero branch when the
  vector vanishes), so the polar form collapses to the vector itself.
* ``AD``: u_t = |a(x0)_t| * D(x_t); no disturbance reconstruction, so it runs
  model-free.
* ``DF``: u_t = M(w_hat)_t, pure disturbance feedback.
* ``MLP``: u_t = NN(x_t), a plain memoryless baseline with no stability
  structure and unbounded outputs.

Modes that reconstruct disturbances (MAD, MA, DF) require a nominal model at
construction time; without one only AD and MLP are available.

Policies carry mutable per-episode state (LRU states, the previous state and
applied input): use one instance per concurrent episode and share parameter
snapshots read-only.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from . import nets, stable_ops
from .autodiff import ParamVector
from .plant import NominalModel, reconstruct_disturbance

MODES = ("MAD", "MA", "AD", "DF", "MLP")
MODEL_BASED_MODES = ("MAD", "MA", "DF")


def _has_magnitude(mode):
    return mode in ("MAD", "MA", "DF")


def _has_feedforward(mode):
    return mode in ("MAD", "MA", "AD")


def _has_direction(mode):
    return mode in ("MAD", "AD")


def direction(params, x, m_dim: int):
    """Unit-ball direction tanh(NN(x)) / sqrt(m): Euclidean norm <= 1 always."""
    return ad.tanh(nets.mlp_apply(params, "dir", x)) * (1.0 / np.sqrt(m_dim))


def policy_output(params, mode: str, feats: dict, m_dim: int, with_parts: bool = False):
    """Action for one step, given parameters and the step's input features.

    Runs on plain arrays (single step) or Tensors (batched, differentiable).
    `feats` holds x plus, per mode, the LRU states and inputs (w_hat, a_in).
    """
    if mode == "MLP":
        u = nets.mlp_apply(params, "pi", feats["x"])
        return (u, None) if with_parts else u
    terms = []
    if _has_magnitude(mode):
        terms.append(stable_ops.lru_output(
            params, "m.", feats["xi1_re"], feats["xi1_im"], feats["wh"]))
    if _has_feedforward(mode) and "a.nu" in params:
        terms.append(stable_ops.lru_output(
            params, "a.", feats["xi2_re"], feats["xi2_im"], feats["a_in"]))
    vec = terms[0]
    for extra in terms[1:]:
        vec = vec + extra
    if mode in ("MA", "DF"):
        u = vec
    else:
        u = ad.norm_rows(vec) * direction(params, feats["x"], m_dim)
    return (u, vec) if with_parts else u


def feature_layout(mode: str, n: int, n_xi: int, has_feedforward_params: bool = True):
    """Ordered (name, size) fields of the augmented step features.

    This is also the augmented-state layout stored by the trainer: the raw
    state plus everything the action recomputation needs (LRU states, the
    reconstructed disturbance, and the feed-forward impulse input, which is
    nonzero only at t=0).
    """
    fields = [("x", n)]
    if _has_magnitude(mode):
        fields += [("xi1_re", n_xi), ("xi1_im", n_xi), ("wh", n)]
    if _has_feedforward(mode) and has_feedforward_params:
        fields += [("xi2_re", n_xi), ("xi2_im", n_xi), ("a_in", n)]
    return fields


def split_features(layout, s):
    """Slice a (batch, feature_dim) matrix back into named feature blocks."""
    feats, lo = {}, 0
    for name, size in layout:
        feats[name] = s[:, lo:lo + size] if s.ndim == 2 else s[lo:lo + size]
        lo += size
    return feats


def init_policy_params(rng: np.random.Generator, mode: str, n: int, m: int,
                       n_xi: int = 8, d_hidden: int = 16, mlp_hidden: int = 16,
                       r_min: float = 0.4, r_max: float = 0.9,
                       direction_hidden: int = 16, baseline_hidden: int = 32,
                       output_scale: float = 0.3) -> ParamVector:
    """Fresh parameters for a given mode; deterministic per rng state."""
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")
    arrays = {}
    if _has_magnitude(mode):
        arrays.update(stable_ops.lru_init(
            rng, n_xi, n, m, d_hidden, mlp_hidden, r_min, r_max,
            prefix="m.", output_scale=output_scale))
    if _has_feedforward(mode):
        arrays.update(stable_ops.lru_init(
            rng, n_xi, n, m, d_hidden, mlp_hidden, r_min, r_max,
            prefix="a.", output_scale=output_scale))
    if _has_direction(mode):
        arrays.update(nets.mlp_init(rng, (n, direction_hidden, m), "dir"))
    if mode == "MLP":
        arrays.update(nets.mlp_init(rng, (n, baseline_hidden, m), "pi"))
    return ParamVector(arrays)


class MadPolicy:
    """Stateful per-episode wrapper around :func:`policy_output`."""

    def __init__(self, mode: str, params: ParamVector, n: int, m: int,
                 nominal: NominalModel | None = None):
        if mode not in MODES:
            raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")
        if mode in MODEL_BASED_MODES and nominal is None:
            raise ValueError(
                f"mode {mode!r} reconstructs disturbances and needs a nominal "
                "model; without one only AD and MLP are available")
        self.mode = mode
        self.params = params
        self.n = n
        self.m = m
        self.nominal = nominal
        self.n_xi = params.get("m.nu").shape[0] if "m.nu" in params.names() else (
            params.get("a.nu").shape[0] if "a.nu" in params.names() else 0)
        self.layout = feature_layout(mode, n, self.n_xi, "a.nu" in params.names())
        self.feature_dim = sum(size for _, size in self.layout)
        self._arrays = params.arrays()
        self.last_features = None
        self.reset(np.zeros(n))

    @property
    def param_count(self) -> int:
        return self.params.size

    def stability_margins(self) -> dict:
        out = {}
        for prefix in ("m.", "a."):
            if f"{prefix}nu" in self._arrays:
                out[prefix.rstrip(".")] = stable_ops.stability_margin(self._arrays, prefix)
        return out

    def reset(self, x0) -> None:
        """Start an episode: clear LRU states, store x0, prime the impulse."""
        self._x0 = np.array(x0, dtype=float)
        self._xi1 = stable_ops.zero_state(self._arrays, "m.") if "m.nu" in self._arrays else None
        self._xi2 = stable_ops.zero_state(self._arrays, "a.") if "a.nu" in self._arrays else None
        self._x_prev = None
        self._u_prev = None
        self._t = 0
        self.last_features = None

    def set_applied(self, u) -> None:
        """Record the input actually sent to the plant (e.g. after exploration
        noise) so the next disturbance reconstruction uses it."""
        self._u_prev = np.asarray(u, dtype=float)

    def step(self, x, t: int):
        """Action at time t; advances the internal recursions."""
        if t != self._t:
            raise ValueError(f"expected step t={self._t}, got {t}; call reset() between episodes")
        x = np.asarray(x, dtype=float)
        feats = {"x": x}
        if _has_magnitude(self.mode):
            if t == 0:
                wh = x.copy()  # the initial condition plays the first disturbance
            else:
                wh = reconstruct_disturbance(self.nominal, x, self._x_prev, self._u_prev)
            feats.update(wh=wh, xi1_re=self._xi1[0], xi1_im=self._xi1[1])
        if self._xi2 is not None:
            a_in = self._x0 if t == 0 else np.zeros(self.n)
            feats.update(a_in=a_in, xi2_re=self._xi2[0], xi2_im=self._xi2[1])
        u, vec = policy_output(self._arrays, self.mode, feats, self.m, with_parts=True)
        if vec is not None:
            # defining bound of the class: |u| never exceeds the magnitude term
            assert np.linalg.norm(u) <= np.linalg.norm(vec) + 1e-9
        self.last_features = np.concatenate([feats[name] for name, _ in self.layout])
        if self._xi1 is not None:
            self._xi1 = stable_ops.lru_advance(self._arrays, "m.", self._xi1, feats["wh"])
        if self._xi2 is not None:
            self._xi2 = stable_ops.lru_advance(self._arrays, "a.", self._xi2, feats["a_in"])
        self._x_prev = x
        self._u_prev = u
        self._t += 1
        return u


def make_policy(mode: str, n: int, m: int, rng: np.random.Generator,
                nominal: NominalModel | None = None, **init_kwargs) -> MadPolicy:
    params = init_policy_params(rng, mode, n, m, **init_kwargs)
    return MadPolicy(mode, params, n, m, nominal)
