"""Finite-horizon vector-valued signals with lp norms and tail-energy diagnostics."""

from __future__ import annotations

import csv
import math

import numpy as np


class Signal:
    """A finite sequence s_0, ..., s_T of real vectors of equal dimension.

    Immutable value type: the underlying array is copied on construction and
    marked read-only, so instances can be shared across threads freely.
    """

    def __init__(self, data):
        arr = np.array(data, dtype=float)
        if arr.ndim == 1:
            arr = arr[:, None]
        if arr.ndim != 2 or arr.shape[0] == 0:
            raise ValueError("signal needs at least one time step of vectors")
        arr.setflags(write=False)
        self._data = arr

    @property
    def data(self) -> np.ndarray:
        return self._data

    @property
    def dim(self) -> int:
        return self._data.shape[1]

    @property
    def horizon(self) -> int:
        """T, so the signal holds T+1 samples."""
        return self._data.shape[0] - 1

    def __len__(self) -> int:
        return self._data.shape[0]

    def __getitem__(self, t: int) -> np.ndarray:
        return self._data[t]

    def __eq__(self, other) -> bool:
        return isinstance(other, Signal) and np.array_equal(self._data, other._data)

    def __repr__(self) -> str:
        return f"Signal(dim={self.dim}, horizon={self.horizon})"

    @classmethod
    def zeros(cls, horizon: int, dim: int) -> "Signal":
        return cls(np.zeros((horizon + 1, dim)))

    @classmethod
    def impulse(cls, value, horizon: int) -> "Signal":
        """Signal equal to `value` at t=0 and zero afterwards."""
        value = np.atleast_1d(np.asarray(value, dtype=float))
        data = np.zeros((horizon + 1, value.shape[0]))
        data[0] = value
        return cls(data)

    def slice(self, start: int, stop: int) -> "Signal":
        """Sub-signal over time indices [start, stop)."""
        if not (0 <= start < stop <= len(self)):
            raise IndexError(f"slice [{start}, {stop}) outside horizon {self.horizon}")
        return Signal(self._data[start:stop])

    def to_csv(self, path) -> None:
        """One row per step: t, s_0, ..., s_{n-1}, 17 significant digits."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t"] + [f"s_{i}" for i in range(self.dim)])
            for t, row in enumerate(self._data):
                writer.writerow([t] + [f"{v:.17g}" for v in row])

    @classmethod
    def from_csv(cls, path) -> "Signal":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        return cls([[float(v) for v in row[1:]] for row in rows[1:]])


def concat(*signals: Signal) -> Signal:
    dims = {s.dim for s in signals}
    if len(dims) != 1:
        raise ValueError(f"cannot concatenate signals of dimensions {sorted(dims)}")
    return Signal(np.concatenate([s.data for s in signals], axis=0))


def stack(a: Signal, b: Signal) -> Signal:
    """Samplewise concatenation, e.g. the pair signal t -> (x_t, u_t)."""
    if len(a) != len(b):
        raise ValueError("signals must share a horizon to be stacked")
    return Signal(np.concatenate([a.data, b.data], axis=1))


def lp_norm(s: Signal, p) -> float:
    """(sum_t |s_t|^p)^(1/p) with the Euclidean vector norm; sup_t |s_t| for p=inf."""
    if p != math.inf and (p < 1 or int(p) != p):
        raise ValueError(f"p must be a positive integer or inf, got {p}")
    step_norms = np.linalg.norm(s.data, axis=1)
    if p == math.inf:
        return float(step_norms.max())
    if p == 2:
        return float(np.sqrt(np.sum(step_norms**2)))
    return float(np.sum(step_norms ** float(p)) ** (1.0 / p))


def tail_ratio(s: Signal, p, split: int) -> float:
    """Energy fraction lp(s_{t >= split}) / lp(s); 0 for an all-zero signal.

    An empirical proxy for lp membership on a finite horizon: stable responses
    to finitely supported inputs drive the ratio toward zero as the recorded
    horizon grows.
    """
    if not (0 < split <= s.horizon):
        raise ValueError(f"split must lie in (0, {s.horizon}], got {split}")
    full = lp_norm(s, p)
    if full == 0.0:
        return 0.0
    return lp_norm(s.slice(split, len(s)), p) / full
