"""Uniform space-time grids and fields living on them.

Conventions shared by every module: the spatial box is [-L, L]^d sampled
inclusively with n points per axis (h = 2L/(n-1)); fields extend beyond the
box by their edge value; derivatives are centered finite differences
(4th-order in the interior by default, one-sided at the boundary).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DomainError


@dataclass(frozen=True)
class SpatialGrid:
    L: float
    n: int
    d: int = 1

    def __post_init__(self):
        if self.L <= 0 or self.n < 4 or self.d < 1:
            raise DomainError(f"bad grid: L={self.L}, n={self.n}, d={self.d}")

    @property
    def h(self) -> float:
        return 2.0 * self.L / (self.n - 1)

    @property
    def axis(self) -> np.ndarray:
        return np.linspace(-self.L, self.L, self.n)

    def meshgrid(self):
        return np.meshgrid(*([self.axis] * self.d), indexing="ij")

    def points(self) -> np.ndarray:
        """All grid points as an (n^d, d) array in C order."""
        mesh = self.meshgrid()
        return np.stack([m.ravel() for m in mesh], axis=-1)

    @property
    def shape(self):
        return (self.n,) * self.d


def _shift(a: np.ndarray, k: int, axis: int) -> np.ndarray:
    """a shifted by k cells along axis with edge-value extension."""
    idx = np.clip(np.arange(a.shape[axis]) + k, 0, a.shape[axis] - 1)
    return np.take(a, idx, axis=axis)


def derivative(values: np.ndarray, h: float, axis: int, order: int = 4) -> np.ndarray:
    """First derivative along one axis; boundary rows fall back to one-sided."""
    n = values.shape[axis]
    if order == 4 and n >= 7:
        out = (-_shift(values, 2, axis) + 8.0 * _shift(values, 1, axis)
               - 8.0 * _shift(values, -1, axis) + _shift(values, -2, axis)) / (12.0 * h)
        # near-boundary: 2nd-order centered, then one-sided at the edge
        ctr = (_shift(values, 1, axis) - _shift(values, -1, axis)) / (2.0 * h)
        for rows in ([0, 1], [n - 2, n - 1]):
            sl = [slice(None)] * values.ndim
            sl[axis] = rows
            out[tuple(sl)] = ctr[tuple(sl)]
    else:
        out = (_shift(values, 1, axis) - _shift(values, -1, axis)) / (2.0 * h)
    _one_sided_edges(values, out, h, axis)
    return out


def _one_sided_edges(values, out, h, axis):
    n = values.shape[axis]
    first = [slice(None)] * values.ndim
    last = [slice(None)] * values.ndim
    first[axis] = 0
    last[axis] = n - 1
    t0 = np.take(values, [0, 1, 2], axis=axis)
    t1 = np.take(values, [n - 3, n - 2, n - 1], axis=axis)
    i = [slice(None)] * values.ndim
    i[axis] = 0
    j = [slice(None)] * values.ndim
    j[axis] = 1
    k = [slice(None)] * values.ndim
    k[axis] = 2
    out[tuple(first)] = (-3.0 * t0[tuple(i)] + 4.0 * t0[tuple(j)] - t0[tuple(k)]) / (2.0 * h)
    out[tuple(last)] = (3.0 * t1[tuple(k)] - 4.0 * t1[tuple(j)] + t1[tuple(i)]) / (2.0 * h)


def second_derivative(values: np.ndarray, h: float, axis: int, order: int = 4) -> np.ndarray:
    n = values.shape[axis]
    if order == 4 and n >= 7:
        out = (-_shift(values, 2, axis) + 16.0 * _shift(values, 1, axis)
               - 30.0 * values + 16.0 * _shift(values, -1, axis)
               - _shift(values, -2, axis)) / (12.0 * h * h)
        ctr = (_shift(values, 1, axis) - 2.0 * values + _shift(values, -1, axis)) / (h * h)
        for rows in ([0, 1], [n - 2, n - 1]):
            sl = [slice(None)] * values.ndim
            sl[axis] = rows
            out[tuple(sl)] = ctr[tuple(sl)]
    else:
        out = (_shift(values, 1, axis) - 2.0 * values + _shift(values, -1, axis)) / (h * h)
    return out


def laplacian(values: np.ndarray, h: float, d: int, order: int = 2) -> np.ndarray:
    out = second_derivative(values, h, 0, order)
    for ax in range(1, d):
        out = out + second_derivative(values, h, ax, order)
    return out


def interp_spatial(values: np.ndarray, grid: SpatialGrid, X: np.ndarray) -> np.ndarray:
    """Multilinear interpolation of a gridded field at arbitrary points.

    values has shape (*grid.shape, *trailing); X is (N, d) or (d,).  Points
    outside the box clamp to the edge (constant extension).  Returns
    (N, *trailing).
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    d = grid.d
    u = (X + grid.L) / grid.h
    u = np.clip(u, 0.0, grid.n - 1.0)
    i0 = np.minimum(u.astype(int), grid.n - 2)
    w = u - i0
    trailing = values.shape[d:]
    out = np.zeros((X.shape[0],) + trailing, dtype=values.dtype)
    for corner in range(1 << d):
        idx = []
        weight = np.ones(X.shape[0])
        for ax in range(d):
            bit = (corner >> ax) & 1
            idx.append(i0[:, ax] + bit)
            weight = weight * (w[:, ax] if bit else 1.0 - w[:, ax])
        vals = values[tuple(idx)]
        out += weight.reshape((-1,) + (1,) * len(trailing)) * vals
    return out


@dataclass
class GridFunction:
    """A scalar or vector field sampled on a uniform space-time grid.

    values is indexed (time, *spatial) for scalars and (time, *spatial, m)
    for m-component vectors.  Derivative accessors return stacked arrays with
    the derivative axis last.
    """

    grid: SpatialGrid
    times: np.ndarray
    values: np.ndarray
    vector: bool = False
    deriv_order: int = 4
    _grad: Optional[np.ndarray] = field(default=None, repr=False)
    _hess: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        expected = 1 + self.grid.d + (1 if self.vector else 0)
        if self.values.ndim != expected:
            raise DomainError(
                f"values ndim {self.values.ndim} does not match grid (expected {expected})")
        if self.times.size >= 2:
            dts = np.diff(self.times)
            if np.any(dts <= 0) or not np.allclose(dts, dts[0], rtol=1e-10):
                raise DomainError("time grid must be uniform and increasing")

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0]) if self.times.size > 1 else 0.0

    def gradient(self) -> np.ndarray:
        """Spatial gradient, shape (time, *spatial[, m], d)."""
        if self._grad is None:
            h, d = self.grid.h, self.grid.d
            parts = [derivative(self.values, h, 1 + ax, self.deriv_order)
                     for ax in range(d)]
            self._grad = np.stack(parts, axis=-1)
        return self._grad

    def hessian(self) -> np.ndarray:
        """Spatial second derivatives, shape (time, *spatial[, m], d, d)."""
        if self._hess is None:
            h, d = self.grid.h, self.grid.d
            rows = []
            for i in range(d):
                cols = []
                for j in range(d):
                    if i == j:
                        cols.append(second_derivative(self.values, h, 1 + i, self.deriv_order))
                    else:
                        di = derivative(self.values, h, 1 + i, self.deriv_order)
                        cols.append(derivative(di, h, 1 + j, self.deriv_order))
                rows.append(np.stack(cols, axis=-1))
            self._hess = np.stack(rows, axis=-2)
        return self._hess

    def invalidate(self):
        self._grad = None
        self._hess = None

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))

    def c1_norm(self) -> float:
        return max(self.sup_norm(), float(np.max(np.abs(self.gradient()))))

    def c2_norm(self) -> float:
        return max(self.c1_norm(), float(np.max(np.abs(self.hessian()))))

    def time_index(self, t: float) -> int:
        i = int(round((t - self.times[0]) / self.dt)) if self.times.size > 1 else 0
        if not (0 <= i < self.times.size) or abs(self.times[i] - t) > 1e-9 * max(1.0, abs(t)):
            raise DomainError(f"t={t} is not on the time grid")
        return i

    def at_time(self, t: float) -> np.ndarray:
        return self.values[self.time_index(t)]

    def interp(self, t: float, X: np.ndarray) -> np.ndarray:
        """Space-time linear interpolation at off-grid points (clamped)."""
        if self.times.size == 1:
            return interp_spatial(self.values[0], self.grid, X)
        tc = float(np.clip(t, self.times[0], self.times[-1]))
        j = min(int((tc - self.times[0]) / self.dt), self.times.size - 2)
        theta = (tc - self.times[j]) / self.dt
        a = interp_spatial(self.values[j], self.grid, X)
        b = interp_spatial(self.values[j + 1], self.grid, X)
        return (1.0 - theta) * a + theta * b
