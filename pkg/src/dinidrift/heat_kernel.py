"""Gaussian heat kernel, grid convolution, and the Duhamel time integral.

The kernel is K(t, x) = (2 pi t)^{-d/2} exp(-|x|^2 / (2t)), the transition
density of standard Brownian motion, so the heat equation here is
u_t = (1/2) Laplacian u.  Convolution on the grid exploits separability:
one-dimensional kernel stencils (truncated at 8 sqrt(t), where the tail mass
is below e^{-32}) are applied along each axis with edge-value extension.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import DomainError, GridTooCoarse
from .grids import GridFunction, SpatialGrid, laplacian

TRUNCATION_RADIUS = 8.0  # kernel support cut in units of sqrt(t)


@dataclass(frozen=True)
class Kernel:
    d: int = 1

    def __post_init__(self):
        if self.d < 1:
            raise DomainError(f"dimension must be >= 1, got {self.d}")


def _check_time(t):
    if t <= 0.0:
        raise DomainError(f"kernel time must be positive, got {t}")


def kernel_eval(k: Kernel, t: float, x) -> np.ndarray:
    """K(t, x); x has shape (..., d) (a bare scalar/array is fine for d=1)."""
    _check_time(t)
    x = np.asarray(x, dtype=float)
    if k.d == 1 and (x.ndim == 0 or x.shape[-1] != 1):
        sq = x * x
    else:
        sq = np.sum(x * x, axis=-1)
    return (2.0 * math.pi * t) ** (-k.d / 2.0) * np.exp(-sq / (2.0 * t))


def grad_kernel(k: Kernel, t: float, x) -> np.ndarray:
    """Gradient of K: -(x/t) K(t, x), shape (..., d)."""
    _check_time(t)
    x = np.asarray(x, dtype=float)
    if k.d == 1 and (x.ndim == 0 or x.shape[-1] != 1):
        x = x[..., None]
    K = kernel_eval(k, t, x)
    return -(x / t) * K[..., None]


def hess_kernel(k: Kernel, t: float, x) -> np.ndarray:
    """Hessian of K: (x x^T / t^2 - I / t) K(t, x), shape (..., d, d)."""
    _check_time(t)
    x = np.asarray(x, dtype=float)
    if k.d == 1 and (x.ndim == 0 or x.shape[-1] != 1):
        x = x[..., None]
    K = kernel_eval(k, t, x)
    outer = x[..., :, None] * x[..., None, :] / (t * t)
    eye = np.eye(k.d) / t
    return (outer - eye) * K[..., None, None]


def dt_kernel(k: Kernel, t: float, x) -> np.ndarray:
    """Time derivative of K, equal to half its spatial Laplacian."""
    _check_time(t)
    x = np.asarray(x, dtype=float)
    if k.d == 1 and (x.ndim == 0 or x.shape[-1] != 1):
        sq = x * x
    else:
        sq = np.sum(x * x, axis=-1)
    K = kernel_eval(k, t, x)
    return K * (sq / (2.0 * t * t) - k.d / (2.0 * t))


def _stencil_1d(t: float, h: float) -> np.ndarray:
    """Quadrature weights h*K1(t, m h) for |m h| <= 8 sqrt(t)."""
    m = int(math.ceil(TRUNCATION_RADIUS * math.sqrt(t) / h))
    offs = np.arange(-m, m + 1) * h
    return h * (2.0 * math.pi * t) ** -0.5 * np.exp(-offs * offs / (2.0 * t))


def convolve(k: Kernel, grid: SpatialGrid, f: np.ndarray, t: float) -> np.ndarray:
    """K(t) * f on the grid by separable truncated direct summation.

    f is indexed (*grid.shape, *trailing); trailing axes (vector components)
    pass through.  The field is extended by its edge value beyond the box.
    Raises GridTooCoarse when h > sqrt(t): the kernel would be unresolved and
    the quadrature meaningless.
    """
    _check_time(t)
    if grid.d != k.d:
        raise DomainError(f"kernel dimension {k.d} != grid dimension {grid.d}")
    h = grid.h
    if h > math.sqrt(t):
        raise GridTooCoarse(
            f"h={h:.4g} exceeds sqrt(t)={math.sqrt(t):.4g}; refine the grid or increase t")
    w = _stencil_1d(t, h)
    out = np.asarray(f, dtype=float)
    for ax in range(grid.d):
        out = ndimage.convolve1d(out, w, axis=ax, mode="nearest")
    return out


def heat_evolve(k: Kernel, grid: SpatialGrid, f: np.ndarray, t: float) -> np.ndarray:
    """Semigroup application that stays defined below grid resolution.

    For t >= h^2 this is convolve; for 0 < t < h^2 the kernel cannot be
    sampled, so the short-time Taylor expansion
    K(t) * f = f + (t/2) Laplacian f + O(t^2) is used instead (discrete
    Laplacian, edge extension).  t <= 0 returns f unchanged.
    """
    if t <= 0.0:
        return np.array(f, dtype=float, copy=True)
    h = grid.h
    if t < h * h:
        lap = laplacian(np.asarray(f, dtype=float), h, grid.d, order=2)
        return f + 0.5 * t * lap
    return convolve(k, grid, f, t)


def graded_nodes(t: float, m: int) -> np.ndarray:
    """Time-quadrature nodes s_j = t (1 - (1 - j/m)^2), clustered at s = t.

    The clustering resolves the kernel-derivative blowup ~ (t-s)^{-1/2} near
    the upper endpoint; the node at s = t itself is handled by heat_evolve's
    short-time limit K(0+) * f = f.
    """
    j = np.arange(m + 1, dtype=float)
    return t * (1.0 - (1.0 - j / m) ** 2)


_GL8_NODES, _GL8_WEIGHTS = np.polynomial.legendre.leggauss(8)


def duhamel_rule(t: float, lam: float = 0.0, m: int = 32):
    """Nodes and weights for int_0^t e^{-lam (t-s)} K(t-s) * f(s) ds.

    The graded substitution s = t (1 - (1-v)^2) clusters nodes at s = t;
    composite 8-point Gauss-Legendre panels in v, halving geometrically
    toward v = 1, resolve both the endpoint clustering and the damping
    boundary layer of width 1/sqrt(lam t).  Returns (s_nodes, weights) with
    the exp(-lam (t-s)) damping folded into the weights.
    """
    levels = max(4, int(math.ceil(0.5 * math.log2(max(lam * t, 4.0)))) + 3,
                 m // 8)
    edges = [0.0] + [1.0 - 0.5 ** k for k in range(1, levels + 1)] + [1.0]
    s_nodes = []
    weights = []
    for a, b in zip(edges[:-1], edges[1:]):
        mid, half = 0.5 * (a + b), 0.5 * (b - a)
        v = mid + half * _GL8_NODES
        wv = half * _GL8_WEIGHTS
        s = t * (1.0 - (1.0 - v) ** 2)
        ws = wv * 2.0 * t * (1.0 - v)
        if lam != 0.0:
            ws = ws * np.exp(-lam * (t - s))
        s_nodes.append(s)
        weights.append(ws)
    return np.concatenate(s_nodes), np.concatenate(weights)


def duhamel(k: Kernel, f: GridFunction, t: float, lam: float = 0.0,
            m: int = 32) -> np.ndarray:
    """Damped Duhamel integral: int_0^t e^{-lam (t-s)} K(t-s) * f(s) ds.

    f(s) is interpolated linearly in time from the grid slices.  Nodes whose
    combined weight is negligible (below 1e-18 relatively) are skipped,
    which makes strongly damped integrals cheap.  Returns one spatial slice.
    """
    if t < 0.0:
        raise DomainError(f"t must be >= 0, got {t}")
    shape = f.values.shape[1:]
    if t == 0.0:
        return np.zeros(shape)
    nodes, weights = duhamel_rule(t, lam, m)
    out = np.zeros(shape)
    cutoff = 1e-18 * float(np.max(np.abs(weights)))
    for s, w in zip(nodes, weights):
        if abs(w) <= cutoff:
            continue
        fs = _time_slice(f, s)
        out += w * heat_evolve(k, f.grid, fs, t - s)
    return out


def _time_slice(f: GridFunction, s: float) -> np.ndarray:
    """Linear-in-time interpolation of the full spatial slice at time s."""
    times = f.times
    if times.size == 1:
        return f.values[0]
    sc = float(np.clip(s, times[0], times[-1]))
    j = min(int((sc - times[0]) / f.dt), times.size - 2)
    theta = (sc - times[j]) / f.dt
    if theta == 0.0:
        return f.values[j]
    return (1.0 - theta) * f.values[j] + theta * f.values[j + 1]
