"""Smooth compactly supported mollifiers.

The profile is the standard bump exp(-1/(1-|y|^2)) on the unit ball, scaled
to level n as rho_n(z) = n^d rho(n z): support shrinks to the ball of radius
1/n while the mass stays 1.  Two discretizations are provided: a fixed-node
Gauss-Legendre product rule for mollifying function-valued drifts, and a
grid-sampled stencil for mollifying gridded fields.  Both normalize their
weights to unit mass so constants are reproduced exactly.
"""

from __future__ import annotations

import numpy as np

from .errors import DomainError


def bump(y: np.ndarray) -> np.ndarray:
    """Unnormalized radial profile exp(-1/(1-|y|^2)) for |y| < 1."""
    y = np.asarray(y, dtype=float)
    out = np.zeros_like(y)
    inside = np.abs(y) < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - y[inside] ** 2))
    return out


def quadrature_nodes(n: int, d: int, nodes_per_axis: int = 33, shift=None):
    """Product Gauss-Legendre nodes/weights for integration against rho_n.

    Returns (Z, w) with Z of shape (K, d) covering the cube [-1/n, 1/n]^d
    (the bump vanishes outside the inscribed ball) and w normalized to sum
    to 1.  `shift` translates the mollifier center (used to exhibit
    mollifier-dependent selection in the deterministic demo).
    """
    if n < 1:
        raise DomainError(f"mollification level must be >= 1, got {n}")
    x, w = np.polynomial.legendre.leggauss(nodes_per_axis)
    radius = 1.0 / n
    center = np.zeros(d) if shift is None else np.asarray(shift, dtype=float)
    grids = np.meshgrid(*[center[k] + x * radius for k in range(d)], indexing="ij")
    Z = np.stack([g.ravel() for g in grids], axis=-1)
    waxis = w * radius
    W = np.ones(Z.shape[0])
    for k in range(d):
        W = W * np.tile(np.repeat(waxis, nodes_per_axis ** (d - 1 - k)),
                        nodes_per_axis ** k)
    rho = np.prod(bump((Z - center) * n), axis=-1)
    weights = W * rho
    total = weights.sum()
    if total <= 0:
        raise DomainError("mollifier weights degenerate")
    keep = weights > 1e-300
    return Z[keep], weights[keep] / total


def gradient_quadrature_nodes(n: int, d: int, nodes_per_axis: int = 33):
    """Nodes and d-vector weights for grad(b * rho_n) = b * grad(rho_n).

    The gradient weights integrate b(x - z) against grad rho_n(z); by
    symmetry the weights sum to zero per component, which is enforced
    exactly so constants differentiate to zero.
    """
    x, w = np.polynomial.legendre.leggauss(nodes_per_axis)
    radius = 1.0 / n
    axis = x * radius
    waxis = w * radius
    grids = np.meshgrid(*([axis] * d), indexing="ij")
    Z = np.stack([g.ravel() for g in grids], axis=-1)
    W = np.ones(Z.shape[0])
    for k in range(d):
        W = W * np.tile(np.repeat(waxis, nodes_per_axis ** (d - 1 - k)),
                        nodes_per_axis ** k)
    # grad rho_n(z) = n^{d+1} (grad rho)(n z); per axis the profile factors
    scaled = Z * n
    prof = [bump(scaled[:, k]) for k in range(d)]
    dprof = [_dbump(scaled[:, k]) for k in range(d)]
    grad_w = np.empty((Z.shape[0], d))
    for comp in range(d):
        val = np.ones(Z.shape[0])
        for k in range(d):
            val = val * (dprof[k] if k == comp else prof[k])
        grad_w[:, comp] = W * val * n  # one n from the chain rule per component
    # normalize against the discrete mass of the plain rule
    plain = np.ones(Z.shape[0])
    for k in range(d):
        plain = plain * prof[k]
    mass = (W * plain).sum()
    grad_w /= mass
    # symmetric rule sums to ~0 per component; force it exactly
    grad_w -= grad_w.sum(axis=0, keepdims=True) / Z.shape[0]
    return Z, grad_w


def _dbump(y: np.ndarray) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    out = np.zeros_like(y)
    inside = np.abs(y) < 1.0
    yi = y[inside]
    out[inside] = np.exp(-1.0 / (1.0 - yi ** 2)) * (-2.0 * yi / (1.0 - yi ** 2) ** 2)
    return out


def grid_stencil(n: int, h: float) -> np.ndarray:
    """1-D grid-sampled rho_n weights at spacing h, normalized to unit sum.

    When the support 1/n falls below the grid spacing the stencil collapses
    to the identity tap, which is the correct n -> infinity limit.
    """
    if n < 1:
        raise DomainError(f"mollification level must be >= 1, got {n}")
    m = int(np.floor(1.0 / (n * h)))
    if m < 1:
        return np.array([1.0])
    offs = np.arange(-m, m + 1) * h
    w = bump(offs * n)
    s = w.sum()
    if s <= 0:
        return np.array([1.0])
    return w / s
