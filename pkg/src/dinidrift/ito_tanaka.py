"""The drift-straightening diffeomorphism and its transformed SDE coefficients.

Given the resolvent solution U with sup-norm gradient at most 1/2, the map
gamma(t, x) = x + U(t, x) is a bi-Lipschitz diffeomorphism: its inverse is
computed by the contraction iteration x <- y - U(t, x), whose factor is the
gradient bound.  The transformed SDE driving Y = gamma(t, X) has drift
lam * U(t, gamma^{-1}(t, y)) and diffusion I + grad U(t, gamma^{-1}(t, y)),
both Lipschitz, which is the whole point of the construction.

Off-grid values of U are multilinear interpolations; grad U and the second
derivatives are interpolated from precomputed grid derivative fields rather
than by differentiating the interpolant.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DomainError, NoConvergence
from .grids import GridFunction, interp_spatial
from .pde import ResolventSolution

GRAD_BOUND = 0.5
_BOUND_SLACK = 1e-6


class ItoTanakaMap:
    """gamma(t, x) = x + U(t, x) with cached derivative fields.

    Construction fails unless the resolvent gradient bound holds (the
    contraction-based inverse is meaningless without it); pass
    require_bound=False only to inspect an out-of-range map.
    """

    def __init__(self, resolvent: ResolventSolution, require_bound: bool = True):
        self.U = resolvent.U
        self.lam = resolvent.lam
        self.grad_sup = resolvent.grad_sup
        self.grad_bound = bool(resolvent.grad_sup <= GRAD_BOUND + _BOUND_SLACK)
        if require_bound and not self.grad_bound:
            raise DomainError(
                f"gradient bound violated: ||grad U|| = {resolvent.grad_sup:.4f} > 1/2; "
                "increase the damping parameter")
        self.grid = self.U.grid
        self.d = self.grid.d
        self._gradU = self.U.gradient()   # (t, *sp, d, d): dU_i/dx_j
        self._hessU = self.U.hessian()    # (t, *sp, d, d, d)

    # -- interpolation helpers ------------------------------------------------

    def _interp(self, arr: np.ndarray, t: float, X: np.ndarray) -> np.ndarray:
        times = self.U.times
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if times.size == 1:
            return interp_spatial(arr[0], self.grid, X)
        tc = float(np.clip(t, times[0], times[-1]))
        dt = float(times[1] - times[0])
        j = min(int((tc - times[0]) / dt), times.size - 2)
        theta = (tc - times[j]) / dt
        a = interp_spatial(arr[j], self.grid, X)
        if theta == 0.0:
            return a
        b = interp_spatial(arr[j + 1], self.grid, X)
        return (1.0 - theta) * a + theta * b

    def U_at(self, t: float, X) -> np.ndarray:
        return self._interp(self.U.values, t, X)

    def grad_U_at(self, t: float, X) -> np.ndarray:
        return self._interp(self._gradU, t, X)

    def hess_U_at(self, t: float, X) -> np.ndarray:
        return self._interp(self._hessU, t, X)

    # -- the map --------------------------------------------------------------

    def _require(self):
        if not self.grad_bound:
            raise DomainError("gradient bound flag is false; map operations are not permitted")

    def gamma(self, t: float, X) -> np.ndarray:
        """x + U(t, x) for a batch of points (N, d)."""
        self._require()
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return X + self.U_at(t, X)

    def gamma_inverse(self, t: float, Y, x0: Optional[np.ndarray] = None,
                      tol: float = 1e-12, max_iter: int = 60) -> np.ndarray:
        """Solve gamma(t, x) = y by the contraction x <- y - U(t, x).

        The contraction factor is the gradient bound (at most 1/2), so 60
        iterations reach 1e-12 with a wide margin; failing the round-trip
        postcondition means the bound flag was stale and is treated as a
        program error (NoConvergence).
        """
        self._require()
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        x = np.array(Y if x0 is None else np.atleast_2d(x0), dtype=float, copy=True)
        scale = 1.0 + float(np.max(np.abs(Y))) if Y.size else 1.0
        for _ in range(max_iter):
            x_new = Y - self.U_at(t, x)
            delta = float(np.max(np.abs(x_new - x))) if x.size else 0.0
            x = x_new
            if delta <= tol * scale:
                break
        err = float(np.max(np.abs(x + self.U_at(t, x) - Y))) if x.size else 0.0
        if err > 1e-10 * scale:
            raise NoConvergence(
                f"round trip defect {err:.3e} exceeds tolerance; gradient bound stale?")
        return x

    def grad_gamma_inverse(self, t: float, Y, x_inv: Optional[np.ndarray] = None) -> np.ndarray:
        """(I + grad U(t, gamma^{-1}(t, y)))^{-1}, shape (N, d, d)."""
        self._require()
        x = self.gamma_inverse(t, Y) if x_inv is None else np.atleast_2d(x_inv)
        G = self.grad_U_at(t, x)
        eye = np.eye(self.d)
        return np.linalg.inv(eye + G)

    def transformed_coeffs(self, t: float, Y, x_inv: Optional[np.ndarray] = None):
        """Drift and diffusion of the straightened SDE at points y.

        Returns (b_tilde, sigma_tilde) with b_tilde = lam * U(t, x) and
        sigma_tilde = I + grad U(t, x) evaluated at x = gamma^{-1}(t, y).
        Both are Lipschitz in y because U has two bounded derivatives.
        """
        self._require()
        x = self.gamma_inverse(t, Y) if x_inv is None else np.atleast_2d(x_inv)
        b_tilde = self.lam * self.U_at(t, x)
        sigma_tilde = np.eye(self.d) + self.grad_U_at(t, x)
        return b_tilde, sigma_tilde


def identity_map(grid, times, lam: float = 1.0) -> ItoTanakaMap:
    """Map with U = 0 (gamma = id); useful as the trivial baseline."""
    d = grid.d
    U = GridFunction(grid, np.asarray(times, dtype=float),
                     np.zeros((len(np.atleast_1d(times)),) + grid.shape + (d,)),
                     vector=True)
    res = ResolventSolution(U=U, lam=lam, grad_sup=0.0, solve_info=None)
    return ItoTanakaMap(res)
