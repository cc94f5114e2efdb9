"""Picard fixed-point solvers for drifted parabolic problems.

The forward Cauchy problem  u_t = (1/2) Lap u + g . grad u + f,  u(0) = 0
is solved in its mild (Duhamel) form by iterating

    u_{k+1}(t) = hom(t) + int_0^t K(t-s) * (g . grad u_k + f)(s) ds

on subintervals short enough for the map to contract, then chaining the
subinterval solutions (the classical extension technique: the a-priori
subinterval length comes from the standard contraction estimate, and it is
halved further whenever the iteration is observed not to contract).

The backward resolvent problem
    U_t + (1/2) Lap U + b . grad U = lam U - b,  U(T) = 0
is reduced to the forward form by the substitution V(t) = U(T - t), which
folds the zero-order term into an exp(-lam (t-s)) damping of the Duhamel
weights; one code path serves both problems.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import ndimage

from . import mollifier
from .errors import DomainError, NoContraction, NotReached
from .grids import GridFunction, SpatialGrid, derivative, second_derivative
from .heat_kernel import Kernel, duhamel_rule, heat_evolve, _time_slice
from .moduli import Modulus, f_delta


@dataclass
class MildSolution:
    u: GridFunction
    iterations: int
    contraction_ratios: list
    residual: float
    subintervals: int = 1


@dataclass
class ResolventSolution:
    U: GridFunction  # vector field on the time grid, U(T) = 0
    lam: float
    grad_sup: float  # max over the grid of the operator norm of grad U
    solve_info: MildSolution


def _g_dot_grad(u_vals: np.ndarray, g_vals: np.ndarray, grid: SpatialGrid,
                vector: bool, order: int = 4) -> np.ndarray:
    """g . grad u on the full space-time array (per component when u is a vector)."""
    h, d = grid.h, grid.d
    grads = [derivative(u_vals, h, 1 + ax, order) for ax in range(d)]
    if vector:
        # u: (t, *sp, m); g: (t, *sp, d) -> sum_j g_j d_j u_i
        out = grads[0] * g_vals[..., 0][..., None]
        for ax in range(1, d):
            out = out + grads[ax] * g_vals[..., ax][..., None]
    else:
        out = grads[0] * g_vals[..., 0]
        for ax in range(1, d):
            out = out + grads[ax] * g_vals[..., ax]
    return out


def _contraction_subinterval(g_sup: float, d: int, T: float, lam: float,
                             target: float = 0.45) -> float:
    """Largest subinterval length with estimated Picard contraction <= target.

    Uses ||K(r) * (g . grad v)||_inf <= ||g|| sqrt(d) sqrt(2/(pi r)) ||grad v||
    integrated with the exp(-lam r) damping.
    """
    if g_sup <= 0.0:
        return T
    c = g_sup * math.sqrt(d) * math.sqrt(2.0 / math.pi)
    if lam > 0.0 and c * math.sqrt(math.pi / lam) <= target:
        return T
    # undamped bound: c * 2 sqrt(T0) <= target
    T0 = (target / (2.0 * c)) ** 2
    return min(T, max(T0, T / 4096.0))


def _duhamel_sweep(kernel, sub: GridFunction, lam: float, m: int) -> np.ndarray:
    """Duhamel integral evaluated at every time of the subinterval grid."""
    out = np.zeros_like(sub.values)
    t0 = sub.times[0]
    for i in range(1, sub.times.size):
        t = float(sub.times[i] - t0)
        out[i] = _duhamel_local(kernel, sub, t, lam, m)
    return out


def _duhamel_local(kernel, sub: GridFunction, t: float, lam: float, m: int) -> np.ndarray:
    """int_0^t e^{-lam(t-s)} K(t-s) * f(t0 + s) ds on the subinterval clock."""
    nodes, weights = duhamel_rule(t, lam, m)
    shape = sub.values.shape[1:]
    out = np.zeros(shape)
    cutoff = 1e-18 * float(np.max(np.abs(weights)))
    t0 = sub.times[0]
    for s, w in zip(nodes, weights):
        if abs(w) <= cutoff:
            continue
        fs = _time_slice(sub, t0 + s)
        out += w * heat_evolve(kernel, sub.grid, fs, t - s)
    return out


class _SubintervalFailed(Exception):
    pass


def solve_mild(f: GridFunction, g: Optional[GridFunction] = None,
               tol_rel: float = 1e-8, max_iter: int = 200, m_nodes: int = 32,
               lam: float = 0.0, u_init: Optional[np.ndarray] = None,
               min_fraction: int = 64,
               picard_start: Optional[np.ndarray] = None) -> MildSolution:
    """Solve the drifted heat Cauchy problem in mild form by Picard iteration.

    f (scalar or vector) and g (vector, optional) live on the same space-time
    grid; the returned solution shares it.  Iterates u <- D(g . grad u) +
    D(f) + hom from u = 0 until the sup change drops below tol_rel * scale or
    max_iter sweeps; when the iteration fails to contract the current
    subinterval is halved, down to (T - t0)/min_fraction, after which
    NoContraction propagates.  picard_start seeds the first iterate with an
    arbitrary space-time field (uniqueness means the fixed point must not
    depend on it).
    """
    grid = f.grid
    kernel = Kernel(grid.d)
    times = f.times
    n_t = times.size
    T_total = float(times[-1] - times[0])
    if n_t < 2:
        raise DomainError("need at least two time points")
    vector = f.vector
    g_sup = 0.0 if g is None else float(np.max(np.linalg.norm(
        g.values.reshape(n_t, -1, grid.d), axis=-1)))
    if lam > 0:
        m_nodes = min(max(m_nodes, int(4.0 * math.sqrt(lam * T_total))), 256)

    T_sub = _contraction_subinterval(g_sup, grid.d, T_total, lam)
    min_sub = T_total / min_fraction
    u_values = np.zeros_like(f.values)
    if u_init is not None:
        u_values[0] = u_init
    total_iters = 0
    ratios_all: list = []
    residual = 0.0
    n_subs = 0

    while True:
        steps_per = max(1, int(math.floor(T_sub / f.dt + 1e-9)))
        try:
            total_iters, residual, ratios_all, n_subs = _chain_solve(
                kernel, f, g, u_values, steps_per, tol_rel, max_iter,
                m_nodes, lam, vector, picard_start)
            break
        except _SubintervalFailed:
            if T_sub <= min_sub + 1e-15:
                raise NoContraction(
                    "Picard iteration failed to contract even on the minimal "
                    f"subinterval ({min_sub:.3g}); the drift is too strong for this grid")
            T_sub = max(T_sub / 2.0, min_sub)

    u = GridFunction(grid, times, u_values, vector=vector)
    return MildSolution(u=u, iterations=total_iters, contraction_ratios=ratios_all,
                        residual=residual, subintervals=n_subs)


def _chain_solve(kernel, f, g, u_values, steps_per, tol_rel, max_iter,
                 m_nodes, lam, vector, picard_start=None):
    grid = f.grid
    times = f.times
    n_t = times.size
    total_iters = 0
    ratios_all: list = []
    residual = 0.0
    ia = 0
    n_subs = 0
    u_values[1:] = 0.0
    while ia < n_t - 1:
        ib = min(ia + steps_per, n_t - 1)
        sub_times = times[ia:ib + 1]
        fsub = GridFunction(grid, sub_times, f.values[ia:ib + 1], vector=vector)
        gsub = None if g is None else GridFunction(
            grid, sub_times, g.values[ia:ib + 1], vector=True)
        start = picard_start[ia:ib + 1] if picard_start is not None else None
        u_loc, iters, ratios, res = _solve_subinterval(
            kernel, fsub, gsub, u_values[ia], tol_rel, max_iter, m_nodes, lam,
            vector, picard_start=start)
        u_values[ia:ib + 1] = u_loc
        total_iters += iters
        ratios_all.extend(ratios)
        residual = max(residual, res)
        ia = ib
        n_subs += 1
    return total_iters, residual, ratios_all, n_subs


def _solve_subinterval(kernel, fsub: GridFunction, gsub, u0, tol_rel, max_iter,
                       m_nodes, lam, vector, picard_start=None):
    grid = fsub.grid
    times = fsub.times
    t0 = float(times[0])
    n_loc = times.size
    hom = np.zeros_like(fsub.values)
    hom[0] = u0
    if np.any(u0):
        for i in range(1, n_loc):
            dt = float(times[i] - t0)
            damp = math.exp(-lam * dt) if lam != 0.0 else 1.0
            hom[i] = damp * heat_evolve(kernel, grid, u0, dt)
    src = _duhamel_sweep(kernel, fsub, lam, m_nodes)
    u = hom + src
    scale = max(1.0, float(np.max(np.abs(u))))
    if picard_start is not None:
        u = np.array(picard_start, dtype=float, copy=True)
    tol = tol_rel * scale
    if gsub is None:
        return u, 1, [], 0.0
    ratios = []
    prev_change = None
    for k in range(max_iter):
        w_vals = _g_dot_grad(u, gsub.values, grid, vector)
        w = GridFunction(grid, times, w_vals, vector=vector)
        u_next = hom + src + _duhamel_sweep(kernel, w, lam, m_nodes)
        change = float(np.max(np.abs(u_next - u)))
        if prev_change is not None and prev_change > 0:
            ratios.append(change / prev_change)
        prev_change = change
        u = u_next
        if change < tol:
            return u, k + 1, ratios, change
        if k >= 6 and len(ratios) >= 3 and min(ratios[-3:]) >= 0.97:
            raise _SubintervalFailed()
    raise _SubintervalFailed()


# ---------------------------------------------------------------------------
# Backward resolvent problem


def sample_drift(b: Callable, grid: SpatialGrid, times: np.ndarray) -> np.ndarray:
    """Sample a vectorized drift callable b(t, points)->(N, d) onto the grid."""
    pts = grid.points()
    out = np.empty((times.size,) + grid.shape + (grid.d,))
    for i, t in enumerate(times):
        out[i] = np.asarray(b(float(t), pts), dtype=float).reshape(grid.shape + (grid.d,))
    return out


def operator_norms(mat_field: np.ndarray, d: int) -> np.ndarray:
    """Spectral norms of a (..., d, d) stack (abs for d = 1)."""
    if d == 1:
        return np.abs(mat_field[..., 0, 0])
    return np.linalg.norm(mat_field, ord=2, axis=(-2, -1))


def solve_resolvent(b: Callable, lam: float, grid: SpatialGrid,
                    times: np.ndarray, tol_rel: float = 1e-8,
                    m_nodes: int = 32) -> ResolventSolution:
    """Solve the damped backward problem with terminal condition U(T) = 0.

    b is a vectorized callable (t, points (N, d)) -> (N, d).  The solve runs
    forward in the reversed clock V(t) = U(T - t) with drift and source both
    equal to the time-reversed field, then flips the time axis back, so the
    terminal condition holds exactly.
    """
    if lam <= 0.0:
        raise DomainError(f"lam must be positive, got {lam}")
    times = np.asarray(times, dtype=float)
    T = float(times[-1])
    rev = T - times[::-1] + times[0]  # forward clock tau with tau=0 at t=T
    b_rev = sample_drift(lambda tau, pts: b(T - tau + times[0], pts), grid, rev)
    fgf = GridFunction(grid, rev, b_rev, vector=True)
    ggf = GridFunction(grid, rev, b_rev.copy(), vector=True)
    sol = solve_mild(fgf, ggf, tol_rel=tol_rel, lam=lam, m_nodes=m_nodes)
    U_vals = sol.u.values[::-1].copy()
    U = GridFunction(grid, times, U_vals, vector=True)
    grad = U.gradient()  # (t, *sp, d_comp, d_deriv)
    grad_sup = float(np.max(operator_norms(grad, grid.d)))
    return ResolventSolution(U=U, lam=lam, grad_sup=grad_sup, solve_info=sol)


@dataclass
class CalibrationResult:
    lambda0: float
    table: list          # (lam, grad_sup) rows, ascending lam
    slope: float         # log-log slope of grad_sup vs lam over slope_range
    target: float


def calibrate_lambda(b: Callable, grid: SpatialGrid, times: np.ndarray,
                     lambdas: Optional[Sequence[float]] = None,
                     target: float = 0.5,
                     slope_range: Optional[tuple] = None,
                     threads: int = 1) -> CalibrationResult:
    """Sweep the damping parameter until the solution gradient is small.

    Solves the resolvent at each lambda (2^0..2^10 by default), records the
    decay table of ||grad U||_inf, and returns the smallest tested lambda
    meeting the target together with the fitted log-log decay slope.  Raises
    NotReached (with the table attached) when no tested lambda qualifies.
    """
    if lambdas is None:
        lambdas = [2.0 ** k for k in range(11)]
    lambdas = sorted(float(l) for l in lambdas)

    def solve_one(lam):
        return solve_resolvent(b, lam, grid, times).grad_sup

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            sups = list(ex.map(solve_one, lambdas))
    else:
        sups = [solve_one(lam) for lam in lambdas]
    table = list(zip(lambdas, sups))
    lo, hi = (slope_range if slope_range is not None
              else (lambdas[0], lambdas[-1]))
    pts = [(l, s) for l, s in table if lo <= l <= hi and s > 0]
    slope = float("nan")
    if len(pts) >= 2:
        slope = float(np.polyfit(np.log([p[0] for p in pts]),
                                 np.log([p[1] for p in pts]), 1)[0])
    passing = [l for l, s in table if s <= target]
    if not passing:
        raise NotReached(
            f"no tested lambda reached grad target {target}", table=table)
    return CalibrationResult(lambda0=min(passing), table=table, slope=slope,
                             target=target)


# ---------------------------------------------------------------------------
# Modulus measurement and mollified convergence


@dataclass
class ModulusMeasurement:
    separations: np.ndarray   # descending r
    max_ratios: np.ndarray    # max |field(x)-field(y)| / bound(|x-y|) per r
    c_hat: float
    unbounded: bool


def measure_modulus(field: np.ndarray, grid: SpatialGrid, m: Modulus,
                    pair_count: int = 2000, seed: int = 0,
                    margin: float = 0.0) -> ModulusMeasurement:
    """Empirical constant of the second-derivative modulus bound.

    field is one fixed-time slice of a (second-)derivative component.  Pairs
    (x, y) at dyadic grid-aligned separations spanning at least three decades
    are sampled and the ratio to the composite bound
    F(r) = f_delta(r; delta=r0) for r < r0, r otherwise, is maximized.  The
    bound is flagged unbounded when the per-separation maxima keep growing as
    r decreases.  `margin` excludes a strip (in length units) at each box
    edge, where domain truncation pollutes derivative fields.
    """
    h = grid.h
    flat = np.asarray(field, dtype=float)
    rng = np.random.default_rng(seed)
    skip = int(margin / h)
    lo, hi = skip, grid.n - skip
    if hi - lo < 32:
        raise DomainError("margin leaves too little interior to sample")
    max_cells = int(min(m.r0, grid.L / 2.0) / h)
    offsets = []
    c = 1
    while c <= max_cells:
        offsets.append(c)
        c *= 2
    if len(offsets) < 4:
        raise DomainError("grid too coarse to span three dyadic decades below r0")
    seps, ratios = [], []
    for off in offsets:
        r = off * h
        bound = f_delta(m, m.r0, r) if r < m.r0 else r
        count = min(pair_count, hi - lo - off)
        if count < 1:
            continue
        i = rng.integers(lo, hi - off, size=count)
        if grid.d == 1:
            diff = np.abs(flat[i + off] - flat[i])
        else:
            j = rng.integers(lo, hi, size=i.size)
            diff = np.abs(flat[i + off, j] - flat[i, j])
        seps.append(r)
        ratios.append(float(diff.max()) / bound)
    seps = np.array(seps[::-1])      # descending r
    ratios = np.array(ratios[::-1])
    small = ratios[-4:]
    unbounded = bool(np.all(np.diff(small) > 0) and small[-1] > 1.5 * ratios[0])
    return ModulusMeasurement(separations=seps, max_ratios=ratios,
                              c_hat=float(ratios.max()), unbounded=unbounded)


def mollify_grid(values: np.ndarray, grid: SpatialGrid, n) -> np.ndarray:
    """Convolve a gridded field with the level-n mollifier (edge extension)."""
    if not np.isfinite(n):
        return np.array(values, dtype=float, copy=True)
    w = mollifier.grid_stencil(int(n), grid.h)
    out = np.asarray(values, dtype=float)
    for ax in range(grid.d):
        out = ndimage.convolve1d(out, w, axis=ax, mode="nearest")
    return out


def mollified_convergence(f: GridFunction, g: Optional[GridFunction],
                          n_list: Sequence, tol_rel: float = 1e-8) -> list:
    """Solve with mollified data per level and tabulate sup-norm errors.

    Returns rows (n, err_c0, err_c1, err_c2) against the unmollified solve;
    n may include float('inf'), for which the mollifier is the identity.
    Data are mollified one time slice at a time (the mollifier acts in space
    only).
    """
    ref = solve_mild(f, g, tol_rel=tol_rel)
    rows = []
    for n in n_list:
        fn_vals = np.stack([mollify_grid(f.values[i], f.grid, n)
                            for i in range(f.times.size)])
        fn = GridFunction(f.grid, f.times, fn_vals, vector=f.vector)
        gn = None
        if g is not None:
            gn_vals = np.stack([mollify_grid(g.values[i], g.grid, n)
                                for i in range(g.times.size)])
            gn = GridFunction(g.grid, g.times, gn_vals, vector=True)
        sol = solve_mild(fn, gn, tol_rel=tol_rel)
        diff = GridFunction(f.grid, f.times, sol.u.values - ref.u.values,
                            vector=f.vector)
        rows.append((n, diff.sup_norm(), diff.c1_norm(), diff.c2_norm()))
    return rows


def strong_defect(sol: GridFunction, f: GridFunction,
                  g: Optional[GridFunction] = None,
                  margin: float = 0.0) -> float:
    """Max pointwise defect of the strong form, u_t - Lap u/2 - g.grad u - f.

    Time derivative by centered differences; measured over interior times and
    an interior spatial window (`margin` in length units cut from each edge,
    where domain truncation pollutes the Laplacian).  Used to confirm the
    mild solution solves the PDE to discretization order.
    """
    u = sol.values
    dt = sol.dt
    ut = np.gradient(u, dt, axis=0, edge_order=2)
    # Laplacian over the spatial axes (axis 0 is time here)
    lap = second_derivative(u, sol.grid.h, 1, order=4)
    for ax in range(1, sol.grid.d):
        lap = lap + second_derivative(u, sol.grid.h, 1 + ax, order=4)
    rhs = 0.5 * lap + f.values
    if g is not None:
        rhs = rhs + _g_dot_grad(u, g.values, sol.grid, sol.vector)
    defect = np.abs(ut - rhs)[1:-1]
    skip = int(margin / sol.grid.h)
    if skip > 0:
        sl = (slice(None),) + (slice(skip, -skip),) * sol.grid.d
        defect = defect[sl]
    return float(np.max(defect))
