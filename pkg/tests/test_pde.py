import math

import numpy as np
import pytest

from dinidrift import moduli as mo
from dinidrift import pde
from dinidrift.errors import DomainError, NoContraction, NotReached
from dinidrift.grids import GridFunction, SpatialGrid
from oracles import crank_nicolson_1d, mode_ode


@pytest.fixture(scope="module")
def grid1d():
    return SpatialGrid(L=10.0, n=384, d=1)


def _interior_mask(grid, margin):
    return np.abs(grid.axis) <= grid.L - margin


def _const_field(grid, times, value, vector=False):
    shape = (times.size,) + grid.shape + ((grid.d,) if vector else ())
    return GridFunction(grid, times, np.full(shape, value), vector=vector)


def _sin_source(grid, times):
    vals = np.tile(np.sin(grid.axis), (times.size, 1))
    return GridFunction(grid, times, vals)


# ---------------------------------------------------------------------------
# solve_mild


def test_constant_source_no_drift(grid1d):
    times = np.linspace(0.0, 1.0, 65)
    sol = pde.solve_mild(_const_field(grid1d, times, 1.0))
    assert np.max(np.abs(sol.u.values - times[:, None])) < 1e-9
    assert sol.residual < 1e-8


def test_sine_source_matches_mode_ode_oracle(grid1d):
    times = np.linspace(0.0, 1.0, 129)
    sol = pde.solve_mild(_sin_source(grid1d, times))
    amp = mode_ode(0.5, lambda s: 1.0, times)
    want = amp[:, None] * np.sin(grid1d.axis)[None, :]
    mask = _interior_mask(grid1d, 8.2)
    assert np.max(np.abs(sol.u.values - want)[:, mask]) < 1e-5
    # closed form agrees with the oracle
    assert np.max(np.abs(amp - 2.0 * (1.0 - np.exp(-times / 2)))) < 1e-9


def test_constant_drift_matches_crank_nicolson(grid1d):
    c = 0.5
    times = np.linspace(0.0, 0.5, 129)
    f = _sin_source(grid1d, times)
    g = _const_field(grid1d, times, c, vector=True)
    sol = pde.solve_mild(f, g)
    xcn = np.linspace(-10.0, 10.0, 2049)
    tcn = np.linspace(0.0, 0.5, 513)
    ucn = crank_nicolson_1d(xcn, tcn, np.sin(xcn), drift=np.full(xcn.size, c))
    mask = _interior_mask(grid1d, 8.2)
    err = 0.0
    for i in (32, 64, 128):
        row = np.interp(grid1d.axis, xcn, ucn[np.argmin(np.abs(tcn - times[i]))])
        err = max(err, float(np.max(np.abs(sol.u.values[i] - row)[mask])))
    assert err < 1e-4


def test_uniqueness_as_stability(grid1d):
    times = np.linspace(0.0, 0.5, 65)
    f = _sin_source(grid1d, times)
    g = _const_field(grid1d, times, 0.5, vector=True)
    a = pde.solve_mild(f, g)
    b = pde.solve_mild(f, g, picard_start=f.values.copy())
    tol = 1e-8 * max(1.0, a.u.sup_norm())
    assert np.max(np.abs(a.u.values - b.u.values)) <= 2 * tol


def test_no_contraction_raises():
    grid = SpatialGrid(L=4.0, n=65, d=1)
    times = np.linspace(0.0, 1.0, 17)
    f = _sin_source(grid, times)
    g = _const_field(grid, times, 500.0, vector=True)
    with pytest.raises(NoContraction):
        pde.solve_mild(f, g, min_fraction=4)


def test_strong_form_defect_scales(grid1d):
    errs = []
    for nt in (33, 65):
        times = np.linspace(0.0, 0.5, nt)
        f = _sin_source(grid1d, times)
        sol = pde.solve_mild(f)
        errs.append(pde.strong_defect(sol.u, f, margin=8.2))
    # centered-time-difference error dominates: halving dt shrinks the defect
    assert errs[1] < 0.5 * errs[0]
    assert errs[1] < 1e-4


def test_c2_estimate_stable_under_rescaling(grid1d):
    times = np.linspace(0.0, 0.5, 65)
    chats = []
    for s in (0.25, 1.0, 4.0):
        f = GridFunction(grid1d, times, s * np.tile(np.sin(grid1d.axis), (65, 1)))
        g = _const_field(grid1d, times, 0.5 * s, vector=True)
        sol = pde.solve_mild(f, g)
        chats.append(sol.u.c2_norm() / (1.0 + s + 0.5 * s))
    assert max(chats) / min(chats) < 4.0


def test_gradient_modulus_bound_for_holder_data(grid1d):
    # (gradient-increment) <= C phi(|x-y|) for phi = 1.1 sqrt(r) Holder data
    times = np.linspace(0.0, 0.5, 65)
    fvals = np.tile(np.abs(np.sin(grid1d.axis)) ** 0.5, (65, 1))
    sol = pde.solve_mild(GridFunction(grid1d, times, fvals))
    gradu = sol.u.gradient()[-1, :, 0]
    h = grid1d.h
    ratios = []
    for off in (1, 4, 16, 64):
        r = off * h
        diff = np.abs(gradu[off:] - gradu[:-off]).max()
        ratios.append(diff / (1.1 * math.sqrt(r)))
    ratios = np.array(ratios)
    assert ratios.max() / max(ratios.min(), 1e-12) < 8.0  # stable across decades


# ---------------------------------------------------------------------------
# resolvent and calibration


def _tanh_drift(t, pts):
    out = np.zeros_like(pts)
    out[:, 0] = np.tanh(pts[:, 0])
    return out


def test_resolvent_constant_drift_closed_form():
    grid = SpatialGrid(L=6.0, n=129, d=1)
    times = np.linspace(0.0, 1.0, 65)

    def bconst(t, pts):
        out = np.zeros_like(pts)
        out[:, 0] = 0.7
        return out

    res = pde.solve_resolvent(bconst, 4.0, grid, times)
    want = 0.7 / 4.0 * (1.0 - np.exp(-4.0 * (1.0 - times)))
    assert np.max(np.abs(res.U.values[..., 0] - want[:, None])) < 1e-8
    assert res.grad_sup < 1e-10
    assert np.max(np.abs(res.U.values[-1])) == 0.0  # terminal condition exact


def test_resolvent_zero_drift_is_zero():
    grid = SpatialGrid(L=6.0, n=65, d=1)
    times = np.linspace(0.0, 1.0, 33)
    res = pde.solve_resolvent(lambda t, p: np.zeros_like(p), 2.0, grid, times)
    assert res.U.sup_norm() == 0.0


def test_resolvent_tanh_matches_crank_nicolson():
    grid = SpatialGrid(L=8.0, n=257, d=1)
    times = np.linspace(0.0, 1.0, 129)
    res = pde.solve_resolvent(_tanh_drift, 10.0, grid, times)
    xcn = np.linspace(-8.0, 8.0, 1025)
    tcn = np.linspace(0.0, 1.0, 513)
    vcn = crank_nicolson_1d(xcn, tcn, np.tanh(xcn), drift=np.tanh(xcn), lam=10.0)
    mask = np.abs(grid.axis) <= 5.0
    err = 0.0
    for i in (16, 64, 120):
        t = times[i]
        row = np.interp(grid.axis, xcn, vcn[np.argmin(np.abs(tcn - (1.0 - t)))])
        err = max(err, float(np.max(np.abs(res.U.values[i, :, 0] - row)[mask])))
    assert err < 1e-4


def test_resolvent_requires_positive_lambda():
    grid = SpatialGrid(L=6.0, n=65, d=1)
    with pytest.raises(DomainError):
        pde.solve_resolvent(_tanh_drift, 0.0, grid, np.linspace(0, 1, 9))


def test_calibrate_constant_drift_first_lambda():
    grid = SpatialGrid(L=6.0, n=65, d=1)
    times = np.linspace(0.0, 1.0, 33)

    def bconst(t, pts):
        out = np.zeros_like(pts)
        out[:, 0] = 0.7
        return out

    res = pde.calibrate_lambda(bconst, grid, times, lambdas=[1.0, 2.0, 4.0])
    assert res.lambda0 == 1.0  # gradient is identically zero


def test_calibrate_tanh_decreasing_table():
    grid = SpatialGrid(L=8.0, n=129, d=1)
    times = np.linspace(0.0, 1.0, 65)
    res = pde.calibrate_lambda(_tanh_drift, grid, times,
                               lambdas=[2.0 ** k for k in range(7)])
    sups = [s for _, s in res.table]
    assert all(b < a for a, b in zip(sups, sups[1:]))
    assert res.lambda0 <= 4.0


def test_calibrate_not_reached_carries_table():
    grid = SpatialGrid(L=8.0, n=129, d=1)
    times = np.linspace(0.0, 1.0, 65)

    def big(t, pts):
        out = np.zeros_like(pts)
        out[:, 0] = 6.0 * np.tanh(pts[:, 0])
        return out

    with pytest.raises(NotReached) as exc:
        pde.calibrate_lambda(big, grid, times, lambdas=[1.0])
    assert len(exc.value.table) == 1
    assert exc.value.table[0][1] > 0.5


# ---------------------------------------------------------------------------
# modulus measurement and mollified convergence


def test_measure_modulus_smooth_data_stable(grid1d):
    times = np.linspace(0.0, 0.5, 65)
    sol = pde.solve_mild(_sin_source(grid1d, times))
    hess = sol.u.hessian()[-1, :, 0, 0]
    m = mo.power_log_modulus(1.0, 0.5, 0.0, r0=0.5)
    rep = pde.measure_modulus(hess, grid1d, m, pair_count=500, seed=1, margin=8.2)
    assert np.isfinite(rep.c_hat)
    assert not rep.unbounded


def test_measure_modulus_constant_source_zero(grid1d):
    times = np.linspace(0.0, 0.5, 33)
    sol = pde.solve_mild(_const_field(grid1d, times, 1.0))
    hess = sol.u.hessian()[-1, :, 0, 0]
    m = mo.power_log_modulus(1.0, 0.5, 0.0, r0=0.5)
    rep = pde.measure_modulus(hess, grid1d, m, pair_count=200, seed=2, margin=8.2)
    assert rep.c_hat < 1e-6


def test_measure_modulus_holder_data_stable(grid1d):
    times = np.linspace(0.0, 0.5, 65)
    fvals = np.tile(np.abs(np.sin(grid1d.axis)) ** 0.5, (65, 1))
    sol = pde.solve_mild(GridFunction(grid1d, times, fvals))
    hess = sol.u.hessian()[-1, :, 0, 0]
    m = mo.power_log_modulus(1.1, 0.5, 0.0, r0=0.5)
    rep = pde.measure_modulus(hess, grid1d, m, pair_count=500, seed=3, margin=8.2)
    assert not rep.unbounded


def test_mollify_grid_lipschitz_bound():
    grid = SpatialGrid(L=6.0, n=513, d=1)
    f = np.sin(grid.axis)  # Lipschitz constant 1
    for n in (4, 8, 16):
        err = np.max(np.abs(pde.mollify_grid(f, grid, n) - f))
        assert err <= 1.0 / n


def test_mollify_grid_infinite_level_is_identity():
    grid = SpatialGrid(L=6.0, n=129, d=1)
    f = np.sin(grid.axis)
    assert np.array_equal(pde.mollify_grid(f, grid, float("inf")), f)


def test_mollified_convergence_table():
    grid = SpatialGrid(L=8.0, n=257, d=1)
    times = np.linspace(0.0, 0.25, 33)
    fvals = np.tile(np.abs(np.sin(grid.axis)) ** 0.5, (33, 1))
    f = GridFunction(grid, times, fvals)
    rows = pde.mollified_convergence(f, None, [4, 8, 16, float("inf")])
    c2 = [r[3] for r in rows]
    assert c2[0] > c2[1] > c2[2]          # eventually decreasing
    assert rows[-1][1] < 1e-12            # infinite level reproduces the solve
