import math

import numpy as np
import pytest

from dinidrift import pde, sde_flow as sf
from dinidrift.errors import DomainError, NoConvergence
from dinidrift.grids import GridFunction, SpatialGrid
from dinidrift.ito_tanaka import ItoTanakaMap, identity_map
from dinidrift.pde import ResolventSolution


def _sine_map(amplitude=0.3, L=8.0, n=1025):
    grid = SpatialGrid(L=L, n=n, d=1)
    times = np.linspace(0.0, 1.0, 9)
    vals = np.tile(amplitude * np.sin(grid.axis)[None, :, None], (9, 1, 1))
    U = GridFunction(grid, times, vals, vector=True)
    res = ResolventSolution(U=U, lam=2.0, grad_sup=abs(amplitude), solve_info=None)
    return ItoTanakaMap(res)


@pytest.fixture(scope="module")
def tanh_map():
    grid = SpatialGrid(L=8.0, n=257, d=1)
    times = np.linspace(0.0, 1.0, 65)

    def b(t, pts):
        out = np.zeros_like(pts)
        out[:, 0] = np.tanh(pts[:, 0])
        return out

    res = pde.solve_resolvent(b, 8.0, grid, times)
    assert res.grad_sup <= 0.5
    return ItoTanakaMap(res)


def test_identity_map_is_identity():
    grid = SpatialGrid(L=4.0, n=65, d=1)
    m = identity_map(grid, [0.0, 1.0])
    pts = np.array([[0.3], [-1.7]])
    assert np.array_equal(m.gamma(0.5, pts), pts)
    assert np.array_equal(m.gamma_inverse(0.5, pts), pts)
    bt, st = m.transformed_coeffs(0.5, pts)
    assert np.array_equal(bt, np.zeros((2, 1)))
    assert np.array_equal(st, np.tile(np.eye(1), (2, 1, 1)))


def test_sine_map_values_at_grid_points():
    m = _sine_map()
    # grid contains 0 exactly; U(t, 0) = 0
    assert m.gamma(0.5, [[0.0]])[0, 0] == pytest.approx(0.0, abs=1e-14)
    got = m.gamma(0.5, [[math.pi / 2]])[0, 0]
    assert got == pytest.approx(math.pi / 2 + 0.3, abs=1e-5)  # interpolation error
    inv = m.gamma_inverse(0.5, [[math.pi / 2 + 0.3]])[0, 0]
    assert inv == pytest.approx(math.pi / 2, abs=1e-5)


def test_round_trip_on_random_batch():
    m = _sine_map()
    rng = np.random.default_rng(0)
    Y = rng.uniform(-6.0, 6.0, size=(10000, 1))
    X = m.gamma_inverse(0.5, Y)
    assert np.max(np.abs(m.gamma(0.5, X) - Y)) < 1e-10 * (1.0 + np.max(np.abs(Y)))
    # inverse then forward, other direction
    Y2 = m.gamma(0.5, X)
    assert np.max(np.abs(m.gamma_inverse(0.5, Y2) - X)) < 1e-10


def test_transformed_coeffs_constant_drift_closed_form():
    # constant drift: U is spatially flat, so sigma = I and the transformed
    # drift is c (1 - e^{-lam (T - t)})
    grid = SpatialGrid(L=6.0, n=129, d=1)
    times = np.linspace(0.0, 1.0, 65)
    lam, c = 4.0, 0.7

    def bconst(t, pts):
        out = np.zeros_like(pts)
        out[:, 0] = c
        return out

    res = pde.solve_resolvent(bconst, lam, grid, times)
    m = ItoTanakaMap(res)
    t = 0.25
    bt, st = m.transformed_coeffs(t, [[0.4], [-2.0]])
    want = c * (1.0 - math.exp(-lam * (1.0 - t)))
    assert bt[:, 0] == pytest.approx(want, rel=1e-6)
    assert st[:, 0, 0] == pytest.approx(1.0, abs=1e-9)


def test_sigma_tilde_singular_values_within_band(tanh_map):
    rng = np.random.default_rng(5)
    Y = rng.uniform(-5.0, 5.0, size=(500, 1))
    _, st = tanh_map.transformed_coeffs(0.4, Y)
    sv = np.abs(st[:, 0, 0])
    assert np.all(sv >= 0.5) and np.all(sv <= 1.5)


def test_gradient_sandwich_finite_differences(tanh_map):
    rng = np.random.default_rng(6)
    Y = rng.uniform(-5.0, 5.0, size=(2000, 1))
    h = 1e-5
    gi = (tanh_map.gamma_inverse(0.3, Y + h) - tanh_map.gamma_inverse(0.3, Y - h)) / (2 * h)
    assert np.all(np.abs(gi) >= 2.0 / 3.0 - 0.05)
    assert np.all(np.abs(gi) <= 2.0 + 0.05)


def test_grad_bound_gate():
    with pytest.raises(DomainError):
        _sine_map(amplitude=0.8)  # gradient 0.8 > 1/2


def test_stale_bound_detected():
    # lie about the gradient bound: the fixed point diverges and must raise
    grid = SpatialGrid(L=8.0, n=513, d=1)
    times = np.linspace(0.0, 1.0, 5)
    vals = np.tile(1.6 * np.sin(grid.axis)[None, :, None], (5, 1, 1))
    U = GridFunction(grid, times, vals, vector=True)
    res = ResolventSolution(U=U, lam=2.0, grad_sup=0.3, solve_info=None)
    m = ItoTanakaMap(res)
    with pytest.raises(NoConvergence):
        m.gamma_inverse(0.5, np.linspace(-4, 4, 64)[:, None])


def test_equivalence_of_direct_and_transformed_paths(tanh_map):
    # one Euler path of the original SDE vs the map-inverse image of the
    # straightened SDE path, same increments: gap decays under dt halving
    spec = sf.tanh_drift(1.0)
    errs = []
    for dt in (2.0 ** -6, 2.0 ** -7, 2.0 ** -8):
        direct = sf.simulate_flow(spec, [[0.4]], 0.0, 1.0, dt, 32, 55)
        trans = sf.simulate_transformed_flow(tanh_map, [[0.4]], 0.0, 1.0, dt, 32, 55)
        errs.append(float(np.abs(direct.xs - trans.xs).max()))
    assert errs[0] / errs[1] > 1.3
    assert errs[1] / errs[2] > 1.3
