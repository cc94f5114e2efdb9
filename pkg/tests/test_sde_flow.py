import math

import numpy as np
import pytest

from dinidrift import mollifier, sde_flow as sf
from dinidrift.errors import ConfigError, MissingArray, SmoothnessRequired
from dinidrift.grids import SpatialGrid
from dinidrift.ito_tanaka import identity_map


# ---------------------------------------------------------------------------
# increments and determinism


def test_path_increments_reproducible():
    a = sf.path_increments(42, 7, 64, 1, 2.0 ** -6)
    b = sf.path_increments(42, 7, 64, 1, 2.0 ** -6)
    assert np.array_equal(a, b)
    c = sf.path_increments(42, 8, 64, 1, 2.0 ** -6)
    assert not np.array_equal(a, c)


def test_ensemble_pure_function_of_seed():
    spec = sf.sin_drift(1.0)
    e1 = sf.simulate_flow(spec, [[0.1]], 0.0, 0.5, 2.0 ** -6, 100, 9)
    e2 = sf.simulate_flow(spec, [[0.1]], 0.0, 0.5, 2.0 ** -6, 100, 9)
    assert np.array_equal(e1.xs, e2.xs)
    assert np.array_equal(e1.dB, e2.dB)


def test_threading_does_not_change_results():
    spec = sf.ou_drift(1.0)
    e1 = sf.simulate_flow(spec, [[0.3]], 0.0, 0.5, 2.0 ** -6, 700, 3, threads=1)
    e2 = sf.simulate_flow(spec, [[0.3]], 0.0, 0.5, 2.0 ** -6, 700, 3, threads=4)
    assert np.array_equal(e1.xs, e2.xs)


def test_initial_points_held_exactly():
    pts = np.array([[0.25], [-1.5]])
    ens = sf.simulate_flow(sf.tanh_drift(1.0), pts, 0.0, 0.25, 2.0 ** -5, 10, 1)
    assert np.array_equal(ens.xs[:, :, 0, :], np.broadcast_to(pts, (10, 2, 1)))


def test_nondivisible_dt_rejected():
    with pytest.raises(ConfigError):
        sf.simulate_flow(sf.zero_drift(1), [[0.0]], 0.0, 1.0, 0.3, 4, 0)


# ---------------------------------------------------------------------------
# exact schemes


def test_zero_drift_is_pure_brownian():
    # exact scheme: the state is the partial-sum walk (cumsum may reassociate
    # float adds, so compare to a few ulps rather than bitwise)
    ens = sf.simulate_flow(sf.zero_drift(1), [[0.5]], 0.0, 1.0, 2.0 ** -6, 50, 11)
    walk = 0.5 + np.cumsum(ens.dB[:, :, 0], axis=1)
    assert np.max(np.abs(ens.xs[:, 0, 1:, 0] - walk)) < 1e-13


def test_zero_drift_terminal_variance():
    ens = sf.simulate_flow(sf.zero_drift(1), [[0.0]], 0.0, 1.0, 2.0 ** -8, 10000, 42)
    v = ens.xs[:, 0, -1, 0].var(ddof=1)
    assert abs(v - 1.0) <= 3.0 * math.sqrt(2.0 / (10000 - 1))


def test_constant_drift_exact():
    c = 0.7
    ens = sf.simulate_flow(sf.constant_drift(c), [[0.2]], 0.0, 1.0, 2.0 ** -6, 20, 5)
    want = 0.2 + c * ens.times[1:] + np.cumsum(ens.dB[:, :, 0], axis=1)
    assert np.max(np.abs(ens.xs[:, 0, 1:, 0] - want)) < 1e-12


def test_ou_mean_matches_exact_euler_recursion():
    dt = 2.0 ** -8
    K = 256
    ens = sf.simulate_flow(sf.ou_drift(1.0), [[1.0]], 0.0, 1.0, dt, 10000, 7)
    est = ens.xs[:, 0, -1, 0].mean()
    exact_discrete = (1.0 - dt) ** K
    sd = ens.xs[:, 0, -1, 0].std(ddof=1) / math.sqrt(10000)
    assert abs(est - exact_discrete) <= 3.0 * sd
    # Euler's mean bias against the continuum is O(dt) with halving ratio ~ 2
    biases = [abs((1.0 - d) ** int(1.0 / d) - math.exp(-1.0))
              for d in (2.0 ** -6, 2.0 ** -7, 2.0 ** -8)]
    assert 1.7 <= biases[0] / biases[1] <= 2.6
    assert 1.7 <= biases[1] / biases[2] <= 2.6


# ---------------------------------------------------------------------------
# derivative flow


def test_derivative_flow_zero_drift_identity():
    ens = sf.simulate_flow(sf.zero_drift(1), [[0.0]], 0.0, 0.5, 2.0 ** -5, 8, 2)
    xi = sf.derivative_flow(ens, spec=sf.zero_drift(1), variant="direct")
    assert np.array_equal(xi[..., 0, 0], np.ones(xi.shape[:-2]))


def test_derivative_flow_ou_euler_and_exponential():
    dt = 2.0 ** -7
    ens = sf.simulate_flow(sf.ou_drift(1.0), [[1.0]], 0.0, 1.0, dt, 4, 3)
    xi_e = sf.derivative_flow(ens, spec=sf.ou_drift(1.0), method="euler")
    assert xi_e[0, 0, -1, 0, 0] == pytest.approx((1.0 - dt) ** 128, rel=1e-12)
    xi_x = sf.derivative_flow(ens, spec=sf.ou_drift(1.0), method="exponential")
    assert xi_x[0, 0, -1, 0, 0] == pytest.approx(math.exp(-1.0), rel=1e-12)


def test_derivative_flow_sin_euler_vs_exponential_pathwise():
    # for additive noise the variational equation is a pathwise ODE; Euler
    # matches the exponential-of-trapezoid representation to O(dt)
    spec = sf.sin_drift(1.0)
    gaps = []
    for dt in (2.0 ** -6, 2.0 ** -7, 2.0 ** -8):
        ens = sf.simulate_flow(spec, [[0.4]], 0.0, 1.0, dt, 16, 21)
        xi_e = sf.derivative_flow(ens, spec=spec, method="euler").copy()
        xi_x = sf.derivative_flow(ens, spec=spec, method="exponential")
        gaps.append(float(np.abs(xi_e - xi_x).max()))
    assert 1.5 <= gaps[0] / gaps[1] <= 2.6
    assert 1.5 <= gaps[1] / gaps[2] <= 2.6


def test_derivative_flow_transformed_identity_map():
    grid = SpatialGrid(L=6.0, n=65, d=1)
    m = identity_map(grid, np.linspace(0.0, 0.5, 17))
    ens = sf.simulate_transformed_flow(m, [[0.2]], 0.0, 0.5, 2.0 ** -5, 8, 4)
    xi = sf.derivative_flow(ens, tmap=m, variant="transformed")
    assert np.max(np.abs(xi[..., 0, 0] - 1.0)) < 1e-12


def test_derivative_flow_requires_smoothness():
    spec = sf.holder_drift(0.5)
    ens = sf.simulate_flow(spec, [[0.0]], 0.0, 0.25, 2.0 ** -5, 4, 1)
    with pytest.raises(SmoothnessRequired):
        sf.derivative_flow(ens, spec=spec, variant="direct")


def test_grad_required_before_moment():
    ens = sf.simulate_flow(sf.zero_drift(1), [[0.0]], 0.0, 0.25, 2.0 ** -5, 4, 1)
    with pytest.raises(MissingArray):
        ens.require_xi()


# ---------------------------------------------------------------------------
# transformed flow


def test_transformed_flow_identity_map_bitwise():
    grid = SpatialGrid(L=6.0, n=65, d=1)
    m = identity_map(grid, np.linspace(0.0, 0.5, 17))
    a = sf.simulate_flow(sf.zero_drift(1), [[0.2]], 0.0, 0.5, 2.0 ** -5, 64, 17)
    b = sf.simulate_transformed_flow(m, [[0.2]], 0.0, 0.5, 2.0 ** -5, 64, 17)
    assert np.array_equal(a.xs, b.xs)
    assert np.array_equal(a.dB, b.dB)


# ---------------------------------------------------------------------------
# inverse flow


def test_inverse_flow_zero_drift_exact():
    fwd = sf.simulate_flow(sf.zero_drift(1), [[0.4]], 0.0, 1.0, 2.0 ** -5, 16, 8)
    y = fwd.xs[:, 0, -1, :]
    for m in range(4):
        inv = sf.inverse_flow(sf.zero_drift(1), y[m], 0.0, 1.0, 2.0 ** -5, m + 1, 8)
        assert inv.xs[m, 0, -1, 0] == pytest.approx(0.4, abs=1e-12)


def test_inverse_flow_constant_drift_round_trip():
    spec = sf.constant_drift(0.7)
    fwd = sf.simulate_flow(spec, [[0.2]], 0.0, 1.0, 2.0 ** -5, 4, 8)
    inv = sf.inverse_flow(spec, [[0.0]], 0.0, 1.0, 2.0 ** -5, 4, 8)
    # X^{-1}(y) = y - cT - sum dB, exact: check against path 0's closed form
    want = -0.7 - fwd.dB[:, :, 0].sum(axis=1)
    assert np.max(np.abs(inv.xs[:, 0, -1, 0] - want)) < 1e-12


def test_inverse_flow_ou_round_trip_first_order():
    spec = sf.ou_drift(1.0)
    errs = []
    for dt in (2.0 ** -6, 2.0 ** -7, 2.0 ** -8):
        fwd = sf.simulate_flow(spec, [[0.8]], 0.0, 1.0, dt, 64, 12)
        y = fwd.xs[:, 0, -1, 0]
        inv = sf.inverse_flow(spec, [[0.0]], 0.0, 1.0, dt, 64, 12)
        # round trip through the stored inverse of each path's own terminal
        z = np.empty(64)
        for m in range(64):
            zi = sf.inverse_flow(spec, [[y[m]]], 0.0, 1.0, dt, m + 1, 12)
            z[m] = zi.xs[m, 0, -1, 0]
        errs.append(float(np.abs(z - 0.8).max()))
    assert errs[0] / errs[1] > 1.5
    assert errs[1] / errs[2] > 1.5


def test_inverse_flow_keep_path_flag():
    inv = sf.inverse_flow(sf.zero_drift(1), [[0.0]], 0.0, 0.5, 2.0 ** -5, 4, 8,
                          keep_path=False)
    assert inv.xs.shape[2] == 2


# ---------------------------------------------------------------------------
# mollified drift


def test_mollified_constant_exact():
    spec = sf.mollify_drift(sf.constant_drift(0.7), 4)
    assert spec.eval(0.0, np.array([[0.3]]))[0, 0] == pytest.approx(0.7, rel=1e-14)


def test_mollified_linear_exact_by_symmetry():
    spec = sf.mollify_drift(sf.ou_drift(1.0), 4)
    assert spec.eval(0.0, np.array([[0.3]]))[0, 0] == pytest.approx(-0.3, abs=1e-12)
    assert spec.grad(0.0, np.array([[0.3]]))[0, 0, 0] == pytest.approx(-1.0, abs=1e-5)
    assert spec.div(0.0, np.array([[0.3]]))[0] == pytest.approx(-1.0, abs=1e-5)


def test_mollified_abs_at_zero_matches_quadrature_oracle():
    base = sf.DriftSpec(eval=lambda t, X: np.abs(X), d=1, name="abs")
    spec = sf.mollify_drift(base, 4)
    Z, wq = mollifier.quadrature_nodes(4, 1)
    want = float(np.sum(wq * np.abs(Z[:, 0])))
    assert spec.eval(0.0, np.array([[0.0]]))[0, 0] == pytest.approx(want, rel=1e-12)
    assert want > 0.0


def test_mollified_sup_bound_never_grows():
    base = sf.holder_drift(0.5, scale=2.0)
    spec = sf.mollify_drift(base, 8)
    x = np.linspace(-3, 3, 301)[:, None]
    assert np.max(np.abs(spec.eval(0.0, x))) <= np.max(np.abs(base.eval(0.0, x))) + 1e-12


def test_mollified_2d_divergence_free_stays_divergence_free():
    spec = sf.mollify_drift(sf.divergence_free_2d(1.0), 4)
    pts = np.random.default_rng(0).uniform(-2, 2, size=(50, 2))
    assert np.max(np.abs(spec.div(0.0, pts))) < 1e-6


# ---------------------------------------------------------------------------
# Liouville determinant and cocycle


def test_liouville_zero_drift_exact():
    rep = sf.liouville_det(sf.zero_drift(1), [[0.3]], 0.0, 0.5, 2.0 ** -6, 8, 3)
    assert np.array_equal(rep.det_exp, np.ones_like(rep.det_exp))
    assert np.max(np.abs(rep.det_fd - 1.0)) < 1e-12


def test_liouville_ou_closed_form():
    rep = sf.liouville_det(sf.ou_drift(1.0), [[0.5]], 0.0, 0.5, 2.0 ** -8, 16, 9,
                           h_jacobian=1e-3)
    want = math.exp(-0.5)
    assert rep.det_exp[0, 0, -1] == pytest.approx(want, rel=1e-4)
    assert rep.rel_gap < 0.01
    assert np.all(rep.det_fd > 0.0)  # orientation preserved


def test_liouville_divergence_free_2d():
    rep = sf.liouville_det(sf.divergence_free_2d(1.0), [[0.3, -0.4]], 0.0, 0.5,
                           2.0 ** -10, 32, 13, h_jacobian=1e-3)
    assert np.array_equal(rep.det_exp, np.ones_like(rep.det_exp))
    assert np.max(np.abs(rep.det_fd[:, :, -1] - 1.0)) < 0.01


def test_liouville_requires_divergence():
    with pytest.raises(SmoothnessRequired):
        sf.liouville_det(sf.holder_drift(0.5), [[0.0]], 0.0, 0.5, 2.0 ** -6, 4, 3)


def test_cocycle_gap_decays_under_halving():
    gaps = [sf.cocycle_gap(sf.sin_drift(1.0), [[0.3]], 0.0, 0.4, 1.0, dt, 128, 77)
            for dt in (2.0 ** -5, 2.0 ** -6, 2.0 ** -7)]
    assert gaps[0] / gaps[1] >= 1.3
    assert gaps[1] / gaps[2] >= 1.3


def test_shared_noise_order_preservation():
    pts = np.array([[-0.5], [0.0], [0.5]])
    ens = sf.simulate_flow(sf.sin_drift(1.0), pts, 0.0, 1.0, 2.0 ** -7, 300, 11)
    diffs = np.diff(ens.xs[:, :, -1, 0], axis=1)
    assert np.all(diffs > 0.0)
