"""Euler-Maruyama simulation of drifted flows and their derived objects.

The flow X(s, t, x) solves dX = b(t, X) dt + dB with X(s, s, x) = x.  The
defining convention of an ensemble is that the Brownian increments are
shared across all initial points within a path: two-point statistics (flow
moduli, finite-difference Jacobians, order preservation) are meaningful only
under shared noise.  Per-path increment streams are derived from
(master seed, path index), so any path is reproducible bit-for-bit in
isolation and results are independent of chunking and worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import mollifier
from .errors import ConfigError, DomainError, MissingArray, SmoothnessRequired
from .ito_tanaka import ItoTanakaMap
from .moduli import Modulus

DEFAULT_CHUNK = 512  # paths per work unit; fixed so results ignore threading


@dataclass
class DriftSpec:
    """A bounded drift field with optional derivative data.

    eval maps (t, points (N, d)) -> (N, d).  div and grad are closed-form
    companions when the field is smooth; mollified specs get them from the
    mollifier quadrature instead.  n is the mollification level (0 means the
    field is used as given).
    """

    eval: Callable
    d: int = 1
    name: str = "custom"
    div: Optional[Callable] = None          # (t, X) -> (N,)
    grad: Optional[Callable] = None         # (t, X) -> (N, d, d)
    n: int = 0
    modulus: Optional[Modulus] = None
    sup_bound: Optional[float] = None

    def __call__(self, t, X):
        return self.eval(t, X)

    def require_grad(self):
        if self.grad is None:
            raise SmoothnessRequired(
                f"drift '{self.name}' has no gradient; mollify it (n >= 1) or "
                "provide a closed form")

    def require_div(self):
        if self.div is None:
            raise SmoothnessRequired(
                f"drift '{self.name}' has no divergence; mollify it or provide one")


# ---------------------------------------------------------------------------
# Drift catalog (closed forms used across experiments and tests)


def zero_drift(d: int = 1) -> DriftSpec:
    def ev(t, X):
        return np.zeros_like(X)

    def dv(t, X):
        return np.zeros(X.shape[0])

    def gr(t, X):
        return np.zeros((X.shape[0], d, d))

    return DriftSpec(eval=ev, d=d, name="zero", div=dv, grad=gr, sup_bound=0.0)


def constant_drift(c, d: int = 1) -> DriftSpec:
    cv = np.broadcast_to(np.asarray(c, dtype=float), (d,)).copy()

    def ev(t, X):
        return np.broadcast_to(cv, X.shape).copy()

    def dv(t, X):
        return np.zeros(X.shape[0])

    def gr(t, X):
        return np.zeros((X.shape[0], d, d))

    return DriftSpec(eval=ev, d=d, name="constant", div=dv, grad=gr,
                     sup_bound=float(np.linalg.norm(cv)))


def ou_drift(k: float = 1.0, d: int = 1) -> DriftSpec:
    """b(x) = -k x (unbounded, but exact for Euler oracles on bounded boxes)."""

    def ev(t, X):
        return -k * X

    def dv(t, X):
        return np.full(X.shape[0], -k * d)

    def gr(t, X):
        return np.broadcast_to(-k * np.eye(d), (X.shape[0], d, d)).copy()

    return DriftSpec(eval=ev, d=d, name="ou", div=dv, grad=gr)


def tanh_drift(scale: float = 1.0, d: int = 1) -> DriftSpec:
    def ev(t, X):
        return scale * np.tanh(X)

    def dv(t, X):
        return scale * np.sum(1.0 / np.cosh(X) ** 2, axis=-1)

    def gr(t, X):
        out = np.zeros((X.shape[0], d, d))
        idx = np.arange(d)
        out[:, idx, idx] = scale / np.cosh(X) ** 2
        return out

    return DriftSpec(eval=ev, d=d, name="tanh", div=dv, grad=gr, sup_bound=abs(scale) * d)


def sin_drift(scale: float = 1.0, d: int = 1) -> DriftSpec:
    def ev(t, X):
        return scale * np.sin(X)

    def dv(t, X):
        return scale * np.sum(np.cos(X), axis=-1)

    def gr(t, X):
        out = np.zeros((X.shape[0], d, d))
        idx = np.arange(d)
        out[:, idx, idx] = scale * np.cos(X)
        return out

    return DriftSpec(eval=ev, d=d, name="sin", div=dv, grad=gr, sup_bound=abs(scale))


def holder_drift(alpha: float = 0.5, scale: float = 1.0, cap: float = 1.0,
                 d: int = 1) -> DriftSpec:
    """b(x) = scale * sign(x) min(|x|, cap)^alpha per component.

    Bounded and Holder-alpha; not differentiable at 0, so no grad/div: the
    whole point is to exercise the mollified machinery.
    """
    if not (0.0 < alpha < 1.0):
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")

    def ev(t, X):
        return scale * np.sign(X) * np.minimum(np.abs(X), cap) ** alpha

    return DriftSpec(eval=ev, d=d, name="holder", sup_bound=abs(scale) * cap ** alpha)


def holder_sin_drift(alpha: float = 0.5, scale: float = 1.0, d: int = 1) -> DriftSpec:
    """b(x) = scale * |sin x|^alpha: bounded, Holder-alpha at the zeros of sin."""
    if not (0.0 < alpha < 1.0):
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")

    def ev(t, X):
        return scale * np.abs(np.sin(X)) ** alpha

    return DriftSpec(eval=ev, d=d, name="holder-sin", sup_bound=abs(scale))


def log_modulus_drift(C: float = 1.0, alpha: float = 3.0, r_cut: float = 0.25,
                      d: int = 1) -> DriftSpec:
    """b(x) = C sign(x) |log(min(|x|, r_cut))|^{-alpha} per component.

    Continuous with modulus of continuity ~ |log r|^{-alpha}: Dini iff
    alpha > 1, never Holder.
    """

    def ev(t, X):
        a = np.minimum(np.abs(X), r_cut)
        out = np.zeros_like(X)
        pos = a > 0.0
        out[pos] = C * np.abs(np.log(a[pos])) ** (-alpha)
        return np.sign(X) * out

    return DriftSpec(eval=ev, d=d, name="log-modulus",
                     sup_bound=C * abs(math.log(r_cut)) ** (-alpha))


def divergence_free_2d(scale: float = 1.0) -> DriftSpec:
    """b(x) = scale * (-tanh x2, tanh x1): smooth, bounded, div b = 0."""

    def ev(t, X):
        return scale * np.stack([-np.tanh(X[:, 1]), np.tanh(X[:, 0])], axis=-1)

    def dv(t, X):
        return np.zeros(X.shape[0])

    def gr(t, X):
        out = np.zeros((X.shape[0], 2, 2))
        out[:, 0, 1] = -scale / np.cosh(X[:, 1]) ** 2
        out[:, 1, 0] = scale / np.cosh(X[:, 0]) ** 2
        return out

    return DriftSpec(eval=ev, d=2, name="divfree", div=dv, grad=gr, sup_bound=scale * math.sqrt(2))


def mollify_drift(spec: DriftSpec, n: int, nodes_per_axis: int = 33,
                  shift=None) -> DriftSpec:
    """Smooth a drift by quadrature against the level-n mollifier.

    The smoothed field is sum_i w_i b(t, x - z_i) over fixed Gauss-Legendre
    nodes in the ball of radius 1/n with weights normalized to unit mass, so
    the sup bound never grows and constants are exact.  The gradient (and
    its trace, the divergence) comes from the mollifier-derivative rule.
    `shift` displaces the mollifier center, deliberately breaking symmetry.
    """
    Z, w = mollifier.quadrature_nodes(n, spec.d, nodes_per_axis, shift=shift)
    Zg, wg = mollifier.gradient_quadrature_nodes(n, spec.d, nodes_per_axis)
    base = spec.eval

    def ev(t, X):
        X = np.asarray(X, dtype=float)
        shifted = X[None, :, :] - Z[:, None, :]
        vals = base(t, shifted.reshape(-1, spec.d)).reshape(Z.shape[0], -1, spec.d)
        return np.einsum("k,knd->nd", w, vals)

    def gr(t, X):
        X = np.asarray(X, dtype=float)
        shifted = X[None, :, :] - Zg[:, None, :]
        vals = base(t, shifted.reshape(-1, spec.d)).reshape(Zg.shape[0], -1, spec.d)
        # d(b*rho)_i/dx_j = sum_k wg[k, j] * b_i(x - z_k)
        return np.einsum("kj,kni->nij", wg, vals)

    def dv(t, X):
        g = gr(t, X)
        return np.trace(g, axis1=-2, axis2=-1)

    return DriftSpec(eval=ev, d=spec.d, name=f"{spec.name}*rho_{n}",
                     div=dv, grad=gr, n=n, modulus=spec.modulus,
                     sup_bound=spec.sup_bound)


# ---------------------------------------------------------------------------
# Ensembles


@dataclass
class FlowEnsemble:
    """Trajectories indexed (path, initial point, step, component).

    dB holds the per-path increments (shared across initial points of the
    path); xs the states; ys the pre-transform states when the ensemble was
    produced by the straightened SDE; xi the derivative flow when attached.
    """

    seed: int
    s: float
    dt: float
    times: np.ndarray            # (K+1,)
    points: np.ndarray           # (P, d)
    xs: np.ndarray               # (M, P, K+1, d)
    dB: np.ndarray               # (M, K, d)
    kind: str = "direct"
    ys: Optional[np.ndarray] = None
    xi: Optional[np.ndarray] = None      # (M, P, K+1, d, d)

    @property
    def M(self) -> int:
        return self.xs.shape[0]

    @property
    def P(self) -> int:
        return self.xs.shape[1]

    @property
    def K(self) -> int:
        return self.dB.shape[1]

    @property
    def d(self) -> int:
        return self.xs.shape[-1]

    def require_xi(self) -> np.ndarray:
        if self.xi is None:
            raise MissingArray("ensemble has no derivative-flow array; run derivative_flow")
        return self.xi


def path_increments(seed: int, path_index: int, K: int, d: int, dt: float) -> np.ndarray:
    """The (K, d) increment block of one path; a pure function of its arguments."""
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(path_index,))
    rng = np.random.default_rng(ss)
    return rng.standard_normal((K, d)) * math.sqrt(dt)


def _increments_block(seed: int, first: int, count: int, K: int, d: int,
                      dt: float) -> np.ndarray:
    out = np.empty((count, K, d))
    for i in range(count):
        out[i] = path_increments(seed, first + i, K, d, dt)
    return out


def _steps_for(s: float, T: float, dt: float) -> int:
    span = T - s
    if span <= 0:
        raise ConfigError(f"need T > s, got s={s}, T={T}")
    K = span / dt
    Kr = round(K)
    if Kr < 1 or abs(K - Kr) > 1e-9 * max(1.0, Kr):
        raise ConfigError(f"dt={dt} does not divide T - s = {span}")
    return int(Kr)


def _sanity_check_increments(dB: np.ndarray, dt: float):
    n = dB.size
    if n < 64:
        return
    mean = float(dB.mean())
    var = float(dB.var())
    if abs(mean) > 6.0 * math.sqrt(dt / n):
        raise RuntimeError(f"increment mean {mean:.3e} is wildly off; RNG misuse?")
    if abs(var - dt) > 6.0 * dt * math.sqrt(2.0 / n):
        raise RuntimeError(f"increment variance {var:.3e} vs dt={dt}; RNG misuse?")


def _run_chunked(worker, M: int, threads: int = 1, chunk: int = DEFAULT_CHUNK):
    """Apply worker(first, count) over fixed path chunks; assemble in order.

    The chunk boundaries do not depend on `threads`, so outputs are
    bit-identical for any worker count.
    """
    ranges = [(c, min(chunk, M - c)) for c in range(0, M, chunk)]
    if threads > 1 and len(ranges) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(lambda rc: worker(*rc), ranges))
    else:
        parts = [worker(*rc) for rc in ranges]
    return parts


def simulate_flow(spec: DriftSpec, points, s: float, T: float, dt: float,
                  M: int, seed: int, threads: int = 1) -> FlowEnsemble:
    """Euler-Maruyama flow ensemble from a list of initial points.

    X_{k+1} = X_k + b(t_k, X_k) dt + dB_k with dB shared across the initial
    points of each path.  dt must divide T - s exactly.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    P, d = points.shape
    if d != spec.d:
        raise ConfigError(f"points dimension {d} != drift dimension {spec.d}")
    K = _steps_for(s, T, dt)
    times = s + dt * np.arange(K + 1)

    def worker(first, count):
        dB = _increments_block(seed, first, count, K, d, dt)
        xs = np.empty((count, P, K + 1, d))
        X = np.broadcast_to(points, (count, P, d)).copy()
        xs[:, :, 0] = X
        for k in range(K):
            t = times[k]
            b = spec.eval(t, X.reshape(-1, d)).reshape(count, P, d)
            X = X + b * dt + dB[:, None, k, :]
            xs[:, :, k + 1] = X
        return xs, dB

    parts = _run_chunked(worker, M, threads)
    xs = np.concatenate([p[0] for p in parts], axis=0)
    dB = np.concatenate([p[1] for p in parts], axis=0)
    _sanity_check_increments(dB, dt)
    return FlowEnsemble(seed=seed, s=s, dt=dt, times=times, points=points,
                        xs=xs, dB=dB, kind="direct")


def simulate_transformed_flow(tmap: ItoTanakaMap, points, s: float, T: float,
                              dt: float, M: int, seed: int,
                              threads: int = 1) -> FlowEnsemble:
    """Simulate the straightened SDE and pull the flow back through the map.

    Y starts at gamma(s, x) and follows the Lipschitz coefficients; the
    returned xs hold gamma^{-1}(t_k, Y_k), so with the same seed the ensemble
    is directly comparable to simulate_flow of the original drift.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    P, d = points.shape
    if d != tmap.d:
        raise ConfigError(f"points dimension {d} != map dimension {tmap.d}")
    K = _steps_for(s, T, dt)
    times = s + dt * np.arange(K + 1)

    def worker(first, count):
        dB = _increments_block(seed, first, count, K, d, dt)
        xs = np.empty((count, P, K + 1, d))
        ys = np.empty((count, P, K + 1, d))
        Y = tmap.gamma(s, np.broadcast_to(points, (count, P, d)).reshape(-1, d))
        Xinv = np.broadcast_to(points, (count, P, d)).reshape(-1, d).copy()
        ys[:, :, 0] = Y.reshape(count, P, d)
        xs[:, :, 0] = Xinv.reshape(count, P, d)
        for k in range(K):
            t = times[k]
            bt, st = tmap.transformed_coeffs(t, Y, x_inv=Xinv)
            incr = np.einsum("nij,nj->ni", st,
                             np.repeat(dB[:, k, :], P, axis=0))
            Y = Y + bt * dt + incr
            Xinv = tmap.gamma_inverse(times[k + 1], Y, x0=Xinv)
            ys[:, :, k + 1] = Y.reshape(count, P, d)
            xs[:, :, k + 1] = Xinv.reshape(count, P, d)
        return xs, ys, dB

    parts = _run_chunked(worker, M, threads)
    xs = np.concatenate([p[0] for p in parts], axis=0)
    ys = np.concatenate([p[1] for p in parts], axis=0)
    dB = np.concatenate([p[2] for p in parts], axis=0)
    _sanity_check_increments(dB, dt)
    return FlowEnsemble(seed=seed, s=s, dt=dt, times=times, points=points,
                        xs=xs, dB=dB, kind="transformed", ys=ys)


# ---------------------------------------------------------------------------
# Derivative flow


def derivative_flow(ensemble: FlowEnsemble, spec: Optional[DriftSpec] = None,
                    tmap: Optional[ItoTanakaMap] = None,
                    variant: str = "direct", method: str = "euler") -> np.ndarray:
    """Integrate the linear variational system along stored trajectories.

    variant="direct": d xi = grad b(t, X) xi dt along xs (the additive noise
    differentiates away); needs a differentiable drift.  variant=
    "transformed": the straightened system's matrix SDE along ys, with both
    the damped-gradient dt term and the second-derivative noise term.
    method="exponential" (d = 1 only) uses the pathwise exponential formula
    with trapezoidal quadrature of the dt integrand and left-point noise
    sums.  The result is attached to the ensemble and returned.
    """
    M, P, Kp1, d = ensemble.xs.shape
    K = Kp1 - 1
    dt = ensemble.dt
    if variant == "direct":
        if spec is None:
            raise DomainError("direct variant needs the drift spec")
        spec.require_grad()
        if spec.n == 0 and spec.grad is None:
            raise SmoothnessRequired("unmollified drift without closed-form gradient")
        A = np.empty((M, P, K + 1, d, d))
        for k in range(K + 1):
            t = ensemble.times[k]
            A[:, :, k] = spec.grad(t, ensemble.xs[:, :, k].reshape(-1, d)).reshape(M, P, d, d)
        if method == "exponential":
            if d != 1:
                raise DomainError("exponential formula is implemented for d = 1")
            a = A[..., 0, 0]
            integral = np.zeros((M, P, K + 1))
            integral[:, :, 1:] = np.cumsum(0.5 * (a[:, :, :-1] + a[:, :, 1:]) * dt, axis=-1)
            xi = np.exp(integral)[..., None, None]
        else:
            xi = np.empty((M, P, K + 1, d, d))
            xi[:, :, 0] = np.eye(d)
            cur = xi[:, :, 0].copy()
            for k in range(K):
                cur = cur + dt * np.einsum("mpij,mpjq->mpiq", A[:, :, k], cur)
                xi[:, :, k + 1] = cur
    elif variant == "transformed":
        if tmap is None:
            raise DomainError("transformed variant needs the map")
        if ensemble.ys is None:
            raise MissingArray("ensemble has no transformed trajectories")
        xi = _transformed_derivative_flow(ensemble, tmap, method)
    else:
        raise DomainError(f"unknown variant '{variant}'")
    ensemble.xi = xi
    return xi


def _transformed_derivative_flow(ensemble: FlowEnsemble, tmap: ItoTanakaMap,
                                 method: str) -> np.ndarray:
    M, P, Kp1, d = ensemble.xs.shape
    K = Kp1 - 1
    dt = ensemble.dt
    lam = tmap.lam
    A1 = np.empty((M, P, K + 1, d, d))
    A2 = np.empty((M, P, K + 1, d, d, d))  # [.., i, k(noise), m]
    for k in range(K + 1):
        t = ensemble.times[k]
        Y = ensemble.ys[:, :, k].reshape(-1, d)
        Xinv = ensemble.xs[:, :, k].reshape(-1, d)
        gU = tmap.grad_U_at(t, Xinv)
        hU = tmap.hess_U_at(t, Xinv)
        gginv = np.linalg.inv(np.eye(d) + gU)
        A1[:, :, k] = (lam * np.einsum("nim,nml->nil", gU, gginv)).reshape(M, P, d, d)
        A2[:, :, k] = np.einsum("nikm,nml->nikl", hU, gginv).reshape(M, P, d, d, d)
    if method == "exponential":
        if d != 1:
            raise DomainError("exponential formula is implemented for d = 1")
        a1 = A1[..., 0, 0]
        a2 = A2[..., 0, 0, 0]
        drift_term = a1 - 0.5 * a2 ** 2
        integral = np.zeros((M, P, K + 1))
        integral[:, :, 1:] = np.cumsum(
            0.5 * (drift_term[:, :, :-1] + drift_term[:, :, 1:]) * dt, axis=-1)
        noise = np.zeros((M, P, K + 1))
        noise[:, :, 1:] = np.cumsum(a2[:, :, :-1] * ensemble.dB[:, None, :, 0], axis=-1)
        return np.exp(integral + noise)[..., None, None]
    xi = np.empty((M, P, K + 1, d, d))
    xi[:, :, 0] = np.eye(d)
    cur = xi[:, :, 0].copy()
    for k in range(K):
        drift = np.einsum("mpij,mpjq->mpiq", A1[:, :, k], cur)
        noise = np.einsum("mpikl,mplq,mk->mpiq", A2[:, :, k], cur,
                          ensemble.dB[:, k, :])
        cur = cur + drift * dt + noise
        xi[:, :, k + 1] = cur
    return xi


# ---------------------------------------------------------------------------
# Inverse flow, Liouville determinant, cocycle defect


def inverse_flow(spec: DriftSpec, points, s: float, t: float, dt: float,
                 M: int, seed: int, threads: int = 1,
                 keep_path: bool = True) -> FlowEnsemble:
    """Pathwise inverse X^{-1}(s, t, .) by time reversal.

    Runs Euler with drift -b over the reversed clock, consuming the forward
    increments of [s, t] in reverse order and negated; b receives the earlier
    endpoint of the original forward step (time convention recorded here:
    step j of the reversed run uses b(t - (j+1) dt, .)).  For zero and
    constant drifts the round trip X(X^{-1}(y)) = y is exact.  With
    keep_path=False only the first and last slices are stored (the step axis
    has length 2), which keeps sweeps over many terminal times affordable.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    P, d = points.shape
    K = _steps_for(s, t, dt)
    times = s + dt * np.arange(K + 1)  # reporting clock tau = times - s

    def worker(first, count):
        dB = _increments_block(seed, first, count, K, d, dt)
        xs = np.empty((count, P, K + 1 if keep_path else 2, d))
        Z = np.broadcast_to(points, (count, P, d)).copy()
        xs[:, :, 0] = Z
        for j in range(K):
            t_phys = t - (j + 1) * dt
            b = spec.eval(t_phys, Z.reshape(-1, d)).reshape(count, P, d)
            Z = Z - b * dt - dB[:, None, K - 1 - j, :]
            if keep_path:
                xs[:, :, j + 1] = Z
        if not keep_path:
            xs[:, :, 1] = Z
        return xs, dB

    parts = _run_chunked(worker, M, threads)
    xs = np.concatenate([p[0] for p in parts], axis=0)
    dB = np.concatenate([p[1] for p in parts], axis=0)
    return FlowEnsemble(seed=seed, s=s, dt=dt,
                        times=times if keep_path else np.array([s, t]),
                        points=points, xs=xs, dB=dB, kind="inverse")


@dataclass
class LiouvilleReport:
    det_exp: np.ndarray   # (M, P, K+1): exp of the pathwise divergence integral
    det_fd: np.ndarray    # (M, P, K+1): finite-difference Jacobian determinant
    rel_gap: float        # max relative gap at the final time
    h_jacobian: float


def liouville_det(spec: DriftSpec, points, s: float, t: float, dt: float,
                  M: int, seed: int, h_jacobian: Optional[float] = None,
                  threads: int = 1) -> LiouvilleReport:
    """Jacobian determinant of the flow, two independent ways.

    The exp route integrates div b along each anchor trajectory with the
    trapezoid rule; the finite-difference route simulates a +/- h stencil of
    initial points under the same increments and takes the determinant of the
    column differences.  Their relative gap at the final time is the check of
    the divergence identity.
    """
    spec.require_div()
    points = np.atleast_2d(np.asarray(points, dtype=float))
    P, d = points.shape
    if h_jacobian is None:
        h_jacobian = max(1e-4, 10.0 * dt)
    stencil = [points]
    for ax in range(d):
        e = np.zeros(d)
        e[ax] = h_jacobian
        stencil.extend([points + e, points - e])
    allpts = np.concatenate(stencil, axis=0)  # (P(1+2d), d)
    ens = simulate_flow(spec, allpts, s, t, dt, M, seed, threads=threads)
    K = ens.K
    anchors = ens.xs[:, :P]
    divs = np.empty((M, P, K + 1))
    for k in range(K + 1):
        divs[:, :, k] = spec.div(ens.times[k], anchors[:, :, k].reshape(-1, d)).reshape(M, P)
    integral = np.zeros((M, P, K + 1))
    integral[:, :, 1:] = np.cumsum(0.5 * (divs[:, :, :-1] + divs[:, :, 1:]) * dt, axis=-1)
    det_exp = np.exp(integral)
    jac = np.empty((M, P, K + 1, d, d))
    for ax in range(d):
        plus = ens.xs[:, (1 + 2 * ax) * P:(2 + 2 * ax) * P]
        minus = ens.xs[:, (2 + 2 * ax) * P:(3 + 2 * ax) * P]
        jac[..., ax] = (plus - minus) / (2.0 * h_jacobian)
    det_fd = np.linalg.det(jac)
    gap = np.abs(det_fd[:, :, -1] - det_exp[:, :, -1]) / np.abs(det_exp[:, :, -1])
    return LiouvilleReport(det_exp=det_exp, det_fd=det_fd,
                           rel_gap=float(gap.max()), h_jacobian=h_jacobian)


def cocycle_gap(spec: DriftSpec, x, s: float, r_target: float, t: float,
                dt: float, M: int, seed: int) -> float:
    """Mean defect of the two-stage composition against the one-shot flow.

    The intermediate time is snapped to the half-step r = s + (m + 1/2) dt,
    where the direct and composed runs genuinely discretize the same
    Brownian path on offset grids: a composition restarted on the aligned
    grid would agree bit-for-bit and test nothing.  Increments are generated
    at resolution dt/2 and pair-summed for full steps.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    P, d = x.shape
    K = _steps_for(s, t, dt)
    m = min(max(int((r_target - s) / dt), 0), K - 1)
    gaps = np.empty(M)
    half = dt / 2.0
    for i in range(M):
        fine = path_increments(seed, i, 2 * K, d, half)
        full = fine[0::2] + fine[1::2]
        # one-shot run on the aligned grid
        X = x.copy()
        for k in range(K):
            X = X + spec.eval(s + k * dt, X) * dt + full[k]
        direct = X
        # leg 1: m full steps, then a half step to r
        Z = x.copy()
        for k in range(m):
            Z = Z + spec.eval(s + k * dt, Z) * dt + full[k]
        Z = Z + spec.eval(s + m * dt, Z) * half + fine[2 * m]
        # leg 2: offset full steps from r, final half step to t
        r = s + (m + 0.5) * dt
        for j in range(K - m - 1):
            incr = fine[2 * m + 1 + 2 * j] + fine[2 * m + 2 + 2 * j]
            Z = Z + spec.eval(r + j * dt, Z) * dt + incr
        Z = Z + spec.eval(t - half, Z) * half + fine[2 * K - 1]
        gaps[i] = np.max(np.linalg.norm(direct - Z, axis=-1))
    return float(gaps.mean())
