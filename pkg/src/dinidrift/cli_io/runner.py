"""Experiment dispatch and deterministic artifact serialization.

Every data artifact is CSV (RFC-style quoting, '.' decimal, LF endings) or
JSON; floats are written with repr so reruns with the same config and seed
produce byte-identical files regardless of worker count.  Wall-clock timing
lives only in the run manifest, never in data files.  Each output file
starts with a comment line carrying the config hash, and the manifest lists
the sha256 of every file it owns.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .. import __version__
from .. import moduli, monte_carlo, pde, sde_flow, transport
from ..errors import (DinidriftError, NoContraction, NonFinite, NotReached,
                      ValidationError)
from .config import (ExperimentConfig, build_drift, build_grid, build_modulus,
                     build_source, build_times, build_u0, config_hash)


@dataclass
class RunResult:
    status: int          # 0 ok, 3 numeric failure (details in summary)
    out_dir: str
    files: list
    message: str = ""


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


class _Writer:
    def __init__(self, out_dir: Path, cfg: ExperimentConfig):
        self.out_dir = out_dir
        self.cfg = cfg
        self.hash = config_hash(cfg)
        self.files = []

    def csv(self, name: str, columns, rows):
        path = self.out_dir / name
        with open(path, "w", newline="\n") as fh:
            fh.write(f"# dinidrift kind={self.cfg.kind} config={self.hash} seed={self.cfg.seed}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(columns)
            for row in rows:
                w.writerow([_fmt(v) for v in row])
        self.files.append(name)
        return path

    def json(self, name: str, payload: dict):
        path = self.out_dir / name
        doc = {"kind": self.cfg.kind, "config": self.hash, "seed": self.cfg.seed}
        doc.update(payload)
        with open(path, "w") as fh:
            json.dump(doc, fh, sort_keys=True, indent=2)
            fh.write("\n")
        self.files.append(name)
        return path

    def manifest(self, wall_time: float, status: int):
        hashes = {}
        for name in self.files:
            digest = hashlib.sha256((self.out_dir / name).read_bytes()).hexdigest()
            hashes[name] = digest
        doc = {
            "config_hash": self.hash,
            "config": self.cfg.as_dict(),
            "seed": self.cfg.seed,
            "version": __version__,
            "status": status,
            "wall_time_s": wall_time,
            "files": hashes,
        }
        with open(self.out_dir / "run_manifest.json", "w") as fh:
            json.dump(doc, fh, sort_keys=True, indent=2)
            fh.write("\n")


def run_experiment(cfg: ExperimentConfig, threads: int = 1,
                   base_dir=None) -> RunResult:
    """Dispatch a validated config to its owning module and write artifacts.

    Numeric failures that still produce a meaningful report (a non-Dini
    modulus, an unreached calibration target) write their artifacts and
    return status 3; hard errors propagate as exceptions.
    """
    base = Path(base_dir if base_dir is not None
                else os.environ.get("DINIDRIFT_OUTDIR", "."))
    out_dir = base / cfg.output_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    w = _Writer(out_dir, cfg)
    t0 = time.perf_counter()
    status = _DISPATCH[cfg.kind](cfg, w, threads)
    w.manifest(time.perf_counter() - t0, status)
    return RunResult(status=status, out_dir=str(out_dir),
                     files=w.files + ["run_manifest.json"])


# ---------------------------------------------------------------------------
# Experiment implementations


def _grid_norms_by_time(u):
    g = u.gradient()
    h = u.hessian()
    flat = lambda a: np.abs(a).reshape(a.shape[0], -1).max(axis=1)
    return flat(u.values), flat(g), flat(h)


def _build_pde_drift_field(cfg: ExperimentConfig, grid, times):
    name, scale = cfg.pde.g, cfg.pde.g_scale
    from ..grids import GridFunction
    if name == "zero":
        return None
    if name == "constant":
        spec = sde_flow.constant_drift(scale, grid.d)
    elif name == "tanh":
        spec = sde_flow.tanh_drift(scale, grid.d)
    elif name == "sin":
        spec = sde_flow.sin_drift(scale, grid.d)
    elif name == "ou":
        spec = sde_flow.ou_drift(scale, grid.d)
    else:
        raise ValidationError("pde.g", f"drift {name!r} is not usable as a PDE coefficient")
    vals = pde.sample_drift(spec.eval, grid, times)
    return GridFunction(grid, times, vals, vector=True)


def _run_pde_solve(cfg, w, threads):
    grid = build_grid(cfg)
    times = build_times(cfg)
    f = build_source(cfg.pde.f, cfg.pde.f_scale, grid, times)
    g = _build_pde_drift_field(cfg, grid, times)
    sol = pde.solve_mild(f, g)
    c0, c1, c2 = _grid_norms_by_time(sol.u)
    w.csv("pde_norms.csv", ["t", "sup_u", "sup_grad", "sup_hess"],
          [(t, a, b, c) for t, a, b, c in zip(times, c0, c1, c2)])
    if grid.d == 1:
        rows = [(x, u) for x, u in zip(grid.axis, sol.u.values[-1])]
        w.csv("pde_solution.csv", ["x", "u_final"], rows)
    else:
        mesh = grid.meshgrid()
        rows = [(x1, x2, u) for x1, x2, u in zip(
            mesh[0].ravel(), mesh[1].ravel(), sol.u.values[-1].ravel())]
        w.csv("pde_solution.csv", ["x1", "x2", "u_final"], rows)
    w.json("summary.json", {
        "iterations": sol.iterations, "subintervals": sol.subintervals,
        "residual": sol.residual,
        "final_contraction_ratio": sol.contraction_ratios[-1] if sol.contraction_ratios else None})
    return 0


def _run_lambda_sweep(cfg, w, threads):
    grid = build_grid(cfg)
    times = build_times(cfg)
    spec = build_drift(cfg)
    status = 0
    try:
        res = pde.calibrate_lambda(spec.eval, grid, times, lambdas=cfg.mc.lambdas,
                                   threads=threads)
        table, lambda0, slope = res.table, res.lambda0, res.slope
    except NotReached as e:
        table, lambda0, slope = e.table, None, float("nan")
        status = 3
    w.csv("lambda_decay.csv", ["lambda", "grad_sup"], table)
    w.json("summary.json", {"lambda0": lambda0, "slope": slope,
                            "target": 0.5, "reached": status == 0})
    return status


def _run_flow_sim(cfg, w, threads):
    grid = build_grid(cfg)
    spec = build_drift(cfg)
    pts = np.zeros((1, grid.d))
    ens = sde_flow.simulate_flow(spec, pts, cfg.time.s, cfg.time.T, cfg.time.dt,
                                 cfg.mc.M, cfg.seed, threads=threads)
    rows = []
    for k in range(ens.K + 1):
        slab = ens.xs[:, 0, k, :]
        mean = slab.mean(axis=0)
        std = slab.std(axis=0, ddof=1) if ens.M > 1 else np.zeros(grid.d)
        rows.append((0, k, ens.times[k], *mean, *std))
    cols = ["point", "step", "t"] + [f"mean_{i}" for i in range(grid.d)] \
        + [f"std_{i}" for i in range(grid.d)]
    w.csv("flow_summary.csv", cols, rows)
    if cfg.output.full_paths:
        rows = []
        for m in range(ens.M):
            for k in range(ens.K + 1):
                rows.append((m, 0, k, ens.times[k], *ens.xs[m, 0, k]))
        w.csv("flow_paths.csv",
              ["path", "point", "step", "t"] + [f"x_{i}" for i in range(grid.d)], rows)
    w.json("summary.json", {"M": ens.M, "steps": ens.K,
                            "terminal_mean": [float(v) for v in ens.xs[:, 0, -1].mean(axis=0)],
                            "terminal_var": [float(v) for v in ens.xs[:, 0, -1].var(axis=0)]})
    return 0


def _run_flow_modulus(cfg, w, threads):
    grid = build_grid(cfg)
    spec = build_drift(cfg)
    ks = [int(round(-np.log2(r))) for r in cfg.mc.separations]
    pts = monte_carlo.separation_ladder(np.zeros(grid.d), ks, d=grid.d)
    ens = sde_flow.simulate_flow(spec, pts, cfg.time.s, cfg.time.T, cfg.time.dt,
                                 cfg.mc.M, cfg.seed, threads=threads)
    has_grad = spec.grad is not None
    if has_grad:
        sde_flow.derivative_flow(ens, spec=spec, variant="direct")
    rows = []
    for j in range(1, ens.P):
        r = float(np.linalg.norm(ens.points[j] - ens.points[0]))
        est = monte_carlo.moment_sup(ens, "increment", cfg.mc.p, point=j, other=0)
        rows.append(("increment", cfg.mc.p, r, est.estimate, est.ci_half,
                     cfg.mc.M, cfg.seed))
        if has_grad:
            estg = monte_carlo.moment_sup(ens, "grad_increment", cfg.mc.p,
                                          point=j, other=0)
            rows.append(("grad_increment", cfg.mc.p, r, estg.estimate,
                         estg.ci_half, cfg.mc.M, cfg.seed))
    w.csv("moments.csv", ["quantity", "p", "r", "estimate", "ci", "M", "seed"], rows)
    fit = monte_carlo.modulus_regression(ens, "increment", cfg.mc.p, model="power")
    payload = {"power_exponent": fit.exponent, "power_residual": fit.residual,
               "degenerate": fit.degenerate}
    if has_grad:
        gfit = monte_carlo.modulus_regression(ens, "grad", cfg.mc.p, model="power")
        payload["grad_power_exponent"] = gfit.exponent
    w.json("summary.json", payload)
    return 0


def _run_mollify_convergence(cfg, w, threads):
    grid = build_grid(cfg)
    if cfg.pde.target == "pde":
        times = build_times(cfg)
        f = build_source(cfg.pde.f, cfg.pde.f_scale, grid, times)
        g = _build_pde_drift_field(cfg, grid, times)
        rows = pde.mollified_convergence(f, g, list(cfg.mc.n_list))
        w.csv("mollify_errors.csv", ["n", "err_c0", "err_c1", "err_c2"], rows)
        w.json("summary.json", {"target": "pde",
                                "decreasing": all(b[1] <= a[1] for a, b in zip(rows, rows[1:]))})
        return 0
    spec = build_drift(cfg)
    pts = np.zeros((1, grid.d))
    rows = monte_carlo.convergence_study(
        spec, cfg.mc.n_list, pts, cfg.time.s, cfg.time.T, cfg.time.dt,
        cfg.mc.M, cfg.seed, p=cfg.mc.p, threads=threads)
    w.csv("mollify_errors.csv", ["n", "err_flow", "err_grad"],
          [(r.n, r.err_flow, r.err_grad) for r in rows])
    errs = [r.err_flow for r in rows]
    w.json("summary.json", {"target": "flow",
                            "decreasing": all(b <= a for a, b in zip(errs, errs[1:]))})
    return 0


def _run_transport(cfg, w, threads):
    grid = build_grid(cfg)
    spec = build_drift(cfg)
    u0 = build_u0(cfg)
    sol = transport.solve_transport(spec, u0, grid, cfg.time.T, cfg.time.dt,
                                    cfg.mc.M, cfg.seed, threads=threads)
    K = sol.times.size - 1
    snaps = sorted({0, K // 2, K})
    rows = []
    if grid.d == 1:
        for k in snaps:
            um = sol.u[:, k].mean(axis=0)
            for x, v, v0 in zip(grid.axis, um, sol.u[0, k]):
                rows.append((sol.times[k], x, v, v0))
        w.csv("u_snapshots.csv", ["t", "x", "u_mean", "u_path0"], rows)
    else:
        for k in snaps:
            um = sol.u[:, k].mean(axis=0)
            mesh = grid.meshgrid()
            for x1, x2, v in zip(mesh[0].ravel(), mesh[1].ravel(), um.ravel()):
                rows.append((sol.times[k], x1, x2, v))
        w.csv("u_snapshots.csv", ["t", "x1", "x2", "u_mean"], rows)
    # range bound is over the datum as a function (X^{-1} leaves the grid),
    # so probe u0 densely over the reachable region
    probe = np.linspace(-grid.L - 10.0, grid.L + 10.0, 20001)
    pts = np.zeros((probe.size, grid.d))
    pts[:, 0] = probe
    u0_vals = np.asarray(u0(pts), dtype=float)
    w.json("summary.json", {
        "u_min": float(sol.u.min()), "u_max": float(sol.u.max()),
        "u0_min": float(u0_vals.min()), "u0_max": float(u0_vals.max()),
        "range_preserved": bool(sol.u.min() >= u0_vals.min() - 1e-5
                                and sol.u.max() <= u0_vals.max() + 1e-5)})
    return 0


def _run_weak_residual(cfg, w, threads):
    grid = build_grid(cfg)
    spec = build_drift(cfg)
    spec.require_div()
    u0 = build_u0(cfg)
    sol = transport.solve_transport(spec, u0, grid, cfg.time.T, cfg.time.dt,
                                    cfg.mc.M, cfg.seed, threads=threads)
    test = transport.bump_test_function(cfg.transport.phi_center,
                                        cfg.transport.phi_width, d=grid.d)
    res = transport.weak_residual(sol, test)
    rows = []
    for m in range(res.residuals.shape[0]):
        for k in range(res.residuals.shape[1]):
            rows.append((m, res.times[k], res.residuals[m, k]))
    w.csv("residuals.csv", ["path", "t", "residual"], rows)
    w.json("summary.json", {
        "mean_final": float(res.mean[-1]), "ci_final": float(res.ci_half[-1]),
        "max_abs": float(np.abs(res.residuals).max()),
        "zero_at_t0": bool(np.all(res.residuals[:, 0] == 0.0))})
    return 0


def _run_nonuniqueness(cfg, w, threads):
    rep = transport.nonuniqueness_demo(cfg.drift.alpha, cfg.time.T,
                                       dt=cfg.time.dt, n_ladder=cfg.mc.n_list,
                                       M=cfg.mc.M, seed=cfg.seed)
    ts = rep.times
    esc = ((1.0 - rep.alpha) * ts) ** (1.0 / (1.0 - rep.alpha))
    w.csv("branches.csv", ["t", "stationary", "escaping"],
          [(t, 0.0, e) for t, e in zip(ts, esc)])
    w.csv("det_selection.csv", ["n", "x_T_shift_minus", "x_T_centered", "x_T_shift_plus"],
          rep.deterministic_selection)
    w.csv("stoch_gaps.csv", ["n", "gap"], rep.stochastic_gaps)
    gaps = [g for _, g in rep.stochastic_gaps]
    w.json("summary.json", {
        "alpha": rep.alpha,
        "stationary_residual": rep.stationary_residual,
        "escaping_residual": rep.escaping_residual,
        "escaping_terminal": rep.escaping_terminal,
        "gaps_decreasing": all(b < a for a, b in zip(gaps, gaps[1:])),
        "note": ("deterministic mollifier-shift selection is an illustration of "
                 "mollifier dependence, not a literature claim")})
    return 0


def _run_modulus_verify(cfg, w, threads):
    m = build_modulus(cfg)
    if m is None:
        raise ValidationError("modulus.family", "modulus-verify needs a modulus")
    rep = moduli.verify_dini(m)
    payload = {
        "family": m.family, "params": {k: float(v) for k, v in m.params.items()},
        "r0": m.r0, "claimed_class": m.claimed_class,
        "is_dini": rep.is_dini, "dini_integral": rep.value,
        "partials_tail": [float(v) for v in rep.partials[-5:]],
    }
    status = 0
    if rep.is_dini:
        mr = moduli.verify_max_regularity(m)
        w.csv("ratio_sequences.csv", ["r", "ratio_head", "ratio_tail"],
              list(zip(mr.r, mr.ratio_head, mr.ratio_tail)))
        delta = moduli.largest_concavity_delta(m, cfg.mc.p)
        payload.update({
            "max_regularity_verdict": mr.verdict,
            "head_bounded": mr.head_bounded, "tail_bounded": mr.tail_bounded,
            "limit_head": mr.limit_head, "limit_tail": mr.limit_tail,
            "concavity_delta": delta, "concavity_p": cfg.mc.p})
    else:
        status = 3
        payload["max_regularity_verdict"] = "not-applicable (not Dini)"
    w.json("modulus_report.json", payload)
    return status


_DISPATCH = {
    "pde-solve": _run_pde_solve,
    "lambda-sweep": _run_lambda_sweep,
    "flow-sim": _run_flow_sim,
    "flow-modulus": _run_flow_modulus,
    "mollify-convergence": _run_mollify_convergence,
    "transport": _run_transport,
    "weak-residual": _run_weak_residual,
    "nonuniqueness-demo": _run_nonuniqueness,
    "modulus-verify": _run_modulus_verify,
}
