"""Damping sweep of the backward resolvent problem.

The straightening construction needs ||grad U|| <= 1/2; this script sweeps
the zero-order damping, tabulates the gradient decay, fits its log-log
slope, and reports the calibrated damping level.
"""

import numpy as np

from dinidrift import pde
from dinidrift.grids import SpatialGrid


def tanh_drift(t, pts):
    out = np.zeros_like(pts)
    out[:, 0] = np.tanh(pts[:, 0])
    return out


grid = SpatialGrid(L=8.0, n=193, d=1)
times = np.linspace(0.0, 1.0, 129)

res = pde.calibrate_lambda(tanh_drift, grid, times,
                           lambdas=[2.0 ** j for j in range(11)],
                           slope_range=(16.0, 1024.0))
print("  lambda      ||grad U||_inf")
for lam, sup in res.table:
    marker = "  <- first below 1/2" if lam == res.lambda0 else ""
    print(f"  {lam:8.0f}    {sup:.6f}{marker}")
print(f"\n  fitted log-log slope over [2^4, 2^10]: {res.slope:.3f}")
print("  (the theory guarantees decay at least as fast as lambda^(-1/3);")
print("   a smooth drift decays like 1/lambda, which is faster, as seen)")
print(f"  calibrated damping lambda0 = {res.lambda0:g}")
