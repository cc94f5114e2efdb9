"""Regularization by noise: the square-root drift field.

The deterministic ODE x' = sign(x) |x|^(1/2) from x = 0 has (at least) two
solutions: stay at zero forever, or escape along x(t) = (t/2)^2.  Smoothing
the field and taking limits does not repair this: the selected branch
depends on how the smoothing kernel is shifted.  Add Brownian noise and the
ambiguity disappears: smoothed stochastic flows at a fixed seed converge to
a single limit as the smoothing sharpens.
"""

from dinidrift import transport as tr

rep = tr.nonuniqueness_demo(alpha=0.5, T=1.0, dt=2.0 ** -8,
                            n_ladder=(4, 8, 16, 32), M=256, seed=1)

print("=== two deterministic branches from x = 0 ===")
print(f"  stationary branch x(t) = 0:        ODE residual {rep.stationary_residual:.1e}")
print(f"  escaping branch x(t) = (t/2)^2:    ODE residual {rep.escaping_residual:.1e}")
print(f"  escaping branch reaches x(1) = {rep.escaping_terminal}")

print()
print("=== deterministic smoothing selects whatever the kernel prefers ===")
print("  (kernel shifted by -1/2n, centered, +1/2n; an illustration of")
print("   smoothing-dependence, nothing more)")
print("    n     x_T (shift -)   x_T (center)   x_T (shift +)")
for n, minus, center, plus in rep.deterministic_selection:
    print(f"  {n:4d}     {minus:+.4f}        {center:+.4f}        {plus:+.4f}")

print()
print("=== noise restores a single selection ===")
print("  shared-seed gap between consecutive smoothing levels:")
print("    n     E|X^n_T - X^{4n}_T|")
for n, gap in rep.stochastic_gaps:
    print(f"  {n:4d}     {gap:.5f}")
print("  the gaps shrink monotonically: the noisy flows converge to one limit")
