"""Tour of the modulus-of-continuity calculus.

Builds the three built-in families, certifies (or refutes) integrability of
phi(r)/r at zero, estimates the limit ratios that decide whether maximal
second-derivative regularity survives, and locates the concavity window of
the composite functional F_delta.
"""

import math

import numpy as np

from dinidrift import moduli as mo

print("=== families and Dini certification ===")
candidates = {
    "linear  phi = r": mo.linear_modulus(1.0, r0=0.5),
    "power-log  phi = sqrt(r) |log r|^-2": mo.power_log_modulus(1.0, 0.5, -2.0, 0.5),
    "inverse-log  phi = |log r|^-2": mo.inverse_log_modulus(1.0, 2.0, 0.5),
    "inverse-log  phi = |log r|^-1": mo.inverse_log_modulus(1.0, 1.0, 0.5),
}
for name, m in candidates.items():
    rep = mo.verify_dini(m)
    verdict = f"integral = {rep.value:.6f}" if rep.is_dini else \
        f"DIVERGES (partial {rep.partials[-1]:.2f} after {rep.shells} shells)"
    print(f"  {name:42s} class={m.claimed_class:12s} {verdict}")

print()
print("=== limit ratios: when does full regularity survive? ===")
print("  head = (int_0^r phi/s ds)/phi(r), tail = (r int_r^r0 phi/s^2 ds)/phi(r)")
for theta, alpha in ((0.5, -0.2), (0.3, 0.1)):
    m = mo.power_log_modulus(1.0, theta, alpha, 0.5)
    rep = mo.verify_max_regularity(m)
    print(f"  theta={theta}, alpha={alpha}: head -> {rep.ratio_head[-1]:.4f} "
          f"(expect {1/theta:.4f}), tail -> {rep.ratio_tail[-1]:.4f} "
          f"(expect {1/(1-theta):.4f}), verdict: {rep.verdict}")

m = mo.inverse_log_modulus(1.0, 1.5, 0.5)
rep = mo.verify_max_regularity(m)
print(f"  |log r|^-1.5: head ratio grows {rep.ratio_head[0]:.1f} -> "
      f"{rep.ratio_head[-1]:.1f}, verdict: {rep.verdict}")
print("  (a merely-Dini modulus loses the endpoint regularity, as it must)")

print()
print("=== concavity window of F_delta ===")
m2 = mo.inverse_log_modulus(1.0, 2.0, 0.5)
for p in (1.0, 2.0):
    delta = mo.largest_concavity_delta(m2, p)
    print(f"  p={p}: largest delta with F^p increasing+concave ~ {delta:.4f} "
          f"(sufficient window exp(p-2p-1) = {math.exp(-p-1):.4f})")
rep_in = mo.verify_f_concavity(m2, 1.0, 0.9 * math.exp(-2.0))
rep_out = mo.verify_f_concavity(m2, 2.0, 0.4)
print(f"  inside window:  increasing={rep_in.increasing_ok}, concave={rep_in.concave_ok}")
print(f"  outside window: increasing={rep_out.increasing_ok}, concave={rep_out.concave_ok} "
      f"(worst violation {rep_out.worst_violation:.2e})")
