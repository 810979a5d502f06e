"""Tour of the closed-form identities behind the weighted kernel transform.

Three exhibits:

  1. the exponential-sqrt integral I(c) = int_0^1 exp(c sqrt(-ln x)) dx and
     its closed form in terms of erf,
  2. the empirical L^p operator bound for the kernel transform, including
     the sharp Hardy constant at c = 0, p = 4,
  3. the integral Minkowski inequality, tight exactly on separable data.

Run:  python demos/closed_form_lemmas.py
"""

import math

import numpy as np

from densiflow.analytic import (
    antiderivative_check,
    gauss_integral_closed_form,
    gauss_integral_quadrature,
    kernel_bound_check,
    minkowski_check,
)

print("-- exponential-sqrt integral ------------------------------------")
print(f"{'c':>5}  {'closed form':>18}  {'quadrature':>18}  {'rel defect':>11}")
for c in (0.0, 0.5, 1.0, 2.0, 4.0):
    closed = gauss_integral_closed_form(c)
    quad = gauss_integral_quadrature(c, 1e-12)
    print(f"{c:5.1f}  {closed:18.12f}  {quad:18.12f}  {abs(closed - quad) / quad:11.2e}")

anti = antiderivative_check(1.0)
print(f"\nantiderivative exponent audit at c = 1: verdict {anti['verdict']!r} "
      f"(quarter defect {anti['defect_quarter']:.2e}, "
      f"half defect {anti['defect_half']:.2e})")

print("\n-- kernel operator bound ----------------------------------------")
print(f"{'c':>5} {'p':>4}  {'empirical':>10}  {'bound':>10}  verdict")
for c in (0.5, 1.0, 2.0):
    for p in (2.0, 4.0):
        res = kernel_bound_check(c, p, trials=100)
        print(f"{c:5.1f} {p:4.1f}  {res.lhs:10.4f}  {res.rhs:10.4f}  "
              f"{'ok' if res.passed else 'VIOLATED'}")

hardy = kernel_bound_check(0.0, 4.0, trials=400)
sharp = (4.0 / 3.0) ** 4
print(f"\nHardy sharpness at c = 0, p = 4: empirical {hardy.lhs:.4f} "
      f"vs (4/3)^4 = {sharp:.4f} "
      f"({100 * hardy.lhs / sharp:.1f}% of the sharp constant reached)")

print("\n-- Minkowski inequality -----------------------------------------")
rng = np.random.default_rng(7)
worst = 0.0
for _ in range(200):
    F = rng.uniform(0.0, 3.0, size=rng.integers(2, 10, size=2))
    res = minkowski_check(F, 2.0)
    worst = max(worst, res.lhs / res.rhs)
print(f"200 random nonnegative matrices at p = 2: worst lhs/rhs {worst:.6f}")

g = rng.uniform(0.5, 1.5, size=9)
h = rng.uniform(0.5, 1.5, size=6)
sep = minkowski_check(np.outer(g, h), 3.0)
print(f"separable matrix outer(g, h) at p = 3: defect "
      f"{abs(sep.lhs - sep.rhs):.2e} (equality case)")
