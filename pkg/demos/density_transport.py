"""Density transport along characteristics: exactness, bounds, and the
renormalization property.

A compact density bump carried by a uniform velocity has the exact solution
rho(t, x) = rho0(x - ct), which exposes four properties of the
semi-Lagrangian transport step:

  * the translated profile is recovered to interpolation accuracy,
  * pointwise min/max never grow (no new extrema, hence no vacuum),
  * beta(rho) solves the same transport problem for smooth beta
    (renormalization), with residuals vanishing under time refinement,
  * the support of a localized profile grows no faster than the flow speed.

Run:  python demos/density_transport.py
"""

import math

import numpy as np

from densiflow.fields import GridSpec, ScalarField, VectorField2, norm
from densiflow.transport import (
    ScalarTrack,
    VelocityTrack,
    renormalization_residual,
    support_growth_check,
    transport_density,
)

PI = math.pi
C = (0.7, 0.3)
T = 0.5


def blob(grid, t=0.0, kappa=1.5, base=0.75):
    X, Y = grid.mesh()
    return ScalarField(grid, base + np.exp(
        kappa * (np.cos(X - PI - C[0] * t) + np.cos(Y - PI - C[1] * t) - 2.0)))


print("-- transport accuracy under spatial refinement --------------------")
print(f"{'N':>5}  {'bilinear':>10}  {'clamped bicubic':>16}")
for n in (32, 64, 128):
    grid = GridSpec(n)
    u = VectorField2(grid, np.full((n, n), C[0]), np.full((n, n), C[1]))
    track = VelocityTrack.steady(u, 0.0, T)
    exact = blob(grid, T)
    errs = []
    for mode in ("bilinear", "clamped_bicubic"):
        moved = transport_density(blob(grid), track, 0.0, T, interpolation=mode)
        errs.append(norm(ScalarField(grid, moved.values - exact.values), 2))
    print(f"{n:5d}  {errs[0]:10.3e}  {errs[1]:16.3e}")

grid = GridSpec(64)
u = VectorField2(grid, np.full((64, 64), C[0]), np.full((64, 64), C[1]))
track = VelocityTrack.steady(u, 0.0, T)
rho0 = blob(grid)
moved = transport_density(rho0, track, 0.0, T)
print(f"\nmax principle: range [{rho0.values.min():.6f}, {rho0.values.max():.6f}]"
      f" -> [{moved.values.min():.6f}, {moved.values.max():.6f}]"
      f"  (never widens)")

print("\n-- renormalization: beta(rho) is transported too -------------------")
X, Y = grid.mesh()
phi = ScalarField(grid, np.sin(X) * np.cos(Y))
betas = {"identity": lambda z: z, "square": lambda z: z**2,
         "reciprocal": lambda z: 1.0 / z}
print(f"{'snapshots':>10}  " + "  ".join(f"{k:>11}" for k in betas))
for points in (11, 21, 41):
    times = np.linspace(0.0, T, points)
    rho_track = ScalarTrack(times, [blob(grid, t) for t in times])
    row = [renormalization_residual(rho_track, track, b, phi, T)
           for b in betas.values()]
    print(f"{points:10d}  " + "  ".join(f"{r:11.3e}" for r in row))
print("(residuals fall ~4x per snapshot doubling: the weak-form defect is\n"
      " pure time quadrature, the transported profile itself is exact)")

print("\n-- support growth stays inside the speed budget ---------------------")
peak = ScalarField(grid, np.exp(30.0 * (np.cos(X - PI) + np.cos(Y - PI) - 2.0)))
times = np.linspace(0.0, T, 3)
peaked_track = ScalarTrack(times, [
    ScalarField(grid, np.exp(30.0 * (np.cos(X - PI - 0.3 * t) + np.cos(Y - PI) - 2.0)))
    for t in times
])
slow = VelocityTrack.steady(
    VectorField2(grid, np.full((64, 64), 0.3), np.zeros((64, 64))), 0.0, T)
chk = support_growth_check(peaked_track, slow, 0.0, T)
print(f"radius {chk.params['radius_start']:.3f} + travel budget -> "
      f"{chk.lhs:.3f} observed vs {chk.rhs:.3f} allowed  "
      f"({'contained' if chk.passed else 'ESCAPED'})")
