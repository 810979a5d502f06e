"""Time-weighted regularity functionals on an exactly solvable flow.

The decaying single vortex

    u(t) = e^{-2 nu t} (sin x cos y, -cos x sin y),  rho = 1

has every quantity in closed form, so it calibrates the whole functional
stack: the scale-weighted energies a0/a1/a2, the energy norm, the weighted
gradient accumulation, and the interpolation-inequality ratios.

Run:  python demos/weighted_functionals.py
"""

import math

import numpy as np

from densiflow.fields import GridSpec, ScalarField, VectorField2
from densiflow.functionals import (
    inequality_ratio,
    k0,
    linfty_decay_check,
    norm_e,
    norm_z,
    weighted_energies,
)
from densiflow.solver import SolverConfig, State, Trajectory

NU, T, PI = 0.1, 0.5, math.pi

grid = GridSpec(64)
X, Y = grid.mesh()
times = np.linspace(0.0, T, 201)
states = []
for t in times:
    d = math.exp(-2 * NU * t)
    u = VectorField2(grid, d * np.sin(X) * np.cos(Y), -d * np.cos(X) * np.sin(Y))
    p = ScalarField(grid, -(d**2) / 4.0 * (np.cos(2 * X) + np.cos(2 * Y)))
    states.append(State(float(t), ScalarField.constant(grid, 1.0), u, p))
traj = Trajectory.from_states(states, SolverConfig(nu=NU, T=T, dt=T / 200))

w = weighted_energies(traj, include_a3=True)

print("-- weighted energies vs closed forms ------------------------------")
exact_sup = 2 * PI**2
exact_enst = PI**2 * (1 - math.exp(-4 * NU * T)) / NU
print(f"peak weighted kinetic   {w.parts['a0_sup_weighted_kinetic']:12.6f}"
      f"   exact {exact_sup:12.6f}")
print(f"enstrophy integral      {w.parts['a0_int_enstrophy']:12.6f}"
      f"   exact {exact_enst:12.6f}")
print(f"a0 = {w.a0:.6f}   a1 = {w.a1:.6f}   a2 = {w.a2:.6f}   a3 = {w.a3:.6f}")
print(f"norm_e = {norm_e(traj):.6f}   norm_z = {norm_z(traj):.6f}")

exact_k0 = 2 * (1 - (1 + 4 * NU * T) * math.exp(-4 * NU * T)) / (16 * NU**2)
print(f"weighted gradient accumulation k0 = {k0(traj):.8f} "
      f"(exact {exact_k0:.8f})")

chk = linfty_decay_check(traj)
print(f"sup-norm decay ratio sup_t t*|u|_inf^2 / norm_z^2 = "
      f"{chk.params['ratio']:.6f}  ({'finite' if chk.passed else 'DIVERGED'})")

print("\n-- interpolation inequality ratios --------------------------------")
f = ScalarField(grid, np.sin(X))
print(f"{'inequality':>14}  {'measured':>10}  {'closed form':>12}")
closed = {
    "ladyzhenskaya": (1.5 * PI**2) ** 0.25 / (2 * PI**2) ** 0.5,
    "agmon": (2 * PI**2) ** -0.5,
    "interp_inf": (1.5 * PI**2) ** -0.25,
}
for kind, exact in closed.items():
    print(f"{kind:>14}  {inequality_ratio(f, kind):10.6f}  {exact:12.6f}")
print("(single-mode data: the ratios are exactly the trigonometric norms,\n"
      " far below the sharp constants, and identical at every resolution)")
