"""Characteristics of a divergence-free field: volume preservation, exact
reversibility, and the gradient bound on the flow differential.

The script integrates the backward flow map of a steady single-vortex
velocity field, then checks the three structural invariants numerically and
shows how fast they converge as the characteristic substep shrinks.

Run:  python demos/flow_map_tour.py
"""

import numpy as np

from densiflow.fields import GridSpec
from densiflow.solver import make_initial
from densiflow.transport import (
    VelocityTrack,
    advance_flow,
    dx_bound_check,
    log_kernel_flow_check,
    trace_points,
)

grid = GridSpec(64)
_, u = make_initial(grid, "taylor_green")
track = VelocityTrack.steady(u, 0.0, 1.0)

print("-- volume preservation ------------------------------------------")
print(f"{'substep':>9}  {'max |J - 1|':>12}  {'roundtrip':>12}")
probe = np.linspace(0.0, grid.length, 12, endpoint=False)
px, py = [a.ravel().copy() for a in np.meshgrid(probe, probe, indexing="ij")]
for substep in (0.05, 0.01, 0.002):
    flow = advance_flow(track, 0.0, 0.8, substep)
    jdef = float(np.abs(flow.jacobian.values - 1.0).max())
    fx, fy = trace_points(track, 0.0, 0.8, substep, px, py)
    bx, by = trace_points(track, 0.8, 0.0, substep, fx, fy)
    rt = float(max(np.abs(bx - px).max(), np.abs(by - py).max()))
    print(f"{substep:9.3f}  {jdef:12.3e}  {rt:12.3e}")
print("(the integrator is symmetric, so round trips cancel to round-off\n"
      " even at coarse substeps; the Jacobian defect shows the real order)")

print("\n-- differential growth vs the gradient budget --------------------")
print(f"{'window':>12}  {'max |DX|':>9}  {'exp budget':>10}  verdict")
for s in (0.2, 0.5, 1.0):
    flow = advance_flow(track, 0.0, s, 0.005)
    chk = dx_bound_check(flow, track)
    print(f"[0, {s:4.1f}]    {chk.lhs:9.4f}  {chk.rhs:10.4f}  "
          f"{'ok' if chk.passed else 'VIOLATED'}")

print("\n-- logarithmic kernel weight on the same flows --------------------")
for z in (0.5, 2.0, 6.0):
    flow = advance_flow(track, 0.1, 0.9, 0.005)
    chk = log_kernel_flow_check(flow, z)
    print(f"z = {z:4.1f}: lhs {chk.lhs:10.4f}  rhs {chk.rhs:10.4f}  "
          f"{'ok' if chk.passed else 'VIOLATED'}")

print("\n-- a material ring, carried around the vortex ---------------------")
theta = np.linspace(0.0, 2 * np.pi, 9, endpoint=False)
cx, cy = np.pi / 2, np.pi / 2  # center of one vortex cell
rx = (cx + 0.5 * np.cos(theta)).copy()
ry = (cy + 0.5 * np.sin(theta)).copy()
for t in (0.5, 1.0):
    qx, qy = trace_points(track, t, 0.0, 0.01, rx, ry)  # backward feet
    spread = np.hypot(qx - cx, qy - cy)
    print(f"t = {t:3.1f}: ring radii now in [{spread.min():.3f}, {spread.max():.3f}] "
          f"(started at 0.500 exactly)")
print("(radii stay near 0.5: the steady vortex transports the ring along\n"
      " closed streamlines, deforming it only through differential rotation)")
