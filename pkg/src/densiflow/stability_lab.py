"""Paired-trajectory experiments: Cauchy behavior under data mollification,
the relative-energy inequality, the negative-norm density pairing, stability
constants, and the no-vacuum audit.

Every experiment compares two runs of the same scheme on the same grid and
time step, so discrete identities hold up to residuals the module measures
and budgets into tolerances rather than assuming.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np

from . import functionals
from .analytic import kernel_apply
from .errors import DegeneratePair, GridMismatch
from .fields import (
    MollifierLevel,
    ScalarField,
    VectorField2,
    dealias,
    grad_tensor,
    leray_project,
    mollify,
    norm,
    seminorm_grad,
)
from .functionals import _time_derivative
from .solver import SolverConfig, Trajectory, energy_report, pick_dt, run

__all__ = [
    "PairDiagnostics",
    "CauchyTable",
    "default_test_functions",
    "pair_diagnostics",
    "cauchy_experiment",
    "relative_energy_check",
    "wminus14_check",
    "stability_constant",
    "vacuum_check",
    "gronwall_closure",
]


def _check_pair(traj1: Trajectory, traj2: Trajectory) -> None:
    g1, g2 = traj1.grid, traj2.grid
    if (g1.n, g1.length) != (g2.n, g2.length):
        raise GridMismatch(f"grids differ: {g1} vs {g2}")
    if traj1.config.nu != traj2.config.nu:
        raise GridMismatch(
            f"viscosities differ: {traj1.config.nu} vs {traj2.config.nu}"
        )
    t1, t2 = traj1.times, traj2.times
    if len(t1) != len(t2) or not np.array_equal(t1, t2):
        raise GridMismatch("snapshot time grids differ")
    if not np.array_equal(traj1.initial.rho.values, traj2.initial.rho.values):
        raise GridMismatch("trajectories do not share the initial density")


def default_test_functions(grid) -> dict:
    """Registry for density pairings: low trigonometric modes, the mass
    functional, and one compactly supported bump."""
    X, Y = grid.mesh()
    L = grid.length
    cx = cy = L / 2.0
    R = L / 4.0
    r2 = ((X - cx) ** 2 + (Y - cy) ** 2) / R**2
    bump = np.zeros_like(X)
    inside = r2 < 1.0
    bump[inside] = np.exp(1.0 - 1.0 / (1.0 - r2[inside]))
    w = 2.0 * math.pi / L
    return {
        "one": ScalarField.constant(grid, 1.0),
        "sinx_siny": ScalarField(grid, np.sin(w * X) * np.sin(w * Y)),
        "cosx": ScalarField(grid, np.cos(w * X)),
        "siny": ScalarField(grid, np.sin(w * Y)),
        "bump": ScalarField(grid, bump),
    }


@dataclass(frozen=True)
class PairDiagnostics:
    """Per-snapshot difference records for one trajectory pair."""

    times: np.ndarray
    du_l2: np.ndarray
    dgrad_l2: np.ndarray
    pairings: dict
    norm_e_delta: float


def pair_diagnostics(traj1: Trajectory, traj2: Trajectory, phis: dict | None = None) -> PairDiagnostics:
    """Difference norms and density pairings on the shared snapshot grid."""
    _check_pair(traj1, traj2)
    grid = traj1.grid
    if phis is None:
        phis = default_test_functions(grid)
    times = traj1.times
    h2 = grid.spacing**2
    S = len(times)
    du_l2 = np.empty(S)
    dgrad_l2 = np.empty(S)
    pairings = {name: np.empty(S) for name in phis}
    for k, (s1, s2) in enumerate(zip(traj1.states, traj2.states)):
        du = VectorField2(grid, s1.u.x_comp - s2.u.x_comp, s1.u.y_comp - s2.u.y_comp)
        du_l2[k] = norm(du, 2)
        dgrad_l2[k] = seminorm_grad(du, 2)
        drho = s1.rho.values - s2.rho.values
        for name, phi in phis.items():
            pairings[name][k] = float((drho * phi.values).sum()) * h2
    nu = traj1.config.nu
    norm_e_delta = float(np.max(du_l2**2)) + nu * float(np.trapezoid(dgrad_l2**2, times))
    return PairDiagnostics(times=times, du_l2=du_l2, dgrad_l2=dgrad_l2,
                           pairings=pairings, norm_e_delta=norm_e_delta)


@dataclass(frozen=True)
class CauchyTable:
    """Pairwise difference records for a family of mollified-data runs.

    entries are keyed by (min(n,m), max(n,m)), so the (n, m) and (m, n)
    ratios are one stored number and agree exactly.
    """

    levels: tuple
    entries: dict

    def entry(self, n: int, m: int) -> dict:
        return self.entries[(min(n, m), max(n, m))]

    def ratio(self, n: int, m: int):
        return self.entry(n, m)["ratio"]

    def rows(self) -> list:
        out = []
        for (n, m) in sorted(self.entries):
            e = self.entries[(n, m)]
            out.append({"n": n, "m": m, **e})
        return out

    def finite_ratios(self) -> np.ndarray:
        vals = [e["ratio"] for e in self.entries.values() if not e["degenerate"]]
        return np.asarray(vals, dtype=float)


def _shared_dt_config(u_starts, config: SolverConfig) -> SolverConfig:
    """Pin one dt for a family of runs so their time grids coincide."""
    if config.dt is not None:
        return config
    dt = min(pick_dt(u, config) for u in u_starts)
    return dataclasses.replace(config, dt=dt, cfl=None)


def cauchy_experiment(base, levels, config: SolverConfig) -> CauchyTable:
    """Run the solver from mollified versions of one velocity datum.

    base is (rho0, u0); each level n evolves (rho0, mollifier_n * u0) on a
    common time grid, and every unordered pair gets a difference record
    with ratio = norm_e_delta / ||u0_n - u0_m||_2^2 (marked degenerate when
    the data difference is below 1e-14).
    """
    rho0, u0 = base
    levels = [int(n) for n in levels]
    if len(set(levels)) != len(levels):
        raise ValueError("mollification levels must be distinct")
    levels = sorted(levels)
    data = {n: mollify(u0, MollifierLevel(n)) for n in levels}
    starts = [leray_project(dealias(v)) for v in data.values()]
    cfg = _shared_dt_config(starts, config)
    runs = {n: run(rho0, data[n], cfg) for n in levels}
    entries = {}
    for i, n in enumerate(levels):
        for m in levels[i + 1:]:
            pd = pair_diagnostics(runs[n], runs[m])
            du0 = pd.du_l2[0]
            degenerate = du0 <= 1e-14
            entries[(n, m)] = {
                "du0_l2": float(du0),
                "norm_e_delta": pd.norm_e_delta,
                "ratio": math.inf if degenerate else pd.norm_e_delta / du0**2,
                "degenerate": degenerate,
            }
    return CauchyTable(levels=tuple(levels), entries=entries)


def relative_energy_check(traj1: Trajectory, traj2: Trajectory) -> dict:
    """Two-sided evaluation of the relative-energy inequality.

    lhs(t) = half the rho_1-weighted kinetic energy of du plus the viscous
    dissipation of du up to t; rhs(t) = the same quantity at t = 0 minus the
    two exchange integrals (density difference against the acceleration of
    the second flow, and the du (x) du contraction against its gradient).
    The pass tolerance is calibrated from the measured energy-balance
    residuals of the two runs, since those share the discretization error
    mechanism of the identity itself.
    """
    _check_pair(traj1, traj2)
    grid = traj1.grid
    h2 = grid.spacing**2
    times = traj1.times
    S = len(times)
    nu = traj1.config.nu

    n = grid.n
    u2_stack = np.empty((S, 2, n, n))
    for k, s in enumerate(traj2.states):
        u2_stack[k, 0] = s.u.x_comp
        u2_stack[k, 1] = s.u.y_comp
    ds_u2 = _time_derivative(u2_stack, times)

    rho_du2 = np.empty(S)
    dgrad2 = np.empty(S)
    exchange_acc = np.empty(S)
    exchange_grad = np.empty(S)
    for k, (s1, s2) in enumerate(zip(traj1.states, traj2.states)):
        dux = s1.u.x_comp - s2.u.x_comp
        duy = s1.u.y_comp - s2.u.y_comp
        du = VectorField2(grid, dux, duy)
        rho_du2[k] = float((s1.rho.values * (dux**2 + duy**2)).sum()) * h2
        dgrad2[k] = seminorm_grad(du, 2) ** 2
        gxx, gxy, gyx, gyy = grad_tensor(s2.u)
        mat_x = ds_u2[k, 0] + s2.u.x_comp * gxx + s2.u.y_comp * gxy
        mat_y = ds_u2[k, 1] + s2.u.x_comp * gyx + s2.u.y_comp * gyy
        drho = s1.rho.values - s2.rho.values
        exchange_acc[k] = float((drho * (mat_x * dux + mat_y * duy)).sum()) * h2
        exchange_grad[k] = float(
            (s1.rho.values * (dux**2 * gxx + dux * duy * (gxy + gyx) + duy**2 * gyy)).sum()
        ) * h2

    def cumtrapz(y):
        seg = np.diff(times) * (y[:-1] + y[1:]) / 2.0
        return np.concatenate([[0.0], np.cumsum(seg)])

    lhs = 0.5 * rho_du2 + nu * cumtrapz(dgrad2)
    rhs = 0.5 * rho_du2[0] - cumtrapz(exchange_acc) - cumtrapz(exchange_grad)

    gap1 = float(np.max(np.abs(energy_report(traj1)["gap"])))
    gap2 = float(np.max(np.abs(energy_report(traj2)["gap"])))
    tol = 2.0 * (gap1 + gap2) + 1e-12 * max(1.0, 0.5 * rho_du2[0])
    ok = lhs <= rhs + tol
    return {
        "times": times,
        "lhs": lhs,
        "rhs": rhs,
        "tol": tol,
        "pass": ok,
        "passed": bool(np.all(ok)),
    }


def wminus14_check(traj1: Trajectory, traj2: Trajectory, phis: dict | None = None,
                   s_list=None, kappa: float = 1.5, z_value: float | None = None) -> dict:
    """Negative-norm control of the density difference by velocity data.

    For each test function phi and each requested time s (snapped to the
    nearest stored snapshot), compares |<drho(s), phi>| against
    sup ||sqrt(rho_1) du||_2^{1/2} * ||grad phi||_{4/3} * the log-kernel
    time integral of ||grad du||_2^{1/2}, with kernel strength z from the
    second (regular) trajectory.  Gradient-free test functions make the
    right side vanish; those rows pass only if the pairing is zero at
    rounding scale (mass conservation).
    """
    _check_pair(traj1, traj2)
    grid = traj1.grid
    h2 = grid.spacing**2
    times = traj1.times
    if phis is None:
        phis = default_test_functions(grid)
    if s_list is None:
        T = float(times[-1])
        s_list = [T / 4.0, T / 2.0, T]
    z = functionals.norm_z(traj2) if z_value is None else float(z_value)

    pd = pair_diagnostics(traj1, traj2, phis={})
    rho_du2 = np.empty(len(times))
    for k, (s1, s2) in enumerate(zip(traj1.states, traj2.states)):
        dux = s1.u.x_comp - s2.u.x_comp
        duy = s1.u.y_comp - s2.u.y_comp
        rho_du2[k] = float((s1.rho.values * (dux**2 + duy**2)).sum()) * h2

    pos = times > 0.0
    taus = times[pos]
    gvals = pd.dgrad_l2[pos] ** 0.5
    if taus.size:
        _, tnorm = kernel_apply(taus, gvals, z)
    rows = []
    for s_req in s_list:
        k = int(np.argmin(np.abs(times - s_req)))
        s = float(times[k])
        if s <= 0.0:
            raise ValueError("requested times must snap to positive snapshots")
        kernel_term = s * float(np.interp(s, taus, tnorm))
        sup_fac = float(np.max(rho_du2[: k + 1])) ** 0.25
        for name, phi in phis.items():
            drho = traj1.states[k].rho.values - traj2.states[k].rho.values
            lhs = abs(float((drho * phi.values).sum()) * h2)
            gphi = seminorm_grad(phi, 4.0 / 3.0)
            rhs = sup_fac * gphi * kernel_term
            if gphi <= 1e-13:
                scale = max(norm(phi, 2) * norm(traj1.states[k].rho, 2), 1e-30)
                ok = lhs <= 1e-9 * scale
                rows.append({"phi": name, "s": s, "lhs": lhs, "rhs": rhs,
                             "ratio": None, "degenerate": True, "pass": ok})
            elif rhs == 0.0:
                rows.append({"phi": name, "s": s, "lhs": lhs, "rhs": rhs,
                             "ratio": 0.0 if lhs == 0.0 else math.inf,
                             "degenerate": False, "pass": lhs == 0.0})
            else:
                ratio = lhs / rhs
                rows.append({"phi": name, "s": s, "lhs": lhs, "rhs": rhs,
                             "ratio": ratio, "degenerate": False,
                             "pass": ratio <= kappa})
    ratios = [r["ratio"] for r in rows if not r["degenerate"] and r["ratio"] is not None]
    return {
        "rows": rows,
        "z": z,
        "kappa": kappa,
        "worst_ratio": max(ratios) if ratios else 0.0,
        "pass": all(r["pass"] for r in rows),
    }


def stability_constant(pairs) -> dict:
    """Largest observed norm_e_delta / ||u0 - v0||_2^2 over run pairs."""
    per_pair = []
    for traj_u, traj_v in pairs:
        _check_pair(traj_u, traj_v)
        grid = traj_u.grid
        du0 = norm(
            VectorField2(
                grid,
                traj_u.initial.u.x_comp - traj_v.initial.u.x_comp,
                traj_u.initial.u.y_comp - traj_v.initial.u.y_comp,
            ),
            2,
        )
        if du0 <= 1e-14:
            raise DegeneratePair(f"initial data differ by {du0:.3g} in L2")
        pd = pair_diagnostics(traj_u, traj_v)
        per_pair.append({
            "du0_l2": float(du0),
            "norm_e_delta": pd.norm_e_delta,
            "constant": pd.norm_e_delta / du0**2,
            "u0_l2": norm(traj_u.initial.u, 2),
        })
    if not per_pair:
        raise DegeneratePair("no pairs supplied")
    return {
        "constant": max(p["constant"] for p in per_pair),
        "per_pair": per_pair,
    }


def vacuum_check(traj: Trajectory) -> dict:
    """Audit the density corridor on every time level of a run."""
    b = traj.config.bounds
    lo = traj.diagnostics["rho_min"]
    hi = traj.diagnostics["rho_max"]
    ok = bool(lo.min() >= b.c0 - 1e-12 and hi.max() <= b.C0 + 1e-12)
    return {
        "t": traj.diagnostics["t"],
        "min_rho": lo,
        "max_rho": hi,
        "c0": b.c0,
        "C0": b.C0,
        "pass": ok,
    }


def gronwall_closure(traj1: Trajectory, traj2: Trajectory, tol: float = 1e-9) -> dict:
    """Feed the relative-energy output through the Gronwall verifier.

    f is the measured left side of the relative-energy inequality; g is the
    regular trajectory's grad-energy plus s^2-weighted acceleration-gradient
    combination; a is the smallest offset making the integral premise hold,
    so the audit tests the verifier's premise -> bound contract on realistic
    solver data.
    """
    rel = relative_energy_check(traj1, traj2)
    times = rel["times"]
    f = rel["lhs"]

    _check_pair(traj1, traj2)
    grid = traj1.grid
    n = grid.n
    S = len(times)
    u2_stack = np.empty((S, 2, n, n))
    for k, s in enumerate(traj2.states):
        u2_stack[k, 0] = s.u.x_comp
        u2_stack[k, 1] = s.u.y_comp
    ds_u2 = _time_derivative(u2_stack, times)
    g = np.empty(S)
    for k, s in enumerate(traj2.states):
        gxx, gxy, gyx, gyy = grad_tensor(s.u)
        mat_x = ds_u2[k, 0] + s.u.x_comp * gxx + s.u.y_comp * gxy
        mat_y = ds_u2[k, 1] + s.u.x_comp * gyx + s.u.y_comp * gyy
        mat = VectorField2(grid, mat_x, mat_y)
        g[k] = seminorm_grad(s.u, 2) ** 2 + times[k] ** 2 * seminorm_grad(mat, 2) ** 2

    gf = g * f
    seg = np.diff(times) * (gf[:-1] + gf[1:]) / 2.0
    running = np.concatenate([[0.0], np.cumsum(seg)])
    a = float(np.max(f - running))
    a = max(a, 0.0) * (1.0 + 1e-12) + 1e-300
    out = functionals.gronwall_check(times, f, a, g, tol=tol)
    out["a"] = a
    out["g"] = g
    out["f"] = f
    return out
