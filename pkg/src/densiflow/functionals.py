"""Weighted regularity functionals, norm probes, and a Gronwall verifier.

The time-weighted energies live on a trajectory's stored snapshots: time
derivatives come from centered differences there (one-sided at the ends),
everything spatial is spectral, and each s-weighted time integral uses the
trapezoid rule with the weight evaluated at the interval midpoint, so the
weight's vanishing at s = 0 is represented exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateField,
    GridMismatch,
    NegativeEntries,
    TooFewSnapshots,
)
from .fields import (
    ScalarField,
    VectorField2,
    grad_tensor,
    gradient,
    hessian_norms,
    norm,
    seminorm_grad,
)
from .report import CheckResult
from .solver import Trajectory

__all__ = [
    "WeightedEnergies",
    "weighted_energies",
    "norm_e",
    "norm_z",
    "k0",
    "linfty_decay_check",
    "inequality_ratio",
    "gronwall_check",
]


@dataclass(frozen=True)
class WeightedEnergies:
    """The discrete time-weighted energies, with a per-term breakdown."""

    a0: float
    a1: float
    a2: float
    a3: float | None
    parts: dict

    def as_dict(self) -> dict:
        out = {"a0": self.a0, "a1": self.a1, "a2": self.a2}
        if self.a3 is not None:
            out["a3"] = self.a3
        return out


def _time_derivative(stacks, times):
    """Centered differences along axis 0, one-sided at the ends."""
    vals = np.asarray(stacks)
    t = np.asarray(times)
    out = np.empty_like(vals)
    out[0] = (vals[1] - vals[0]) / (t[1] - t[0])
    out[-1] = (vals[-1] - vals[-2]) / (t[-1] - t[-2])
    if len(t) > 2:
        span = (t[2:] - t[:-2]).reshape((-1,) + (1,) * (vals.ndim - 1))
        out[1:-1] = (vals[2:] - vals[:-2]) / span
    return out


def _weighted_integral(times, series, power):
    """Trapezoid of s^power * series(s) with midpoint-evaluated weights.

    For positive powers the quadrature starts at the first positive node:
    the weight vanishes at s = 0, so the dropped sliver is second order in
    the first interval width.
    """
    t = np.asarray(times, dtype=float)
    y = np.asarray(series, dtype=float)
    mids = 0.5 * (t[1:] + t[:-1])
    seg = mids**power * 0.5 * (y[1:] + y[:-1]) * np.diff(t)
    if power >= 1:
        seg = np.where(t[:-1] > 0.0, seg, 0.0)
    return float(np.sum(seg))


def weighted_energies(traj: Trajectory, include_a3: bool = False) -> WeightedEnergies:
    """Evaluate the scale-weighted energy functionals on stored snapshots.

    The index-0 functional sums the peak weighted kinetic energy with the
    plain enstrophy integral; the higher functionals weight acceleration,
    second gradients, and pressure gradients by increasing powers of time.
    """
    states = traj.states
    if len(states) < 3:
        raise TooFewSnapshots(f"need >= 3 stored states, have {len(states)}")
    times = traj.times
    grid = traj.grid
    h2 = grid.spacing**2
    n = grid.n
    S = len(states)

    u_stack = np.empty((S, 2, n, n))
    for k, s in enumerate(states):
        u_stack[k, 0] = s.u.x_comp
        u_stack[k, 1] = s.u.y_comp
    dsu = _time_derivative(u_stack, times)

    rho_u_sq = np.empty(S)       # int rho |u|^2
    grad_sq = np.empty(S)        # int |grad u|^2
    rho_dsu_sq = np.empty(S)     # int rho |ds u|^2
    rho_mat_sq = np.empty(S)     # int rho |du/dt along paths|^2
    hess_sq = np.empty(S)        # int |grad^2 u|^2
    gradp_sq = np.empty(S)       # int |grad P|^2
    ds_grad_sq = np.empty(S)     # int |ds grad u|^2
    grad_mat_sq = np.empty(S)    # int |grad u_dot|^2
    mat_stack = np.empty((S, 2, n, n))
    grad_stack = np.empty((S, 4, n, n))

    for k, s in enumerate(states):
        rho = s.rho.values
        ux, uy = s.u.x_comp, s.u.y_comp
        rho_u_sq[k] = float((rho * (ux**2 + uy**2)).sum()) * h2
        gxx, gxy, gyx, gyy = grad_tensor(s.u)
        grad_stack[k] = (gxx, gxy, gyx, gyy)
        grad_sq[k] = float((gxx**2 + gxy**2 + gyx**2 + gyy**2).sum()) * h2
        mat_x = dsu[k, 0] + ux * gxx + uy * gxy
        mat_y = dsu[k, 1] + ux * gyx + uy * gyy
        mat_stack[k] = (mat_x, mat_y)
        rho_dsu_sq[k] = float((rho * (dsu[k, 0] ** 2 + dsu[k, 1] ** 2)).sum()) * h2
        rho_mat_sq[k] = float((rho * (mat_x**2 + mat_y**2)).sum()) * h2
        hess_sq[k] = float((hessian_norms(s.u).values ** 2).sum()) * h2
        gp = gradient(s.p)
        gradp_sq[k] = float((gp.x_comp**2 + gp.y_comp**2).sum()) * h2

    ds_grad = _time_derivative(grad_stack, times)
    for k in range(S):
        ds_grad_sq[k] = float((ds_grad[k] ** 2).sum()) * h2
        mat_field = VectorField2(grid, mat_stack[k, 0], mat_stack[k, 1])
        mgxx, mgxy, mgyx, mgyy = grad_tensor(mat_field)
        grad_mat_sq[k] = float((mgxx**2 + mgxy**2 + mgyx**2 + mgyy**2).sum()) * h2

    first_order = rho_dsu_sq + rho_mat_sq + hess_sq + gradp_sq

    a0_sup = float(rho_u_sq.max())
    a0_int = _weighted_integral(times, grad_sq, 0)
    a1_sup = float((times * grad_sq).max())
    a1_int = _weighted_integral(times, first_order, 1)
    a2_sup = float((times**2 * first_order).max())
    a2_int = _weighted_integral(times, ds_grad_sq + grad_mat_sq, 2)

    parts = {
        "a0_sup_weighted_kinetic": a0_sup,
        "a0_int_enstrophy": a0_int,
        "a1_sup_enstrophy": a1_sup,
        "a1_int_first_order": a1_int,
        "a2_sup_first_order": a2_sup,
        "a2_int_second_order": a2_int,
    }

    a3 = None
    if include_a3:
        ds_mat = _time_derivative(mat_stack, times)
        p_stack = np.empty((S, n, n))
        for k, s in enumerate(states):
            p_stack[k] = s.p.values
        ds_p = _time_derivative(p_stack, times)
        grad_mat_sup = np.empty(S)
        second_acc = np.empty(S)
        for k, s in enumerate(states):
            ux, uy = s.u.x_comp, s.u.y_comp
            rho = s.rho.values
            mat_field = VectorField2(grid, mat_stack[k, 0], mat_stack[k, 1])
            mgxx, mgxy, mgyx, mgyy = grad_tensor(mat_field)
            grad_mat_sup[k] = grad_mat_sq[k]
            # second material derivative of u, and material derivative of P
            acc_x = ds_mat[k, 0] + ux * mgxx + uy * mgxy
            acc_y = ds_mat[k, 1] + ux * mgyx + uy * mgyy
            hess_mat = float((hessian_norms(mat_field).values ** 2).sum()) * h2
            p_dot = ScalarField(grid, ds_p[k] + ux * gradient(s.p).x_comp + uy * gradient(s.p).y_comp)
            gpd = gradient(p_dot)
            second_acc[k] = (
                hess_mat
                + float((gpd.x_comp**2 + gpd.y_comp**2).sum()) * h2
                + float((rho * (acc_x**2 + acc_y**2)).sum()) * h2
            )
        a3_sup = float((times**3 * grad_mat_sup).max())
        a3_int = _weighted_integral(times, second_acc, 3)
        a3 = a3_sup + a3_int
        parts["a3_sup_grad_accel"] = a3_sup
        parts["a3_int_second_material"] = a3_int

    return WeightedEnergies(
        a0=a0_sup + a0_int,
        a1=a1_sup + a1_int,
        a2=a2_sup + a2_int,
        a3=a3,
        parts=parts,
    )


def norm_e(traj: Trajectory) -> float:
    """sup_t ||u||_2^2 + nu * integral of ||grad u||_2^2."""
    if len(traj.states) < 3:
        raise TooFewSnapshots(f"need >= 3 stored states, have {len(traj.states)}")
    sup_u = max(norm(s.u, 2) ** 2 for s in traj.states)
    return sup_u + float(traj.diagnostics["dissipation_cum"][-1])


def norm_z(traj: Trajectory) -> float:
    """Largest square root among the first three weighted energies."""
    w = weighted_energies(traj)
    return math.sqrt(max(w.a0, w.a1, w.a2))


def k0(traj: Trajectory) -> float:
    """Time-weighted accumulation of the peak velocity gradient.

    Uses the per-step diagnostic series (full step resolution, not just
    snapshots) with the same midpoint-weighted trapezoid as the energies.
    """
    if len(traj.states) < 3:
        raise TooFewSnapshots(f"need >= 3 stored states, have {len(traj.states)}")
    t = traj.diagnostics["t"]
    ginf = traj.diagnostics["grad_u_inf"]
    if len(t) < 2:
        return 0.0
    return _weighted_integral(t, ginf**2, 1)


def linfty_decay_check(traj: Trajectory) -> CheckResult:
    """Empirical constant in the weighted sup-norm decay estimate.

    lhs = max over steps of t * ||u(t)||_inf^2, rhs = norm_z^2. No sharp
    constant is known, so passing means both sides are finite (with lhs = 0
    forced when the flow is identically zero); the interesting output is
    the ratio, which should be stable across resolutions.
    """
    t = traj.diagnostics["t"]
    uinf = traj.diagnostics["u_inf"]
    lhs = float((t * uinf**2).max())
    rhs = norm_z(traj) ** 2
    ratio = lhs / rhs if rhs > 0 else (0.0 if lhs == 0.0 else math.inf)
    passed = math.isfinite(lhs) and math.isfinite(rhs) and math.isfinite(ratio)
    return CheckResult(lhs=lhs, rhs=rhs, passed=passed, params={"ratio": ratio})


def _hessian_l2(f) -> float:
    if isinstance(f, VectorField2):
        return norm(hessian_norms(f), 2)
    from .fields import _second_derivatives

    fxx, fxy, fyy = _second_derivatives(f.values, f.grid)
    h2 = f.grid.spacing**2
    return float(math.sqrt(((fxx**2 + 2.0 * fxy**2 + fyy**2).sum()) * h2))


def inequality_ratio(f, kind: str) -> float:
    """Ratio LHS/RHS for one of the interpolation inequalities.

    ladyzhenskaya: ||f||_4 vs ||f||_2^{1/2} ||grad f||_2^{1/2};
    agmon: ||f||_inf vs ||f||_2^{1/2} ||grad^2 f||_2^{1/2} (homogeneous
    form, meaningful for zero-mean fields); interp_inf: ||f||_inf vs
    ||f||_4^{1/2} ||grad f||_4^{1/2}.
    """
    if kind == "ladyzhenskaya":
        denom = math.sqrt(norm(f, 2)) * math.sqrt(seminorm_grad(f, 2))
        num = norm(f, 4)
    elif kind == "agmon":
        denom = math.sqrt(norm(f, 2)) * math.sqrt(_hessian_l2(f))
        num = norm(f, np.inf)
    elif kind == "interp_inf":
        denom = math.sqrt(norm(f, 4)) * math.sqrt(seminorm_grad(f, 4))
        num = norm(f, np.inf)
    else:
        raise ValueError(f"unknown inequality {kind!r}")
    if denom == 0.0:
        raise DegenerateField(f"{kind} ratio undefined for constant fields")
    return num / denom


def gronwall_check(times, f, a: float, g, tol: float = 1e-9) -> dict:
    """Audit a discrete Gronwall pattern on a shared time grid.

    premise_holds: f(t_i) <= a + trapezoid(g*f)[0, t_i] at every node.
    bound_holds: f(t_i) <= a * exp(trapezoid(g)[0, t_i]) * (1 + tol_i),
    where tol_i is the requested tol widened, when necessary, by the exact
    discrete-recursion envelope prod (1 + dt g_j/2) / (1 - dt g_{j+1}/2);
    the widening makes "premise implies bound" a theorem for the discrete
    trapezoid premise, not just a continuum analogy.
    """
    t = np.asarray(times, dtype=float)
    fv = np.asarray(f, dtype=float)
    gv = np.asarray(g, dtype=float)
    if t.ndim != 1 or t.shape != fv.shape or t.shape != gv.shape:
        raise GridMismatch("times, f, g must be 1D arrays of one length")
    if t.shape[0] < 1:
        raise GridMismatch("need at least one sample")
    if np.any(np.diff(t) <= 0):
        raise GridMismatch("times must be strictly increasing")
    if np.any(gv < 0):
        raise NegativeEntries("g must be nonnegative")
    if not (math.isfinite(a) and np.all(np.isfinite(fv)) and np.all(np.isfinite(gv))):
        raise ValueError("inputs must be finite")
    if tol < 0:
        raise ValueError("tol must be nonnegative")

    dt = np.diff(t)
    gf = gv * fv
    running = np.concatenate([[0.0], np.cumsum(dt * (gf[:-1] + gf[1:]) / 2.0)])
    premise = bool(np.all(fv <= a + running))

    g_int = np.concatenate([[0.0], np.cumsum(dt * (gv[:-1] + gv[1:]) / 2.0)])
    x = dt * gv[:-1] / 2.0
    y = dt * gv[1:] / 2.0
    log_env = np.empty(t.shape[0])
    log_env[0] = 0.0
    with np.errstate(divide="ignore"):
        steps = np.log1p(x) - np.where(y < 1.0, np.log1p(-y), -np.inf)
    log_env[1:] = np.cumsum(steps)
    envelope_tol = np.expm1(np.maximum(log_env - g_int, 0.0))
    tol_eff = np.maximum(tol, envelope_tol)
    rhs = a * np.exp(g_int) * (1.0 + tol_eff)
    bound = bool(np.all(fv <= rhs))

    margins = rhs - fv
    return {
        "premise_holds": premise,
        "bound_holds": bound,
        "tol_used": float(np.max(tol_eff)),
        "worst_margin": float(margins.min()),
    }
