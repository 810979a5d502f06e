"""Time integration of variable-density incompressible flow.

One step is a first-order splitting: the density rides backward
characteristics with a bounds-confined bicubic (so the pointwise corridor
[c0, C0] survives exactly), the velocity takes an explicit midpoint
predictor for advection and diffusion, and a variable-coefficient pressure
projection restores the divergence constraint. Velocity state is kept
band-limited by the 2/3 rule, which also keeps the explicit diffusion
stage inside its stability region at the documented time-step caps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from .errors import (
    BadParams,
    BadTestFunction,
    BoundsBreach,
    CFLViolation,
    GridMismatch,
    PressureSolveStall,
)
from .fields import (
    GridSpec,
    ScalarField,
    VectorField2,
    _spectral_tables,
    dealias,
    divergence,
    grad_tensor,
    leray_project,
)
from .transport import ScalarTrack, VelocityTrack, transport_density

__all__ = [
    "DensityBounds",
    "SolverConfig",
    "State",
    "Trajectory",
    "make_initial",
    "step",
    "run",
    "SteadyTestFunction",
    "ModulatedTestFunction",
    "residual_weak_form",
    "energy_report",
]

_DIFFUSION_CAP = 0.2  # hard explicit-diffusion ceiling on nu*dt/h^2


@dataclass(frozen=True)
class DensityBounds:
    """The admissible density corridor 0 < c0 <= rho <= C0."""

    c0: float
    C0: float

    def __post_init__(self):
        if not (0.0 < self.c0 <= self.C0 < math.inf):
            raise ValueError(f"need 0 < c0 <= C0 < inf, got ({self.c0}, {self.C0})")


@dataclass(frozen=True)
class SolverConfig:
    nu: float
    T: float
    dt: float | None = None
    cfl: float | None = None
    snapshot_stride: int = 1
    pressure_tol: float = 1e-10
    bounds: DensityBounds = dc_field(default_factory=lambda: DensityBounds(0.5, 2.0))
    div_tol: float = 1e-6

    def __post_init__(self):
        if not (self.nu > 0.0 and math.isfinite(self.nu)):
            raise ValueError(f"viscosity must be positive, got {self.nu}")
        if not (self.T >= 0.0 and math.isfinite(self.T)):
            raise ValueError(f"final time must be >= 0, got {self.T}")
        if (self.dt is None) == (self.cfl is None):
            raise ValueError("set exactly one of dt and cfl")
        if self.dt is not None and not (self.dt > 0.0):
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.cfl is not None and not (0.0 < self.cfl <= 1.0):
            raise ValueError(f"cfl must be in (0, 1], got {self.cfl}")
        if not (0.0 < self.pressure_tol <= 1e-6):
            raise ValueError(f"pressure_tol must be in (0, 1e-6], got {self.pressure_tol}")
        if self.snapshot_stride < 1:
            raise ValueError("snapshot_stride must be >= 1")
        if not (self.div_tol > 0.0):
            raise ValueError("div_tol must be positive")


@dataclass(frozen=True)
class State:
    """One time slice (t, rho, u, p); p is stored mean-free."""

    t: float
    rho: ScalarField
    u: VectorField2
    p: ScalarField


class Trajectory:
    """Stored states at stride instants plus per-step diagnostic series.

    diagnostics keys: t, kinetic, dissipation_cum, grad_u_inf, u_inf,
    cg_iters, rho_min, rho_max, mass — one entry per time level including
    the initial one.
    """

    def __init__(self, config: SolverConfig, states, diagnostics):
        if not states:
            raise ValueError("a trajectory needs at least one state")
        self.config = config
        self.states = list(states)
        self.grid = self.states[0].rho.grid
        self.diagnostics = {k: np.asarray(v, dtype=float) for k, v in diagnostics.items()}

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.states])

    @property
    def initial(self) -> State:
        return self.states[0]

    @property
    def final(self) -> State:
        return self.states[-1]

    @classmethod
    def from_states(cls, states, config: SolverConfig) -> "Trajectory":
        """Wrap externally built states (e.g. closed-form solutions).

        Diagnostics are reconstructed on the state times; the dissipation
        integral uses the trapezoid rule there, and cg_iters is zero.
        """
        states = list(states)
        times = np.array([s.t for s in states])
        if len(states) > 1 and np.any(np.diff(times) <= 0):
            raise ValueError("state times must be strictly increasing")
        h2 = states[0].rho.grid.spacing ** 2
        kin, gsq, ginf, uinf, rmin, rmax, mass = [], [], [], [], [], [], []
        for s in states:
            speed2 = s.u.x_comp**2 + s.u.y_comp**2
            kin.append(0.5 * float((s.rho.values * speed2).sum()) * h2)
            gxx, gxy, gyx, gyy = grad_tensor(s.u)
            g2 = gxx**2 + gxy**2 + gyx**2 + gyy**2
            gsq.append(float(g2.sum()) * h2)
            ginf.append(float(np.sqrt(g2).max()))
            uinf.append(float(np.sqrt(speed2).max()))
            rmin.append(float(s.rho.values.min()))
            rmax.append(float(s.rho.values.max()))
            mass.append(float(s.rho.values.sum()) * h2)
        gsq = np.asarray(gsq)
        if len(states) > 1:
            seg = np.diff(times) * (gsq[:-1] + gsq[1:]) / 2.0
            cum = np.concatenate([[0.0], np.cumsum(seg)])
        else:
            cum = np.zeros(1)
        diag = {
            "t": times,
            "kinetic": kin,
            "dissipation_cum": config.nu * cum,
            "grad_u_inf": ginf,
            "u_inf": uinf,
            "cg_iters": np.zeros(len(states)),
            "rho_min": rmin,
            "rho_max": rmax,
            "mass": mass,
        }
        return cls(config, states, diag)

    def velocity_track(self) -> VelocityTrack:
        return VelocityTrack(self.times, [s.u for s in self.states])

    def density_track(self) -> ScalarTrack:
        return ScalarTrack(self.times, [s.rho for s in self.states])

    def pressure_track(self) -> ScalarTrack:
        return ScalarTrack(self.times, [s.p for s in self.states])


def _blob(grid: GridSpec, base, amp, kappa, cx, cy):
    X, Y = grid.mesh()
    return base + amp * np.exp(kappa * (np.cos(X - cx) + np.cos(Y - cy) - 2.0))


def _random_stream(grid: GridSpec, rng, kmax: int) -> np.ndarray:
    """Random band-limited stream function, decorrelated mode phases."""
    X, Y = grid.mesh()
    psi = np.zeros_like(X)
    for kx in range(-kmax, kmax + 1):
        for ky in range(0, kmax + 1):
            if ky == 0 and kx <= 0:
                continue
            k2 = kx * kx + ky * ky
            if k2 == 0 or k2 > kmax * kmax:
                continue
            amp = rng.standard_normal() / (1.0 + k2)
            phase = rng.uniform(0.0, 2.0 * math.pi)
            psi += amp * np.cos(kx * X + ky * Y + phase)
    return psi


def _stream_velocity(grid: GridSpec, psi: np.ndarray) -> VectorField2:
    kdx, kdy, _, _, _ = _spectral_tables(grid.n, grid.length)
    ph = np.fft.fft2(psi)
    ux = np.fft.ifft2(-1j * kdy * ph).real
    uy = np.fft.ifft2(1j * kdx * ph).real
    return VectorField2(grid, ux, uy)


def _require_params(kind, params, allowed):
    extra = set(params) - set(allowed)
    if extra:
        raise BadParams(f"{kind} does not take {sorted(extra)}")
    merged = dict(allowed)
    merged.update(params)
    return merged


def make_initial(grid: GridSpec, kind: str, seed=None, **params):
    """Construct (rho0, u0) for a named family; u0 is exactly solenoidal.

    Kinds: taylor_green (amplitude, density), constant_velocity (cx, cy,
    rho_base, rho_amp, kappa, center), random_bandlimited (kmax, amplitude,
    bounds, margin), density_blob_mix (n_blobs, kappa, amplitude, kmax,
    bounds, margin). Randomized kinds are reproducible from seed.
    """
    rng = np.random.default_rng(seed)
    if kind == "taylor_green":
        p = _require_params(kind, params, {"amplitude": 1.0, "density": 1.0})
        a = float(p["amplitude"])
        d = float(p["density"])
        if not (math.isfinite(a) and d > 0.0 and math.isfinite(d)):
            raise BadParams(f"taylor_green needs finite amplitude and density > 0")
        u0 = VectorField2.from_functions(
            grid,
            lambda x, y: a * np.sin(x) * np.cos(y),
            lambda x, y: -a * np.cos(x) * np.sin(y),
        )
        return ScalarField.constant(grid, d), u0
    if kind == "constant_velocity":
        p = _require_params(
            kind,
            params,
            {"cx": 1.0, "cy": 0.0, "rho_base": 0.75, "rho_amp": 1.0,
             "kappa": 1.5, "center": (math.pi, math.pi)},
        )
        if not (p["rho_base"] > 0.0 and p["rho_amp"] >= 0.0 and p["kappa"] > 0.0):
            raise BadParams("constant_velocity needs rho_base > 0, rho_amp >= 0, kappa > 0")
        cx0, cy0 = p["center"]
        rho0 = ScalarField(grid, _blob(grid, p["rho_base"], p["rho_amp"], p["kappa"], cx0, cy0))
        u0 = VectorField2(
            grid,
            np.full((grid.n, grid.n), float(p["cx"])),
            np.full((grid.n, grid.n), float(p["cy"])),
        )
        return rho0, u0
    if kind == "random_bandlimited":
        p = _require_params(
            kind, params,
            {"kmax": 8, "amplitude": 1.0, "bounds": (0.5, 2.0), "margin": 0.1},
        )
        kmax = int(p["kmax"])
        if kmax < 1 or kmax > grid.n // 3:
            raise BadParams(f"kmax must be in [1, n/3], got {kmax}")
        if not (0.0 < p["margin"] < 0.5):
            raise BadParams("margin must be in (0, 0.5)")
        u0 = _stream_velocity(grid, _random_stream(grid, rng, kmax))
        speed = float(np.hypot(u0.x_comp, u0.y_comp).max())
        if speed > 0:
            scale = float(p["amplitude"]) / speed
            u0 = VectorField2(grid, u0.x_comp * scale, u0.y_comp * scale)
        c0, C0 = p["bounds"]
        if not (0.0 < c0 < C0):
            raise BadParams("bounds must satisfy 0 < c0 < C0")
        s = _random_stream(grid, rng, max(2, kmax // 2))
        smax = float(np.abs(s).max())
        mid, half = (c0 + C0) / 2.0, (C0 - c0) / 2.0
        rho = mid + half * (1.0 - 2.0 * p["margin"]) * (s / smax if smax > 0 else s)
        return ScalarField(grid, rho), u0
    if kind == "density_blob_mix":
        p = _require_params(
            kind, params,
            {"n_blobs": 3, "kappa": 1.5, "amplitude": 1.0, "kmax": 4,
             "bounds": (0.5, 2.0), "margin": 0.05},
        )
        nb = int(p["n_blobs"])
        if nb < 1:
            raise BadParams("n_blobs must be >= 1")
        if not (0.0 < p["margin"] < 0.5):
            raise BadParams("margin must be in (0, 0.5)")
        c0, C0 = p["bounds"]
        if not (0.0 < c0 < C0):
            raise BadParams("bounds must satisfy 0 < c0 < C0")
        raw = np.zeros((grid.n, grid.n))
        for _ in range(nb):
            cx0, cy0 = rng.uniform(0.0, grid.length, size=2)
            raw += rng.uniform(0.3, 1.0) * _blob(grid, 0.0, 1.0, p["kappa"], cx0, cy0)
        lo, hi = float(raw.min()), float(raw.max())
        mid, half = (c0 + C0) / 2.0, (C0 - c0) / 2.0
        if hi > lo:
            unit = 2.0 * (raw - lo) / (hi - lo) - 1.0
        else:
            unit = np.zeros_like(raw)
        rho = mid + half * (1.0 - 2.0 * p["margin"]) * unit
        u0 = _stream_velocity(grid, _random_stream(grid, rng, int(p["kmax"])))
        speed = float(np.hypot(u0.x_comp, u0.y_comp).max())
        if speed > 0:
            scale = float(p["amplitude"]) / speed
            u0 = VectorField2(grid, u0.x_comp * scale, u0.y_comp * scale)
        return ScalarField(grid, rho), u0
    raise BadParams(f"unknown initial-data kind {kind!r}")


def _fix_mass(vals: np.ndarray, target_mean: float, c0: float, C0: float) -> np.ndarray:
    """Restore the mean with a corridor-safe reshaping.

    Adds lam*(rho - c0)*(C0 - rho), which vanishes at both walls; for
    |lam|*(C0 - c0) < 1 the map rho -> rho + lam*w is increasing, so values
    stay inside [c0, C0] exactly. The drift being repaired is the tiny
    interpolation mass error, so lam is always far below that threshold.
    """
    w = (vals - c0) * (C0 - vals)
    wm = float(w.mean())
    if wm <= 0.0:
        return vals
    lam = (target_mean - float(vals.mean())) / wm
    if abs(lam) * (C0 - c0) >= 1.0:  # give up rather than distort the field
        return vals
    return vals + lam * w


def _predictor_rhs(u: VectorField2, inv_rho: np.ndarray, nu: float):
    """- (u . grad) u + (nu / rho) Lap u, truncated back to the 2/3 band."""
    grid = u.grid
    kdx, kdy, k2_full, _, keep = _spectral_tables(grid.n, grid.length)
    xh = np.fft.fft2(u.x_comp)
    yh = np.fft.fft2(u.y_comp)
    ux_x = np.fft.ifft2(1j * kdx * xh).real
    ux_y = np.fft.ifft2(1j * kdy * xh).real
    uy_x = np.fft.ifft2(1j * kdx * yh).real
    uy_y = np.fft.ifft2(1j * kdy * yh).real
    lap_x = np.fft.ifft2(-k2_full * xh).real
    lap_y = np.fft.ifft2(-k2_full * yh).real
    rx = -(u.x_comp * ux_x + u.y_comp * ux_y) + nu * inv_rho * lap_x
    ry = -(u.x_comp * uy_x + u.y_comp * uy_y) + nu * inv_rho * lap_y
    rx = np.fft.ifft2(np.fft.fft2(rx) * keep).real
    ry = np.fft.ifft2(np.fft.fft2(ry) * keep).real
    return rx, ry


def _pressure_solve(div_star: np.ndarray, inv_rho: np.ndarray, grid: GridSpec,
                    tol: float, max_iter: int = 500):
    """PCG for div((1/rho) grad phi) = b with a spectral preconditioner.

    The operator is assembled with plain spectral derivatives (no
    truncation), which keeps it exactly symmetric; the preconditioner is
    the constant-coefficient solve with the mean of 1/rho.
    """
    kdx, kdy, _, k2_deriv, _ = _spectral_tables(grid.n, grid.length)
    a_bar = float(inv_rho.mean())
    inv_sym = np.where(k2_deriv > 0.0, -1.0 / (a_bar * np.maximum(k2_deriv, 1e-300)), 0.0)

    def apply_op(phi):
        ph = np.fft.fft2(phi)
        gx = np.fft.ifft2(1j * kdx * ph).real
        gy = np.fft.ifft2(1j * kdy * ph).real
        fx = np.fft.fft2(inv_rho * gx)
        fy = np.fft.fft2(inv_rho * gy)
        return np.fft.ifft2(1j * kdx * fx + 1j * kdy * fy).real

    def precond(r):
        rh = np.fft.fft2(r) * inv_sym
        return np.fft.ifft2(rh).real

    b = div_star
    b_norm = float(np.sqrt((b * b).sum()))
    if b_norm == 0.0:
        return np.zeros_like(b), 0
    x = np.zeros_like(b)
    r = b.copy()
    z = precond(r)
    p = z.copy()
    rz = float((r * z).sum())
    for it in range(1, max_iter + 1):
        ap = apply_op(p)
        pap = float((p * ap).sum())
        if pap == 0.0:
            break
        alpha = rz / pap
        x += alpha * p
        r -= alpha * ap
        if float(np.sqrt((r * r).sum())) <= tol * b_norm:
            return x, it
        z = precond(r)
        rz_new = float((r * z).sum())
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise PressureSolveStall(
        f"pressure solve at {max_iter} iterations, residual "
        f"{float(np.sqrt((r * r).sum())) / b_norm:.3e} of rhs"
    )


def step(state: State, dt: float, config: SolverConfig) -> State:
    """Advance one time level: density transport, predictor, projection."""
    grid = state.rho.grid
    h = grid.spacing
    if not (dt > 0.0 and math.isfinite(dt)):
        raise ValueError(f"dt must be positive, got {dt}")
    speed = float(np.hypot(state.u.x_comp, state.u.y_comp).max())
    if speed * dt / h > 1.0:
        raise CFLViolation(f"advective Courant number {speed * dt / h:.3f} > 1")
    if config.nu * dt / h**2 > _DIFFUSION_CAP * (1.0 + 1e-12):
        raise CFLViolation(
            f"nu*dt/h^2 = {config.nu * dt / h**2:.3f} above the explicit cap {_DIFFUSION_CAP}"
        )
    c0, C0 = config.bounds.c0, config.bounds.C0

    track = VelocityTrack.steady(state.u, state.t, state.t + dt)
    rho_new = transport_density(
        state.rho, track, state.t, state.t + dt,
        substep=dt, interpolation="clamped_bicubic",
    )
    vals = _fix_mass(rho_new.values.copy(), float(state.rho.values.mean()), c0, C0)
    if vals.min() < c0 - 1e-12 or vals.max() > C0 + 1e-12:
        raise BoundsBreach(
            f"density range [{vals.min():.15g}, {vals.max():.15g}] "
            f"left [{c0}, {C0}]"
        )
    rho_new = ScalarField(grid, vals)
    inv_rho = 1.0 / vals

    # midpoint predictor for -(u.grad)u + (nu/rho) Lap u, rho frozen at t+dt
    r1x, r1y = _predictor_rhs(state.u, inv_rho, config.nu)
    u_mid = VectorField2(grid, state.u.x_comp + 0.5 * dt * r1x,
                         state.u.y_comp + 0.5 * dt * r1y)
    r2x, r2y = _predictor_rhs(u_mid, inv_rho, config.nu)
    star = VectorField2(grid, state.u.x_comp + dt * r2x, state.u.y_comp + dt * r2y)

    div_star = divergence(star).values
    phi, iters = _pressure_solve(div_star / dt, inv_rho, grid, config.pressure_tol)
    kdx, kdy, _, _, keep = _spectral_tables(grid.n, grid.length)
    ph = np.fft.fft2(phi)
    gpx = np.fft.ifft2(1j * kdx * ph).real
    gpy = np.fft.ifft2(1j * kdy * ph).real
    ux = star.x_comp - dt * inv_rho * gpx
    uy = star.y_comp - dt * inv_rho * gpy
    ux = np.fft.ifft2(np.fft.fft2(ux) * keep).real
    uy = np.fft.ifft2(np.fft.fft2(uy) * keep).real
    u_new = VectorField2(grid, ux, uy)

    div_after = float(np.abs(divergence(u_new).values).max())
    if div_after > config.div_tol:
        raise PressureSolveStall(
            f"projection left divergence {div_after:.3e} above div_tol {config.div_tol:.1e}"
        )
    p_vals = phi - phi.mean()
    new_state = State(state.t + dt, rho_new, u_new, ScalarField(grid, p_vals))
    # caller wants the iteration count for diagnostics; stash it on the side
    object.__setattr__(new_state, "_cg_iters", iters)
    return new_state


def _diag_row(s: State, nu: float):
    h2 = s.rho.grid.spacing ** 2
    speed2 = s.u.x_comp**2 + s.u.y_comp**2
    gxx, gxy, gyx, gyy = grad_tensor(s.u)
    g2 = gxx**2 + gxy**2 + gyx**2 + gyy**2
    return {
        "kinetic": 0.5 * float((s.rho.values * speed2).sum()) * h2,
        "grad_sq": float(g2.sum()) * h2,
        "grad_u_inf": float(np.sqrt(g2).max()),
        "u_inf": float(np.sqrt(speed2).max()),
        "rho_min": float(s.rho.values.min()),
        "rho_max": float(s.rho.values.max()),
        "mass": float(s.rho.values.sum()) * h2,
    }


def pick_dt(u0: VectorField2, config: SolverConfig) -> float:
    """Time step honoring both Courant constraints at the configured cfl.

    The diffusive cap carries an extra min(1, c0) safety factor: the
    effective diffusivity in the predictor is nu/rho, which reaches nu/c0
    where the density sits at its floor.
    """
    if config.dt is not None:
        return float(config.dt)
    grid = u0.grid
    h = grid.spacing
    speed = float(np.hypot(u0.x_comp, u0.y_comp).max())
    dt_adv = h / speed if speed > 0 else math.inf
    dt_diff = 0.5 * min(1.0, config.bounds.c0) * h * h / config.nu
    dt = config.cfl * min(dt_adv, dt_diff)
    if not math.isfinite(dt):
        dt = config.cfl * dt_diff
    return dt


def run(rho0: ScalarField, u0: VectorField2, config: SolverConfig) -> Trajectory:
    """March from (rho0, u0) to time T, storing states every stride steps.

    The input velocity is truncated to the 2/3 band and Leray-projected, so
    the first state already satisfies the solver's invariants; the input
    density must sit inside the configured corridor.
    """
    if rho0.grid != u0.grid:
        raise GridMismatch("rho0 and u0 grids differ")
    c0, C0 = config.bounds.c0, config.bounds.C0
    if rho0.values.min() < c0 - 1e-12 or rho0.values.max() > C0 + 1e-12:
        raise BoundsBreach(
            f"initial density range [{rho0.values.min():.15g}, "
            f"{rho0.values.max():.15g}] outside [{c0}, {C0}]"
        )
    u_start = leray_project(dealias(u0))
    grid = rho0.grid
    state = State(0.0, rho0, u_start, ScalarField.constant(grid, 0.0))

    rows = [_diag_row(state, config.nu)]
    iters_list = [0]
    times = [0.0]
    states = [state]

    if config.T > 0.0:
        dt = pick_dt(u_start, config)
        n_steps = max(1, int(math.ceil(config.T / dt - 1e-9)))
        dt = config.T / n_steps
        for k in range(1, n_steps + 1):
            state = step(state, dt, config)
            rows.append(_diag_row(state, config.nu))
            iters_list.append(getattr(state, "_cg_iters", 0))
            times.append(state.t)
            if k % config.snapshot_stride == 0 or k == n_steps:
                states.append(state)

    t_arr = np.asarray(times)
    gsq = np.array([r["grad_sq"] for r in rows])
    if len(rows) > 1:
        seg = np.diff(t_arr) * (gsq[:-1] + gsq[1:]) / 2.0
        cum = np.concatenate([[0.0], np.cumsum(seg)])
    else:
        cum = np.zeros(1)
    diag = {
        "t": t_arr,
        "kinetic": [r["kinetic"] for r in rows],
        "dissipation_cum": config.nu * cum,
        "grad_u_inf": [r["grad_u_inf"] for r in rows],
        "u_inf": [r["u_inf"] for r in rows],
        "cg_iters": iters_list,
        "rho_min": [r["rho_min"] for r in rows],
        "rho_max": [r["rho_max"] for r in rows],
        "mass": [r["mass"] for r in rows],
    }
    return Trajectory(config, states, diag)


class SteadyTestFunction:
    """Time-independent test function phi(t, x) = Phi(x)."""

    def __init__(self, payload):
        self.payload = payload

    def value(self, t):
        return self.payload

    def dt_value(self, t):
        if isinstance(self.payload, ScalarField):
            return ScalarField.constant(self.payload.grid, 0.0)
        return VectorField2.zero(self.payload.grid)


class ModulatedTestFunction:
    """Separable test function phi(t, x) = g(t) * Phi(x) with exact g'."""

    def __init__(self, payload, g, g_prime):
        self.payload = payload
        self.g = g
        self.g_prime = g_prime

    def _scaled(self, factor):
        if isinstance(self.payload, ScalarField):
            return ScalarField(self.payload.grid, factor * self.payload.values)
        return VectorField2(
            self.payload.grid,
            factor * self.payload.x_comp,
            factor * self.payload.y_comp,
        )

    def value(self, t):
        return self._scaled(float(self.g(t)))

    def dt_value(self, t):
        return self._scaled(float(self.g_prime(t)))


def _simpson_weights(times: np.ndarray) -> np.ndarray:
    """Composite Simpson weights on a (near-)uniform grid.

    With an odd interval count the final interval falls back to the
    trapezoid rule; its O(dt^3) local error is below every tolerance the
    residual contracts use.
    """
    m = len(times) - 1
    w = np.zeros(len(times))
    if m <= 0:
        return w
    if m == 1:
        half = (times[1] - times[0]) / 2.0
        return np.array([half, half])
    pairs = m // 2
    for j in range(pairs):
        i = 2 * j
        h1 = times[i + 1] - times[i]
        h2 = times[i + 2] - times[i + 1]
        tot = h1 + h2
        w[i] += tot * (2.0 - h2 / h1) / 6.0
        w[i + 1] += tot * tot * tot / (6.0 * h1 * h2)
        w[i + 2] += tot * (2.0 - h1 / h2) / 6.0
    if m % 2:
        half = (times[-1] - times[-2]) / 2.0
        w[-2] += half
        w[-1] += half
    return w


def residual_weak_form(traj: Trajectory, phi, which: str) -> float:
    """Absolute defect of one distributional identity on the snapshot grid.

    which = "mass": d/dt int rho phi = int rho u . grad phi;
    which = "momentum" (phi vector-valued, divergence-free): the full
    momentum identity with the viscous term and no pressure contribution;
    which = "incompressibility": int dt int u . grad phi = 0.
    Space is integrated by the rectangle rule (spectrally accurate for
    smooth periodic integrands), time by composite Simpson on the stored
    snapshot times.
    """
    from .fields import gradient  # deferred: fields is imported lightly above

    states = traj.states
    if len(states) < 2:
        raise ValueError("need at least two stored states")
    times = traj.times
    wts = _simpson_weights(times)
    h2 = traj.grid.spacing ** 2

    if which == "incompressibility":
        total = 0.0
        for w, s in zip(wts, states):
            ph = phi.value(s.t)
            if not isinstance(ph, ScalarField):
                raise BadTestFunction("incompressibility identity takes a scalar test function")
            g = gradient(ph)
            total += w * float((s.u.x_comp * g.x_comp + s.u.y_comp * g.y_comp).sum()) * h2
        return abs(total)

    if which == "mass":
        total = 0.0
        for w, s in zip(wts, states):
            ph = phi.value(s.t)
            if not isinstance(ph, ScalarField):
                raise BadTestFunction("mass identity takes a scalar test function")
            dph = phi.dt_value(s.t)
            g = gradient(ph)
            inner_flux = s.u.x_comp * g.x_comp + s.u.y_comp * g.y_comp
            total += w * float((s.rho.values * (dph.values + inner_flux)).sum()) * h2
        s0, s1 = states[0], states[- 1]
        lhs = float((s1.rho.values * phi.value(s1.t).values).sum()) * h2
        lhs -= float((s0.rho.values * phi.value(s0.t).values).sum()) * h2
        return abs(lhs - total)

    if which == "momentum":
        total = 0.0
        for w, s in zip(wts, states):
            ps = phi.value(s.t)
            if not isinstance(ps, VectorField2):
                raise BadTestFunction("momentum identity takes a vector test function")
            div_inf = float(np.abs(divergence(ps).values).max())
            if div_inf > 1e-10:
                raise BadTestFunction(
                    f"momentum test function has divergence {div_inf:.2e} > 1e-10"
                )
            dps = phi.dt_value(s.t)
            pxx, pxy, pyx, pyy = grad_tensor(ps)
            uxx, uxy, uyx, uyy = grad_tensor(s.u)
            rho = s.rho.values
            ux, uy = s.u.x_comp, s.u.y_comp
            term = rho * (ux * dps.x_comp + uy * dps.y_comp)
            # rho u_i u_j d_i psi_j
            term += rho * (ux * ux * pxx + ux * uy * pxy + uy * ux * pyx + uy * uy * pyy)
            term -= traj.config.nu * (uxx * pxx + uxy * pxy + uyx * pyx + uyy * pyy)
            total += w * float(term.sum()) * h2
        s0, s1 = states[0], states[-1]
        p1 = phi.value(s1.t)
        p0 = phi.value(s0.t)
        lhs = float((s1.rho.values * (s1.u.x_comp * p1.x_comp + s1.u.y_comp * p1.y_comp)).sum()) * h2
        lhs -= float((s0.rho.values * (s0.u.x_comp * p0.x_comp + s0.u.y_comp * p0.y_comp)).sum()) * h2
        return abs(lhs - total)

    raise ValueError(f"unknown identity {which!r}")


def energy_report(traj: Trajectory) -> dict:
    """Energy-equality audit from the per-step diagnostic series.

    lhs(t) = kinetic(t) + nu * cumulative enstrophy integral; rhs is the
    initial kinetic energy; gap(t) = lhs(t) - rhs.
    """
    t = traj.diagnostics["t"]
    kinetic = traj.diagnostics["kinetic"]
    lhs = kinetic + traj.diagnostics["dissipation_cum"]
    rhs = float(kinetic[0])
    gap = lhs - rhs
    denom = max(abs(rhs), 1e-300)
    return {
        "t": t,
        "lhs": lhs,
        "rhs": rhs,
        "gap": gap,
        "max_rel_gap": float(np.abs(gap).max() / denom),
    }
