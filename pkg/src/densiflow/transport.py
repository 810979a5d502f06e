"""Characteristic flows, Lagrangian density transport, and flow-map checks.

A *track* is a time-indexed sequence of field snapshots on one grid; between
snapshots everything is interpolated linearly in time. Flow maps are
integrated pointwise with classical RK4 along the track, carrying the
differential as a 2x2 matrix per point whose evolution is driven by the
spectrally sampled velocity gradient. Because the gradient is interpolated
from its own samples rather than obtained by differentiating the velocity
interpolant, a solenoidal track yields an exactly trace-free driver and the
Jacobian stays at unity to integrator accuracy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import (
    DomainError,
    GridMismatch,
    NonPositiveTimes,
    OutOfRange,
    TrackError,
    WrapAround,
)
from .fields import GridSpec, ScalarField, VectorField2, grad_tensor
from .report import CheckResult

__all__ = [
    "VelocityTrack",
    "ScalarTrack",
    "FlowMap",
    "advance_flow",
    "trace_points",
    "transport_density",
    "dx_bound_check",
    "log_kernel_flow_check",
    "renormalization_residual",
    "support_growth_check",
]


def _check_times(times):
    t = np.asarray(times, dtype=float)
    if t.ndim != 1 or t.shape[0] < 2:
        raise TrackError("a track needs at least two snapshot times")
    if not np.all(np.isfinite(t)):
        raise TrackError("snapshot times must be finite")
    if np.any(np.diff(t) <= 0):
        raise TrackError("snapshot times must be strictly increasing")
    return t


class VelocityTrack:
    """Velocity snapshots at increasing times, linearly interpolated between."""

    def __init__(self, times, fields):
        self.times = _check_times(times)
        fields = list(fields)
        if len(fields) != self.times.shape[0]:
            raise TrackError(
                f"{self.times.shape[0]} times but {len(fields)} snapshots"
            )
        grid = fields[0].grid
        for f in fields:
            if f.grid != grid:
                raise GridMismatch("track snapshots live on different grids")
        self.fields = fields
        self.grid = grid
        self._comps = None
        self._grads = None

    @classmethod
    def steady(cls, field: VectorField2, t0: float, t1: float) -> "VelocityTrack":
        """A time-independent track: the same field at both ends of [t0, t1]."""
        return cls([t0, t1], [field, field])

    @property
    def t_min(self) -> float:
        return float(self.times[0])

    @property
    def t_max(self) -> float:
        return float(self.times[-1])

    def _require_inside(self, *ts):
        span = self.t_max - self.t_min
        slack = 1e-9 * max(span, 1.0)
        for t in ts:
            if t < self.t_min - slack or t > self.t_max + slack:
                raise OutOfRange(
                    f"time {t} outside track span [{self.t_min}, {self.t_max}]"
                )

    def comps(self):
        if self._comps is None:
            n = self.grid.n
            arr = np.empty((len(self.fields), 2, n, n))
            for k, f in enumerate(self.fields):
                arr[k, 0] = f.x_comp
                arr[k, 1] = f.y_comp
            self._comps = np.ascontiguousarray(arr)
        return self._comps

    def grads(self):
        if self._grads is None:
            n = self.grid.n
            arr = np.empty((len(self.fields), 4, n, n))
            for k, f in enumerate(self.fields):
                gxx, gxy, gyx, gyy = grad_tensor(f)
                arr[k, 0] = gxx
                arr[k, 1] = gxy
                arr[k, 2] = gyx
                arr[k, 3] = gyy
            self._grads = np.ascontiguousarray(arr)
        return self._grads

    def _weights(self, t):
        self._require_inside(t)
        k = int(np.searchsorted(self.times, t, side="right") - 1)
        k = min(max(k, 0), self.times.shape[0] - 2)
        dt = self.times[k + 1] - self.times[k]
        th = min(max((t - self.times[k]) / dt, 0.0), 1.0)
        return k, th

    def sample(self, t: float) -> VectorField2:
        k, th = self._weights(t)
        a, b = self.fields[k], self.fields[k + 1]
        return VectorField2(
            self.grid,
            (1 - th) * a.x_comp + th * b.x_comp,
            (1 - th) * a.y_comp + th * b.y_comp,
        )

    def grad_inf(self, t: float) -> float:
        """Max Frobenius norm of the time-interpolated velocity gradient."""
        k, th = self._weights(t)
        g = self.grads()
        mix = (1 - th) * g[k] + th * g[k + 1]
        return float(np.sqrt((mix**2).sum(axis=0)).max())

    def speed_inf(self, t: float) -> float:
        k, th = self._weights(t)
        c = self.comps()
        mix = (1 - th) * c[k] + th * c[k + 1]
        return float(np.sqrt(mix[0] ** 2 + mix[1] ** 2).max())


class ScalarTrack:
    """Scalar snapshots at increasing times, linearly interpolated between."""

    def __init__(self, times, fields):
        self.times = _check_times(times)
        fields = list(fields)
        if len(fields) != self.times.shape[0]:
            raise TrackError(
                f"{self.times.shape[0]} times but {len(fields)} snapshots"
            )
        grid = fields[0].grid
        for f in fields:
            if f.grid != grid:
                raise GridMismatch("track snapshots live on different grids")
        self.fields = fields
        self.grid = grid
        self._vals = None

    @classmethod
    def steady(cls, field: ScalarField, t0: float, t1: float) -> "ScalarTrack":
        return cls([t0, t1], [field, field])

    @property
    def t_min(self) -> float:
        return float(self.times[0])

    @property
    def t_max(self) -> float:
        return float(self.times[-1])

    def values(self):
        if self._vals is None:
            n = self.grid.n
            arr = np.empty((len(self.fields), n, n))
            for k, f in enumerate(self.fields):
                arr[k] = f.values
            self._vals = np.ascontiguousarray(arr)
        return self._vals

    def sample(self, t: float) -> ScalarField:
        span = self.t_max - self.t_min
        slack = 1e-9 * max(span, 1.0)
        if t < self.t_min - slack or t > self.t_max + slack:
            raise OutOfRange(
                f"time {t} outside track span [{self.t_min}, {self.t_max}]"
            )
        k = int(np.searchsorted(self.times, t, side="right") - 1)
        k = min(max(k, 0), self.times.shape[0] - 2)
        dt = self.times[k + 1] - self.times[k]
        th = min(max((t - self.times[k]) / dt, 0.0), 1.0)
        a, b = self.fields[k], self.fields[k + 1]
        return ScalarField(self.grid, (1 - th) * a.values + th * b.values)


@dataclass(frozen=True)
class FlowMap:
    """Particle map X(t; s, x) on the grid, with its spatial differential.

    displacement holds X - x unwrapped (a particle that loops the torus keeps
    its winding); differential holds the four entries of DX in row-major
    order (xx, xy, yx, yy).
    """

    grid: GridSpec
    s: float
    t: float
    substep: float
    displacement: VectorField2
    differential: tuple

    def positions(self):
        """Destination coordinates (unwrapped) as a pair of arrays."""
        xg, yg = self.grid.mesh()
        return (xg + self.displacement.x_comp, yg + self.displacement.y_comp)

    @property
    def jacobian(self) -> ScalarField:
        axx, axy, ayx, ayy = (d.values for d in self.differential)
        return ScalarField(self.grid, axx * ayy - axy * ayx)

    def differential_norm(self) -> ScalarField:
        """Pointwise Frobenius norm of DX."""
        sq = sum(d.values**2 for d in self.differential)
        return ScalarField(self.grid, np.sqrt(sq))

    def differential_size(self) -> ScalarField:
        """Identity-normalized Frobenius size of DX: ||DX||_F / ||I||_F.

        Unit at the identity, and bounded by the spectral norm, so the
        exponential growth estimates apply to it verbatim.
        """
        return ScalarField(self.grid, self.differential_norm().values / math.sqrt(2.0))


def _n_sub(gap: float, substep: float) -> int:
    if substep <= 0 or not math.isfinite(substep):
        raise ValueError("substep must be positive")
    return max(1, int(math.ceil(gap / substep - 1e-12)))


def advance_flow(u: VelocityTrack, s: float, t: float, substep: float) -> FlowMap:
    """Integrate the flow map of the track from time s to time t.

    Runs one RK4 trajectory per grid node, advancing the position and the
    differential together so both see the same interpolated velocity.
    """
    u._require_inside(s, t)
    n_sub = _n_sub(abs(t - s), substep)
    xg, yg = u.grid.mesh()
    x0 = np.ascontiguousarray(xg.ravel())
    y0 = np.ascontiguousarray(yg.ravel())
    out_x = np.empty_like(x0)
    out_y = np.empty_like(y0)
    out_a = np.empty((4, x0.shape[0]))
    _kernels.rk4_flow(
        u.times, u.comps(), u.grads(), x0, y0, float(s), float(t),
        n_sub, u.grid.length, True, out_x, out_y, out_a,
    )
    n = u.grid.n
    disp = VectorField2(u.grid, (out_x - x0).reshape(n, n), (out_y - y0).reshape(n, n))
    diff = tuple(ScalarField(u.grid, out_a[c].reshape(n, n)) for c in range(4))
    return FlowMap(u.grid, float(s), float(t), float(substep), disp, diff)


def trace_points(u: VelocityTrack, s: float, t: float, substep: float, x, y):
    """Trace arbitrary seed points from time s to time t; returns (X, Y)."""
    u._require_inside(s, t)
    x = np.ascontiguousarray(np.asarray(x, dtype=float).ravel())
    y = np.ascontiguousarray(np.asarray(y, dtype=float).ravel())
    if x.shape != y.shape:
        raise ValueError("x and y must have the same length")
    n_sub = _n_sub(abs(t - s), substep)
    out_x = np.empty_like(x)
    out_y = np.empty_like(y)
    out_a = np.empty((4, x.shape[0]))
    dummy = np.zeros((u.times.shape[0], 4, 1, 1))
    _kernels.rk4_flow(
        u.times, u.comps(), dummy, x, y, float(s), float(t),
        n_sub, u.grid.length, False, out_x, out_y, out_a,
    )
    return out_x, out_y


def transport_density(
    rho_at_tau: ScalarField,
    u: VelocityTrack,
    tau: float,
    s: float,
    source: ScalarTrack | None = None,
    substep: float | None = None,
    interpolation: str = "bilinear",
) -> ScalarField:
    """Solve the transport equation along characteristics from time tau to s.

    The value at (s, x) is the upstream value of rho at the characteristic
    foot X(tau; s, x), plus the integral of the source along the path. The
    foot interpolation is "bilinear" or "clamped_bicubic"; the latter is
    third-order accurate while still confined to the local sample range.
    """
    if rho_at_tau.grid != u.grid:
        raise GridMismatch("density and velocity grids differ")
    u._require_inside(tau, s)
    if interpolation not in ("bilinear", "clamped_bicubic"):
        raise ValueError(f"unknown interpolation {interpolation!r}")
    gap = abs(s - tau)
    if gap == 0.0:
        return ScalarField(rho_at_tau.grid, rho_at_tau.values.copy())
    if substep is None:
        substep = min(0.01, gap)
    n_sub = _n_sub(gap, substep)
    has_src = source is not None
    if has_src:
        if source.grid != u.grid:
            raise GridMismatch("source and velocity grids differ")
        lo, hi = min(tau, s), max(tau, s)
        span = max(source.t_max - source.t_min, 1.0)
        if lo < source.t_min - 1e-9 * span or hi > source.t_max + 1e-9 * span:
            raise OutOfRange("source track does not cover the transport window")
        src_times = source.times
        src_vals = source.values()
    else:
        src_times = np.array([0.0, 1.0])
        src_vals = np.zeros((2, 1, 1))
    xg, yg = u.grid.mesh()
    x0 = np.ascontiguousarray(xg.ravel())
    y0 = np.ascontiguousarray(yg.ravel())
    foot_x = np.empty_like(x0)
    foot_y = np.empty_like(y0)
    acc = np.empty_like(x0)
    _kernels.rk4_foot_with_source(
        u.times, u.comps(), src_times, src_vals, has_src,
        x0, y0, float(s), float(tau), n_sub, u.grid.length,
        foot_x, foot_y, acc,
    )
    out = np.empty_like(x0)
    mode = 0 if interpolation == "bilinear" else 1
    _kernels.interp_grid(rho_at_tau.values, foot_x, foot_y, u.grid.length, mode, out)
    n = u.grid.n
    # acc integrated from s to tau; the update wants the tau-to-s integral.
    vals = out.reshape(n, n) - acc.reshape(n, n)
    return ScalarField(u.grid, vals)


def _upper_trapezoid(fn, a: float, b: float, knot_times, base_points: int) -> float:
    """Trapezoid quadrature of fn on [a, b] refined at the knot times.

    fn is convex between consecutive knots (it is a max of affine functions
    of the interpolation weight there), so including every interior knot
    makes the trapezoid value an upper bound for the integral.
    """
    lo, hi = min(a, b), max(a, b)
    nodes = np.linspace(lo, hi, base_points)
    inner = [t for t in np.asarray(knot_times, float) if lo < t < hi]
    if inner:
        nodes = np.unique(np.concatenate([nodes, np.asarray(inner)]))
    vals = np.array([fn(t) for t in nodes])
    return float(np.trapezoid(vals, nodes))


def dx_bound_check(flow: FlowMap, u: VelocityTrack, quad_points: int = 129) -> CheckResult:
    """Check sup|DX| <= exp(integral of sup|grad u|) over the flow window."""
    if flow.grid != u.grid:
        raise GridMismatch("flow map and track grids differ")
    integral = _upper_trapezoid(u.grad_inf, flow.s, flow.t, u.times, quad_points)
    lhs = float(flow.differential_size().values.max())
    rhs = math.exp(integral)
    passed = lhs <= rhs * (1.0 + 1e-6)
    return CheckResult(
        lhs=lhs,
        rhs=rhs,
        passed=passed,
        params={"s": flow.s, "t": flow.t, "grad_integral": integral},
    )


def log_kernel_flow_check(flow: FlowMap, z_norm: float) -> CheckResult:
    """Check sup|DX(t; s)| <= exp(z * sqrt(|log(t/s)|)) for positive times."""
    if flow.s <= 0.0 or flow.t <= 0.0:
        raise NonPositiveTimes("both flow times must be positive")
    if z_norm < 0.0:
        raise ValueError("z_norm must be nonnegative")
    lhs = float(flow.differential_size().values.max())
    rhs = math.exp(z_norm * math.sqrt(abs(math.log(flow.t / flow.s))))
    passed = lhs <= rhs * (1.0 + 1e-9)
    return CheckResult(
        lhs=lhs,
        rhs=rhs,
        passed=passed,
        params={"s": flow.s, "t": flow.t, "z_norm": z_norm},
    )


def _apply_pointwise(beta, values):
    try:
        out = np.asarray(beta(values), dtype=float)
    except Exception as exc:  # noqa: BLE001 - report the user callable's failure
        raise DomainError(f"renormalization function failed: {exc}") from exc
    if out.shape != values.shape:
        raise DomainError("renormalization function must act elementwise")
    if not np.all(np.isfinite(out)):
        raise DomainError("renormalization function produced non-finite values")
    return out


def renormalization_residual(
    rho: ScalarTrack,
    u: VelocityTrack,
    beta,
    phi: ScalarField,
    t: float,
) -> float:
    """Defect of the composed-density weak identity over [t0, t].

    For smooth beta and a divergence-free track, beta(rho) is transported
    too, so int beta(rho(t)) phi - int beta(rho(t0)) phi should equal the
    time integral of int beta(rho) u . grad phi. Returns the absolute
    defect, with the time integral taken by the trapezoid rule on the
    density snapshot times.
    """
    if phi.grid != rho.grid or rho.grid != u.grid:
        raise GridMismatch("density, velocity, and test-function grids differ")
    span = max(rho.t_max - rho.t_min, 1.0)
    if t < rho.t_min - 1e-9 * span or t > rho.t_max + 1e-9 * span:
        raise OutOfRange(f"time {t} outside density track span")
    u._require_inside(rho.t_min, t)
    from .fields import gradient  # local import to avoid a cycle at module load

    gphi = gradient(phi)
    t0 = rho.t_min
    nodes = [t0] + [float(tk) for tk in rho.times if t0 < tk < t] + [float(t)]
    nodes = np.unique(np.asarray(nodes))

    def flux(z):
        b = _apply_pointwise(beta, rho.sample(z).values)
        uz = u.sample(z)
        integrand = b * (uz.x_comp * gphi.x_comp + uz.y_comp * gphi.y_comp)
        return float(integrand.sum()) * rho.grid.spacing**2

    fluxes = np.array([flux(z) for z in nodes])
    rhs = float(np.trapezoid(fluxes, nodes))
    w = rho.grid.spacing**2
    lhs_end = float((_apply_pointwise(beta, rho.sample(t).values) * phi.values).sum()) * w
    lhs_start = float((_apply_pointwise(beta, rho.sample(t0).values) * phi.values).sum()) * w
    return abs(lhs_end - lhs_start - rhs)


def _support_radius(field: ScalarField, center, threshold: float) -> float:
    """Largest min-image distance from center to a sample above threshold."""
    vals = field.values - field.values.min()
    xg, yg = field.grid.mesh()
    L = field.grid.length
    dx = (xg - center[0] + L / 2.0) % L - L / 2.0
    dy = (yg - center[1] + L / 2.0) % L - L / 2.0
    mask = vals > threshold
    if not mask.any():
        return 0.0
    return float(np.sqrt(dx[mask] ** 2 + dy[mask] ** 2).max())


def support_growth_check(
    rho: ScalarTrack,
    u: VelocityTrack,
    tau: float,
    s: float,
    threshold: float = 1e-10,
    center=None,
) -> CheckResult:
    """Check that the support radius grows no faster than particles travel.

    The deviation from the field minimum marks the support; its radius at
    time s must stay within the radius at tau plus the integrated maximum
    speed, plus one interpolation stencil (2h) per snapshot interval.
    Raises WrapAround when the budget reaches the half-period, where the
    min-image radius becomes meaningless.
    """
    if rho.grid != u.grid:
        raise GridMismatch("density and velocity grids differ")
    if not (tau < s):
        raise ValueError("need tau < s")
    span = max(rho.t_max - rho.t_min, 1.0)
    if tau < rho.t_min - 1e-9 * span or s > rho.t_max + 1e-9 * span:
        raise OutOfRange("check window outside density track span")
    u._require_inside(tau, s)
    L = rho.grid.length
    if center is None:
        center = (L / 2.0, L / 2.0)
    r0 = _support_radius(rho.sample(tau), center, threshold)
    travel = _upper_trapezoid(u.speed_inf, tau, s, u.times, 129)
    intervals = max(1, int(np.sum((rho.times > tau + 1e-12) & (rho.times <= s + 1e-12))))
    smear = 2.0 * rho.grid.spacing * intervals
    budget = r0 + travel + smear
    if budget >= L / 2.0:
        raise WrapAround(
            f"support budget {budget:.3g} reaches the half-period {L / 2.0:.3g}"
        )
    lhs = _support_radius(rho.sample(s), center, threshold)
    rhs = budget
    passed = lhs <= rhs + 1e-12
    return CheckResult(
        lhs=lhs,
        rhs=rhs,
        passed=passed,
        params={
            "tau": tau,
            "s": s,
            "radius_start": r0,
            "travel": travel,
            "smear": smear,
            "threshold": threshold,
        },
    )
