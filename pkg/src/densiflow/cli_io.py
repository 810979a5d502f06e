"""Config parsing, field and report persistence, plots, and the CLI.

The config format is a strict flat ``key = value`` document with dotted
section prefixes.  Unknown keys are rejected, defaults are explicit, and
serialization is canonical (schema order, shortest round-trip decimals), so
``serialize(parse(serialize(cfg)))`` is byte-identical to ``serialize(cfg)``.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import os
import struct
import sys

import numpy as np

from . import functionals, stability_lab
from .analytic import (
    antiderivative_check,
    gauss_integral_closed_form,
    gauss_integral_quadrature,
    kernel_bound_check,
    minkowski_check,
)
from .errors import (
    DensiflowError,
    FormatError,
    IoError,
    ParseError,
    ValidationError,
)
from .fields import GridSpec, ScalarField, VectorField2, mollify, MollifierLevel, dealias, leray_project, norm
from .solver import (
    DensityBounds,
    SolverConfig,
    Trajectory,
    energy_report,
    make_initial,
    pick_dt,
    run,
)
from .transport import advance_flow, dx_bound_check, log_kernel_flow_check, trace_points

__all__ = [
    "RunConfig",
    "parse_config",
    "serialize_config",
    "write_field",
    "read_field",
    "write_csv",
    "write_report_json",
    "write_trajectory_meta",
    "write_svg_plot",
    "diagnostics_rows",
    "DIAGNOSTICS_HEADER",
    "main",
]

_TAU = 2.0 * math.pi

_EXPERIMENTS = ("run", "cauchy", "stability", "relative-energy",
                "wminus14", "flow-check", "lemmas")
_INITIAL_KINDS = ("taylor_green", "constant_velocity", "random_bandlimited",
                  "density_blob_mix")

# key -> (type tag, default, predicate, requirement text)
# Type tags: int, float, optfloat (accepts "none"), str.
_SCHEMA = {
    "grid.n": ("int", 128, lambda v: v >= 8 and (v & (v - 1)) == 0,
               "a power of two >= 8"),
    "grid.length": ("float", _TAU, lambda v: v > 0.0, "positive"),
    "solver.nu": ("float", 0.05, lambda v: v > 0.0, "positive"),
    "solver.T": ("float", 0.5, lambda v: v >= 0.0, "nonnegative"),
    "solver.dt": ("optfloat", None, lambda v: v is None or v > 0.0,
                  "positive or none"),
    "solver.cfl": ("optfloat", 0.4, lambda v: v is None or 0.0 < v <= 1.0,
                   "in (0, 1] or none"),
    "solver.snapshot_stride": ("int", 1, lambda v: v >= 1, ">= 1"),
    "solver.pressure_tol": ("float", 1e-10, lambda v: 0.0 < v <= 1e-6,
                            "in (0, 1e-6]"),
    "solver.div_tol": ("float", 1e-6, lambda v: v > 0.0, "positive"),
    "bounds.c0": ("float", 0.5, lambda v: v > 0.0, "positive"),
    "bounds.C0": ("float", 2.0, lambda v: v > 0.0, "positive"),
    "initial.kind": ("str", "random_bandlimited",
                     lambda v: v in _INITIAL_KINDS,
                     "one of " + ", ".join(_INITIAL_KINDS)),
    "initial.seed": ("int", 0, lambda v: v >= 0, ">= 0"),
    "initial.amplitude": ("float", 1.0, lambda v: math.isfinite(v), "finite"),
    "initial.density": ("float", 1.0, lambda v: v > 0.0, "positive"),
    "initial.cx": ("float", 1.0, lambda v: math.isfinite(v), "finite"),
    "initial.cy": ("float", 0.0, lambda v: math.isfinite(v), "finite"),
    "initial.rho_base": ("float", 0.75, lambda v: v > 0.0, "positive"),
    "initial.rho_amp": ("float", 1.0, lambda v: v >= 0.0, "nonnegative"),
    "initial.kappa": ("float", 1.5, lambda v: v > 0.0, "positive"),
    "initial.kmax": ("int", 4, lambda v: v >= 1, ">= 1"),
    "initial.margin": ("float", 0.1, lambda v: 0.0 < v < 0.5, "in (0, 0.5)"),
    "initial.n_blobs": ("int", 3, lambda v: v >= 1, ">= 1"),
    "experiment.name": ("str", "run", lambda v: v in _EXPERIMENTS,
                        "one of " + ", ".join(_EXPERIMENTS)),
    "experiment.levels": ("str", "1,2,4,8,16", None, "comma-separated ints"),
    "experiment.s_list": ("str", "auto", None, "comma-separated floats or auto"),
    "experiment.kappa": ("float", 1.5, lambda v: v > 0.0, "positive"),
    "experiment.mollify_level": ("int", 4, lambda v: v >= 1, ">= 1"),
    "experiment.pairs": ("int", 3, lambda v: v >= 1, ">= 1"),
    "experiment.perturbation": ("float", 0.05, lambda v: v > 0.0, "positive"),
    "experiment.substep": ("float", 0.01, lambda v: v > 0.0, "positive"),
    "experiment.points": ("int", 5, lambda v: v >= 2, ">= 2"),
}

_PER_KIND_PARAMS = {
    "taylor_green": ("amplitude", "density"),
    "constant_velocity": ("cx", "cy", "rho_base", "rho_amp", "kappa"),
    "random_bandlimited": ("kmax", "amplitude", "margin"),
    "density_blob_mix": ("n_blobs", "kappa", "amplitude", "kmax", "margin"),
}
_KINDS_WITH_BOUNDS = ("random_bandlimited", "density_blob_mix")


def _format_value(tag: str, value) -> str:
    if tag == "int":
        return str(int(value))
    if tag == "float":
        return repr(float(value))
    if tag == "optfloat":
        return "none" if value is None else repr(float(value))
    return str(value)


def _convert(key: str, tag: str, raw: str):
    try:
        if tag == "int":
            return int(raw)
        if tag == "float":
            return float(raw)
        if tag == "optfloat":
            return None if raw == "none" else float(raw)
        return raw
    except ValueError:
        raise ValidationError(f"{key}: cannot read {raw!r} as {tag}") from None


@dataclasses.dataclass(frozen=True)
class RunConfig:
    """Validated, fully defaulted experiment configuration."""

    values: dict

    def get(self, key: str):
        return self.values[key]

    def grid(self) -> GridSpec:
        return GridSpec(n=self.values["grid.n"], length=self.values["grid.length"])

    def bounds(self) -> DensityBounds:
        return DensityBounds(self.values["bounds.c0"], self.values["bounds.C0"])

    def solver(self, **overrides) -> SolverConfig:
        kw = {
            "nu": self.values["solver.nu"],
            "T": self.values["solver.T"],
            "dt": self.values["solver.dt"],
            "cfl": self.values["solver.cfl"],
            "snapshot_stride": self.values["solver.snapshot_stride"],
            "pressure_tol": self.values["solver.pressure_tol"],
            "bounds": self.bounds(),
            "div_tol": self.values["solver.div_tol"],
        }
        kw.update(overrides)
        return SolverConfig(**kw)

    def initial_data(self, seed=None):
        kind = self.values["initial.kind"]
        params = {p: self.values[f"initial.{p}"] for p in _PER_KIND_PARAMS[kind]}
        if kind in _KINDS_WITH_BOUNDS:
            params["bounds"] = (self.values["bounds.c0"], self.values["bounds.C0"])
        use_seed = self.values["initial.seed"] if seed is None else seed
        return make_initial(self.grid(), kind, seed=use_seed, **params)

    def levels(self) -> list:
        raw = self.values["experiment.levels"]
        try:
            levels = [int(tok) for tok in raw.split(",") if tok.strip() != ""]
        except ValueError:
            raise ValidationError(f"experiment.levels: bad list {raw!r}") from None
        if not levels or len(set(levels)) != len(levels) or min(levels) < 1:
            raise ValidationError("experiment.levels: need distinct ints >= 1")
        return sorted(levels)

    def s_values(self):
        raw = self.values["experiment.s_list"]
        if raw == "auto":
            return None
        toks = [tok for tok in raw.split(",") if tok.strip() != ""]
        if not toks:
            raise ValidationError("experiment.s_list: need floats or 'auto'")
        try:
            return [float(tok) for tok in toks]
        except ValueError:
            raise ValidationError(f"experiment.s_list: bad list {raw!r}") from None


def parse_config(text: str) -> RunConfig:
    """Parse a strict key = value document, applying documented defaults."""
    values = {key: spec[1] for key, spec in _SCHEMA.items()}
    seen = set()
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.strip()
        if not body or body.startswith("#"):
            continue
        if "=" not in body:
            raise ParseError(f"expected 'key = value', got {body!r}", lineno)
        key, _, raw = body.partition("=")
        key = key.strip()
        raw = raw.strip()
        if not key or not raw:
            raise ParseError(f"expected 'key = value', got {body!r}", lineno)
        if key not in _SCHEMA:
            raise ValidationError(f"unknown key {key!r}")
        if key in seen:
            raise ValidationError(f"duplicate key {key!r}")
        seen.add(key)
        tag, _, check, requirement = _SCHEMA[key]
        value = _convert(key, tag, raw)
        if check is not None and not check(value):
            raise ValidationError(f"{key}: must be {requirement}, got {raw}")
        values[key] = value

    if (values["solver.dt"] is None) == (values["solver.cfl"] is None):
        raise ValidationError("solver.dt / solver.cfl: set exactly one (the other 'none')")
    if not (values["bounds.c0"] <= values["bounds.C0"]):
        raise ValidationError("bounds.c0: must not exceed bounds.C0")
    cfg = RunConfig(values=values)
    cfg.levels()
    cfg.s_values()
    return cfg


def serialize_config(cfg: RunConfig) -> str:
    lines = []
    for key, (tag, _, _, _) in _SCHEMA.items():
        lines.append(f"{key} = {_format_value(tag, cfg.values[key])}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# binary field codec

_MAGIC = b"DFL1"


def write_field(path, field) -> None:
    """Serialize a field as magic, type byte, n, length, little-endian f64."""
    if isinstance(field, ScalarField):
        payload = [field.values]
        kind = b"S"
    elif isinstance(field, VectorField2):
        payload = [field.x_comp, field.y_comp]
        kind = b"V"
    else:
        raise FormatError(f"not a field: {type(field).__name__}")
    grid = field.grid
    blob = bytearray()
    blob += _MAGIC + kind
    blob += struct.pack("<I", grid.n)
    blob += struct.pack("<d", grid.length)
    for comp in payload:
        blob += np.ascontiguousarray(comp, dtype="<f8").tobytes()
    try:
        with open(path, "wb") as fh:
            fh.write(bytes(blob))
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def read_field(path):
    """Inverse of write_field; round trips are bit-exact."""
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    if len(blob) < 17:
        raise FormatError(f"{path}: truncated header")
    if blob[:4] != _MAGIC:
        raise FormatError(f"{path}: bad magic {blob[:4]!r}")
    kind = blob[4:5]
    if kind not in (b"S", b"V"):
        raise FormatError(f"{path}: unknown field type {kind!r}")
    n = struct.unpack("<I", blob[5:9])[0]
    length = struct.unpack("<d", blob[9:17])[0]
    ncomp = 1 if kind == b"S" else 2
    expected = 17 + ncomp * n * n * 8
    if len(blob) != expected:
        raise FormatError(f"{path}: expected {expected} bytes, found {len(blob)}")
    try:
        grid = GridSpec(n=n, length=length)
    except Exception as exc:
        raise FormatError(f"{path}: bad grid header ({exc})") from exc
    comps = []
    off = 17
    for _ in range(ncomp):
        arr = np.frombuffer(blob, dtype="<f8", count=n * n, offset=off).reshape(n, n)
        if not np.all(np.isfinite(arr)):
            raise FormatError(f"{path}: non-finite samples")
        comps.append(arr.copy())
        off += n * n * 8
    if kind == b"S":
        return ScalarField(grid, comps[0])
    return VectorField2(grid, comps[0], comps[1])


# ---------------------------------------------------------------------------
# tabular / report / plot writers

DIAGNOSTICS_HEADER = ["t", "kinetic", "dissipation_cum", "grad_u_inf", "u_inf", "cg_iters"]


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, header, rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        if len(row) != len(header):
            raise FormatError(f"row width {len(row)} != header width {len(header)}")
        lines.append(",".join(_cell(v) for v in row))
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def diagnostics_rows(traj: Trajectory) -> list:
    """One row per completed step (the initial level is the baseline)."""
    d = traj.diagnostics
    rows = []
    for k in range(1, len(d["t"])):
        rows.append([
            float(d["t"][k]),
            float(d["kinetic"][k]),
            float(d["dissipation_cum"][k]),
            float(d["grad_u_inf"][k]),
            float(d["u_inf"][k]),
            int(d["cg_iters"][k]),
        ])
    return rows


def _jsonify(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonify(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonify(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonify(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    return obj


def write_report_json(path, payload: dict) -> None:
    text = json.dumps(_jsonify(payload), sort_keys=True, indent=2) + "\n"
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def write_trajectory_meta(path, traj: Trajectory) -> None:
    cfg = traj.config
    write_report_json(path, {
        "grid": {"n": traj.grid.n, "length": traj.grid.length},
        "nu": cfg.nu,
        "T": cfg.T,
        "snapshot_stride": cfg.snapshot_stride,
        "bounds": {"c0": cfg.bounds.c0, "C0": cfg.bounds.C0},
        "n_steps": len(traj.diagnostics["t"]) - 1,
        "n_snapshots": len(traj.states),
        "snapshot_times": traj.times,
    })


_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _svg_num(v: float) -> str:
    return f"{v:.6g}"


def write_svg_plot(path, series: dict, title: str, xlabel: str, ylabel: str) -> None:
    """Static line chart; output bytes depend only on the arguments."""
    W, H = 640, 420
    ml, mr, mt, mb = 64, 16, 36, 46
    pw, ph = W - ml - mr, H - mt - mb
    xs_all = np.concatenate([np.asarray(x, dtype=float) for x, _ in series.values()]) \
        if series else np.array([0.0, 1.0])
    ys_all = np.concatenate([np.asarray(y, dtype=float) for _, y in series.values()]) \
        if series else np.array([0.0, 1.0])
    x0, x1 = float(xs_all.min()), float(xs_all.max())
    y0, y1 = float(ys_all.min()), float(ys_all.max())
    if x1 <= x0:
        x0, x1 = x0 - 1.0, x0 + 1.0
    if y1 <= y0:
        y0, y1 = y0 - 1.0, y0 + 1.0
    pad = 0.05 * (y1 - y0)
    y0, y1 = y0 - pad, y1 + pad

    def sx(v):
        return ml + (v - x0) / (x1 - x0) * pw

    def sy(v):
        return mt + ph - (v - y0) / (y1 - y0) * ph

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
        f'viewBox="0 0 {W} {H}">',
        f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>',
        f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" '
        f'stroke="#444444" stroke-width="1"/>',
        f'<text x="{W / 2:.1f}" y="22" text-anchor="middle" '
        f'font-family="monospace" font-size="14">{title}</text>',
        f'<text x="{W / 2:.1f}" y="{H - 10}" text-anchor="middle" '
        f'font-family="monospace" font-size="12">{xlabel}</text>',
        f'<text x="16" y="{H / 2:.1f}" text-anchor="middle" '
        f'font-family="monospace" font-size="12" '
        f'transform="rotate(-90 16 {H / 2:.1f})">{ylabel}</text>',
        f'<text x="{ml}" y="{H - mb + 16}" text-anchor="middle" '
        f'font-family="monospace" font-size="10">{_svg_num(x0)}</text>',
        f'<text x="{ml + pw}" y="{H - mb + 16}" text-anchor="middle" '
        f'font-family="monospace" font-size="10">{_svg_num(x1)}</text>',
        f'<text x="{ml - 6}" y="{mt + ph}" text-anchor="end" '
        f'font-family="monospace" font-size="10">{_svg_num(y0)}</text>',
        f'<text x="{ml - 6}" y="{mt + 10}" text-anchor="end" '
        f'font-family="monospace" font-size="10">{_svg_num(y1)}</text>',
    ]
    for idx, (name, (xs, ys)) in enumerate(series.items()):
        color = _PALETTE[idx % len(_PALETTE)]
        pts = " ".join(
            f"{sx(float(x)):.2f},{sy(float(y)):.2f}" for x, y in zip(xs, ys)
        )
        parts.append(
            f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>'
        )
        parts.append(
            f'<text x="{ml + 8 + 130 * idx}" y="{mt - 6}" font-family="monospace" '
            f'font-size="11" fill="{color}">{name}</text>'
        )
    parts.append("</svg>")
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(parts) + "\n")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


# ---------------------------------------------------------------------------
# experiment drivers


def _shared_dt(cfg: RunConfig, starts) -> SolverConfig:
    base = cfg.solver()
    if base.dt is not None:
        return base
    dt = min(pick_dt(leray_project(dealias(u)), base) for u in starts)
    return dataclasses.replace(base, dt=dt, cfl=None)


def _cmd_run(cfg: RunConfig, out: str, seed) -> bool:
    rho0, u0 = cfg.initial_data(seed)
    traj = run(rho0, u0, cfg.solver())
    rep = energy_report(traj)
    vac = stability_lab.vacuum_check(traj)
    write_csv(os.path.join(out, "diagnostics.csv"), DIAGNOSTICS_HEADER,
              diagnostics_rows(traj))
    write_trajectory_meta(os.path.join(out, "meta.json"), traj)
    func_ok = len(traj.states) >= 3
    if func_ok:
        w = functionals.weighted_energies(traj)
        lchk = functionals.linfty_decay_check(traj)
        write_report_json(os.path.join(out, "functionals.json"), {
            "a0": w.a0, "a1": w.a1, "a2": w.a2,
            "norm_e": functionals.norm_e(traj),
            "norm_z": functionals.norm_z(traj),
            "k0": functionals.k0(traj),
            "linfty_ratio": lchk.params["ratio"],
        })
        func_ok = lchk.passed
    gap_ok = bool(rep["max_rel_gap"] <= 1e-2)
    write_report_json(os.path.join(out, "energy.json"), {
        "max_rel_gap": rep["max_rel_gap"], "pass": gap_ok,
    })
    write_report_json(os.path.join(out, "vacuum.json"), vac)
    t = traj.diagnostics["t"]
    write_svg_plot(os.path.join(out, "kinetic.svg"),
                   {"kinetic": (t, traj.diagnostics["kinetic"])},
                   "kinetic energy", "t", "0.5 int rho |u|^2")
    write_svg_plot(os.path.join(out, "energy_gap.svg"),
                   {"gap": (rep["t"], rep["gap"])},
                   "energy balance defect", "t", "lhs(t) - lhs(0)")
    ok = gap_ok and vac["pass"] and func_ok
    write_report_json(os.path.join(out, "summary.json"), {
        "pass": ok, "worst_ratio": rep["max_rel_gap"],
        "params": {"experiment": "run", "seed": seed},
    })
    return ok


def _cmd_cauchy(cfg: RunConfig, out: str, seed) -> bool:
    rho0, u0 = cfg.initial_data(seed)
    levels = cfg.levels()
    table = stability_lab.cauchy_experiment((rho0, u0), levels, cfg.solver())
    rows = table.rows()
    write_csv(os.path.join(out, "cauchy.csv"),
              ["n", "m", "du0_l2", "norm_e_delta", "ratio", "degenerate"],
              [[r["n"], r["m"], r["du0_l2"], r["norm_e_delta"],
                r["ratio"], r["degenerate"]] for r in rows])
    finite = table.finite_ratios()
    if finite.size:
        spread = float(finite.max() / finite.min())
        ok = bool(np.all(np.isfinite(finite))) and spread <= 4.0
        worst = float(finite.max())
    else:
        spread, ok, worst = 1.0, True, 0.0
    write_report_json(os.path.join(out, "cauchy.json"), {
        "pass": ok, "worst_ratio": worst,
        "params": {"levels": levels, "spread": spread, "seed": seed},
    })
    idx = list(range(1, len(rows) + 1))
    ratios = [0.0 if r["degenerate"] else r["ratio"] for r in rows]
    write_svg_plot(os.path.join(out, "cauchy.svg"),
                   {"ratio": (idx, ratios)}, "difference ratio per pair",
                   "pair index", "norm_e_delta / |du0|^2")
    return ok


def _cmd_stability(cfg: RunConfig, out: str, seed) -> bool:
    rho0, u0 = cfg.initial_data(seed)
    base_seed = cfg.get("initial.seed") if seed is None else seed
    n_pairs = cfg.get("experiment.pairs")
    eps = cfg.get("experiment.perturbation")
    grid = cfg.grid()
    perturbed = []
    for i in range(n_pairs):
        _, w = make_initial(grid, "random_bandlimited", seed=int(base_seed) + 1000 + i,
                            kmax=cfg.get("initial.kmax"), amplitude=eps,
                            bounds=(cfg.get("bounds.c0"), cfg.get("bounds.C0")))
        perturbed.append(VectorField2(grid, u0.x_comp + w.x_comp, u0.y_comp + w.y_comp))
    scfg = _shared_dt(cfg, [u0] + perturbed)
    traj_u = run(rho0, u0, scfg)
    pairs = [(traj_u, run(rho0, v0, scfg)) for v0 in perturbed]
    result = stability_lab.stability_constant(pairs)
    write_csv(os.path.join(out, "stability.csv"),
              ["pair", "du0_l2", "norm_e_delta", "constant"],
              [[i + 1, p["du0_l2"], p["norm_e_delta"], p["constant"]]
               for i, p in enumerate(result["per_pair"])])
    consts = [p["constant"] for p in result["per_pair"]]
    ok = all(math.isfinite(c) and c >= 0.0 for c in consts)
    write_report_json(os.path.join(out, "stability.json"), {
        "pass": ok, "worst_ratio": result["constant"],
        "params": {"pairs": n_pairs, "perturbation": eps, "seed": seed,
                   "u0_l2": result["per_pair"][0]["u0_l2"]},
    })
    write_svg_plot(os.path.join(out, "stability.svg"),
                   {"constant": (list(range(1, len(consts) + 1)), consts)},
                   "stability constant per pair", "pair", "C")
    return ok


def _mollified_pair(cfg: RunConfig, seed):
    rho0, u0 = cfg.initial_data(seed)
    u0_m = mollify(u0, MollifierLevel(cfg.get("experiment.mollify_level")))
    scfg = _shared_dt(cfg, [u0, u0_m])
    return run(rho0, u0, scfg), run(rho0, u0_m, scfg)


def _cmd_relative_energy(cfg: RunConfig, out: str, seed) -> bool:
    traj1, traj2 = _mollified_pair(cfg, seed)
    rel = stability_lab.relative_energy_check(traj1, traj2)
    closure = stability_lab.gronwall_closure(traj1, traj2)
    write_csv(os.path.join(out, "relative_energy.csv"),
              ["t", "lhs", "rhs", "pass"],
              [[float(t), float(a), float(b), bool(c)] for t, a, b, c in
               zip(rel["times"], rel["lhs"], rel["rhs"], rel["pass"])])
    ok = rel["passed"] and closure["bound_holds"]
    gaps = rel["lhs"] - rel["rhs"]
    write_report_json(os.path.join(out, "relative_energy.json"), {
        "pass": ok, "worst_ratio": float(np.max(gaps)),
        "params": {"tol": rel["tol"], "gronwall_bound_holds": closure["bound_holds"],
                   "gronwall_premise_holds": closure["premise_holds"], "seed": seed},
    })
    write_svg_plot(os.path.join(out, "relative_energy.svg"),
                   {"lhs": (rel["times"], rel["lhs"]),
                    "rhs": (rel["times"], rel["rhs"])},
                   "relative energy inequality", "t", "energy")
    return ok


def _cmd_wminus14(cfg: RunConfig, out: str, seed) -> bool:
    traj1, traj2 = _mollified_pair(cfg, seed)
    wm = stability_lab.wminus14_check(traj1, traj2, s_list=cfg.s_values(),
                                      kappa=cfg.get("experiment.kappa"))
    write_csv(os.path.join(out, "wminus14.csv"),
              ["phi", "s", "lhs", "rhs", "ratio", "degenerate", "pass"],
              [[r["phi"], r["s"], r["lhs"], r["rhs"],
                "" if r["ratio"] is None else r["ratio"],
                r["degenerate"], r["pass"]] for r in wm["rows"]])
    write_report_json(os.path.join(out, "wminus14.json"), {
        "pass": wm["pass"], "worst_ratio": wm["worst_ratio"],
        "params": {"kappa": wm["kappa"], "z": wm["z"], "seed": seed},
    })
    by_phi = {}
    for r in wm["rows"]:
        if not r["degenerate"]:
            by_phi.setdefault(r["phi"], ([], []))
            by_phi[r["phi"]][0].append(r["s"])
            by_phi[r["phi"]][1].append(r["ratio"])
    write_svg_plot(os.path.join(out, "wminus14.svg"), by_phi,
                   "pairing ratio vs time", "s", "lhs / rhs")
    return wm["pass"]


def _cmd_flow_check(cfg: RunConfig, out: str, seed) -> bool:
    rho0, u0 = cfg.initial_data(seed)
    traj = run(rho0, u0, cfg.solver())
    track = traj.velocity_track()
    z = functionals.norm_z(traj)
    substep = cfg.get("experiment.substep")
    points = cfg.get("experiment.points")
    T = float(traj.times[-1])
    knots = np.linspace(T / points, T, points)
    rows = []
    worst_jac = 0.0
    worst_round = 0.0
    all_ok = True
    grid = traj.grid
    probe = np.linspace(0.0, grid.length, 9, endpoint=False)
    px, py = np.meshgrid(probe, probe, indexing="ij")
    px, py = px.ravel().copy(), py.ravel().copy()
    for i, tau in enumerate(knots):
        for s in knots[i + 1:]:
            flow = advance_flow(track, float(tau), float(s), substep)
            jdef = float(np.max(np.abs(flow.jacobian.values - 1.0)))
            fx, fy = trace_points(track, float(tau), float(s), substep, px, py)
            bx, by = trace_points(track, float(s), float(tau), substep, fx, fy)
            rt = float(max(np.max(np.abs(bx - px)), np.max(np.abs(by - py))))
            dx = dx_bound_check(flow, track)
            lk = log_kernel_flow_check(flow, z)
            worst_jac = max(worst_jac, jdef)
            worst_round = max(worst_round, rt)
            ok = dx.passed and lk.passed
            all_ok = all_ok and ok
            rows.append([float(tau), float(s), jdef, rt, dx.lhs, dx.rhs,
                         dx.passed, lk.passed])
    write_csv(os.path.join(out, "flow_check.csv"),
              ["tau", "s", "jac_defect", "roundtrip", "dx_lhs", "dx_rhs",
               "dx_pass", "log_kernel_pass"], rows)
    write_report_json(os.path.join(out, "flow_check.json"), {
        "pass": all_ok, "worst_ratio": worst_jac,
        "params": {"substep": substep, "points": points, "z": z,
                   "worst_roundtrip": worst_round, "seed": seed},
    })
    write_svg_plot(os.path.join(out, "flow_check.svg"),
                   {"jac_defect": (list(range(1, len(rows) + 1)),
                                   [r[2] for r in rows])},
                   "jacobian defect per (tau, s) pair", "pair index", "|J - 1|")
    return all_ok


def _cmd_lemmas(out: str, cs, ps, trials: int) -> bool:
    checks = []
    for c in (0.0, 0.5, 1.0, 2.0, 4.0):
        closed = gauss_integral_closed_form(c)
        quad = gauss_integral_quadrature(c, 1e-12)
        rel = abs(closed - quad) / quad
        checks.append({"name": f"gauss_exactness_c{c:g}", "lhs": closed,
                       "rhs": quad, "margin": rel, "pass": rel <= 1e-10})
    anti = antiderivative_check(1.0)
    checks.append({"name": "antiderivative_exponent", "lhs": anti["defect_quarter"],
                   "rhs": anti["defect_half"], "margin": anti["defect_quarter"],
                   "pass": anti["verdict"] == "quarter"})
    for c in cs:
        for p in ps:
            res = kernel_bound_check(c, p, trials=trials)
            checks.append({"name": f"kernel_bound_c{c:g}_p{p:g}",
                           **res.as_dict()})
    hardy = kernel_bound_check(0.0, 4.0, trials=trials)
    hardy_cap = (4.0 / 3.0) ** 4 + 1e-3
    checks.append({"name": "hardy_c0_p4", "lhs": hardy.lhs, "rhs": hardy_cap,
                   "margin": hardy_cap - hardy.lhs,
                   "pass": hardy.passed and hardy.lhs <= hardy_cap})
    rng = np.random.default_rng(0)
    mink_ok = True
    worst_margin = math.inf
    for p in (1.5, 2.0, 4.0):
        for _ in range(100):
            F = rng.uniform(0.0, 1.0, size=rng.integers(1, 12, size=2))
            res = minkowski_check(F, p)
            mink_ok = mink_ok and res.passed
            worst_margin = min(worst_margin, res.rhs - res.lhs)
    g = rng.uniform(0.1, 1.0, size=7)
    h = rng.uniform(0.1, 1.0, size=9)
    sep = minkowski_check(np.outer(g, h), 2.0)
    sep_tight = abs(sep.lhs - sep.rhs) <= 1e-12 * sep.rhs
    checks.append({"name": "minkowski_random", "lhs": 0.0, "rhs": worst_margin,
                   "margin": worst_margin, "pass": mink_ok})
    checks.append({"name": "minkowski_separable_equality", "lhs": sep.lhs,
                   "rhs": sep.rhs, "margin": abs(sep.lhs - sep.rhs),
                   "pass": sep_tight})
    ok = all(c["pass"] for c in checks)
    write_report_json(os.path.join(out, "lemmas.json"),
                      {"pass": ok, "checks": checks})
    return ok


def _resolve_threads(flag_value):
    env = os.environ.get("DENSIFLOW_THREADS")
    chosen = None
    if flag_value is not None:
        chosen = flag_value
    if env is not None:
        try:
            chosen = int(env)
        except ValueError:
            raise ValidationError(f"DENSIFLOW_THREADS: not an integer: {env!r}")
    if chosen is not None:
        if chosen < 1:
            raise ValidationError("threads must be >= 1")
        import numba

        numba.set_num_threads(min(chosen, numba.config.NUMBA_NUM_THREADS))


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="densiflow",
        description="Desk-scale laboratory for 2D variable-density "
                    "incompressible flow.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _EXPERIMENTS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", default=None, help="key = value config file")
        sp.add_argument("--out", default="densiflow_out", help="output directory")
        sp.add_argument("--seed", type=int, default=None, help="override initial.seed")
        sp.add_argument("--threads", type=int, default=None,
                        help="numba thread count (DENSIFLOW_THREADS overrides)")
        if name == "lemmas":
            sp.add_argument("--c", type=float, action="append",
                            help="kernel strength (repeatable)")
            sp.add_argument("--p", type=float, action="append",
                            help="Lebesgue exponent (repeatable)")
            sp.add_argument("--trials", type=int, default=200)
    args = parser.parse_args(argv)

    try:
        _resolve_threads(args.threads)
        if args.config is not None:
            try:
                with open(args.config, "r", encoding="utf-8") as fh:
                    text = fh.read()
            except OSError as exc:
                raise IoError(f"cannot read config {args.config}: {exc}") from exc
        else:
            text = ""
        cfg = parse_config(text)
        os.makedirs(args.out, exist_ok=True)
        if args.command == "lemmas":
            cs = args.c if args.c else [0.5, 1.0, 2.0]
            ps = args.p if args.p else [2.0, 3.0, 4.0]
            if args.trials < 1:
                raise ValidationError("--trials must be >= 1")
            ok = _cmd_lemmas(args.out, cs, ps, args.trials)
        elif args.command == "run":
            ok = _cmd_run(cfg, args.out, args.seed)
        elif args.command == "cauchy":
            ok = _cmd_cauchy(cfg, args.out, args.seed)
        elif args.command == "stability":
            ok = _cmd_stability(cfg, args.out, args.seed)
        elif args.command == "relative-energy":
            ok = _cmd_relative_energy(cfg, args.out, args.seed)
        elif args.command == "wminus14":
            ok = _cmd_wminus14(cfg, args.out, args.seed)
        else:
            ok = _cmd_flow_check(cfg, args.out, args.seed)
    except (DensiflowError, OSError) as exc:
        print(f"densiflow: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failure -> config/runtime exit code
        print(f"densiflow: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    print(f"densiflow {args.command}: {'pass' if ok else 'FAIL'} "
          f"(reports in {args.out})")
    return 0 if ok else 1
