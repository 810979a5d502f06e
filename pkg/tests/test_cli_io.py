"""Config grammar, binary field codec, report writers, and the command-line
entry point (exit codes, outputs, determinism)."""

import json
import math
import struct

import numpy as np
import pytest

from densiflow.cli_io import (
    DIAGNOSTICS_HEADER,
    RunConfig,
    diagnostics_rows,
    main,
    parse_config,
    read_field,
    serialize_config,
    write_csv,
    write_field,
    write_report_json,
    write_svg_plot,
    write_trajectory_meta,
)
from densiflow.errors import (
    FormatError,
    IoError,
    ParseError,
    ValidationError,
)
from densiflow.fields import GridSpec, ScalarField, VectorField2
from densiflow.solver import SolverConfig, make_initial, run


# ------------------------------------------------------------------- config


def test_empty_config_gives_documented_defaults():
    cfg = parse_config("")
    assert cfg.get("grid.n") == 128
    assert cfg.get("solver.nu") == 0.05
    assert cfg.get("solver.dt") is None
    assert cfg.get("solver.cfl") == 0.4
    assert cfg.get("initial.kind") == "random_bandlimited"
    assert cfg.get("experiment.s_list") == "auto"
    assert cfg.grid().n == 128
    assert cfg.bounds().c0 == 0.5


def test_serialize_parse_is_idempotent():
    text = serialize_config(parse_config(""))
    again = serialize_config(parse_config(text))
    assert again == text


def test_round_trip_preserves_every_key():
    doc = "\n".join([
        "# tuned corner case",
        "grid.n = 32",
        "grid.length = 3.5",
        "",
        "solver.nu = 0.125",
        "solver.dt = 0.001",
        "solver.cfl = none",
        "solver.snapshot_stride = 5",
        "bounds.c0 = 0.25",
        "bounds.C0 = 4.0",
        "initial.kind = taylor_green",
        "initial.amplitude = 2.0",
        "experiment.name = cauchy",
        "experiment.levels = 2,4,8",
        "experiment.s_list = 0.1,0.25",
    ])
    cfg = parse_config(doc)
    cfg2 = parse_config(serialize_config(cfg))
    assert cfg2.values == cfg.values
    assert cfg.get("solver.dt") == 0.001
    assert cfg.get("solver.cfl") is None
    assert cfg.levels() == [2, 4, 8]
    assert cfg.s_values() == [0.1, 0.25]


def test_randomized_round_trips():
    rng = np.random.default_rng(12)
    for _ in range(25):
        lines = []
        if rng.random() < 0.5:
            lines.append(f"grid.n = {2 ** rng.integers(3, 9)}")
        if rng.random() < 0.5:
            lines.append(f"solver.nu = {rng.uniform(1e-3, 1.0)!r}")
        if rng.random() < 0.5:
            lines.append(f"solver.dt = {rng.uniform(1e-4, 1e-2)!r}")
            lines.append("solver.cfl = none")
        if rng.random() < 0.5:
            lines.append(f"initial.seed = {rng.integers(0, 100)}")
        if rng.random() < 0.5:
            lines.append(f"experiment.kappa = {rng.uniform(0.5, 3.0)!r}")
        cfg = parse_config("\n".join(lines))
        assert parse_config(serialize_config(cfg)).values == cfg.values


def test_parse_error_carries_line_number():
    with pytest.raises(ParseError) as exc:
        parse_config("grid.n = 32\n\n# fine\nsolver.nu 0.1\n")
    assert exc.value.line == 4
    assert "line 4:" in str(exc.value)


@pytest.mark.parametrize("doc,fragment", [
    ("grid.m = 32", "unknown key"),
    ("grid.n = 32\ngrid.n = 64", "duplicate"),
    ("grid.n = 100", "power of two"),
    ("solver.nu = abc", "cannot read"),
    ("solver.dt = 0.01", "exactly one"),                  # cfl still defaulted
    ("solver.cfl = none", "exactly one"),                 # neither rule left
    ("bounds.c0 = 3.0", "must not exceed"),
    ("initial.kind = vortex_sheet", "one of"),
    ("experiment.levels = 2,2,4", "distinct"),
    ("experiment.levels = a,b", "bad list"),
    ("experiment.s_list = zz", "bad list"),
    ("solver.pressure_tol = 0.5", "in (0, 1e-6]"),
])
def test_config_rejections(doc, fragment):
    with pytest.raises((ValidationError, ParseError), match=None) as exc:
        parse_config(doc)
    assert fragment in str(exc.value)


def test_dt_replaces_cfl_when_both_specified_explicitly():
    cfg = parse_config("solver.dt = 0.02\nsolver.cfl = none\n")
    solver = cfg.solver()
    assert solver.dt == 0.02
    assert solver.cfl is None
    assert isinstance(solver, SolverConfig)


def test_initial_data_honors_seed_argument():
    cfg = parse_config("grid.n = 32\n")
    rho_a, u_a = cfg.initial_data(seed=5)
    rho_b, u_b = cfg.initial_data(seed=5)
    rho_c, u_c = cfg.initial_data(seed=6)
    assert np.array_equal(u_a.x_comp, u_b.x_comp)
    assert not np.array_equal(u_a.x_comp, u_c.x_comp)


# -------------------------------------------------------------- field codec


def test_scalar_field_round_trip(tmp_path):
    g = GridSpec(32, length=5.0)
    rng = np.random.default_rng(0)
    f = ScalarField(g, rng.normal(size=(32, 32)))
    path = tmp_path / "field.dfl"
    write_field(path, f)
    back = read_field(path)
    assert back.grid == g
    assert np.array_equal(back.values, f.values)


def test_vector_field_round_trip(tmp_path):
    g = GridSpec(16)
    rng = np.random.default_rng(1)
    v = VectorField2(g, rng.normal(size=(16, 16)), rng.normal(size=(16, 16)))
    path = tmp_path / "vec.dfl"
    write_field(path, v)
    back = read_field(path)
    assert isinstance(back, VectorField2)
    assert np.array_equal(back.x_comp, v.x_comp)
    assert np.array_equal(back.y_comp, v.y_comp)


def test_codec_rejects_non_fields(tmp_path):
    with pytest.raises(FormatError, match="not a field"):
        write_field(tmp_path / "x.dfl", np.zeros((4, 4)))


def test_codec_header_failures(tmp_path):
    g = GridSpec(8)
    good = tmp_path / "good.dfl"
    write_field(good, ScalarField.constant(g, 1.0))
    blob = good.read_bytes()

    truncated = tmp_path / "trunc.dfl"
    truncated.write_bytes(blob[:10])
    with pytest.raises(FormatError, match="truncated"):
        read_field(truncated)

    magic = tmp_path / "magic.dfl"
    magic.write_bytes(b"XXXX" + blob[4:])
    with pytest.raises(FormatError, match="bad magic"):
        read_field(magic)

    kind = tmp_path / "kind.dfl"
    kind.write_bytes(blob[:4] + b"Q" + blob[5:])
    with pytest.raises(FormatError, match="unknown field type"):
        read_field(kind)

    short = tmp_path / "short.dfl"
    short.write_bytes(blob[:-8])
    with pytest.raises(FormatError, match="expected"):
        read_field(short)

    badn = tmp_path / "badn.dfl"
    badn.write_bytes(blob[:5] + struct.pack("<I", 7) + blob[9:17] + b"\0" * (7 * 7 * 8))
    with pytest.raises(FormatError, match="bad grid header"):
        read_field(badn)


def test_codec_rejects_non_finite_payload(tmp_path):
    g = GridSpec(8)
    good = tmp_path / "nan.dfl"
    write_field(good, ScalarField.constant(g, 1.0))
    blob = bytearray(good.read_bytes())
    blob[17:25] = struct.pack("<d", math.nan)
    good.write_bytes(bytes(blob))
    with pytest.raises(FormatError, match="non-finite"):
        read_field(good)


def test_codec_io_errors(tmp_path):
    g = GridSpec(8)
    with pytest.raises(IoError):
        write_field(tmp_path / "no_dir" / "x.dfl", ScalarField.constant(g, 1.0))
    with pytest.raises(IoError):
        read_field(tmp_path / "missing.dfl")


# ------------------------------------------------------------------ writers


@pytest.fixture(scope="module")
def short_run():
    g = GridSpec(32)
    rho0, u0 = make_initial(g, "taylor_green")
    return run(rho0, u0, SolverConfig(nu=0.1, T=0.03, dt=0.01))


def test_diagnostics_rows_one_per_step(short_run):
    rows = diagnostics_rows(short_run)
    assert len(rows) == 3  # three completed steps; the start is the baseline
    assert all(len(r) == len(DIAGNOSTICS_HEADER) for r in rows)
    assert rows[0][0] == pytest.approx(0.01)
    assert rows[-1][0] == pytest.approx(0.03)


def test_write_csv_cells_and_width(tmp_path):
    path = tmp_path / "t.csv"
    write_csv(path, ["a", "b", "flag"], [[1, 2.5, True], [3, -1.0, False]])
    text = path.read_text()
    assert text.splitlines()[0] == "a,b,flag"
    assert text.splitlines()[1] == "1,2.5,true"
    assert text.splitlines()[2] == "3,-1.0,false"
    with pytest.raises(FormatError, match="width"):
        write_csv(path, ["a", "b"], [[1]])


def test_report_json_handles_special_floats(tmp_path):
    path = tmp_path / "r.json"
    write_report_json(path, {
        "ratio": math.inf,
        "gap": math.nan,
        "arr": np.array([1.0, 2.0]),
        "flag": np.bool_(True),
        "count": np.int64(3),
    })
    data = json.loads(path.read_text())
    assert data["ratio"] == "inf"
    assert data["gap"] == "nan"
    assert data["arr"] == [1.0, 2.0]
    assert data["flag"] is True
    assert data["count"] == 3


def test_trajectory_meta(tmp_path, short_run):
    path = tmp_path / "meta.json"
    write_trajectory_meta(path, short_run)
    meta = json.loads(path.read_text())
    assert meta["n_steps"] == 3
    assert meta["n_snapshots"] == 4
    assert meta["grid"]["n"] == 32
    assert len(meta["snapshot_times"]) == 4


def test_svg_plot_is_deterministic(tmp_path):
    series = {"a": ([0.0, 1.0, 2.0], [0.0, 1.0, 0.5])}
    p1, p2 = tmp_path / "a.svg", tmp_path / "b.svg"
    write_svg_plot(p1, series, "demo", "x", "y")
    write_svg_plot(p2, series, "demo", "x", "y")
    assert p1.read_bytes() == p2.read_bytes()
    body = p1.read_text()
    assert "<polyline" in body and "demo" in body


def test_svg_plot_flat_series(tmp_path):
    # a constant series must not divide by a zero range
    path = tmp_path / "flat.svg"
    write_svg_plot(path, {"c": ([0.0, 1.0], [2.0, 2.0])}, "flat", "x", "y")
    assert path.read_text().startswith("<svg")


# ---------------------------------------------------------------------- CLI


RUN_DOC = """
grid.n = 32
solver.nu = 0.1
solver.T = 0.06
solver.dt = 0.01
solver.cfl = none
initial.kind = taylor_green
"""


def test_main_run_succeeds(tmp_path, capsys):
    cfgfile = tmp_path / "run.cfg"
    cfgfile.write_text(RUN_DOC)
    out = tmp_path / "out"
    code = main(["run", "--config", str(cfgfile), "--out", str(out)])
    assert code == 0
    assert capsys.readouterr().out.startswith("densiflow run: pass")
    for name in ("diagnostics.csv", "meta.json", "energy.json", "vacuum.json",
                 "functionals.json", "summary.json", "kinetic.svg",
                 "energy_gap.svg"):
        assert (out / name).exists()
    summary = json.loads((out / "summary.json").read_text())
    assert summary["pass"] is True


def test_main_outputs_are_reproducible(tmp_path):
    cfgfile = tmp_path / "run.cfg"
    cfgfile.write_text(RUN_DOC)
    out1, out2 = tmp_path / "o1", tmp_path / "o2"
    assert main(["run", "--config", str(cfgfile), "--out", str(out1)]) == 0
    assert main(["run", "--config", str(cfgfile), "--out", str(out2)]) == 0
    for name in ("diagnostics.csv", "energy.json", "kinetic.svg"):
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes()


def test_main_seed_flag_changes_random_data(tmp_path):
    doc = "grid.n = 32\nsolver.T = 0.03\nsolver.dt = 0.01\nsolver.cfl = none\n"
    cfgfile = tmp_path / "r.cfg"
    cfgfile.write_text(doc)
    out1, out2 = tmp_path / "s1", tmp_path / "s2"
    assert main(["run", "--config", str(cfgfile), "--out", str(out1), "--seed", "1"]) == 0
    assert main(["run", "--config", str(cfgfile), "--out", str(out2), "--seed", "2"]) == 0
    assert (out1 / "diagnostics.csv").read_bytes() != (out2 / "diagnostics.csv").read_bytes()


def test_main_short_run_fails_functional_gate(tmp_path, capsys):
    # a two-level run cannot evaluate the functionals, so the verdict is FAIL
    doc = "grid.n = 32\nsolver.T = 0.01\nsolver.dt = 0.01\nsolver.cfl = none\n"
    cfgfile = tmp_path / "short.cfg"
    cfgfile.write_text(doc)
    out = tmp_path / "out"
    code = main(["run", "--config", str(cfgfile), "--out", str(out)])
    assert code == 1
    assert "FAIL" in capsys.readouterr().out
    assert json.loads((out / "summary.json").read_text())["pass"] is False


def test_main_cauchy(tmp_path):
    doc = (
        "grid.n = 32\nsolver.nu = 0.05\nsolver.T = 0.05\n"
        "solver.dt = 0.01\nsolver.cfl = none\nexperiment.levels = 2,4\n"
    )
    cfgfile = tmp_path / "c.cfg"
    cfgfile.write_text(doc)
    out = tmp_path / "out"
    assert main(["cauchy", "--config", str(cfgfile), "--out", str(out)]) == 0
    report = json.loads((out / "cauchy.json").read_text())
    assert report["pass"] is True
    table = (out / "cauchy.csv").read_text().splitlines()
    assert table[0].startswith("n,m,du0_l2")
    assert len(table) == 2  # header + the single (2, 4) pair


def test_main_lemmas(tmp_path):
    out = tmp_path / "out"
    assert main(["lemmas", "--out", str(out), "--trials", "20"]) == 0
    report = json.loads((out / "lemmas.json").read_text())
    assert report["pass"] is True
    names = {c["name"] for c in report["checks"]}
    assert "hardy_c0_p4" in names
    assert "minkowski_separable_equality" in names


def test_main_missing_config_is_a_usage_error(tmp_path, capsys):
    code = main(["run", "--config", str(tmp_path / "absent.cfg"),
                 "--out", str(tmp_path / "out")])
    assert code == 2
    assert "error" in capsys.readouterr().err


def test_main_invalid_config_is_a_usage_error(tmp_path, capsys):
    cfgfile = tmp_path / "bad.cfg"
    cfgfile.write_text("grid.n = 100\n")
    code = main(["run", "--config", str(cfgfile), "--out", str(tmp_path / "out")])
    assert code == 2
    assert "power of two" in capsys.readouterr().err


def test_main_bad_thread_env_is_a_usage_error(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("DENSIFLOW_THREADS", "abc")
    code = main(["lemmas", "--out", str(tmp_path / "out"), "--trials", "1"])
    assert code == 2
    assert "DENSIFLOW_THREADS" in capsys.readouterr().err
