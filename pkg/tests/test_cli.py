"""Configuration validation, staged pipeline runs, export round-trips, CLI."""

import json
from pathlib import Path

import numpy as np
import pytest

import fermilat.cli as cli
from fermilat import ConfigError, StageDependencyError
from fermilat.cli import (
    DEFAULT_ETA,
    ResultBundle,
    export,
    load_kernel,
    load_measure,
    load_report,
    load_table,
    main,
    measure_header,
    parse_config,
    run_pipeline,
    run_sweep,
    stage_closure,
)

CONFIG_DIR = Path(__file__).resolve().parents[1] / "configs"

BASE = {"d": 1, "l": 2, "L": 8, "beta": 1.0, "lambda": 0.0, "seed": 3}

# Small enough that a full drive + joule pass stays well under a second.
TINY = {
    "d": 1,
    "l": 1,
    "L": 4,
    "beta": 1.0,
    "lambda": 1.0,
    "seed": 5,
    "field": {"t0": 0.0, "t1": 0.5, "support_radius": 1},
    "eta": [0.05, 0.02],
    "dt": 0.01,
    "t_max": 3.0,
    "n_t": 31,
}

_DROP = object()


def patched(base, **updates):
    raw = dict(base)
    for key, value in updates.items():
        if value is _DROP:
            raw.pop(key, None)
        else:
            raw[key] = value
    return raw


@pytest.fixture(scope="module")
def tiny_bundle():
    cfg = parse_config(TINY)
    return cfg, run_pipeline(cfg, stage_closure("measure"))


# ---------------------------------------------------------------------------
# parse_config


def test_parse_config_defaults():
    cfg = parse_config(BASE)
    assert cfg.dimension == 1
    assert cfg.avg_radius == 2
    assert cfg.box_radius == 8
    assert cfg.seeds == (3,)
    assert cfg.dist == "uniform"
    assert (cfg.t_on, cfg.t_off) == (0.0, 2.0)
    assert cfg.amplitude == 1.0
    assert cfg.carrier == 1.5
    assert cfg.direction == (1.0,)
    assert cfg.support_radius == cfg.avg_radius
    assert cfg.eta == DEFAULT_ETA
    assert cfg.dt == pytest.approx(cfg.window() / 2000.0)
    assert cfg.t_max == 20.0
    assert cfg.n_t == 201
    assert cfg.out_dir == "runs"

    profile = cfg.field_profile()
    assert profile.t_on == cfg.t_on
    assert profile.t_off == cfg.t_off
    assert profile.support_radius == cfg.support_radius
    assert profile.amplitude == cfg.amplitude

    cfg2 = parse_config(patched(BASE, d=2))
    assert cfg2.direction == (1.0, 0.0)


def test_parse_config_sources(tmp_path):
    from_dict = parse_config(BASE)
    text = json.dumps(BASE)

    path = tmp_path / "run.json"
    path.write_text(text)
    assert parse_config(path) == from_dict
    assert parse_config(str(path)) == from_dict
    assert parse_config(text) == from_dict

    with pytest.raises(ConfigError, match="config file not found"):
        parse_config(str(tmp_path / "nope.json"))
    with pytest.raises(ConfigError, match="not valid JSON"):
        parse_config('{"d": 1,,}')

    bad = tmp_path / "list.json"
    bad.write_text("[1, 2]")
    with pytest.raises(ConfigError, match="must be a JSON object"):
        parse_config(bad)


def test_parse_config_integer_coercion():
    # Integral floats are common in hand-edited JSON; bools never are.
    assert parse_config(patched(BASE, d=2.0)).dimension == 2
    assert parse_config(patched(BASE, n_t=31.0)).n_t == 31
    with pytest.raises(ConfigError, match="d must be an integer"):
        parse_config(patched(BASE, d=True))
    with pytest.raises(ConfigError, match="seed must be an integer"):
        parse_config(patched(BASE, seed=[1, 2.5]))


@pytest.mark.parametrize(
    "updates, message",
    [
        ({"d": _DROP}, "missing required key 'd'"),
        ({"d": 4}, "d must be 1, 2, or 3"),
        ({"l": -1}, "l must be nonnegative"),
        ({"beta": 0.0}, "beta must be positive"),
        ({"beta": "hot"}, "beta must be a number"),
        ({"beta": float("nan")}, "beta must be finite"),
        ({"lambda": -0.5}, "lambda must be nonnegative"),
        ({"seed": []}, "seed list must not be empty"),
        ({"dist": "gauss"}, "dist must be"),
        ({"frequency": 2.0}, "unknown config key"),
        ({"field": [1.0]}, "field must be a JSON object"),
        ({"field": {"shape": "box"}}, "unknown field key"),
        ({"field": {"t0": 1.0, "t1": 1.0}}, "field.t1 must exceed field.t0"),
        ({"field": {"carrier": -1.0}}, "field.carrier must be nonnegative"),
        ({"field": {"w": [1.0, 0.0]}}, "field.w must have d = 1 components"),
        ({"field": {"w": [0.5]}}, "field.w must be a unit vector"),
        ({"field": {"support_radius": -1}}, "support_radius must be nonnegative"),
        ({"eta": []}, "eta must be a nonempty list"),
        ({"eta": 0.1}, "eta must be a nonempty list"),
        ({"eta": [0.1, -0.1]}, "eta values must be positive"),
        ({"dt": 0.0}, "dt must be positive"),
        ({"t_max": 0.0}, "t_max must be positive"),
        ({"n_t": 5}, "n_t must be at least 9"),
        ({"out": ""}, "out must be a nonempty path"),
        ({"out": 7}, "out must be a nonempty path"),
    ],
)
def test_parse_config_rejections(updates, message):
    with pytest.raises(ConfigError, match=message):
        parse_config(patched(BASE, **updates))


def test_box_buffer_constraint():
    # A 2-unit window needs a 4-unit light-cone buffer past the driven region.
    with pytest.raises(ConfigError) as info:
        parse_config(patched(BASE, L=5))
    assert "L = 5 is too small" in str(info.value)
    assert "max(l, support_radius) + 4 = 6" in str(info.value)

    assert parse_config(patched(BASE, L=6)).box_radius == 6


def test_direction_normalization():
    cfg = parse_config(patched(BASE, d=2, field={"w": [0.6, 0.8]}))
    assert cfg.direction == (0.6, 0.8)

    # Norm defects below the gate are forgiven but still normalized away.
    cfg = parse_config(patched(BASE, d=2, field={"w": [1.0 + 4e-10, 0.0]}))
    assert np.linalg.norm(cfg.direction) == pytest.approx(1.0, abs=1e-15)


def test_config_hash_ignores_output_location():
    h0 = parse_config(BASE).config_hash()
    assert parse_config(patched(BASE, out="elsewhere")).config_hash() == h0
    assert parse_config(patched(BASE, beta=1.5)).config_hash() != h0
    assert parse_config(patched(BASE, seed=[3, 4])).config_hash() != h0

    # normalized() is a fixed point of parsing.
    cfg = parse_config(BASE)
    again = parse_config(cfg.normalized())
    assert again == cfg
    assert again.config_hash() == h0


# ---------------------------------------------------------------------------
# stage graph


def test_stage_closures():
    assert stage_closure("equilibrium") == ("equilibrium",)
    assert stage_closure("transport") == ("equilibrium", "transport")
    assert stage_closure("drive") == ("equilibrium", "transport", "drive")
    assert stage_closure("joule") == ("equilibrium", "transport", "drive", "joule")
    assert stage_closure("verify") == ("equilibrium", "transport", "measure", "verify")
    with pytest.raises(StageDependencyError, match="unknown stage"):
        stage_closure("cleanup")


def test_run_pipeline_rejects_open_stage_sets():
    cfg = parse_config(TINY)
    with pytest.raises(StageDependencyError, match="requires stage 'equilibrium'"):
        run_pipeline(cfg, ("transport",))
    with pytest.raises(StageDependencyError, match="requires stage 'drive'"):
        run_pipeline(cfg, ("equilibrium", "transport", "joule"))
    with pytest.raises(StageDependencyError, match="unknown stage"):
        run_pipeline(cfg, ("equilibrium", "cleanup"))

    # Order of the request does not matter; execution order is canonical.
    bundle = run_pipeline(cfg, ("transport", "equilibrium"))
    assert bundle.stages == ("equilibrium", "transport")


# ---------------------------------------------------------------------------
# pipeline stages


def test_equilibrium_stage_summary():
    cfg = parse_config(TINY)
    bundle = run_pipeline(cfg, ("equilibrium",))

    assert bundle.box.n_sites == 9
    assert bundle.eigensystem.n == 9
    assert bundle.xi_p is None
    assert bundle.mu_p is None
    assert bundle.verify_report is None

    summary = bundle.equilibrium_summary
    assert summary["n_sites"] == 9
    assert summary["hermiticity_defect"] == 0.0
    assert summary["energy_min"] <= summary["energy_max"]
    assert 0.0 < summary["symbol_eig_min"] <= summary["symbol_eig_max"] < 1.0
    assert -1.0 <= summary["potential_min"] <= summary["potential_max"] <= 1.0
    expected_trace = np.sum(1.0 / (1.0 + np.exp(cfg.beta * bundle.eigensystem.energies)))
    assert summary["symbol_trace"] == pytest.approx(expected_trace, abs=1e-12)


def test_pipeline_determinism(tiny_bundle, tmp_path):
    cfg, bundle = tiny_bundle
    again = run_pipeline(cfg, stage_closure("measure"))

    assert np.array_equal(again.xi_p.values, bundle.xi_p.values)
    assert np.array_equal(again.xi_d_matrix, bundle.xi_d_matrix)
    assert np.array_equal(again.mu_full.frequencies, bundle.mu_full.frequencies)
    assert np.array_equal(again.mu_full.weights, bundle.mu_full.weights)

    export(bundle, out_dir=tmp_path / "a")
    export(again, out_dir=tmp_path / "b")
    for name in ("xi_para.csv", "measure_atoms.csv", "config.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_drive_and_joule_tables():
    cfg = parse_config(TINY)
    bundle = run_pipeline(cfg, stage_closure("joule"))

    assert set(bundle.runs) == set(cfg.eta)
    header, *rows = bundle.current_rows
    assert header == ("t", "eta", "Jp_1", "Jd_1", "Jlin_1")
    assert len(rows) == sum(len(run.states) for run in bundle.runs.values())
    etas = sorted({row[1] for row in rows})
    assert etas == sorted(cfg.eta)
    t_final = cfg.t_off + 0.25 * cfg.window()
    for row in rows:
        assert cfg.t_on <= row[0] <= t_final + 1e-12
        assert all(np.isfinite(v) for v in row)
    # Before the drive ramps, every current route reports zero.
    first = rows[0]
    assert first[0] == 0.0 and first[2:] == (0.0, 0.0, 0.0)

    header, *rows = bundle.ledger_rows
    assert header == ("t", "eta", "S", "P", "Ip", "Id", "work")
    assert len(rows) == sum(len(run.states) for run in bundle.runs.values())

    # A two-rung eta ladder cannot support slope fits.
    assert "note" in bundle.joule_report
    assert bundle.joule_report["eta"] == list(cfg.eta)


# ---------------------------------------------------------------------------
# export and reload


def test_export_csv_headers_and_sidecars(tiny_bundle, tmp_path):
    cfg, bundle = tiny_bundle
    paths = export(bundle, out_dir=tmp_path)
    names = sorted(p.name for p in paths)
    assert names == [
        "config.json",
        "equilibrium.json",
        "measure.json",
        "measure_atoms.csv",
        "transport.json",
        "xi_para.csv",
    ]
    for path in paths:
        if path.suffix == ".csv":
            lines = path.read_text().splitlines()
            assert lines[0] == f"# config_hash: {bundle.config_hash}"
            assert lines[1].startswith("# code_version: ")
        else:
            body = json.loads(path.read_text())
            assert body["config_hash"] == bundle.config_hash
            assert body["code_version"] == bundle.code_version

    sidecar = json.loads((tmp_path / "config.json").read_text())
    assert sidecar["config"] == cfg.normalized()
    assert sidecar["stages"] == list(bundle.stages)

    with pytest.raises(ConfigError, match="format must be"):
        export(bundle, out_dir=tmp_path, format="pickle")


def test_export_json_format(tiny_bundle, tmp_path):
    _, bundle = tiny_bundle
    paths = export(bundle, out_dir=tmp_path, format="json")
    assert all(p.suffix == ".json" for p in paths)

    table = json.loads((tmp_path / "xi_para.json").read_text())
    assert table["columns"] == ["t", "k", "q", "value"]
    assert len(table["rows"]) == bundle.xi_p.grid.size
    values = np.array([row[3] for row in table["rows"]])
    assert np.array_equal(values, bundle.xi_p.values[:, 0, 0])


def test_kernel_round_trip(tiny_bundle, tmp_path):
    _, bundle = tiny_bundle
    export(bundle, out_dir=tmp_path)
    kernel = load_kernel(tmp_path / "xi_para.csv")
    # repr-formatted floats reload bit for bit.
    assert np.array_equal(kernel.grid, bundle.xi_p.grid)
    assert np.array_equal(kernel.values, bundle.xi_p.values)


def test_measure_round_trip(tiny_bundle, tmp_path):
    _, bundle = tiny_bundle
    export(bundle, out_dir=tmp_path)
    measure = load_measure(tmp_path / "measure_atoms.csv")
    assert measure.n_atoms == bundle.mu_full.n_atoms
    assert np.array_equal(measure.frequencies, bundle.mu_full.frequencies)
    assert np.array_equal(measure.weights, bundle.mu_full.weights)


def test_load_measure_edge_cases(tmp_path):
    path = tmp_path / "empty.csv"
    path.write_text("# config_hash: h\n# code_version: v\n" + ",".join(measure_header(2)) + "\n")
    measure = load_measure(path)
    assert measure.is_empty
    assert measure.weights.shape == (0, 2, 2)

    bad = tmp_path / "bad.csv"
    bad.write_text("nu,M_11,M_12\n")
    with pytest.raises(ConfigError, match="atom table has 3 columns"):
        load_measure(bad)

    headerless = tmp_path / "headerless.csv"
    headerless.write_text("# only comments here\n")
    with pytest.raises(ConfigError, match="no header row"):
        load_table(headerless)


def test_load_table_and_report(tiny_bundle, tmp_path):
    _, bundle = tiny_bundle
    export(bundle, out_dir=tmp_path)

    table = load_table(tmp_path / "xi_para.csv")
    assert sorted(table) == ["k", "q", "t", "value"]
    assert np.array_equal(table["t"], bundle.xi_p.grid)
    assert np.array_equal(table["value"], bundle.xi_p.values[:, 0, 0])

    report = load_report(tmp_path / "measure.json")
    assert report["n_atoms"] == bundle.mu_p.n_atoms
    assert report["config_hash"] == bundle.config_hash


def test_measure_header_layout():
    assert measure_header(1) == ["nu", "M_11"]
    assert measure_header(2) == ["nu", "M_11", "M_12", "M_21", "M_22"]


# ---------------------------------------------------------------------------
# verify battery


def test_verify_battery_passes_on_shipped_config():
    cfg = parse_config(CONFIG_DIR / "small.json")
    bundle = run_pipeline(cfg, stage_closure("verify"))
    report = bundle.verify_report

    assert len(report) == 21
    for name, entry in report.items():
        assert set(entry) == {"residual", "tolerance", "pass"}
        assert entry["pass"], f"{name}: {entry['residual']} > {entry['tolerance']}"
        assert entry["residual"] <= entry["tolerance"]


# ---------------------------------------------------------------------------
# sweep


def test_sweep_serial_matches_threaded(tmp_path):
    cfg = parse_config(patched(TINY, seed=[1, 2], out=str(tmp_path / "serial")))

    serial = run_sweep(cfg, threads=1)
    threaded = run_sweep(cfg, out_dir=tmp_path / "threaded", threads=2)
    # Workers share no generator state, so scheduling cannot leak in.
    assert serial.read_bytes() == threaded.read_bytes()

    table = load_table(serial)
    assert sorted(table) == sorted(
        ["seed", "eta", "S_final", "P_final", "work_final", "first_law_max", "Jp_max"]
    )
    assert list(table["seed"]) == [1.0, 1.0, 2.0, 2.0]
    assert list(table["eta"]) == [0.05, 0.02, 0.05, 0.02]
    assert np.all(table["S_final"] >= 0.0)
    assert np.all(table["P_final"] == 0.0)

    for seed in (1, 2):
        sub = tmp_path / "serial" / f"seed_{seed}"
        assert (sub / "currents.csv").exists()
        assert (sub / "energies.csv").exists()


# ---------------------------------------------------------------------------
# command line


def test_main_writes_tables(tmp_path, capsys):
    cfg_path = tmp_path / "tiny.json"
    cfg_path.write_text(json.dumps(TINY))

    rc = main(["transport", "--config", str(cfg_path), "--out", str(tmp_path / "out")])
    assert rc == 0
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 4
    assert all(line.startswith("wrote ") for line in lines)
    for name in ("config.json", "equilibrium.json", "xi_para.csv", "transport.json"):
        assert (tmp_path / "out" / name).exists()


def test_main_accepts_inline_json(tmp_path, capsys):
    rc = main([
        "equilibrium", "--config", json.dumps(TINY), "--out", str(tmp_path / "out"),
    ])
    assert rc == 0
    assert (tmp_path / "out" / "equilibrium.json").exists()


def test_main_config_error_exit_code(tmp_path, capsys):
    rc = main(["equilibrium", "--config", str(tmp_path / "nope.json")])
    assert rc == 2
    assert "error: config file not found" in capsys.readouterr().err


def test_main_stage_error_exit_code(tmp_path, capsys):
    cfg_path = tmp_path / "tiny.json"
    cfg_path.write_text(json.dumps(TINY))
    rc = main(["transport", "--config", str(cfg_path), "--stages", "transport"])
    assert rc == 2
    assert "requires stage 'equilibrium'" in capsys.readouterr().err


def test_main_verify_failure_exit_code(tmp_path, capsys, monkeypatch):
    cfg = parse_config(patched(TINY, out=str(tmp_path / "out")))
    bundle = ResultBundle(
        config=cfg,
        config_hash=cfg.config_hash(),
        code_version=cli.__version__,
        stages=("verify",),
    )
    bundle.verify_report = {
        "synthetic_identity": {"residual": 1.0, "tolerance": 1e-10, "pass": False},
        "other": {"residual": 0.0, "tolerance": 1e-10, "pass": True},
    }
    monkeypatch.setattr(cli, "run_pipeline", lambda *a, **k: bundle)

    rc = main(["verify", "--config", json.dumps(TINY), "--out", str(tmp_path / "out")])
    assert rc == 1
    out = capsys.readouterr().out
    assert "FAIL synthetic_identity" in out
    assert "PASS other" in out
    assert "1 identity failed" in out


def test_main_sweep(tmp_path, capsys):
    cfg_path = tmp_path / "sweep.json"
    cfg_path.write_text(json.dumps(patched(TINY, seed=[1, 2], out=str(tmp_path / "sw"))))

    rc = main(["sweep", "--config", str(cfg_path), "--threads", "2"])
    assert rc == 0
    assert "sweep summary written to" in capsys.readouterr().out
    assert (tmp_path / "sw" / "sweep_summary.csv").exists()
