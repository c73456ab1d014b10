"""Experiment harness: config round trip, presets, ensemble runs, file
outputs, byte-stability, and the CLI surface."""

import json
import subprocess
import sys

import numpy as np
import pytest

from spinfilter.cli import main as cli_main
from spinfilter.harness import (
    ConfigError,
    config_from_dict,
    config_to_flat_dict,
    initial_state,
    parse_config_text,
    preset_config,
    run_experiment,
)
from spinfilter.spin import build_basis


def small_config(preset="fig1", **overrides):
    base = preset_config(preset)
    flat = {
        "integrator.t_end": 0.2,
        "integrator.record_stride": 100,
        "ensemble.size": 4,
        **overrides,
    }
    return config_from_dict(flat, base=base)


def test_presets_pin_parameters():
    fig1 = preset_config("fig1")
    assert fig1.params.omega == 0.4 and fig1.params.eta == 0.4 and fig1.params.M == 1.4
    assert fig1.params.omega_hat == 0.5 and fig1.params.eta_hat == 0.5
    assert fig1.params.M_hat == 1.5
    assert fig1.controller.variant == "boundary"
    assert fig1.controller.alpha == 5.0 and fig1.controller.beta == 2.0
    assert fig1.controller.target == 0
    assert fig1.initial_args == {"n": 2, "m": 1}
    assert fig1.integrator.dt == 1e-4 and fig1.integrator.t_end == 10.0
    fig2 = preset_config("fig2")
    assert fig2.controller.variant == "interior" and fig2.controller.target == 1
    assert fig2.initial_args["rho"] == [0.2, 0.2, 0.6]
    assert fig2.initial_args["rho_hat"] == [0.3, 0.3, 0.4]
    with pytest.raises(ConfigError):
        preset_config("fig3")


def test_config_text_roundtrip():
    text = """
    # comment
    basis.N = 3
    params.eta = 0.45
    controller.variant = boundary
    initial.kind = diagonal
    initial.rho = [0.5, 0.3, 0.2]
    initial.rho_hat = [0.4, 0.4, 0.2]
    integrator.dt = 1e-3
    integrator.t_end = 0.1
    integrator.record_stride = 10
    ensemble.size = 2
    """
    flat = parse_config_text(text)
    assert flat["params.eta"] == 0.45
    assert flat["initial.rho"] == [0.5, 0.3, 0.2]
    config = config_from_dict(flat)
    assert config.params.eta == 0.45
    assert config.initial_kind == "diagonal"
    assert config.ensemble == 2
    back = config_to_flat_dict(config)
    assert back["params.eta"] == 0.45
    assert back["initial.rho"] == [0.5, 0.3, 0.2]
    with pytest.raises(ConfigError):
        parse_config_text("params.eta 0.4")


def test_initial_state_kinds():
    basis = build_basis(3)
    cfg = small_config()
    state = initial_state(cfg, basis)
    assert state.rho[2, 2] == 1.0 and state.rho_hat[1, 1] == 1.0
    cfg2 = config_from_dict({"initial.kind": "maximally-mixed-pair"}, base=cfg)
    state2 = initial_state(cfg2, basis)
    assert np.allclose(state2.rho, np.eye(3) / 3)
    cfg3 = config_from_dict(
        {"initial.kind": "random", "initial.rank": 2, "initial.seed": 12}, base=cfg
    )
    state3 = initial_state(cfg3, basis)
    assert np.linalg.matrix_rank(state3.rho) == 2
    state3b = initial_state(cfg3, basis)
    assert np.array_equal(state3.rho, state3b.rho)


def test_run_experiment_outputs(tmp_path):
    cfg = small_config()
    summary = run_experiment(cfg, outdir=tmp_path)
    assert summary.n_traj == 4
    for idx in range(4):
        assert (tmp_path / f"traj_{idx:03d}.csv").exists()
    assert (tmp_path / "mean.csv").exists()
    assert (tmp_path / "summary.json").exists()
    assert (tmp_path / "timing.txt").exists()
    payload = json.loads((tmp_path / "summary.json").read_text())
    assert payload["n_traj"] == 4
    assert payload["config"]["params.eta"] == 0.4
    assert payload["code_version"]
    assert "gain-window-narrow" in payload["conditions"]
    assert payload["exponent_references"]["nu_av"] == pytest.approx(-0.0761, abs=5e-5)
    assert payload["failure_manifest"] == []
    # ensemble mean CSV carries the same header as trajectory CSVs
    mean_header = (tmp_path / "mean.csv").read_text().splitlines()[0]
    traj_header = (tmp_path / "traj_000.csv").read_text().splitlines()[0]
    assert mean_header == traj_header


def test_ensemble_of_one_matches_single_trajectory(tmp_path):
    from spinfilter.integrator import run_trajectory

    cfg = small_config(**{"ensemble.size": 1})
    summary = run_experiment(cfg, outdir=None)
    basis = build_basis(cfg.n_dim)
    rec = run_trajectory(
        initial_state(cfg, basis), cfg.controller, cfg.params, basis, cfg.integrator
    )
    single = summary.records[0]
    for (name_a, col_a), (name_b, col_b) in zip(single.columns(), rec.columns()):
        assert name_a == name_b
        assert np.array_equal(col_a, col_b)


def test_byte_stability_across_runs_and_workers(tmp_path):
    out1 = tmp_path / "a"
    out2 = tmp_path / "b"
    out3 = tmp_path / "c"
    run_experiment(small_config(), outdir=out1)
    run_experiment(small_config(), outdir=out2)
    run_experiment(small_config(**{"ensemble.workers": 3}), outdir=out3)
    for name in ["traj_000.csv", "traj_003.csv", "mean.csv"]:
        a = (out1 / name).read_bytes()
        assert a == (out2 / name).read_bytes()
        assert a == (out3 / name).read_bytes()
    # summaries differ only in the workers entry
    sa = json.loads((out1 / "summary.json").read_text())
    sc = json.loads((out3 / "summary.json").read_text())
    sa["config"].pop("ensemble.workers")
    sc["config"].pop("ensemble.workers")
    assert sa == sc


def test_strict_mode_rejects_failing_conditions():
    bad = small_config(**{"params.eta_hat": 0.8, "params.M_hat": 2.8, "strict": True})
    with pytest.raises(ConfigError):
        run_experiment(bad)
    with pytest.warns(UserWarning):
        run_experiment(small_config(**{"params.eta_hat": 0.8, "params.M_hat": 2.8}))


def test_summary_structural_metrics():
    summary = run_experiment(small_config())
    payload = summary.to_dict()
    assert payload["structural_metrics"]["max_trace_defect_post_renorm"] < 1e-12
    assert payload["structural_metrics"]["max_herm_defect"] < 1e-12


# -- CLI ----------------------------------------------------------------------

def _cli(*argv):
    return cli_main(list(argv))


def test_cli_check_prints_window(capsys):
    code = _cli("check", "--preset", "fig1")
    out = capsys.readouterr().out
    assert code == 0
    assert "0.8 < 1.15728 < 1.20711 PASS" in out
    assert "nu_av = -0.0761" in out
    assert "nu_s = -0.3561" in out


def test_cli_check_is_side_effect_free(tmp_path, monkeypatch, capsys):
    monkeypatch.chdir(tmp_path)
    assert _cli("check", "--preset", "fig2") == 0
    capsys.readouterr()
    assert list(tmp_path.iterdir()) == []


def test_cli_simulate_and_fit(tmp_path, capsys):
    out = tmp_path / "sim"
    code = _cli(
        "simulate", "--preset", "fig1", "--out", str(out),
        "--set", "integrator.t_end=0.2",
    )
    assert code == 0
    assert (out / "traj_000.csv").exists()
    capsys.readouterr()
    code = _cli("fit", "--in", str(out / "traj_000.csv"), "--window", "0.5")
    assert code == 0
    assert "slope:" in capsys.readouterr().out


def test_cli_ensemble_deterministic(tmp_path, capsys):
    args = [
        "ensemble", "--preset", "fig1", "--seed", "42",
        "--set", "integrator.t_end=0.2", "--set", "ensemble.size=3",
    ]
    assert _cli(*args, "--out", str(tmp_path / "r1")) == 0
    assert _cli(*args, "--out", str(tmp_path / "r2")) == 0
    assert _cli(*args, "--set", "ensemble.workers=2", "--out", str(tmp_path / "r3")) == 0
    capsys.readouterr()
    for name in ("traj_000.csv", "traj_002.csv", "mean.csv"):
        a = (tmp_path / "r1" / name).read_bytes()
        assert a == (tmp_path / "r2" / name).read_bytes()
        assert a == (tmp_path / "r3" / name).read_bytes()


def test_cli_validation_errors(capsys):
    assert _cli("simulate") == 2
    assert _cli("ensemble", "--preset", "fig1", "--set", "params.eta=2.0") == 2
    capsys.readouterr()


def test_cli_unknown_flag_exits_2():
    proc = subprocess.run(
        [sys.executable, "-m", "spinfilter.cli", "check", "--bogus"],
        capture_output=True,
    )
    assert proc.returncode == 2


def test_cli_probe_exit(tmp_path, capsys):
    code = _cli(
        "probe-exit", "--preset", "fig1", "--n-spurious", "2", "--traj", "5",
        "--set", "integrator.t_end=2.0", "--out", str(tmp_path),
    )
    assert code == 0
    out = capsys.readouterr().out
    assert "exit probe" in out
    assert (tmp_path / "probe_exit.csv").exists()


def test_cli_oracle_small(capsys):
    code = _cli("oracle", "--preset", "fig1", "--states", "1", "--samples", "4000")
    out = capsys.readouterr().out
    assert code == 0
    assert "generator comparisons within 3 standard errors" in out
