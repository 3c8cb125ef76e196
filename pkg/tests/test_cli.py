import json

import numpy as np
import pytest

from nelsonfp import cli
from nelsonfp.cli import EXIT_CONFIG, EXIT_NUMERIC, EXIT_OK, EXIT_TOLERANCE, main
from nelsonfp.config import ScenarioConfig
from nelsonfp.fpsolver import FPError
from nelsonfp.io import read_table


def _run(tmp_path, command, text="", *extra, name="run"):
    cfg = tmp_path / f"{name}.cfg"
    cfg.write_text(text)
    out = tmp_path / name
    code = main([command, "--config", str(cfg), "--out", str(out), *extra])
    report = json.loads((out / "report.json").read_text()) if (out / "report.json").exists() else None
    return code, out, report


def test_spectrum_reproduces_odd_sector_of_middle_interval(tmp_path):
    code, out, rep = _run(tmp_path, "spectrum", "n = 2\ninterval = 1\nparity = odd\nn_eigs = 3\ngrid_points = 1500\n")
    assert code == EXIT_OK
    mu = rep["results"]["intervals"][0]["mu_sturm_liouville"]
    np.testing.assert_allclose(mu, [7.44, 37.06, 86.41], atol=0.01)
    tab = read_table(out / "eigenvalues.csv", "eigenvalues")
    np.testing.assert_allclose(tab["eigenvalue"], [7.44, 37.06, 86.41], atol=0.01)
    assert (out / "decomposition_1.json").exists()


def test_spectrum_ground_state_has_zero_first_eigenvalue(tmp_path):
    code, out, rep = _run(tmp_path, "spectrum", "n = 0\nn_eigs = 3\n")
    assert code == EXIT_OK
    tab = read_table(out / "eigenvalues.csv", "eigenvalues")
    assert abs(tab["eigenvalue"][0]) <= 1e-6
    np.testing.assert_allclose(tab["eigenvalue"], [0, 1, 2], atol=1e-5)


def test_report_carries_config_hash_and_snapshot(tmp_path):
    code, out, rep = _run(tmp_path, "spectrum", "n = 1\nn_eigs = 2\ngrid_points = 400\n")
    snap = ScenarioConfig.from_text((out / "config.snapshot").read_text())
    assert rep["config_hash"] == snap.digest()
    assert set(rep["files"]) >= {"config.snapshot", "report.json", "eigenvalues.csv"}


def test_malformed_key_exits_one_and_names_it(tmp_path, capsys):
    code, _, rep = _run(tmp_path, "evolve", "n = 1\nwobble = 3\n")
    assert code == EXIT_CONFIG and rep is None
    assert "wobble" in capsys.readouterr().err


def test_packet_with_single_term_is_rejected(tmp_path, capsys):
    code, _, _ = _run(tmp_path, "control", "kind = packet\nN = 1\n")
    assert code == EXIT_CONFIG
    assert "N >= 2" in capsys.readouterr().err


def test_config_for_other_command_is_rejected(tmp_path, capsys):
    code, _, _ = _run(tmp_path, "evolve", "command = spectrum\n")
    assert code == EXIT_CONFIG
    assert "command" in capsys.readouterr().err


def test_missing_config_and_bad_seed(tmp_path, capsys):
    assert main(["spectrum", "--config", str(tmp_path / "nope.cfg"), "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    assert main(["spectrum", "--seed", "-1", "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    err = capsys.readouterr().err
    assert "cannot read" in err and "seed" in err


def test_source_on_node_is_a_config_error(tmp_path, capsys):
    code, _, _ = _run(tmp_path, "evolve", "n = 1\nx0 = 0\ngrid_points = 200\n")
    assert code == EXIT_CONFIG
    assert "x0" in capsys.readouterr().err


def test_tolerance_failure_exits_three(tmp_path):
    code, _, rep = _run(tmp_path, "kernel", "n = 0\noutput_times = 0.5\ngrid_points = 200\n", "--tolerance", "1e-9")
    assert code == EXIT_TOLERANCE and rep["passed"] is False


def test_numerical_failure_exits_two(tmp_path, monkeypatch, capsys):
    def boom(cfg):
        raise FPError("stable step underflows")
    monkeypatch.setitem(cli._COMMAND_FUNCS, "evolve", boom)
    code, _, _ = _run(tmp_path, "evolve", "")
    assert code == EXIT_NUMERIC
    assert "numerical failure" in capsys.readouterr().err


def test_evolve_asymmetric_relaxation(tmp_path):
    code, out, rep = _run(tmp_path, "evolve", "n = 1\ninitial = asymmetric\nq = 1.4\noutput_times = 1, 20\n"
                                              "grid_points = 400\nx_max = 8\n")
    assert code == EXIT_OK
    assert rep["results"]["max_mass_drift"] <= 1e-10
    np.testing.assert_allclose(rep["results"]["frames"][-1]["masses"], [0.3, 0.7], atol=1e-10)
    tab = read_table(out / "trajectory.csv", "trajectory")
    assert np.all(tab["f"] >= 0)


def test_kernel_command_matches_closed_form(tmp_path):
    code, _, rep = _run(tmp_path, "kernel", "n = 1\nsources = 1\noutput_times = 0.5, 1\n")
    assert code == EXIT_OK
    assert all(r["l1_to_closed_form"] <= 3e-3 for r in rep["results"]["rows"])


@pytest.mark.parametrize("kind", ["ou", "n1", "decay", "packet"])
def test_control_command(tmp_path, kind):
    code, out, rep = _run(tmp_path, "control", f"kind = {kind}\noutput_times = 1, 3\nframe_dt = 1e-4\n")
    assert code == EXIT_OK
    assert all(f["relative_agreement"] <= 1e-4 for f in rep["results"]["frames"])
    tab = read_table(out / "control.csv", "control")
    assert tab["t"].size == 2 * 2000


def test_simulate_is_deterministic_per_seed(tmp_path):
    text = "n = 1\nn_particles = 2000\nsnapshot_times = 0.2, 0.5\ndt = 0.005\ntolerance = 0.2\n"
    c1, o1, r1 = _run(tmp_path, "simulate", text, "--seed", "42", name="a")
    c2, o2, r2 = _run(tmp_path, "simulate", text, "--seed", "42", name="b")
    c3, o3, _ = _run(tmp_path, "simulate", text, "--seed", "43", name="c")
    assert c1 == c2 == EXIT_OK
    assert (o1 / "ensemble.csv").read_bytes() == (o2 / "ensemble.csv").read_bytes()
    assert (o1 / "ensemble.csv").read_bytes() != (o3 / "ensemble.csv").read_bytes()
    assert r1["config_hash"] == r2["config_hash"] and r1["results"]["node_crossings"] == 0


def test_simulate_ou_moments(tmp_path):
    code, _, rep = _run(tmp_path, "simulate", "n = 0\nn_particles = 20000\nsnapshot_times = 1\n", "--seed", "3")
    assert code == EXIT_OK
    snap = rep["results"]["snapshots"][-1]
    assert abs(snap["mean_z"]) <= 4 and abs(snap["variance_z"]) <= 4


@pytest.mark.parametrize("engines, n", [("fpsolver,ou_oracle", 0), ("spectral,fpsolver", 1),
                                        ("n1_oracle,fpsolver", 1)])
def test_compare_grid_engines(tmp_path, engines, n):
    code, out, rep = _run(tmp_path, "compare", f"engines = {engines}\nn = {n}\noutput_times = 0.5, 2\n")
    assert code == EXIT_OK, rep["results"]["rows"]
    tab = read_table(out / "compare.csv", "compare")
    assert np.all(tab["passed"] == 1.0)


def test_compare_against_particles(tmp_path):
    code, _, rep = _run(tmp_path, "compare", "engines = sde,ou_oracle\nn_particles = 50000\noutput_times = 0.5\n")
    assert code == EXIT_OK
    assert rep["results"]["rows"][0]["l1"] <= 0.05


@pytest.mark.parametrize("text, key", [("engines = fpsolver\n", "engines"), ("engines = ou_oracle,fpsolver\nn = 1\n", "engines"),
                                       ("engines = a,b\n", "engines"), ("output_times = 0\n", "output_times")])
def test_compare_configuration_errors(tmp_path, capsys, text, key):
    code, _, _ = _run(tmp_path, "compare", text + "grid_points = 100\n")
    assert code == EXIT_CONFIG
    assert key in capsys.readouterr().err


def test_default_run_directory(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert main(["spectrum", "--grid-points", "300", "--tolerance", "0.01"]) == EXIT_OK
    runs = list((tmp_path / "runs").iterdir())
    assert len(runs) == 1 and runs[0].name.startswith("spectrum-")
