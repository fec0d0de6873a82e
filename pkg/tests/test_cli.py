import json

import numpy as np
import pytest

from xasim.cli import RunConfig, compare_spectra, cost_report, main, prepare, run_pipeline
from xasim.errors import ValidationError
from xasim.model import HARTREE_TO_EV, FermionModel, cvs_model, ground_state, load_model, to_qubit_model
from xasim.oracle import cross_section_direct
from xasim.spectrum import read_spectrum_csv


def run_cli(*args):
    return main([str(a) for a in args])


def direct_sigma(path, grid, eta, units="hartree", cvs=False):
    """Independent assembly straight from the model file."""
    model = load_model(path)
    if cvs:
        model = cvs_model(model)
    qm = to_qubit_model(model) if isinstance(model, FermionModel) else model
    _, initial = ground_state(qm.hamiltonian)
    scale = HARTREE_TO_EV if units == "ev" else 1.0
    dips = [qm.dipoles[k] for k in sorted(qm.dipoles)]
    return cross_section_direct(qm.hamiltonian, dips, initial, np.asarray(grid) / scale, eta / scale, prefactor_on=units == "ev")


# --- oracle pipeline --------------------------------------------------------------------------------


def test_oracle_peak_on_one_qubit_demo(demo_dir, tmp_path):
    code = run_cli("run", "--input", demo_dir / "one_qubit.json", "--algo", "oracle", "--eta", 0.05,
                   "--omega-min", 0, "--omega-max", 4, "--omega-points", 81, "--out", tmp_path)
    assert code == 0
    t = read_spectrum_csv(tmp_path / "spectrum.csv")
    assert t.omega[np.argmax(t.sigma)] == pytest.approx(2.0)
    assert np.max(t.sigma) == pytest.approx(1 / 0.05)
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["seed"] == 0 and manifest["config"]["algo"] == "oracle"
    assert {"xasim", "numpy", "scipy", "python"} <= set(manifest["versions"])


@pytest.mark.parametrize(
    "name, lo, hi, eta, units, cvs",
    [
        ("one_qubit.json", 0.0, 4.0, 0.1, "hartree", False),
        ("two_orbital.json", 520.0, 545.0, 0.5, "ev", False),
        ("four_orbital_cvs.json", 15.0, 25.0, 0.2, "hartree", False),
        ("four_orbital_cvs.json", 15.0, 25.0, 0.2, "hartree", True),
    ],
)
def test_pipeline_matches_direct_summation(demo_dir, tmp_path, name, lo, hi, eta, units, cvs):
    path = demo_dir / name
    config = RunConfig(input=str(path), algo="oracle", eta=eta, omega_min=lo, omega_max=hi,
                       omega_points=97, units=units, cvs=cvs, out=str(tmp_path))
    run_pipeline(config)
    t = read_spectrum_csv(tmp_path / "spectrum.csv")
    direct = direct_sigma(path, t.omega, eta, units, cvs)
    assert np.max(direct) > 0
    assert np.max(np.abs(t.sigma - direct)) <= 1e-10 * max(1.0, np.max(direct))


def test_dark_component_skipped(demo_dir, tmp_path):
    data = json.loads((demo_dir / "two_orbital.json").read_text())
    data["dipole"]["y"] = [[0, 0, 0.0]]
    path = tmp_path / "m.json"
    path.write_text(json.dumps(data))
    manifest = run_pipeline(RunConfig(input=str(path), eta=0.5, omega_min=520, omega_max=540, units="ev",
                                      out=str(tmp_path / "o")))
    assert list(manifest["components"]) == ["x"]
    assert any("dark" in w for w in manifest["warnings"])
    assert run_cli("run", "--input", path, "--component", "y", "--units", "ev", "--omega-min", 1,
                   "--omega-max", 2, "--out", tmp_path / "p") == 2


# --- determinism ------------------------------------------------------------------------------------------


@pytest.mark.parametrize("algo", ["time_domain", "qpe_sampling", "freq_domain"])
def test_repeat_runs_byte_identical(demo_dir, tmp_path, algo):
    args = ["run", "--input", demo_dir / "four_orbital_cvs.json", "--algo", algo, "--eta", 0.2, "--x-grid",
            "--omega-points", 16, "--shots", 2000, "--cvs", "--seed", 42]
    assert run_cli(*args, "--out", tmp_path / "a") == 0
    assert run_cli(*args, "--out", tmp_path / "b") == 0
    for f in sorted(p.name for p in (tmp_path / "a").iterdir()):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    assert run_cli(*args[:-1], 43, "--out", tmp_path / "c") == 0
    assert (tmp_path / "a" / "spectrum.csv").read_bytes() != (tmp_path / "c" / "spectrum.csv").read_bytes()


# --- validation and exit codes -------------------------------------------------------------------------


def test_cvs_without_core(demo_dir, tmp_path, capsys):
    code = run_cli("run", "--input", demo_dir / "one_qubit.json", "--cvs", "--omega-min", 0, "--omega-max", 4,
                   "--out", tmp_path)
    assert code == 2
    record = json.loads((tmp_path / "error.json").read_text())
    assert "CVS requested but no core orbital" in record["message"]
    assert json.loads(capsys.readouterr().err)["exit_code"] == 2


def test_missing_input_and_bad_grid(demo_dir, tmp_path):
    assert run_cli("run", "--input", tmp_path / "nope.json", "--omega-min", 0, "--omega-max", 1,
                   "--out", tmp_path) == 2
    assert run_cli("run", "--input", demo_dir / "one_qubit.json", "--omega-min", 2, "--omega-max", 1,
                   "--out", tmp_path) == 2
    assert run_cli("run", "--input", demo_dir / "one_qubit.json", "--eta", -1, "--x-grid", "--out", tmp_path) == 2
    with pytest.raises(ValidationError):
        RunConfig(input="x", omega_min=0, omega_max=1, omega_points=1)


def test_config_file_conflict(demo_dir, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"input": str(demo_dir / "one_qubit.json"), "x_grid": True,
                               "out": str(tmp_path / "o")}))
    assert run_cli("run", "--config", cfg, "--eta", 0.2) == 2
    assert run_cli("run", "--config", cfg) == 0
    assert (tmp_path / "o" / "spectrum.csv").exists()


# --- compare -----------------------------------------------------------------------------------------------


def test_compare_self_and_mismatch(demo_dir, tmp_path):
    base = ["run", "--input", demo_dir / "one_qubit.json", "--omega-min", 0, "--omega-max", 4]
    run_cli(*base, "--omega-points", 20, "--out", tmp_path / "a")
    run_cli(*base, "--omega-points", 21, "--out", tmp_path / "b")
    a = tmp_path / "a" / "spectrum.csv"
    rep = compare_spectra(a, a)
    assert rep["max_abs_dev"] == 0 and rep["l2_dev"] == 0 and rep["max_abs_z"] == 0
    assert run_cli("compare", a, a, "--max-abs-dev", 0) == 0
    with pytest.raises(ValidationError):
        compare_spectra(a, tmp_path / "b" / "spectrum.csv")
    assert run_cli("compare", a, tmp_path / "b" / "spectrum.csv") == 2


def test_time_domain_vs_oracle(demo_dir, tmp_path):
    # the line sits at the top of the spectrum; keep the grid inside |tau omega| < pi
    base = ["run", "--input", demo_dir / "one_qubit.json", "--eta", 0.1, "--omega-min", 1.0,
            "--omega-max", 2.0, "--omega-points", 64]
    assert run_cli(*base, "--algo", "time_domain", "--shots", 10**5, "--seed", 3, "--out", tmp_path / "td") == 0
    assert run_cli(*base, "--algo", "oracle", "--out", tmp_path / "ex") == 0
    rep = compare_spectra(tmp_path / "td" / "spectrum.csv", tmp_path / "ex" / "spectrum.csv")
    assert rep["fraction_within_4"] >= 0.95
    assert run_cli("compare", tmp_path / "td" / "spectrum.csv", tmp_path / "ex" / "spectrum.csv",
                   "--max-abs-dev", 1e-9) == 1


def test_aliasing_warning(demo_dir, tmp_path):
    manifest = run_pipeline(RunConfig(input=str(demo_dir / "one_qubit.json"), algo="time_domain", eta=0.1,
                                      omega_min=0, omega_max=4, omega_points=8, shots=100, out=str(tmp_path)))
    assert any("alias" in w for w in manifest["warnings"])


def test_lcu_norm_mode(demo_dir, tmp_path):
    manifest = run_pipeline(RunConfig(input=str(demo_dir / "four_orbital_cvs.json"), algo="oracle", eta=0.2,
                                      x_grid=True, dipole_norm="lcu", shots=10**5, seed=1, out=str(tmp_path)))
    prep = prepare(RunConfig(input=str(demo_dir / "four_orbital_cvs.json"), x_grid=True))
    for label, info in manifest["components"].items():
        exact = prep.components[label][1]
        assert abs(info["norm"] - exact) <= 4 * info["norm_stderr"] + 1e-12


# --- cost ----------------------------------------------------------------------------------------------------


def test_cost_table(demo_dir, capsys):
    config = RunConfig(input=str(demo_dir / "four_orbital_cvs.json"), eta=0.2, eps=0.05, x_grid=True)
    kernel = prepare(config).kernel
    rows = {r["algorithm"]: r for r in cost_report(config, kernel)}
    assert rows["time_domain"]["ancillas"] == 1
    assert rows["time_domain"]["queries_expected"] < rows["time_domain"]["queries_max"]
    half = {r["algorithm"]: r for r in cost_report(RunConfig(**{**config.__dict__, "eps": 0.025}), kernel)}
    for algo in rows:
        assert half[algo]["n_samples_exact"] == pytest.approx(4 * rows[algo]["n_samples_exact"], rel=1e-12)
    assert run_cli("cost", "--input", demo_dir / "four_orbital_cvs.json", "--eta", 0.2, "--json") == 0
    printed = json.loads(capsys.readouterr().out)
    assert [r["algorithm"] for r in printed] == ["time_domain", "qpe_sampling", "freq_domain"]
