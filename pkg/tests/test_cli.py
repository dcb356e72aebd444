import csv
import json

import numpy as np
import pytest

from chaosbudget import cli
from chaosbudget.error_model import ErrorModelParams, save_params
from chaosbudget.planner import TransientParams, save_transient

RK3_FIT = ErrorModelParams(A0=0.978, r=0.553, Cq=2740.0, q=2.96, scheme="rk3")
SMALL_REF = ["--M", "4", "--Ts", "20", "--t0", "5", "--dt", "0.01"]


@pytest.fixture
def work(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    return tmp_path


def _header(path):
    with open(path) as fh:
        first = fh.readline().strip()
        cols = next(csv.reader(fh))
    return first, tuple(cols)


def _json(path):
    with open(path) as fh:
        return json.load(fh)


def test_reference_outputs_and_manifest(work):
    assert cli.run(["reference", *SMALL_REF, "--out", "ref.json"]) == 0
    doc = _json("ref.json")
    assert doc["schema_version"] == 1 and doc["M"] == 4
    for key in ("J_ref", "ci95", "sigma_g_hat", "var_of_J"):
        assert np.isfinite(doc[key])
    man = _json("ref.json.manifest.json")
    assert man["command"] == "reference" and man["seeds"] == {"base_seed": 0}
    assert man["config"]["M"] == 4 and man["outputs"] == ["ref.json"]


def test_manifest_rerun_is_bit_identical(work):
    assert cli.run(["reference", *SMALL_REF, "--seed", "5", "--out", "a.json"]) == 0
    first = (work / "a.json").read_bytes()
    (work / "a.json").unlink()
    assert cli.run(["reference", "--config", "a.json.manifest.json"]) == 0
    assert (work / "a.json").read_bytes() == first


def test_seed_changes_output(work):
    cli.run(["reference", *SMALL_REF, "--seed", "1", "--out", "a.json"])
    cli.run(["reference", *SMALL_REF, "--seed", "2", "--out", "b.json"])
    assert _json("a.json")["J_ref"] != _json("b.json")["J_ref"]


def test_thread_count_does_not_change_output(work):
    cli.run(["reference", *SMALL_REF, "--threads", "1", "--out", "a.json"])
    cli.run(["reference", *SMALL_REF, "--threads", "2", "--out", "b.json"])
    assert (work / "a.json").read_bytes() == (work / "b.json").read_bytes()


def test_reference_needs_two_instances(work, capsys):
    assert cli.run(["reference", "--M", "1", "--Ts", "5", "--t0", "1"]) == cli.EXIT_CONFIG
    assert "M" in capsys.readouterr().err


def test_unknown_key_is_named(work, capsys):
    assert cli.run(["reference", "--set", "bogus_key=3"]) == cli.EXIT_CONFIG
    assert "bogus_key" in capsys.readouterr().err


def test_mistyped_key_is_named(work, capsys):
    assert cli.run(["reference", "--set", 'M="many"']) == cli.EXIT_CONFIG
    assert "'M'" in capsys.readouterr().err


def test_toml_config_with_command_table(work):
    (work / "run.toml").write_text('scheme = "rk3"\nbase_seed = 9\n[reference]\nM = 3\nTs = 10.0\nt0 = 2.0\ndt = 0.01\n')
    assert cli.run(["reference", "--config", "run.toml", "--M", "5"]) == 0
    cfg = _json("reference.json.manifest.json")["config"]
    assert (cfg["scheme"], cfg["base_seed"], cfg["M"], cfg["Ts"]) == ("rk3", 9, 5, 10.0)


def test_sweep_then_fit(work):
    assert cli.run(["sweep", "--scheme", "rk4", "--M", "16", "--t0", "5", "--set", "dt=[0.09, 0.07, 0.05, 0.035]",
                    "--set", "Ts=[5.0, 50.0, 500.0]", "--out", "sw.csv"]) == 0
    assert _header("sw.csv") == ("# schema_version: 1", (
        "scheme", "dt", "Ts", "M", "E_abs_err", "E_rel_err_pct", "stderr", "excluded_fraction", "base_seed"))
    assert cli.run(["fit", "--sweep", "sw.csv", "--out", "fit.json"]) == 0
    doc = _json("fit.json")
    assert doc["schema_version"] == 1 and doc["scheme"] == "rk4"
    assert 3.0 < doc["q"] < 7.0


def test_fit_missing_sweep_is_config_error(work):
    assert cli.run(["fit", "--out", "fit.json"]) == cli.EXIT_CONFIG


def _write_plan_inputs(work, A=38.7, T=4.03):
    save_params(RK3_FIT, work / "fit.json")
    save_transient(TransientParams(A, T), work / "trans.json")


def test_plan_outputs(work):
    _write_plan_inputs(work)
    assert cli.run(["plan", "--params", "fit.json", "--transient", "trans.json", "--U", "1200000",
                    "--m-ens", "1", "--scheme", "rk3"]) == 0
    plan = _json("plan.json")
    assert plan["schema_version"] == 1
    assert plan["e_model_opt"] == pytest.approx(0.0130, rel=0.02)
    assert _header("plan_scan.csv") == ("# schema_version: 1", cli.PLAN_SCAN_COLUMNS)


def test_plan_without_transient_has_no_spinup(work):
    _write_plan_inputs(work, A=0.0)
    assert cli.run(["plan", "--params", "fit.json", "--transient", "trans.json", "--U", "120000", "--scheme", "rk3"]) == 0
    plan = _json("plan.json")
    assert plan["t0_opt"] == 0.0 and plan["n_spinup"] == 0


def test_plan_infeasible_budget(work):
    _write_plan_inputs(work)
    assert cli.run(["plan", "--params", "fit.json", "--U", "2", "--scheme", "rk3"]) == cli.EXIT_INFEASIBLE


def test_validate_small(work):
    _write_plan_inputs(work)
    cli.run(["plan", "--params", "fit.json", "--transient", "trans.json", "--U", "12000", "--scheme", "rk3"])
    assert cli.run(["validate", "--plan", "plan.json", "--repetitions", "8"]) == 0
    doc = _json("validate.json")
    assert doc["repetitions"] == 8 and doc["ratio"] == pytest.approx(doc["E_measured"] / doc["e_model"])


def test_transient_fit_from_trace(work):
    t = np.linspace(0, 100, 3000)
    g = 23.55 - 10.0 * np.exp(-t / 2.0) + 1.2 * np.random.default_rng(0).standard_normal(t.size)
    with open(work / "trace.csv", "w") as fh:
        fh.write("t,g\n")
        for a, b in zip(t, g):
            fh.write(f"{float(a)!r},{float(b)!r}\n")
    assert cli.run(["transient-fit", "--trace", "trace.csv", "--set", "discard_before=0.0", "--out", "t.json"]) == 0
    doc = _json("t.json")
    assert {"A_lambda", "T_lambda", "J_inf", "sigma_g", "log_post", "method"} <= set(doc)
    assert doc["method"] == "map"
    assert doc["T_lambda"] == pytest.approx(2.0, rel=0.1)


def test_lte_and_spectrum(work):
    assert cli.run(["lte", "--scheme", "rk4", "--Ts", "5", "--t0", "5", "--out", "lte.csv"]) == 0
    assert _header("lte.csv") == ("# schema_version: 1", cli.LTE_CSV_COLUMNS)
    assert _json("lte.json")["rate"] == pytest.approx(5.0, abs=0.5)
    assert cli.run(["spectrum", "--dt", "0.01", "--t0", "5", "--Ts", "50", "--out", "sp.csv"]) == 0
    assert _header("sp.csv") == ("# schema_version: 1", cli.SPECTRUM_CSV_COLUMNS)
    assert _json("sp.json")["a"] > 0


def test_divergence_exit_code(work):
    code = cli.run(["lte", "--scheme", "fe", "--set", 'system="linear"', "--set", "rate=100.0", "--set", "dt=[1.0]",
                    "--Ts", "1000", "--t0", "0"])
    assert code == cli.EXIT_DIVERGENCE


def test_linear_pipeline_has_no_discretization_plateau(work, capsys):
    lin = ["--set", 'system="linear"', "--scheme", "rk4"]
    assert cli.run(["sweep", *lin, "--M", "8", "--set", "dt=[0.1, 0.05, 0.02, 0.01]",
                    "--set", "Ts=[10.0, 100.0, 1000.0]", "--out", "sw.csv"]) == 0
    assert cli.run(["fit", "--sweep", "sw.csv"]) == cli.EXIT_UNIDENTIFIABLE
    assert "discretization" in capsys.readouterr().err
    # the one-step error still carries the scheme's order
    assert cli.run(["lte", *lin, "--set", "dt=[0.02, 0.04, 0.08]", "--Ts", "2", "--t0", "1", "--out", "l.csv"]) == 0
    doc = _json("l.json")
    assert doc["rate"] - 1 == pytest.approx(4.0, abs=0.1)
    assert doc["C_LT"] == pytest.approx(1.0, rel=0.02)


def test_version_flag(capsys):
    with pytest.raises(SystemExit):
        cli.run(["--version"])
    assert "chaos-budget" in capsys.readouterr().out
