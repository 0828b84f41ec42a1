import csv
import io
import json
import subprocess
import sys

import numpy as np
import pytest
import yaml

from lqrhc import cli
from lqrhc import lqmodel as lqm

EX1 = {"A": [[2.0]], "B": [[1.0]], "Q": [[0.0]], "S": [[0.0]], "R": [[1.0]]}
EX2 = {"A": [[1.0]], "B": [[1.0]], "Q": [[1.0]], "S": [[1.0]], "R": [[1.0]]}


def write_cfg(tmp_path, doc, name="cfg.yaml"):
    path = tmp_path / name
    if name.endswith(".json"):
        path.write_text(json.dumps(doc))
    else:
        path.write_text(yaml.safe_dump(doc))
    return str(path)


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def run_main(tmp_path, doc, *extra, name="cfg.yaml"):
    return cli.main(["run", "--config", write_cfg(tmp_path, doc, name), *extra])


class TestConfig:
    @pytest.mark.parametrize("doc, key", [
        ({"scenario": "dare", "problem": EX1, "extra": 1}, "extra"),
        ({"scenario": "dare", "problem": {**EX1, "Qf": [[1]]}}, "Qf"),
        ({"scenario": "dare", "problem": EX1, "params": {"N_max": 3}}, "N_max"),
        ({"scenario": "dare", "problem": EX1, "output": {"dir": "x"}}, "dir"),
        ({"scenario": "dare", "problem": EX1, "params": {"tolerances": {"eps": 1}}}, "eps"),
    ])
    def test_unknown_keys_named(self, doc, key):
        with pytest.raises(cli.ConfigError, match=repr(key)):
            cli.parse_config(doc)

    def test_unknown_key_exit_code(self, tmp_path, capsys):
        rc = run_main(tmp_path, {"scenario": "dare", "problem": EX1, "bogus": 1})
        assert rc == cli.EXIT_CONFIG
        assert "'bogus'" in capsys.readouterr().err

    def test_bad_scenario(self):
        with pytest.raises(cli.ConfigError):
            cli.parse_config({"scenario": "lqr", "problem": EX1})

    def test_yaml_error_has_line(self, tmp_path, capsys):
        path = tmp_path / "bad.yaml"
        path.write_text("scenario: dare\nproblem: {A: [[1]\n")
        assert cli.main(["run", "--config", str(path)]) == cli.EXIT_CONFIG
        assert "bad.yaml:" in capsys.readouterr().err

    def test_missing_file(self, tmp_path):
        assert cli.main(["run", "--config", str(tmp_path / "none.yaml")]) == cli.EXIT_CONFIG

    def test_json_accepted(self, tmp_path, capsys):
        rc = run_main(tmp_path, {"scenario": "dare", "problem": EX1}, name="cfg.json")
        assert rc == 0 and "stabilizing" in capsys.readouterr().out

    def test_cli_tolerances_override(self):
        cfg = cli.parse_config({"scenario": "dare", "problem": EX1,
                                "params": {"tolerances": {"pd_tol": 1e-6}}},
                               {"pd_tol": 1e-7, "schur_margin": 1e-5})
        assert cfg.tol.pd_tol == 1e-7 and cfg.tol.schur_margin == 1e-5
        assert cfg.tol.riccati_tol == 1e-13

    def test_builtin_and_generated(self):
        assert cli.parse_config({"scenario": "dare", "problem": "example-2"}).problem.A[0, 0] == 1.0
        cfg = cli.parse_config({"scenario": "certify", "problem": {"generate": {"n_x": 3, "n_u": 2}}},
                               {"seed": 5})
        assert cfg.problem.n_x == 3 and cfg.storage is not None

    def test_bad_seed(self):
        with pytest.raises(cli.ConfigError):
            cli.parse_config({"scenario": "dare", "problem": EX1}, {"seed": -1})


class TestScenarios:
    def test_dare_example_1(self, tmp_path):
        out = tmp_path / "dare.csv"
        assert run_main(tmp_path, {"scenario": "dare", "problem": EX1}, "--out", str(out)) == 0
        rows = {r["solution"]: r for r in read_csv(out)}
        assert float(rows["stabilizing"]["P"]) == pytest.approx(3.0, abs=1e-9)
        assert rows["stabilizing"]["classification"] == "stabilizing"
        assert float(rows["antistabilizing"]["P"]) == pytest.approx(0.0, abs=1e-9)
        assert rows["antistabilizing"]["classification"] == "antistabilizing"

    def test_dare_example_2_reports_nonexistence(self, tmp_path):
        out = tmp_path / "dare.csv"
        assert run_main(tmp_path, {"scenario": "dare", "problem": EX2}, "--out", str(out)) == 0
        anti = read_csv(out)[1]
        assert anti["exists"] == "False"
        assert anti["note"].startswith("antistabilizing solution does not exist: det [[R,S],[B,A]] = 0")

    def test_rdare_example_2(self, tmp_path):
        out = tmp_path / "rdare.json"
        assert run_main(tmp_path, {"scenario": "rdare", "problem": EX2},
                        "--out", str(out), "--format", "json") == 0
        rep = json.loads(out.read_text())
        row = rep["datasets"]["rdare"][0]
        assert row["Pbar_s"] == pytest.approx(-1.0, abs=1e-12)
        assert row["antistab_verdict"] == "not_exists"
        assert rep["version"] and set(rep["tolerances"]) == set(cli.TOL_KEYS)

    def test_certify_supplied(self):
        rep = cli.run(cli.parse_config({"scenario": "certify", "problem": {**EX1, "Lambda": [[-1.0]]}}))
        (row,) = rep.datasets["certify"]
        assert row["verdict"] == "strict" and row["label"] == "supplied"

    def test_certify_suggested(self):
        rows = cli.run(cli.parse_config({"scenario": "certify", "problem": EX1})).datasets["certify"]
        assert rows[0]["label"] == "midpoint" and rows[0]["verdict"] == "strict"

    def test_design(self):
        rep = cli.run(cli.parse_config({"scenario": "design", "problem": EX1, "params": {"E": 1e-4}}))
        assert rep.datasets["design"][0]["Pf"] == pytest.approx(1e-4, abs=1e-12)

    def test_design_needs_E(self, tmp_path):
        assert run_main(tmp_path, {"scenario": "design", "problem": EX1}) == cli.EXIT_CONFIG

    def test_design_indefinite_E_is_domain_failure(self, tmp_path):
        assert run_main(tmp_path, {"scenario": "design", "problem": EX1,
                                   "params": {"E": -1.0}}) == cli.EXIT_DOMAIN

    def test_domain_failure(self, tmp_path, capsys):
        doc = {"scenario": "dare", "problem": {"A": [[0.5, 0], [0, 2]], "B": [[1], [0]],
                                               "Q": [[1, 0], [0, 1]], "R": [[1]]}}
        assert run_main(tmp_path, doc) == cli.EXIT_DOMAIN
        assert "not stabilizable" in capsys.readouterr().err

    def test_min_horizon(self, tmp_path):
        doc = {"scenario": "min-horizon", "problem": EX1,
               "params": {"Pf_grid": [0.0, 1e-4, 2.0], "N_max": 30, "certify": True}}
        out = tmp_path / "mh"
        assert run_main(tmp_path, doc, "--out", str(out)) == 0
        summary = read_csv(out / "min_horizon.csv")
        assert [r["N_min"] for r in summary] == ["NotFound", "8", "1"]
        trace = read_csv(out / "horizon_trace.csv")
        assert list(trace[0]) == ["Pf_tag", "N", "spectral_radius", "certified"]
        assert len(trace) == 90

    def test_eig_sweep(self):
        rep = cli.run(cli.parse_config({"scenario": "eig-sweep", "problem": EX1,
                                        "params": {"Pf_grid": [1e-4], "N_max": 20}}))
        rows = rep.datasets["eig_sweep"]
        assert rows[7]["N"] == 8 and rows[7]["spectral_radius"] == pytest.approx(0.9710, abs=1e-4)

    def test_simulate(self):
        doc = {"scenario": "simulate", "problem": EX1,
               "params": {"Pf_grid": [1e-4], "horizons": [9], "N_sim": 500, "x_max": 1.0,
                          "xhat0": [1.0]}}
        rep = cli.run(cli.parse_config(doc))
        (fin,) = rep.datasets["final"]
        assert fin["status"] == "completed" and fin["x_final_norm"] <= 1e-6
        assert len(rep.datasets["trace"]) == 501

    def test_simulate_constraint_conflict(self):
        doc = {"scenario": "simulate", "problem": {**EX1, "C": [[1]], "D": [[0]], "e": [-1]},
               "params": {"x_max": 1.0}}
        with pytest.raises(cli.ConfigError):
            cli.run(cli.parse_config(doc))


class TestPaperFigures:
    def test_files(self, tmp_path):
        assert cli.main(["paper-figures", "--out-dir", str(tmp_path)]) == 0
        mh = read_csv(tmp_path / "fig_min_horizon.csv")
        assert list(mh[0]) == ["Pf", "N_min"]
        assert {"Pf": "0.0001", "N_min": "8"} in mh
        eigs = read_csv(tmp_path / "fig_eigs.csv")
        assert list(eigs[0]) == ["N", "spectral_radius"] and len(eigs) == 20
        xss = read_csv(tmp_path / "fig_xss.csv")
        assert list(xss[0]) == ["N", "Pf", "x_final"] and len(xss) == 40

    def test_run_scenario(self, tmp_path):
        out = tmp_path / "figs"
        doc = {"scenario": "paper-figures", "params": {"horizons": [9], "N_sim": 50}}
        assert run_main(tmp_path, doc, "--out", str(out)) == 0
        assert len(read_csv(out / "fig_xss.csv")) == 2


class TestDeterminism:
    def test_byte_identical_csv(self, tmp_path):
        doc = {"scenario": "certify", "problem": {"generate": {"n_x": 3, "n_u": 1}}}
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        assert run_main(tmp_path, doc, "--seed", "17", "--out", str(a)) == 0
        assert run_main(tmp_path, doc, "--seed", "17", "--out", str(b)) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_seed_changes_instance(self, tmp_path):
        doc = {"scenario": "certify", "problem": {"generate": {"n_x": 2, "n_u": 1}}}
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        run_main(tmp_path, doc, "--seed", "1", "--out", str(a))
        run_main(tmp_path, doc, "--seed", "2", "--out", str(b))
        assert a.read_bytes() != b.read_bytes()


class TestDumpProblem:
    @pytest.mark.parametrize("suffix", ["yaml", "json"])
    def test_round_trip(self, tmp_path, suffix):
        doc = {"scenario": "certify", "problem": {"generate": {"n_x": 3, "n_u": 2}}}
        dump = tmp_path / f"dump.{suffix}"
        assert run_main(tmp_path, doc, "--seed", "3", "--dump-problem", str(dump)) == 0
        cfg = cli.parse_config(doc, {"seed": 3})
        again = cli.parse_config({"scenario": "certify",
                                  "problem": cli.load_document(str(dump))})
        assert lqm.problem_to_dict(again.problem, again.storage) == \
            lqm.problem_to_dict(cfg.problem, cfg.storage)
        for name in ("A", "B", "Q", "S", "R", "Pf"):
            assert np.array_equal(getattr(again.problem, name), getattr(cfg.problem, name))

    def test_constraints_survive(self, tmp_path):
        doc = {"scenario": "dare", "problem": {**EX1, "C": [[1], [-1]], "D": [[0], [0]],
                                               "e": [-1, -1]}}
        dump = tmp_path / "d.yaml"
        assert run_main(tmp_path, doc, "--dump-problem", str(dump)) == 0
        again = cli.parse_config({"scenario": "dare", "problem": cli.load_document(str(dump))})
        assert np.array_equal(again.constraints.C, [[1.0], [-1.0]])


class TestSelftest:
    def test_passes(self, capsys):
        assert cli.main(["selftest"]) == 0
        out = capsys.readouterr().out
        assert "FAIL" not in out and "observed=" in out

    def test_mutation_detected(self, capsys):
        assert cli.main(["selftest", "--expect", "ex1.P_s=3.1"]) != 0
        assert "FAIL  ex1.P_s" in capsys.readouterr().out

    def test_unknown_check(self):
        assert cli.main(["selftest", "--expect", "nope=1"]) == cli.EXIT_CONFIG

    def test_function_api(self):
        buf = io.StringIO()
        assert cli.selftest({"ex2.Pbar_s": -1.0}, stream=buf) == 0


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "lqrhc", "selftest"], capture_output=True, text=True)
    assert res.returncode == 0 and "checks passed" in res.stdout


def test_usage_error_exit_code():
    assert cli.main(["run"]) == 2
