import json
import subprocess
import sys

import pytest

from fisherscale.cli import main


def run_json(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr().out
    return code, json.loads(out) if out.strip().startswith("{") else out


@pytest.fixture
def xs(tmp_path):
    path = tmp_path / "xs.txt"
    path.write_text("# three observations\n1\n2\n\n3  # last\n")
    return str(path)


class TestInfo:
    def test_closed_normal(self, capsys):
        code, rep = run_json(capsys, "info", "--dist", "normal", "--method", "closed")
        assert code == 0
        assert rep["body"]["results"]["value"] == pytest.approx(2.0, abs=1e-8)
        assert rep["body"]["schema"] == 1 and "generated" in rep["header"]

    def test_closed_atom_mixture(self, capsys):
        code, rep = run_json(capsys, "info", "--dist", "mix: 0.9*normal ++ 0.1*dirac(0)", "--method", "closed")
        assert code == 0 and rep["body"]["results"]["value"] == pytest.approx(1.8, abs=1e-8)

    def test_closed_infinite_is_reported(self, capsys):
        code, rep = run_json(capsys, "info", "--dist", "uniform(0,2)")
        assert code == 0 and rep["body"]["results"]["value"] == {"value": "inf", "tag": "infinite"}

    def test_variational(self, capsys):
        code, rep = run_json(capsys, "info", "--dist", "cauchy", "--method", "variational", "--kind", "log", "--m", "32")
        assert code == 0 and 0.49 <= rep["body"]["results"]["value"] <= 0.5 + 1e-6

    def test_scan(self, capsys):
        code, rep = run_json(capsys, "info", "--dist", "uniform(0,2)", "--method", "variational", "--sizes", "4,8,16,32")
        assert code == 0 and rep["body"]["results"]["verdict"] == "divergent"

    def test_pure_atom_at_zero(self, capsys):
        code, rep = run_json(capsys, "info", "--dist", "dirac(0)", "--method", "variational", "--m", "4")
        assert code == 0 and rep["body"]["results"]["value"] == 0.0

    def test_empirical_from_draws(self, capsys):
        code, rep = run_json(capsys, "info", "--dist", "normal", "--method", "empirical", "--n", "20000", "--m", "8")
        assert code == 0 and 1.7 < rep["body"]["results"]["value"] < 2.2

    def test_empirical_too_rich(self, capsys, xs):
        code = main(["info", "--dist", "normal", "--method", "empirical", "--input", xs, "--m", "4"])
        assert code == 2
        assert "basis too rich" in capsys.readouterr().err


class TestEstimate:
    def test_rms(self, capsys, xs):
        code, rep = run_json(capsys, "estimate", "--input", xs, "--score", "chi2")
        assert code == 0
        assert rep["body"]["results"]["S"] == pytest.approx(2.1602469, abs=1e-7)
        assert rep["body"]["results"]["v1"] == pytest.approx(0.5, abs=1e-10)

    def test_csv_column(self, capsys, tmp_path):
        path = tmp_path / "data.csv"
        path.write_text("id,value\n1,1.0\n2,2.0\n3,3.0\n")
        code, rep = run_json(capsys, "estimate", "--input", str(path), "--csv-col", "1")
        assert code == 0 and rep["body"]["results"]["S"] == pytest.approx(2.1602469, abs=1e-7)

    def test_huber_under_cauchy(self, capsys, xs):
        code, rep = run_json(capsys, "estimate", "--input", xs, "--score", "huber(1.5)", "--dist", "cauchy")
        assert code == 0 and rep["body"]["results"]["S"] > 0

    def test_efficiency_skipped_when_infinite(self, capsys, xs):
        code, rep = run_json(capsys, "estimate", "--input", xs, "--dist", "uniform(0,2)")
        assert code == 0 and rep["body"]["results"]["efficiency"] is None

    def test_all_zero(self, capsys, tmp_path):
        path = tmp_path / "z.txt"
        path.write_text("0\n0\n")
        assert main(["estimate", "--input", str(path)]) == 2
        assert "scale unidentified" in capsys.readouterr().err

    def test_bad_number(self, capsys, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("1\nabc\n")
        assert main(["estimate", "--input", str(path)]) == 2

    def test_missing_file(self, capsys):
        assert main(["estimate", "--input", "/nonexistent/file.txt"]) == 2


class TestMonteCarloCommands:
    def test_lan(self, capsys):
        code, rep = run_json(capsys, "lan", "--dist", "normal", "--n", "500", "--reps", "100", "--seed", "7")
        assert code == 0 and rep["body"]["results"]["experiment"] == "lan"
        assert rep["body"]["seed"] == 7

    def test_lan_infinite(self, capsys):
        assert main(["lan", "--dist", "uniform(0,2)"]) == 4
        assert "information infinite" in capsys.readouterr().err

    def test_simulate(self, capsys):
        code, rep = run_json(capsys, "simulate", "--dist", "laplace", "--score", "chi2", "--n", "200", "--reps", "50")
        assert code == 0
        rows = rep["body"]["results"]["bound"]["rows"]
        assert [r["score"] for r in rows] == ["lambda", "chi2"]

    def test_simulate_root_failures(self, capsys):
        code = main(["simulate", "--dist", "0.5*normal ++ 0.5*dirac(0)", "--score", "chi2", "--n", "1", "--reps", "200"])
        assert code == 3

    def test_l2check(self, capsys):
        code, rep = run_json(capsys, "l2check", "--dist", "exponential")
        assert code == 0 and rep["body"]["results"]["decreasing"] is True

    @pytest.mark.parametrize("argv", [
        ["simulate", "--dist", "normal", "--n", "300", "--reps", "40", "--seed", "3"],
        ["lan", "--dist", "cauchy", "--n", "300", "--reps", "40", "--seed", "3"],
    ])
    def test_byte_identical_bodies(self, capsys, argv):
        bodies = []
        for workers in ("1", "2", "1"):
            code, rep = run_json(capsys, *argv, "--workers", workers)
            assert code == 0
            bodies.append(json.dumps(rep["body"], sort_keys=True))
        assert bodies[0] == bodies[1] == bodies[2]


class TestVerify:
    @pytest.mark.parametrize("fmt", ["json", "csv"])
    def test_round_trip(self, capsys, tmp_path, fmt):
        out = tmp_path / f"r.{fmt}"
        assert main(["lan", "--dist", "laplace", "--n", "200", "--reps", "30", "--seed", "5",
                     "--format", fmt, "--output", str(out)]) == 0
        code, res = run_json(capsys, "--verify", str(out))
        assert code == 0 and res["match"] is True

    def test_estimate_round_trip(self, capsys, tmp_path, xs):
        out = tmp_path / "e.json"
        assert main(["estimate", "--input", xs, "--output", str(out)]) == 0
        code, res = run_json(capsys, "--verify", str(out))
        assert code == 0 and res["match"]

    def test_tampered(self, capsys, tmp_path):
        out = tmp_path / "r.json"
        assert main(["info", "--dist", "normal", "--output", str(out)]) == 0
        rep = json.loads(out.read_text())
        rep["body"]["results"]["value"] = 2.5
        out.write_text(json.dumps(rep))
        code, res = run_json(capsys, "--verify", str(out))
        assert code == 3 and not res["match"]
        assert "results.value" in res["differences"]

    def test_not_a_report(self, capsys, tmp_path):
        bad = tmp_path / "x.json"
        bad.write_text('{"a": 1}')
        assert main(["--verify", str(bad)]) == 2


class TestValidation:
    @pytest.mark.parametrize("argv", [
        ["info", "--dist", "normal", "--bogus"],
        ["info", "--dist", "normal", "--sigma", "-1"],
        ["lan", "--dist", "normal", "--reps", "0"],
        ["info", "--dist", "gamma"],
        ["info", "--dist", "normal", "--method", "magic"],
        ["simulate", "--dist", "normal", "--score", "tukey"],
        ["info"],
        [],
    ])
    def test_exit_two(self, capsys, argv):
        assert main(argv) == 2

    def test_reps_one(self, capsys):
        assert main(["lan", "--dist", "normal", "--reps", "1", "--n", "10"]) == 2


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "fisherscale", "info", "--dist", "laplace"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["body"]["results"]["value"] == pytest.approx(1.0, abs=1e-8)
