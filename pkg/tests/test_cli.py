import json

import pytest

from pathrde.cli import main


def _read(path):
    return path.read_text(encoding="utf-8")


@pytest.fixture
def zigzag(tmp_path):
    f = tmp_path / "zig.csv"
    f.write_text("t,x\n0,0\n0.5,1\n1,0\n", encoding="utf-8")
    return f


def test_pvar(tmp_path, zigzag):
    out = tmp_path / "o"
    assert main(["pvar", "--path", str(zigzag), "--p-list", "2", "3", "--out", str(out)]) == 0
    text = _read(out / "pvar.csv").splitlines()
    assert text[0].startswith("# config-sha256=")
    assert text[1] == "p,t,s,exact,greedy,bruteforce,approximate"
    row = text[2].split(",")
    assert float(row[3]) == pytest.approx(2 ** 0.5, abs=1e-15)
    assert float(row[5]) == float(row[3])


def test_pvar_bad_input(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("t,x\n0,0\n0,1\n", encoding="utf-8")
    assert main(["pvar", "--path", str(bad)]) == 1
    assert main(["pvar", "--path", str(tmp_path / "missing.csv")]) == 1
    assert main(["pvar"]) == 1
    assert main(["nonsense"]) == 1


def test_integrate_and_guard(tmp_path):
    out = tmp_path / "i"
    assert main(["integrate", "--path", "linear:33", "--functional", "identity",
                 "--out", str(out)]) == 0
    summary = json.loads(_read(out / "summary.json"))
    assert summary["final_value"] == [0.5]
    assert _read(out / "diagnostics.csv").startswith("# config-sha256=")
    assert main(["integrate", "--path", "brownian:0:64", "--p", "2.5"]) == 2


def test_solve(tmp_path):
    out = tmp_path / "s"
    assert main(["solve", "--driver", "linear:257", "--sigma", "identity", "--xi", "1",
                 "--out", str(out)]) == 0
    win = json.loads(_read(out / "windows.json"))
    assert win["converged"] and abs(win["final_value"][0] - 2.718281828) < 1e-4
    lines = _read(out / "solution.csv").splitlines()
    assert lines[1] == "t,Y_1,Yprime_1_1"
    assert main(["solve", "--driver", "linear:65", "--tol", "1e-16", "--max-iter", "2",
                 "--out", str(out)]) == 2
    assert json.loads(_read(out / "windows.json"))["converged"] is False
    assert main(["solve", "--driver", "brownian:0:64", "--p", "2.5"]) == 2


def test_config_file_and_override(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"driver": "brownian:3:64", "sigma": "smax:eps=0.5:quintic",
                               "xi": "0", "tol": 1e-9}), encoding="utf-8")
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["solve", "--config", str(cfg), "--out", str(a)]) == 0
    assert main(["solve", "--config", str(cfg), "--out", str(b)]) == 0
    assert _read(a / "solution.csv") == _read(b / "solution.csv")
    c = tmp_path / "c"
    assert main(["solve", "--config", str(cfg), "--tol", "1e-8", "--out", str(c)]) == 0
    assert _read(c / "solution.csv").splitlines()[0] != _read(a / "solution.csv").splitlines()[0]


def test_convergence(tmp_path):
    out = tmp_path / "cv"
    assert main(["convergence", "--experiment", "exp-ode", "--sizes", "65", "129", "257",
                 "--out", str(out)]) == 0
    rows = _read(out / "convergence-exp-ode.csv").splitlines()
    assert rows[-1].startswith("fit,") and float(rows[-1].split(",")[2]) >= 1.0
    assert main(["convergence", "--experiment", "chen-defect", "--sizes", "64", "128",
                 "--out", str(out)]) == 0
    rows = _read(out / "convergence-chen-defect.csv").splitlines()[2:]
    assert all(float(r.split(",")[1]) <= 1e-12 and r.endswith("n/a") for r in rows)


def test_check_and_report(tmp_path):
    out = tmp_path / "r"
    assert main(["check", "--functional", "identity", "--driver", "brownian:1:64",
                 "--out", str(out)]) == 0
    rep = json.loads(_read(out / "check.json"))
    assert rep["vertical_error"] <= 1e-10
    assert main(["report", "--functional", "smax:eps=0.25:quintic", "--driver",
                 "brownian:0:129", "--seeds", "2", "--out", str(out)]) == 0
    rep = json.loads(_read(out / "report.json"))
    assert set(rep) >= {"functional_id", "constants", "flags", "probe_count"}
    assert set(rep["constants"]) == {"F", "DF", "gradF", "hess"}
