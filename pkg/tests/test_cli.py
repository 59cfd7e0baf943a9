import csv
import io
import json
import subprocess
import sys

import pytest

from cal.cli import PAYMENT_HEADER, main
from cal.instance import Instance, load, save
from cal.valuations import Additive, zero_valuation
from helpers import DUEL_P1, DUEL_P2


def cal(*args):
    return subprocess.run([sys.executable, "-m", "cal", *map(str, args)], capture_output=True, text=True)


@pytest.fixture
def duel_file(tmp_path, duel):
    path = tmp_path / "duel.json"
    save(duel, path)
    return path


def test_gen_files(tmp_path, capsys):
    out = tmp_path / "c.json"
    assert main(["gen", "--family", "coverage", "--n", "2", "--m", "4", "--seed", "7", "--out", str(out)]) == 0
    inst = load(out)
    assert inst.n == 2 and all(v.to_json()["type"] == "coverage" for v in inst.valuations)
    assert main(["gen", "--family", "coverage", "--n", "2", "--m", "4", "--seed", "7"]) == 0
    assert capsys.readouterr().out == out.read_text()
    ce = tmp_path / "ce.json"
    main(["gen", "--family", "counterexample", "--out", str(ce)])
    v = json.loads(ce.read_text())["valuations"]
    assert v == [{"type": "budget_additive", "values": [1.0, 1.0, 1.0, 2.0], "budget": 2.0}]


def test_gen_usage_errors():
    assert cal("gen", "--family", "xor").returncode == 2
    assert cal("gen", "--family", "mrs", "--n", "0").returncode == 2
    assert cal("frobnicate").returncode == 2


def test_run_json(duel_file, capsys):
    assert main(["run", str(duel_file), "--tolerance", "1e-10", "--samples", "2000"]) == 0
    d = json.loads(capsys.readouterr().out)
    assert d["status"] == "ok"
    assert d["expected_payments"] == pytest.approx([DUEL_P1, DUEL_P2], abs=1e-6)
    assert abs(d["expected_payments"][1] - 0.1218) < 5e-4
    assert d["sampled_payments"]["samples"] == 2000
    assert {"allocation", "solver", "x_star", "welfare_realized"} <= set(d)


def test_run_csv(duel_file, capsys):
    assert main(["run", str(duel_file), "--format", "csv", "--samples", "100"]) == 0
    rows = list(csv.reader(io.StringIO(capsys.readouterr().out)))
    assert rows[0] == PAYMENT_HEADER
    assert [r[0] for r in rows[1:]] == ["0", "1"]


def test_run_zero_instance(tmp_path, capsys):
    path = tmp_path / "zero.json"
    save(Instance((zero_valuation(2), zero_valuation(2))), path)
    assert main(["run", str(path), "--samples", "10"]) == 0
    d = json.loads(capsys.readouterr().out)
    assert d["expected_payments"] == [0.0, 0.0]
    assert d["sampled_payments"]["mean"] == [0.0, 0.0]
    assert d["welfare_realized"] == 0.0 and d["allocation"] == [None, None]


def test_payments_and_adaptive(duel_file, capsys):
    assert main(["payments", str(duel_file), "--samples", "50"]) == 0
    assert set(json.loads(capsys.readouterr().out)) >= {"expected_payments", "sampled_payments"}
    assert main(["run", str(duel_file), "--adaptive"]) == 0
    d = json.loads(capsys.readouterr().out)
    assert d["mode"] == "adaptive" and d["mu"] == 1e-6 and len(d["halvings"]) == 1


def test_run_exit_codes(tmp_path, duel_file):
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    assert cal("run", bad).returncode == 2
    assert cal("run", tmp_path / "missing.json").returncode == 2
    ce = tmp_path / "ce.json"
    cal("gen", "--family", "counterexample", "--out", ce)
    assert cal("run", ce).returncode == 2
    r = cal("run", ce, "--allow-non-mrs", "--samples", "10")
    assert r.returncode == 0
    big = tmp_path / "big.json"
    save(Instance((Additive((1.0,) * 30),)), big)
    assert cal("run", big).returncode == 4


def test_nonconvergence_partial_report(tmp_path):
    path = tmp_path / "c.json"
    cal("gen", "--family", "coverage", "--n", "2", "--m", "4", "--seed", "7", "--out", path)
    r = cal("run", path, "--tolerance", "1e-14", "--max-iters", "2")
    assert r.returncode == 3
    d = json.loads(r.stdout)
    assert d["status"] == "nonconverged" and len(d["x"]) == 2 and d["solver"]["gap"] > 0


def test_verify_commands(tmp_path, capsys):
    assert main(["verify", "--corpus", "1", "3", "--trials", "20"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 3
    for line in lines:
        d = json.loads(line)
        assert d["passed"] and d["ratio"] >= 1 - 1 / 2.718281828459045 - 1e-4
    ce = tmp_path / "ce.json"
    main(["gen", "--family", "counterexample", "--out", str(ce)])
    capsys.readouterr()
    assert main(["verify", str(ce)]) == 0
    d = json.loads(capsys.readouterr().out)
    assert "non-concave objective" in d["findings"] and d["concavity_violations"] >= 1
    big = tmp_path / "big.json"
    main(["gen", "--family", "mrs", "--n", "2", "--m", "30", "--out", str(big)])
    assert main(["verify", str(big)]) == 4
    assert main(["verify"]) == 2


def test_verify_jobs_preserve_order(capsys):
    assert main(["verify", "--corpus", "2", "4", "--trials", "10", "--format", "csv"]) == 0
    serial = capsys.readouterr().out
    assert main(["verify", "--corpus", "2", "4", "--trials", "10", "--format", "csv", "--jobs", "2"]) == 0
    assert capsys.readouterr().out == serial


def test_run_is_byte_identical(duel_file):
    a = cal("run", duel_file, "--seed", "5", "--samples", "500")
    b = cal("run", duel_file, "--seed", "5", "--samples", "500")
    assert a.returncode == 0 and a.stdout == b.stdout


def test_verify_failure_exit_code(monkeypatch, capsys):
    import cal.cli as cli
    from cal.verify import VerificationReport

    def failing(job):
        return VerificationReport(1.0, 0.1, 0.1, 0, 0.0, 0.0, label=job[1], passed=False, failures=["approximation"])

    monkeypatch.setattr(cli, "_verify_one", failing)
    assert main(["verify", "--corpus", "0", "2"]) == 1
    assert all(not json.loads(line)["passed"] for line in capsys.readouterr().out.splitlines())
