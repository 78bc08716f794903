import json
import re

import pytest

from ocsu.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def totals(out):
    return dict(re.findall(r"variant=(\S+) total=(\S+)", out))


def test_help(capsys):
    code, out, _ = run(capsys, "--help")
    assert code == 0 and "usage" in out


def test_unknown_flag_is_usage_error(capsys):
    code, _, err = run(capsys, "run", "--bogus")
    assert code == 2 and "usage" in err


def test_missing_file_is_usage_error(capsys, tmp_path):
    code, _, err = run(capsys, "opt", "--instance", str(tmp_path / "nope.json"))
    assert code == 2 and "no such file" in err


def test_trace_and_run_equal_lengths(capsys, tmp_path):
    trace = tmp_path / "trace.csv"
    assert run(capsys, "gen-trace", "--length", "48", "--seed", "3", "--out", str(trace))[0] == 0
    code, out, _ = run(capsys, "run", "--trace", str(trace), "--job-length", "2", "--prediction", "2",
                       "--cmin", "2", "--cmax", "2", "--beta", "20", "--variant", "LACS", "--variant", "RORO",
                       "--seed", "4")
    assert code == 0
    assert out.startswith("# seed=4")
    found = totals(out)
    assert found["LACS"] == found["RORO"]
    assert "slot,decision,progress" in out


def test_run_is_byte_stable(capsys, tmp_path):
    trace = tmp_path / "trace.csv"
    run(capsys, "gen-trace", "--length", "48", "--seed", "1", "--out", str(trace))
    argv = ["run", "--trace", str(trace), "--job-length", "2.2", "--prediction", "2", "--cmax", "3",
            "--beta", "20", "--ci-err", "0.1", "--variant", "CarbonScaler", "--variant", "LACS",
            "--gamma", "0", "--epsilon", "0"]
    first = run(capsys, *argv)
    second = run(capsys, *argv)
    assert first == second and first[0] == 0


def test_xinstance_opt_and_run(capsys, tmp_path):
    inst = tmp_path / "x.json"
    code, _, _ = run(capsys, "gen-xinstance", "--x", "3", "--uoverl", "10", "--beta-frac", "0.1",
                     "--cmax", "4", "--job-length", "1", "--out", str(inst))
    assert code == 0
    doc = json.loads(inst.read_text())
    assert doc["upper"] == 10 and doc["beta"] == 1
    code, out, _ = run(capsys, "opt", "--instance", str(inst), "--method", "convex")
    assert code == 0 and "method=convex" in out
    code, out, _ = run(capsys, "run", "--instance", str(inst), "--variant", "RORO_cmin")
    assert code == 0 and "ratio=" in out


def test_sweep_and_report(capsys, tmp_path):
    spec = tmp_path / "sweep.json"
    spec.write_text(json.dumps({"synthetic": {"length": 72, "seed": 2}, "variants": ["LACS", "CarbonAgnostic"],
                                "beta": [10, 20], "oracle": "dp", "dp_levels": 32}))
    code, out, _ = run(capsys, "sweep", "--spec", str(spec), "--out", str(tmp_path / "out"))
    assert code == 0
    assert (tmp_path / "out" / "beta__beta=10.csv").exists()
    code, out, _ = run(capsys, "report", "--records", str(tmp_path / "out" / "records.json"),
                       "--out", str(tmp_path / "again"), "--format", "json")
    assert code == 0
    assert (tmp_path / "again" / "summary.json").exists()
    first = (tmp_path / "out" / "summary.csv").read_bytes()
    run(capsys, "report", "--records", str(tmp_path / "out" / "records.json"), "--out", str(tmp_path / "csv"))
    assert (tmp_path / "csv" / "summary.csv").read_bytes() == first


def test_validate_example(capsys):
    code, out, _ = run(capsys, "validate", "--uoverl", "10", "--beta-frac", "0.1", "--cmax", "4")
    assert code == 0
    lines = [l for l in out.splitlines() if l.startswith(("PASS", "FAIL"))]
    assert len(lines) == 4 and all(l.startswith("PASS") for l in lines)


def test_validate_reports_violation(capsys):
    code, out, _ = run(capsys, "validate", "--uoverl", "5", "--beta-frac", "0.05", "--cmax", "2")
    assert code == 1
    assert "FAIL alpha_two:RORO_cmin" in out and "violation" in out
