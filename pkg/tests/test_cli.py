import io
import subprocess
import sys

import pytest

from aeprob.cli import (COMPARE_HEADER, ESTIMATE_HEADER, EXIT_DATA, EXIT_NUMERICAL, EXIT_OK,
                        EXIT_USAGE, format_number, main, read_cohorts, read_report, write_report)
from aeprob.errors import EmptyInput, ParseError


def _write(tmp_path, text, name="in.csv"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return str(p)


def _rows(path):
    header, rows = read_report(path)
    return [dict(zip(header, r)) for r in rows]


def test_estimate_trial_file(trial_csv, tmp_path):
    out = tmp_path / "est.csv"
    assert main(["estimate", "--input", str(trial_csv), "--out", str(out)]) == EXIT_OK
    header, _ = read_report(out)
    assert header == ESTIMATE_HEADER
    rows = _rows(out)
    ip = {r["group"]: r for r in rows if r["estimator"] == "ip" and r["policy"] == "tau_max_group"}
    assert round(ip["A"]["value"], 4) == 0.3646 and ip["A"]["tau"] == 802
    assert round(ip["B"]["value"], 4) == 0.3077 and ip["B"]["tau"] == 980
    assert round(ip["A"]["variance_model"], 4) == 0.0024
    assert ip["A"]["variance_bootstrap"] is None
    assert len(rows) == 2 * 4 * 5


def test_read_cohorts_counts(trial_csv):
    a, b = read_cohorts(trial_csv)
    assert (a.n, int(a.n_ae.sum()), int(a.n_ce.sum()), int(a.n_censored.sum())) == (96, 35, 56, 5)
    assert (b.n, int(b.n_ae.sum()), int(b.n_ce.sum()), int(b.n_censored.sum())) == (104, 32, 69, 3)


def test_estimate_no_censoring_ip_equals_aj(tmp_path):
    path = _write(tmp_path, "id,group,time,status\n1,A,1,1\n2,A,2,2\n3,A,2,1\n4,A,5,2\n"
                            "5,B,1,2\n6,B,3,1\n7,B,4,1\n")
    out = tmp_path / "o.csv"
    assert main(["estimate", "--input", path, "--estimators", "ip,aj", "--out", str(out),
                 "--raw"]) == EXIT_OK
    rows = _rows(out)
    for g in "AB":
        sel = {r["estimator"]: r["value"] for r in rows
               if r["group"] == g and r["policy"] == "tau_max_group"}
        assert sel["ip"] == sel["aj"]


@pytest.mark.parametrize("text, line", [
    ("", 1),
    ("id,group,time\n1,A,2\n", 1),
    ("id,group,time,status\n1,A,2,1\n2,C,3,1\n", 3),
    ("id,group,time,status\n1,A,2,1\n2,A,abc,1\n", 3),
    ("id,group,time,status\n1,A,0,1\n", 2),
    ("id,group,time,status\n1,A,2,1\n2,B,3,7\n", 3),
    ("id,group,time,status\n1,A,2,1,9\n", 2),
])
def test_parse_errors_report_line(tmp_path, text, line, capsys):
    path = _write(tmp_path, text)
    with pytest.raises(ParseError) as exc:
        read_cohorts(path)
    assert exc.value.line == line
    assert main(["estimate", "--input", path]) == EXIT_DATA
    assert f"line {line}" in capsys.readouterr().err


def test_missing_group_and_header_only(tmp_path):
    with pytest.raises(EmptyInput):
        read_cohorts(_write(tmp_path, "id,group,time,status\n"))
    path = _write(tmp_path, "id,group,time,status\n1,A,2,1\n")
    assert main(["estimate", "--input", path]) == EXIT_DATA
    assert main(["estimate", "--input", str(tmp_path / "missing.csv")]) == EXIT_DATA


def test_compare_trial_file(trial_csv, tmp_path):
    out = tmp_path / "cmp.csv"
    assert main(["compare", "--input", str(trial_csv), "--estimators", "ip", "--out",
                 str(out)]) == EXIT_OK
    header, _ = read_report(out)
    assert header == COMPARE_HEADER
    row = next(r for r in _rows(out) if r["policy"] == "tau_max_group")
    assert round(row["rr"], 4) == 1.1849
    assert abs(row["model_lower"] - 0.8015) < 0.01 and abs(row["model_upper"] - 1.7517) < 0.01
    assert row["bootstrap_lower"] is None and row["length_ratio"] is None
    assert row["level"] == 0.95


def test_compare_both_sources(trial_csv, tmp_path):
    out = tmp_path / "cmp.csv"
    args = ["compare", "--input", str(trial_csv), "--variance", "model,bootstrap",
            "--bootstrap", "200", "--seed", "5", "--out", str(out)]
    assert main(args) == EXIT_OK
    for r in _rows(out):
        assert None not in (r["model_lower"], r["model_upper"], r["bootstrap_lower"],
                            r["bootstrap_upper"], r["length_ratio"])
        expected = (r["model_upper"] - r["model_lower"]) / (r["bootstrap_upper"] - r["bootstrap_lower"])
        assert r["length_ratio"] == pytest.approx(expected, rel=1e-4)


def test_compare_identical_groups(tmp_path):
    body = "1,{g},1,1\n2,{g},2,2\n3,{g},3,0\n4,{g},4,1\n5,{g},6,1\n"
    path = _write(tmp_path, "id,group,time,status\n" + body.format(g="A") + body.format(g="B"))
    out = tmp_path / "o.csv"
    assert main(["compare", "--input", path, "--out", str(out)]) == EXIT_OK
    assert all(r["rr"] == 1 for r in _rows(out))


def test_compare_zero_denominator_is_flagged(tmp_path):
    path = _write(tmp_path, "id,group,time,status\n1,A,1,1\n2,A,2,2\n3,B,1,2\n4,B,3,0\n")
    out = tmp_path / "o.csv"
    assert main(["compare", "--input", path, "--out", str(out)]) == EXIT_OK
    rows = _rows(out)
    assert all(r["note"] == "zero_denominator" and r["rr"] is None for r in rows)
    path = _write(tmp_path, "id,group,time,status\n1,B,1,1\n2,B,2,2\n3,A,1,2\n4,A,3,0\n", "z.csv")
    assert main(["compare", "--input", path, "--out", str(out)]) == EXIT_OK
    assert all(r["note"] == "zero_estimate" and r["rr"] == 0 for r in _rows(out))


@pytest.mark.parametrize("argv", [
    [],
    ["estimate"],
    ["estimate", "--input", "x.csv", "--bootstrap", "100"],
    ["compare", "--input", "x.csv", "--variance", "bootstrap"],
    ["compare", "--input", "x.csv", "--variance", "sandwich"],
    ["compare", "--input", "x.csv", "--level", "1.2"],
    ["estimate", "--input", "x.csv", "--estimators", "ip,xx"],
    ["estimate", "--input", "x.csv", "--seed", "-3"],
    ["simulate", "--scenario", "S2", "--runs", "5"],
    ["simulate", "--scenario", "S2", "--runs", "1", "--seed", "1"],
    ["simulate", "--runs", "5", "--seed", "1"],
    ["frobnicate"],
])
def test_usage_errors(argv, trial_csv):
    argv = [str(trial_csv) if a == "x.csv" else a for a in argv]
    assert main(argv) == EXIT_USAGE


def test_unknown_scenario_is_data_error():
    assert main(["simulate", "--scenario", "S99", "--runs", "3", "--seed", "1"]) == EXIT_DATA


def test_numerical_error_exit_code(tmp_path):
    path = _write(tmp_path, "[Z]\nn_per_group = 5\nae_a = constant 0\nce_a = constant 0\n"
                            "ae_b = constant 0\nce_b = constant 0\ncensoring_a = 0.5\n", "z.ini")
    assert main(["simulate", "--scenario", path, "--runs", "3", "--seed", "1"]) == EXIT_NUMERICAL


def test_simulate_reports(tmp_path):
    out = tmp_path / "s2"
    assert main(["simulate", "--scenario", "S2", "--runs", "20", "--seed", "42", "--out",
                 str(out)]) == EXIT_OK
    prob = _rows(out / "probability.csv")
    assert {r["rel_bias"] for r in prob if r["estimator"] == "ip"} == {0}
    assert all(r["runs"] == 20 for r in prob)
    var = _rows(out / "variance.csv")
    assert {r["source"] for r in var} == {"model"}
    assert all(r["whisker_low"] <= r["q1"] <= r["median"] <= r["q3"] <= r["whisker_high"]
               for r in var)
    assert len(_rows(out / "relative_risk.csv")) == 4 * 4


def test_simulate_byte_identical_across_runs_and_workers(tmp_path):
    dirs = []
    for i, workers in enumerate(("1", "1", "3")):
        d = tmp_path / f"run{i}"
        assert main(["simulate", "--scenario", "S3", "--runs", "12", "--seed", "8",
                     "--bootstrap", "20", "--workers", workers, "--out", str(d)]) == EXIT_OK
        dirs.append(d)
    for name in ("probability.csv", "relative_risk.csv", "variance.csv"):
        first = (dirs[0] / name).read_bytes()
        assert all((d / name).read_bytes() == first for d in dirs[1:])


def test_simulate_stdout(capsys):
    assert main(["simulate", "--scenario", "S1", "--runs", "3", "--seed", "1",
                 "--estimators", "ip"]) == EXIT_OK
    out = capsys.readouterr().out
    assert out.startswith("# probability\n")
    assert "# relative_risk\n" in out and "# variance\n" in out


@pytest.mark.parametrize("raw", [False, True])
def test_report_round_trip(trial_csv, tmp_path, raw):
    out = tmp_path / "e.csv"
    argv = ["compare", "--input", str(trial_csv), "--bootstrap", "50", "--seed", "1",
            "--out", str(out)] + (["--raw"] if raw else [])
    assert main(argv) == EXIT_OK
    header, rows = read_report(out)
    buf = io.StringIO()
    write_report(buf, header, rows, raw)
    assert buf.getvalue().encode("utf-8") == out.read_bytes()


def test_format_number():
    assert format_number(0.36458333333333331) == "0.364583"
    assert format_number(0.36458333333333331, raw=True) == "0.3645833333333333"
    assert format_number(-0.0) == "0"
    assert format_number(1.5e-7) == "1.5e-07"
    assert format_number(None) == "" and format_number(12) == "12"
    assert format_number(float("nan")) == "nan"


def test_module_entry_point(trial_csv):
    res = subprocess.run([sys.executable, "-m", "aeprob", "estimate", "--input", str(trial_csv),
                          "--estimators", "aj"], capture_output=True, text=True)
    assert res.returncode == 0
    assert res.stdout.splitlines()[0] == ",".join(ESTIMATE_HEADER)
