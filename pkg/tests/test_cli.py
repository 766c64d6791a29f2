import csv
import json

import pytest

from bpsa.cli import main


def _run(argv):
    return main(argv)


def _strip_timing(report):
    report = dict(report)
    report.pop("timing", None)
    return report


@pytest.fixture()
def small_csv(tmp_path):
    path = tmp_path / "bench.csv"
    code = _run(["generate", "--n", "150", "--seed", "3", "--out", str(path)])
    assert code == 0
    return path


def test_generate_writes_expected_rows(tmp_path):
    path = tmp_path / "g.csv"
    assert _run(["generate", "--n", "25", "--seed", "1", "--out", str(path)]) == 0
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    assert len(rows) == 26
    header = rows[0]
    assert header[:2] == ["y", "t"]
    assert "c1" in header and "i1" in header and "g1" in header and "z1" in header
    assert all(r[1] in ("0", "1") for r in rows[1:])


def test_generate_is_seed_deterministic(tmp_path):
    a = tmp_path / "a.csv"
    b = tmp_path / "b.csv"
    _run(["generate", "--n", "30", "--seed", "9", "--out", str(a)])
    _run(["generate", "--n", "30", "--seed", "9", "--out", str(b)])
    assert a.read_bytes() == b.read_bytes()


def test_analyze_bpsa_report(small_csv, tmp_path, capsys):
    out = tmp_path / "report.json"
    code = _run(
        [
            "analyze",
            "--data", str(small_csv),
            "--impl", "ipw",
            "--method", "bpsa",
            "--K", "20",
            "--S", "20",
            "--seed", "7",
            "--out", str(out),
        ]
    )
    assert code == 0
    report = json.loads(out.read_text())
    assert report["config"]["seed"] == 7
    assert report["config"]["implementation"]["kind"] == "ipw"
    assert "prior" in report["config"]["sampler"]
    est = report["estimate"]
    assert est["interval"][0] <= est["point"] <= est["interval"][1]
    assert est["total_var"] >= est["within_var"]
    assert 0 <= est["prop_du"] < 1
    assert "acceptance_rate" in report["diagnostics"]["ps_model"]
    assert "seconds" in report["timing"]


def test_analyze_report_deterministic_up_to_timing(small_csv, tmp_path):
    outs = []
    for name in ("r1.json", "r2.json"):
        out = tmp_path / name
        code = _run(
            [
                "analyze",
                "--data", str(small_csv),
                "--impl", "caliper",
                "--K", "15",
                "--S", "10",
                "--seed", "5",
                "--out", str(out),
            ]
        )
        assert code == 0
        outs.append(_strip_timing(json.loads(out.read_text())))
    assert outs[0] == outs[1]


def test_analyze_psa_report(small_csv, tmp_path):
    out = tmp_path / "psa.json"
    code = _run(
        [
            "analyze",
            "--data", str(small_csv),
            "--impl", "dr",
            "--method", "psa",
            "--seed", "2",
            "--out", str(out),
        ]
    )
    assert code == 0
    report = json.loads(out.read_text())
    assert "variance" in report["estimate"]
    assert report["config"]["method"] == "psa"


def test_analyze_invalid_implementation_is_usage_error(small_csv, capsys):
    code = _run(["analyze", "--data", str(small_csv), "--impl", "bogus"])
    assert code == 2


def test_analyze_missing_file_is_runtime_error(tmp_path, capsys):
    code = _run(["analyze", "--data", str(tmp_path / "nope.csv"), "--impl", "ipw"])
    assert code == 1


def test_analyze_statistical_failure_exit_code(tmp_path, capsys):
    # perfectly separated data: the logistic fit has no maximizer
    path = tmp_path / "sep.csv"
    path.write_text("y,t,x1\n1.0,0,-2.0\n1.5,0,-1.0\n2.0,1,1.0\n2.5,1,2.0\n")
    code = _run(["analyze", "--data", str(path), "--impl", "ipw", "--K", "5"])
    assert code == 1
    err = capsys.readouterr().err
    payload = json.loads(err)
    assert payload["error"]["type"] == "SeparationError"
    assert payload["error"]["stage"] == "design"


def test_env_variable_provides_flag_default(small_csv, tmp_path, monkeypatch):
    monkeypatch.setenv("BPSA_SEED", "123")
    out = tmp_path / "env.json"
    code = _run(
        ["analyze", "--data", str(small_csv), "--impl", "ipw", "--K", "10", "--S", "10",
         "--out", str(out)]
    )
    assert code == 0
    assert json.loads(out.read_text())["config"]["seed"] == 123


def test_simulate_single_cell(tmp_path):
    out = tmp_path / "sim"
    code = _run(
        [
            "simulate",
            "--cells", "ipw:confound",
            "--reps", "10",
            "--n", "120",
            "--K", "10",
            "--S", "10",
            "--seed", "4",
            "--out", str(out),
        ]
    )
    assert code == 0
    with open(out / "simulation_table.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 1
    assert rows[0]["implementation"] == "IPW"
    assert rows[0]["ps_model"] == "confound"
    report = json.loads((out / "simulation_report.json").read_text())
    assert report["config"]["seed"] == 4
    assert (out / "figure_data.csv").exists()


def test_simulate_workers_do_not_change_output(tmp_path):
    tables = []
    for workers, name in ((1, "w1"), (2, "w2")):
        out = tmp_path / name
        code = _run(
            [
                "simulate",
                "--cells", "ipw:confound", "strat:confound",
                "--reps", "10",
                "--n", "120",
                "--K", "10",
                "--S", "10",
                "--seed", "6",
                "--workers", str(workers),
                "--out", str(out),
            ]
        )
        assert code == 0
        tables.append((out / "simulation_table.csv").read_bytes())
    assert tables[0] == tables[1]


def test_simulate_full_bpsa_has_24_rows(tmp_path):
    out = tmp_path / "full"
    code = _run(
        [
            "simulate",
            "--full-bpsa",
            "--reps", "10",
            "--n", "150",
            "--K", "6",
            "--S", "10",
            "--seed", "2",
            "--workers", "2",
            "--out", str(out),
        ]
    )
    assert code == 0
    with open(out / "simulation_table.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 24
    assert {r["ps_model"] for r in rows} == {
        "confound", "instru", "instru_prog", "instru_prog_noise"
    }
    assert len({r["implementation"] for r in rows}) == 6


def test_simulate_rejects_bad_cell_token(tmp_path, capsys):
    code = _run(["simulate", "--cells", "nope", "--reps", "10", "--out", str(tmp_path)])
    assert code == 2


def test_no_cells_is_usage_error(tmp_path):
    code = _run(["simulate", "--reps", "10", "--out", str(tmp_path)])
    assert code == 2
