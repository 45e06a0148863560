import json
import subprocess
import sys

import pytest

from frameless import cli


def run(argv, capsys):
    status = cli.main(argv)
    out, err = capsys.readouterr()
    return status, out, err


def csv_body(text):
    lines = text.splitlines()
    assert lines[0].startswith("# run_spec: ")
    return json.loads(lines[0][len("# run_spec: "):]), lines[1:]


def test_analyze_json(capsys):
    status, out, _ = run(["analyze", "--n", "100", "--beta", "2.5", "--m", "140"], capsys)
    assert status == 0
    doc = json.loads(out)
    assert doc["run_spec"]["command"] == "analyze"
    assert doc["run_spec"]["n"] == 100
    res = doc["result"]
    assert abs(res["per"] - 0.04406164227673342) < 1e-11
    assert {"throughput", "conservation_defect", "pruned_mass", "omega_mode"} <= set(res)


def test_analyze_two_stage(capsys):
    argv = ["analyze", "--n", "50", "--beta1", "2.47", "--beta2", "4.05", "--m-star", "66", "--m", "100"]
    status, out, _ = run(argv, capsys)
    assert status == 0
    assert json.loads(out)["result"]["per"] < 0.01


def test_simulate_is_reproducible(capsys):
    argv = ["simulate", "--n", "20", "--beta", "2.5", "--m", "25", "--trials", "300", "--seed", "9"]
    first = run(argv, capsys)
    second = run(argv, capsys)
    assert first[0] == 0
    assert first[1] == second[1]


def test_sweep_csv(capsys):
    argv = ["sweep", "--n", "10", "--beta", "2.0", "--m-from", "5", "--m-to", "9", "--format", "csv"]
    status, out, _ = run(argv, capsys)
    assert status == 0
    spec, lines = csv_body(out)
    assert spec["command"] == "sweep"
    assert lines[0] == "n,m,m_over_n,beta,per,throughput"
    assert [int(line.split(",")[1]) for line in lines[1:]] == [5, 6, 7, 8, 9]


def test_sweep_csv_with_trials(capsys):
    argv = ["sweep", "--n", "8", "--beta", "2.0", "--m-from", "8", "--m-to", "10", "--trials", "50", "--format", "csv"]
    _, out, _ = run(argv, capsys)
    _, lines = csv_body(out)
    assert lines[0].endswith("sim_per,sim_throughput,trials,stderr_per,stderr_throughput,seed")
    assert len(lines) == 4


def test_bound(capsys):
    status, out, _ = run(["bound", "--n", "100", "--beta", "2.5", "--m", "200", "--format", "json"], capsys)
    assert status == 0
    res = json.loads(out)["result"]
    assert abs(res["exp_bound"] - 6.737946999085467e-3) < 1e-12
    status, out, _ = run(["bound", "--n", "10", "--beta", "1", "--m-from", "1", "--m-to", "3", "--format", "csv"], capsys)
    _, lines = csv_body(out)
    assert lines[0].startswith("n,m,beta,exact_bound,exp_bound")
    assert len(lines) == 4


def test_verify_oracle_passes_and_fails(capsys):
    status, out, _ = run(["verify-oracle", "--n-max", "2", "--m-max", "3", "--format", "json"], capsys)
    assert status == 0
    rows = json.loads(out)["result"]
    assert rows and all(r["pass"] for r in rows)
    # a negative tolerance cannot be met
    status, out, _ = run(["verify-oracle", "--n-max", "1", "--m-max", "1", "--tolerance", "-1"], capsys)
    assert status == 4


def test_optimize_peak_small_grid(tmp_path, capsys):
    trace = tmp_path / "trace.csv"
    argv = ["optimize-peak", "--n", "10", "--beta-min", "2", "--beta-max", "2.4", "--beta-step", "0.2",
            "--m-from", "10", "--m-to", "14", "--trace-csv", str(trace)]
    status, out, _ = run(argv, capsys)
    assert status == 0
    res = json.loads(out)["result"]
    assert res["beta_max"] in (2.0, 2.2, 2.4)
    _, lines = csv_body(trace.read_text())
    assert len(lines) == 1 + 3 * 5


def test_optimize_floor_small_grid(capsys):
    argv = ["optimize-floor", "--n", "10", "--beta1", "2.4", "--m-star", "12",
            "--beta2-min", "2", "--beta2-max", "6", "--beta2-step", "1"]
    status, out, _ = run(argv, capsys)
    assert status == 0
    res = json.loads(out)["result"]
    assert res["target_m"] == 20
    assert res["per_at_target"] <= res["single_stage_per"]


@pytest.mark.parametrize(
    "argv",
    [
        ["analyze", "--n", "10", "--m", "5"],
        ["analyze", "--n", "10", "--beta", "2", "--beta1", "1", "--m", "5"],
        ["analyze", "--n", "10", "--beta", "20", "--m", "5"],
        ["simulate", "--n", "10", "--beta", "2", "--m", "5", "--trials", "0"],
        ["sweep", "--n", "10", "--beta", "2", "--m-from", "5", "--m-to", "3"],
        ["bound", "--n", "10", "--beta", "2"],
        ["optimize-peak", "--n", "10", "--beta-min", "2"],
    ],
)
def test_usage_errors(argv, capsys):
    status, out, err = run(argv, capsys)
    assert status == 2
    assert out == ""
    assert json.loads(err)["error"] == "usage"


def test_argparse_error_exits_2():
    with pytest.raises(SystemExit) as exc:
        cli.main(["analyze", "--n", "ten"])
    assert exc.value.code == 2


def test_output_file_and_env_dir(tmp_path, monkeypatch, capsys):
    target = tmp_path / "a.json"
    status, out, _ = run(["analyze", "--n", "5", "--beta", "1", "--m", "6", "-o", str(target)], capsys)
    assert status == 0 and out == ""
    assert json.loads(target.read_text())["result"]["per"] > 0
    assert list(tmp_path.iterdir()) == [target]  # no stray temp files

    monkeypatch.setenv(cli.OUTPUT_DIR_ENV, str(tmp_path / "out"))
    status, out, _ = run(["bound", "--n", "5", "--beta", "1", "--m", "6", "--format", "csv"], capsys)
    assert status == 0 and out == ""
    assert (tmp_path / "out" / "bound.csv").read_text().startswith("# run_spec: ")


def test_module_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "frameless", "bound", "--n", "4", "--beta", "1", "--m", "2", "--format", "json"],
        capture_output=True, text=True, check=False,
    )
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["result"]["exact_bound"] == pytest.approx(0.75**2)
