import json

import pytest

from sortopt.optimizer.ledger import Ledger
from sortopt.runner import command_line, export
from sortopt.runner.command_line import EXIT_FAILURE, EXIT_OK, EXIT_USAGE, main

QUICK = """
[experiment]
duration_s = {duration}
interval_s = {interval}

[optimization]
initial_design = 12,18;0;0,8
max_steps = 1
resolution = 6
"""


@pytest.fixture
def config_file(tmp_path):
    def write(duration=20, interval=10):
        path = tmp_path / "run.ini"
        path.write_text(QUICK.format(duration=duration, interval=interval))
        return str(path)

    return write


def run_main(tmp_path, *argv):
    return main(list(argv) + ["-o", str(tmp_path), "--seed", "1", "-q"])


def test_version(capsys):
    with pytest.raises(SystemExit) as e:
        main(["-V"])
    assert e.value.code == 0
    assert "1.0.0" in capsys.readouterr().out


@pytest.mark.parametrize("argv", [[], ["simulate"], ["report", "-l", "x.jsonl"], ["bogus"]])
def test_bad_arguments_exit_with_usage(argv):
    with pytest.raises(SystemExit) as e:
        main(argv)
    assert e.value.code == EXIT_USAGE


def test_simulate_default_protocol(tmp_path, capsys):
    assert run_main(tmp_path, "simulate", "-p", "15,0,8") == EXIT_OK
    out = capsys.readouterr().out
    assert "30 intervals of 10s" in out
    assert "TP_n" in out and "TN_n" in out
    ledger = Ledger.load(tmp_path / "simulate.jsonl")
    assert len(ledger.records) == 1
    assert len(ledger.records[0].intervals) == 30


def test_simulate_refuses_to_overwrite(tmp_path, capsys, config_file):
    assert run_main(tmp_path, "simulate", "-c", config_file(), "-p", "15,0,8") == EXIT_OK
    assert run_main(tmp_path, "simulate", "-c", config_file(), "-p", "15,0,8") == EXIT_USAGE
    assert "--force" in capsys.readouterr().err
    assert run_main(tmp_path, "simulate", "-c", config_file(), "-p", "15,0,8", "--force") == 0


def test_failed_simulate_leaves_no_ledger(tmp_path, capsys, config_file):
    no_rejects = tmp_path / "no_rejects.ini"
    no_rejects.write_text(
        "[simulator]\narrival_rate_reject = 0\n\n" + QUICK.format(duration=20, interval=10)
    )
    assert run_main(tmp_path, "simulate", "-c", str(no_rejects), "-p", "15,0,8") == EXIT_FAILURE
    assert "failed" in capsys.readouterr().err
    assert not (tmp_path / "simulate.jsonl").exists()
    assert run_main(tmp_path, "simulate", "-c", config_file(), "-p", "15,0,8") == EXIT_OK
    assert len(Ledger.load(tmp_path / "simulate.jsonl").records) == 1


def test_simulate_is_deterministic(tmp_path, config_file):
    first, second = tmp_path / "a", tmp_path / "b"
    for out in (first, second):
        assert run_main(out, "simulate", "-c", config_file(), "-p", "16,2,4") == EXIT_OK
    assert (first / "simulate.jsonl").read_text() == (second / "simulate.jsonl").read_text()


@pytest.mark.parametrize("params", ["15,0", "a,b,c", "15,-1,0"])
def test_simulate_bad_params(tmp_path, config_file, params):
    assert run_main(tmp_path, "simulate", "-c", config_file(), "-p", params) == EXIT_USAGE


def test_malformed_config(tmp_path, capsys):
    path = tmp_path / "bad.ini"
    path.write_text("[optimization]\nmax_steps = lots\n")
    assert run_main(tmp_path, "optimize", "-c", str(path)) == EXIT_USAGE
    assert "max_steps" in capsys.readouterr().err


def test_weights_must_sum_to_one(tmp_path, config_file):
    assert run_main(tmp_path, "optimize", "-c", config_file(), "-w", "0.6,0.6") == EXIT_USAGE


def test_optimize(tmp_path, capsys, config_file):
    assert run_main(tmp_path, "optimize", "-c", config_file(), "-w", "0.7,0.3") == EXIT_OK
    out = capsys.readouterr().out
    assert "Status:" in out
    ledger = Ledger.load(tmp_path / "optimize.jsonl")
    assert len(ledger.records) == 4 + len(ledger.proposals)
    assert ledger.status in ("converged", "ei_floor", "budget_exhausted")


def test_optimize_replay_of_unrecorded_point(tmp_path, config_file):
    assert run_main(tmp_path, "simulate", "-c", config_file(), "-p", "15,0,8") == EXIT_OK
    replay = str(tmp_path / "simulate.jsonl")
    assert run_main(tmp_path, "optimize", "-c", config_file(), "-r", replay) == EXIT_FAILURE
    ledger = Ledger.load(tmp_path / "optimize.jsonl")
    assert ledger.failures[0].params == (12, 0, 0)


def test_sweep(tmp_path, capsys, config_file):
    code = run_main(tmp_path, "sweep", "-c", config_file(), "-g", "12,18;0;0,8", "-w", "0,1")
    assert code == EXIT_OK
    assert "Reference optimum for weights 0/1" in capsys.readouterr().out
    assert len(Ledger.load(tmp_path / "sweep.jsonl").records) == 4
    rows = (tmp_path / "sweep.csv").read_text().splitlines()
    assert rows[0].split(",") == list(export.SURFACE_COLUMNS)
    assert len(rows) == 5


def test_sweep_bad_grid(tmp_path, config_file):
    assert run_main(tmp_path, "sweep", "-c", config_file(), "-g", "12;0") == EXIT_USAGE


def test_sweep_reports_failed_points(tmp_path, config_file, monkeypatch):
    def broken(job):
        return None, "RuntimeError: belt stopped"

    monkeypatch.setattr(command_line, "sweep_point", broken)
    assert run_main(tmp_path, "sweep", "-c", config_file(), "-g", "12,18;0;0") == EXIT_FAILURE
    ledger = Ledger.load(tmp_path / "sweep.jsonl")
    assert len(ledger.failures) == 2
    assert ledger.records == ()


def test_weights_study(tmp_path, capsys, config_file):
    assert run_main(tmp_path, "weights", "-c", config_file()) == EXIT_OK
    rows = (tmp_path / "weights.csv").read_text().splitlines()
    assert rows[0].split(",") == list(export.WEIGHT_COLUMNS)
    assert len(rows) == 6


def test_report_missing_ledger(tmp_path):
    missing = str(tmp_path / "missing.jsonl")
    assert run_main(tmp_path, "report", "-l", missing, "-m", "ledger_csv") == EXIT_FAILURE


def test_report_corrupt_ledger(tmp_path):
    path = tmp_path / "corrupt.jsonl"
    path.write_text(json.dumps(dict(schema="9.0.0", kind="status", status="converged")) + "\n")
    assert run_main(tmp_path, "report", "-l", str(path), "-m", "boxplot") == EXIT_FAILURE


def test_report_ledger_csv(tmp_path, config_file):
    assert run_main(tmp_path, "simulate", "-c", config_file(60), "-p", "15,0,8") == EXIT_OK
    ledger = str(tmp_path / "simulate.jsonl")
    assert run_main(tmp_path, "report", "-l", ledger, "-m", "ledger_csv") == EXIT_OK
    rows = export.read_ledger_csv(tmp_path / "ledger.csv")
    assert len(rows) == 1
    assert rows[0]["intervals"] == 6
    assert (rows[0]["reaction_lines"], rows[0]["extended_space"]) == (15.0, 8.0)


def test_report_boxplot(tmp_path, config_file):
    assert run_main(tmp_path, "simulate", "-c", config_file(60), "-p", "15,0,8") == EXIT_OK
    ledger = str(tmp_path / "simulate.jsonl")
    assert run_main(tmp_path, "report", "-l", ledger, "-m", "boxplot") == EXIT_OK
    assert len((tmp_path / "boxplot.csv").read_text().splitlines()) == 7


@pytest.mark.parametrize(
    "duration, interval, widths",
    [(160, 5, ["5.0", "10.0", "20.0", "40.0"]), (320, 10, ["10.0", "20.0", "40.0", "80.0"])],
)
def test_report_variance_study(tmp_path, config_file, duration, interval, widths):
    config = config_file(duration, interval)
    assert run_main(tmp_path, "simulate", "-c", config, "-p", "15,0,8") == EXIT_OK
    ledger = str(tmp_path / "simulate.jsonl")
    assert run_main(tmp_path, "report", "-l", ledger, "-m", "variance_study") == EXIT_OK
    rows = (tmp_path / "variance_study.csv").read_text().splitlines()
    assert [row.split(",")[0] for row in rows[1:]] == widths
    assert [row.split(",")[2] for row in rows[1:]] == ["32", "16", "8", "4"]


def test_report_surface(tmp_path, config_file):
    assert run_main(tmp_path, "sweep", "-c", config_file(), "-g", "12,18;0;0,8") == EXIT_OK
    ledger = str(tmp_path / "sweep.jsonl")
    argv = ["report", "-l", ledger, "-m", "surface", "--model", "reject", "--resolution", "4"]
    assert run_main(tmp_path, *argv) == EXIT_OK
    rows = (tmp_path / "surface_reject.csv").read_text().splitlines()
    assert rows[0].split(",") == list(export.POSTERIOR_COLUMNS)
    assert len(rows) == 1 + 4 * 16
    assert {row.split(",")[0] for row in rows[1:]} == {"0.0", "0.01", "0.1", "1.0"}
