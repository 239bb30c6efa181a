"""CLI surface: run, report, replay; exit codes; atomic artifacts."""

import json
import os

import pytest

from scasim.cli import main
from scasim.runlog import RunLog
from scasim.scenarios import build_sca2


def run_cli(*argv):
    return main(list(argv))


class TestRun:
    def test_named_scenario_writes_artifacts(self, tmp_path, capsys):
        code = run_cli("run", "sca2-perf", "--seed", "3", "--out", str(tmp_path))
        assert code == 0
        out = capsys.readouterr().out.strip().splitlines()[-1]
        row = json.loads(out)
        assert "CfM" in row and "gamma" in row
        log_path = row["log"]
        assert os.path.exists(log_path)
        assert os.path.exists(log_path.replace(".log.ndjson", ".report.json"))
        assert not any(p.name.endswith(".tmp") for p in tmp_path.iterdir())

    def test_unknown_scenario_exit_2(self, capsys):
        assert run_cli("run", "sca9-nope") == 2

    def test_config_file_and_seed_override(self, tmp_path, capsys):
        cfg = build_sca2([0.20], anomaly_times=[3.0], duration=8.0, pilot="sup")
        path = tmp_path / "cfg.yaml"
        path.write_text(cfg.to_yaml())
        code = run_cli("run", str(path), "--seed", "11", "--out", str(tmp_path))
        assert code == 0
        row = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
        assert row["seed"] == 11

    def test_alert_flag_selects_variant(self, tmp_path, capsys):
        code = run_cli("run", "sca1-harsh", "--alert", "late", "--seed", "1",
                       "--out", str(tmp_path))
        assert code == 0
        row = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
        assert "rho" in row
        assert "sca1-harsh-late" in row["scenario"]

    def test_deterministic_artifacts(self, tmp_path, capsys):
        for sub in ("a", "b"):
            assert run_cli("run", "sca2-perf", "--pilot", "sap", "--seed", "42",
                           "--out", str(tmp_path / sub)) == 0
        a = (tmp_path / "a").glob("*.log.ndjson")
        b = (tmp_path / "b").glob("*.log.ndjson")
        assert next(a).read_bytes() == next(b).read_bytes()


class TestReport:
    def test_family_table(self, tmp_path, capsys):
        for pilot in ("sap", "sup"):
            assert run_cli("run", "sca2-perf", "--pilot", pilot, "--seed", "2",
                           "--out", str(tmp_path)) == 0
        capsys.readouterr()
        code = run_cli("report", str(tmp_path / "*.log.ndjson"))
        assert code == 0
        text = capsys.readouterr().out
        assert "SAP" in text and "SUP" in text and "CfM" in text

    def test_empty_glob_ok(self, tmp_path, capsys):
        assert run_cli("report", str(tmp_path / "nothing-*.ndjson")) == 0

    def test_mixed_families_exit_2(self, tmp_path, capsys):
        assert run_cli("run", "sca1-harsh-auto", "--out", str(tmp_path)) == 0
        assert run_cli("run", "sca2-perf", "--seed", "1", "--out", str(tmp_path)) == 0
        capsys.readouterr()
        assert run_cli("report", str(tmp_path / "*.log.ndjson")) == 2

    def test_series_out(self, tmp_path, capsys):
        assert run_cli("run", "sca2-perf", "--seed", "5", "--out", str(tmp_path)) == 0
        capsys.readouterr()
        code = run_cli("report", str(tmp_path / "*.log.ndjson"),
                       "--series-out", str(tmp_path / "series"))
        assert code == 0
        series = list((tmp_path / "series").glob("*.series.tsv"))
        assert series
        header = series[0].read_text().splitlines()[0]
        assert header.startswith("t\t")


class TestReplay:
    def test_untouched_log_passes(self, tmp_path, capsys):
        assert run_cli("run", "sca2-perf", "--pilot", "sup", "--seed", "8",
                       "--out", str(tmp_path)) == 0
        capsys.readouterr()
        log = next(tmp_path.glob("*.log.ndjson"))
        assert run_cli("replay", str(log)) == 0
        assert "PASS" in capsys.readouterr().out

    def test_corrupted_log_fails_at_step(self, tmp_path, capsys):
        assert run_cli("run", "sca2-perf", "--pilot", "sup", "--seed", "9",
                       "--out", str(tmp_path)) == 0
        capsys.readouterr()
        path = next(tmp_path.glob("*.log.ndjson"))
        log = RunLog.read(str(path))
        log.columns["x1"][1234] *= 1.0 + 1e-9
        log.write(str(path))
        assert run_cli("replay", str(path)) == 1
        out = capsys.readouterr().out
        assert "FAIL" in out and "1234" in out

    def test_missing_log_exit_2(self, capsys):
        assert run_cli("replay", "/nonexistent.ndjson") == 2
