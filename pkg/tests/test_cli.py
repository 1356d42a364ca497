from __future__ import annotations

import json

import pytest

from autoform import synthlogs
from autoform.cli import EXIT_CONFIG, EXIT_DATA, EXIT_OK, EXIT_RUNTIME, main
from autoform.corpus import dump_dataset
from autoform.instrumentation import read_events
from autoform.toydata import build_toy_records


@pytest.fixture
def toy_dataset(tmp_path):
    path = tmp_path / "toy.json"
    dump_dataset(build_toy_records(), path)
    return path


def run_cli(*argv):
    return main([str(a) for a in argv])


class TestValidate:
    def test_valid_dataset(self, toy_dataset, capsys):
        assert run_cli("validate", "--dataset", toy_dataset) == EXIT_OK
        out = capsys.readouterr().out
        assert "24 records" in out and "16 proof targets" in out

    def test_bad_dataset_exits_3(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        assert run_cli("validate", "--dataset", bad) == EXIT_DATA

    def test_missing_file_exits_3(self, tmp_path):
        assert run_cli("validate", "--dataset", tmp_path / "ghost.json") == EXIT_DATA


class TestStages:
    def test_stage1_then_stage2(self, toy_dataset, tmp_path, capsys):
        project = tmp_path / "project"
        code = run_cli(
            "stage1", "--dataset", toy_dataset, "--project", project, "--operators", "toy"
        )
        assert code == EXIT_OK
        summary = json.loads(capsys.readouterr().out)
        assert summary["scc"] == 100.0 and summary["pb"] is True

        code = run_cli(
            "stage2", "--dataset", toy_dataset, "--project", project, "--operators", "toy"
        )
        assert code == EXIT_OK
        summary = json.loads(capsys.readouterr().out)
        assert summary["psr"] == 100.0 and summary["pb"] is True

    def test_missing_required_flags_is_config_error(self, toy_dataset):
        assert run_cli("stage1", "--dataset", toy_dataset) == EXIT_CONFIG

    def test_resume_command(self, toy_dataset, tmp_path, capsys):
        project = tmp_path / "project"
        run_cli("stage1", "--dataset", toy_dataset, "--project", project,
                "--operators", "toy", "--max-items", "3")
        capsys.readouterr()
        code = run_cli("resume", "--stage", "1", "--dataset", toy_dataset,
                       "--project", project, "--operators", "toy")
        assert code == EXIT_OK
        summary = json.loads(capsys.readouterr().out)
        assert summary["processed_items"] == 21  # 24 minus the 3 already done

    def test_corrupt_checkpoint_refuses_without_override(self, toy_dataset, tmp_path, capsys):
        project = tmp_path / "project"
        runs = project / "runs"
        runs.mkdir(parents=True)
        (runs / "checkpoint_statement.json").write_text("{broken")
        code = run_cli("stage1", "--dataset", toy_dataset, "--project", project,
                       "--operators", "toy")
        assert code == EXIT_RUNTIME
        capsys.readouterr()
        code = run_cli("stage1", "--dataset", toy_dataset, "--project", project,
                       "--operators", "toy", "--force-restart")
        assert code == EXIT_OK

    def test_config_file_with_flag_overrides(self, toy_dataset, tmp_path, capsys):
        project = tmp_path / "project"
        cfg = tmp_path / "run.json"
        cfg.write_text(json.dumps({
            "dataset": str(toy_dataset),
            "project": str(project),
            "operators": "toy",
            "budget_k": 1,
        }))
        assert run_cli("stage1", "--config", cfg) == EXIT_OK
        summary = json.loads(capsys.readouterr().out)
        recorded = read_events(project / "runs" / "metrics_statement.jsonl")[0]
        assert recorded["data"]["config"]["budget_k"] == 1
        assert summary["scc"] == 100.0


class TestSimulate:
    def test_full_toy_pipeline(self, tmp_path, capsys):
        assert run_cli("simulate", "--workdir", tmp_path / "sim") == EXIT_OK
        out = capsys.readouterr().out
        assert "simulate: ok" in out
        psr_lines = [l for l in out.splitlines() if l.startswith("PSR:")]
        assert psr_lines and psr_lines[0].split()[-1] == "100.00"


class TestAccountAndReport:
    @pytest.fixture
    def fixture_logs(self, tmp_path):
        path = tmp_path / "synthetic.jsonl"
        events = (
            synthlogs.real_analysis_stage1_fixture()
            + synthlogs.real_analysis_stage2_fixture()
            + synthlogs.fateh_auto_stage2_fixture()
        )
        synthlogs.write_events(path, events)
        return path

    def test_account_reproduces_archived_totals(self, fixture_logs, capsys):
        code = run_cli(
            "account", "--metrics", fixture_logs, "--json",
            "--run-id", "statement_stage1_synthetic_ra",
        )
        assert code == EXIT_OK
        data = json.loads(capsys.readouterr().out)
        assert data["verifier_calls"] == 592
        assert data["scc"] == 100.0

        code = run_cli(
            "account", "--metrics", fixture_logs, "--json",
            "--run-id", "proof_stage2_synthetic_ra",
        )
        data = json.loads(capsys.readouterr().out)
        assert data["verifier_calls"] == 628
        assert data["oracle_calls"] == 1263
        assert data["calls_per_solved"] == 1.85
        assert data["oracle_calls_per_target"] == 3.73
        assert data["costs"]["0.1"] == 754.30
        assert data["costs"]["0.25"] == 943.75

    def test_account_custom_alpha(self, fixture_logs, capsys):
        run_cli("account", "--metrics", fixture_logs, "--json",
                "--run-id", "proof_stage2_synthetic_fateh", "--alpha", "0.25")
        data = json.loads(capsys.readouterr().out)
        assert data["costs"] == {"0.25": 367.75}

    def test_report_csv_is_deterministic(self, fixture_logs, tmp_path, capsys):
        out1, out2 = tmp_path / "r1.csv", tmp_path / "r2.csv"
        run_cli("report", "--metrics", fixture_logs, "--output", out1,
                "--run-id", "proof_stage2_synthetic_fateh")
        run_cli("report", "--metrics", fixture_logs, "--output", out2,
                "--run-id", "proof_stage2_synthetic_fateh")
        assert out1.read_bytes() == out2.read_bytes()
        lines = out1.read_text().splitlines()
        assert len(lines) == 101  # header + 100 problems

    def test_synthlogs_command(self, tmp_path, capsys):
        out = tmp_path / "fixtures.jsonl"
        assert run_cli("synthlogs", "--output", out) == EXIT_OK
        assert out.exists()


class TestSplitCommand:
    def test_split_emits_parts(self, tmp_path, capsys):
        project = tmp_path / "project"
        project.mkdir()
        lines = ["def d0 : T := sorry"] + [f"def d{i} : T := d{i-1}" for i in range(1, 40)]
        (project / "Big.lean").write_text("\n".join(lines) + "\n")
        code = run_cli("split", "--project", project, "--file", "Big.lean", "--threshold", "10")
        assert code == EXIT_OK
        data = json.loads(capsys.readouterr().out)
        assert len(data["parts"]) >= 4


class TestBackfillCommand:
    def test_backfill_writes_metrics_run(self, tmp_path, capsys):
        logs = tmp_path / "calls"
        logs.mkdir()
        (logs / "proof_agent_a_task_1_00001.log").write_text(
            "STDOUT:\nhi\ntokens used\n1,000\nSTDERR:\n"
        )
        out = tmp_path / "metrics_backfill.jsonl"
        assert run_cli("backfill", "--logs", logs, "--output", out) == EXIT_OK
        events = read_events(out)
        kinds = [e["event"] for e in events]
        assert kinds[0] == "run_start" and "task_tokens" in kinds


class TestRootOverride:
    def test_env_var_rebases_relative_paths(self, toy_dataset, tmp_path, monkeypatch, capsys):
        monkeypatch.setenv("AUTOFORM_ROOT", str(tmp_path))
        code = run_cli("validate", "--dataset", toy_dataset.name)
        assert code == EXIT_OK
