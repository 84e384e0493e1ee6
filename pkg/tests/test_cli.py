from __future__ import annotations

import json

import pytest
from click.testing import CliRunner

from atomnlu.cli import main
from conftest import FIXTURES, REGISTRY


@pytest.fixture()
def runner():
    return CliRunner()


def _run(runner, *args):
    return runner.invoke(main, [str(a) for a in args])


def test_oracle_eval_score_report_flow(runner, tmp_path):
    out = tmp_path / "run"
    result = _run(runner, "--out", out, "--seed", 7, "eval",
                  "--datasets", FIXTURES, "--backend", "oracle", "--role", "all")
    assert result.exit_code == 0, result.output
    assert _run(runner, "--out", out, "score").exit_code == 0
    report = _run(runner, "--out", out, "report")
    assert report.exit_code == 0
    lines = report.output.strip().splitlines()
    assert lines[-2].split() == ["CLS", "EE", "ID", "MRC", "NER", "NLI", "RE", "SF", "SA", "ET", "ALL"]
    assert lines[-1].split() == ["100.0"] * 11


def test_score_on_empty_directory_exits_1(runner, tmp_path):
    result = _run(runner, "--out", tmp_path / "void", "score")
    assert result.exit_code == 1
    assert "error" in result.output


def test_usage_error_exits_1(runner):
    result = _run(runner, "eval", "--backend", "bogus")
    assert result.exit_code == 1


def test_missing_registry_exits_1(runner, tmp_path):
    result = _run(runner, "--out", tmp_path, "eval")
    assert result.exit_code == 1
    assert "registry" in result.output


def test_backend_failure_exits_2(runner, tmp_path):
    result = _run(runner, "--out", tmp_path / "x", "eval", "--datasets", FIXTURES,
                  "--backend", "http", "--endpoint", "")
    # empty endpoint is a validation error, exit 1
    assert result.exit_code == 1

    result = runner.invoke(main, [
        "--out", str(tmp_path / "y"), "--config", str(_subprocess_cfg(tmp_path)),
        "eval", "--datasets", str(FIXTURES), "--role", "held_in",
    ])
    assert result.exit_code == 2, result.output


def _subprocess_cfg(tmp_path):
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text(
        "backend:\n  kind: subprocess\n  command: ['/bin/sh', '-c', 'exit 0']\n",
        encoding="utf-8",
    )
    return cfg


def test_config_file_defaults_and_flag_override(runner, tmp_path):
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text(
        f"registry: {REGISTRY}\nout_dir: {tmp_path / 'from-config'}\nseed: 3\n"
        "eval:\n  role: all\n  sample_size: 2\n",
        encoding="utf-8",
    )
    result = _run(runner, "--config", cfg, "eval", "--backend", "oracle")
    assert result.exit_code == 0, result.output
    assert (tmp_path / "from-config" / "eval" / "results.jsonl").exists()

    # flag overrides the config's out_dir
    result = _run(runner, "--config", cfg, "--out", tmp_path / "flag-wins", "eval",
                  "--backend", "oracle")
    assert result.exit_code == 0
    assert (tmp_path / "flag-wins" / "eval" / "results.jsonl").exists()


def test_training_chain_via_cli(runner, tmp_path):
    out = tmp_path / "train"
    assert _run(runner, "--out", out, "ingest", REGISTRY).exit_code == 0
    assert _run(runner, "--out", out, "translate").exit_code == 0
    assert _run(runner, "--out", out, "--seed", 5, "augment", "--variants", 2).exit_code == 0
    assert _run(runner, "--out", out, "--seed", 5, "balance").exit_code == 0
    result = _run(runner, "--out", out, "emit-train")
    assert result.exit_code == 0
    assert (out / "train" / "records.jsonl").exists()
    assert (out / "train" / "training_advisory.json").exists()


def test_pt_chain_via_cli(runner, tmp_path):
    out = tmp_path / "pt"
    result = _run(runner, "--out", out, "gen-pt-prompts", FIXTURES / "pt_passages.jsonl")
    assert result.exit_code == 0
    result = _run(runner, "--out", out, "parse-pt-responses", FIXTURES / "pt_responses.jsonl")
    assert result.exit_code == 0
    summary = json.loads(result.output[: result.output.rindex("}") + 1])
    assert summary["failures"] == 0
