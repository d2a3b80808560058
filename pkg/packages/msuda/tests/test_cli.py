"""
End-to-end command tests through the click group
"""

import logging

import pandas as pd
import pytest
from click.testing import CliRunner

from main import cli
from services.metrics_service import read_json, read_jsonl, write_json

SYNTH_FLAGS = [
    "--vocab-size", "60", "--shared-size", "12", "--private-size", "6",
    "--docs-per-domain", "40", "--mean-tokens", "15", "--seed", "1",
]


@pytest.fixture(autouse=True)
def restore_logging(monkeypatch, tmp_path):
    monkeypatch.chdir(tmp_path)
    for key in ("MSUDA_LOG_LEVEL", "MSUDA_JSON_LOGS", "MSUDA_SEED", "MSUDA_TARGET"):
        monkeypatch.delenv(key, raising=False)
    root = logging.getLogger()
    handlers, level = list(root.handlers), root.level
    yield
    root.handlers[:] = handlers
    root.setLevel(level)


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def synth_dir(runner, tmp_path):
    out = tmp_path / "data"
    result = runner.invoke(cli, ["synth", "--out", str(out)] + SYNTH_FLAGS)
    assert result.exit_code == 0, result.output
    return out


@pytest.fixture
def run_config(synth_dir, tmp_path):
    config = read_json(synth_dir / "run_config.json")
    config.update({
        "model": {"hidden_dim": 16, "feature_dim": 8},
        "train": {"batch_size": 8, "lr": 0.01, "n_critic": 1, "max_epochs": 2, "patience": 2},
        "pseudo_label": {"delta": 0.6, "min_new": 0, "iter_min_steps": 2, "finetune_max_epochs": 1},
        "target_fractions": [0.25, 0.75],
    })
    return write_json(tmp_path / "run.json", config)


@pytest.fixture
def wsuda_run(runner, run_config, tmp_path):
    out = tmp_path / "ws"
    result = runner.invoke(cli, ["train", "--config", str(run_config), "--out", str(out)])
    assert result.exit_code == 0, result.output
    return out


class TestSynth:

    def test_writes_files(self, synth_dir):
        for name in ("source0.review", "source2.review", "target.review", "target.labels",
                     "synth_spec.json", "run_config.json"):
            assert (synth_dir / name).is_file()

    def test_invalid_spec_exit_code(self, runner, tmp_path):
        result = runner.invoke(cli, ["synth", "--out", str(tmp_path / "bad"), "--vocab-size", "10"])
        assert result.exit_code == 2

    def test_source_signs_flag(self, runner, tmp_path):
        out = tmp_path / "signed"
        result = runner.invoke(cli, ["synth", "--out", str(out), "--source-signs", "1,1,-1"] + SYNTH_FLAGS)
        assert result.exit_code == 0, result.output
        assert read_json(out / "synth_spec.json")["source_signs"] == [1, 1, -1]


    def test_same_seed_same_bytes(self, runner, synth_dir, tmp_path):
        again = tmp_path / "again"
        result = runner.invoke(cli, ["synth", "--out", str(again)] + SYNTH_FLAGS)
        assert result.exit_code == 0, result.output
        # run_config.json embeds the absolute output directory
        names = sorted(path.name for path in synth_dir.iterdir() if path.name != "run_config.json")
        assert names == sorted(path.name for path in again.iterdir() if path.name != "run_config.json")
        for name in names:
            assert (synth_dir / name).read_bytes() == (again / name).read_bytes(), name

    def test_zero_documents_is_a_validation_error(self, runner, tmp_path):
        flags = SYNTH_FLAGS[:SYNTH_FLAGS.index("--docs-per-domain")] + SYNTH_FLAGS[SYNTH_FLAGS.index("--mean-tokens"):]
        result = runner.invoke(cli, ["synth", "--out", str(tmp_path / "empty"), "--docs-per-domain", "0"] + flags)
        assert result.exit_code == 2
        assert not (tmp_path / "empty").exists()


class TestTrain:

    def test_wsuda_outputs(self, wsuda_run):
        for name in ("resolved_config.json", "metrics.jsonl", "report.json",
                     "wsuda/params.npz", "wsuda/manifest.json", "wsuda/vocabulary.txt"):
            assert (wsuda_run / name).is_file()
        metrics = read_jsonl(wsuda_run / "metrics.jsonl")
        assert 1 <= len(metrics) <= 2
        assert set(metrics[0]) == {"epoch", "loss_d", "loss_main", "shared_dom_acc", "private_dom_acc", "val_acc"}
        report = read_json(wsuda_run / "report.json")
        assert report["domain_names"] == ["source0", "source1", "source2", "target"]
        assert 0.0 <= report["wsuda"]["test"]["accuracy"] <= 1.0

    def test_resolved_config_echo(self, wsuda_run):
        resolved = read_json(wsuda_run / "resolved_config.json")
        assert resolved["train"]["max_epochs"] == 2
        assert resolved["pseudo_label"]["eta"] == 0.02
        assert resolved["framework"] == "ws"

    def test_rerun_writes_identical_metrics(self, runner, run_config, wsuda_run, tmp_path):
        out = tmp_path / "ws2"
        result = runner.invoke(cli, ["train", "--config", str(run_config), "--out", str(out)])
        assert result.exit_code == 0, result.output
        assert (out / "metrics.jsonl").read_bytes() == (wsuda_run / "metrics.jsonl").read_bytes()

    def test_config_log_level_applies(self, runner, run_config, tmp_path):
        config = read_json(run_config)
        config["log_level"] = "debug"
        path = write_json(tmp_path / "debug.json", config)
        out = tmp_path / "debug"
        result = runner.invoke(cli, ["train", "--config", str(path), "--out", str(out)])
        assert result.exit_code == 0, result.output
        assert logging.getLogger().level == logging.DEBUG
        assert read_json(out / "resolved_config.json")["log_level"] == "DEBUG"

    def test_log_level_flag_outranks_config(self, runner, run_config, tmp_path):
        config = read_json(run_config)
        config["log_level"] = "DEBUG"
        path = write_json(tmp_path / "debug.json", config)
        out = tmp_path / "quiet"
        result = runner.invoke(cli, ["--log-level", "warning", "train", "--config", str(path), "--out", str(out)])
        assert result.exit_code == 0, result.output
        assert logging.getLogger().level == logging.WARNING
        assert read_json(out / "resolved_config.json")["log_level"] == "WARNING"

    def test_unknown_config_log_level(self, runner, run_config, tmp_path):
        config = read_json(run_config)
        config["log_level"] = "chatty"
        path = write_json(tmp_path / "chatty.json", config)
        result = runner.invoke(cli, ["train", "--config", str(path), "--out", str(tmp_path / "x")])
        assert result.exit_code == 2

    def test_two_stage_from_checkpoint(self, runner, run_config, wsuda_run, tmp_path):
        out = tmp_path / "2st"
        result = runner.invoke(cli, [
            "train", "--config", str(run_config), "--framework", "2st",
            "--wsuda-checkpoint", str(wsuda_run / "wsuda"), "--out", str(out),
        ])
        assert result.exit_code == 0, result.output
        assert (out / "2studa" / "params.npz").is_file()
        assert not (out / "wsuda").exists()
        rounds = read_jsonl(out / "pseudo_labels.jsonl")
        assert rounds and rounds[0]["bootstrap"]
        assert read_json(out / "report.json")["2studa"]["test"]["path"] == "target"

    def test_checkpoint_for_another_target(self, runner, run_config, wsuda_run, tmp_path):
        config = read_json(run_config)
        config["domains"]["other"] = config["domains"].pop("target")
        config["target"] = "other"
        other = write_json(tmp_path / "other.json", config)
        result = runner.invoke(cli, [
            "train", "--config", str(other), "--framework", "2st",
            "--wsuda-checkpoint", str(wsuda_run / "wsuda"), "--out", str(tmp_path / "x"),
        ])
        assert result.exit_code == 2

    def test_missing_config(self, runner, tmp_path):
        result = runner.invoke(cli, ["train", "--config", str(tmp_path / "absent.json")])
        assert result.exit_code == 2

    def test_no_target(self, runner, tmp_path):
        result = runner.invoke(cli, ["train", "--out", str(tmp_path / "empty")])
        assert result.exit_code == 2


class TestEvalAndWeights:

    def test_eval_table(self, runner, synth_dir, wsuda_run, tmp_path):
        report_path = tmp_path / "eval.json"
        result = runner.invoke(cli, [
            "eval", "--checkpoint", str(wsuda_run / "wsuda"),
            "--corpus", str(synth_dir / "target.review"), "--labels", str(synth_dir / "target.labels"),
            "--out", str(report_path),
        ])
        assert result.exit_code == 0, result.output
        assert "uniform ensemble" in result.output
        report = read_json(report_path)
        assert report["num_examples"] == 40
        assert set(report["per_source"]) == {"source0", "source1", "source2"}

    def test_eval_target_path_needs_two_stage(self, runner, synth_dir, wsuda_run):
        result = runner.invoke(cli, [
            "eval", "--checkpoint", str(wsuda_run / "wsuda"), "--path", "target",
            "--corpus", str(synth_dir / "target.review"), "--labels", str(synth_dir / "target.labels"),
        ])
        assert result.exit_code == 2

    def test_eval_vocabulary_mismatch(self, runner, synth_dir, wsuda_run, tmp_path):
        foreign = tmp_path / "foreign.txt"
        foreign.write_text("alpha\nbeta\n", encoding="utf-8")
        result = runner.invoke(cli, [
            "eval", "--checkpoint", str(wsuda_run / "wsuda"), "--vocabulary", str(foreign),
            "--corpus", str(synth_dir / "source0.review"),
        ])
        assert result.exit_code == 2

    def test_eval_malformed_corpus(self, runner, wsuda_run, tmp_path):
        broken = tmp_path / "broken.review"
        broken.write_text("tok1:1 tok2 #label#:positive\n", encoding="utf-8")
        result = runner.invoke(cli, ["eval", "--checkpoint", str(wsuda_run / "wsuda"), "--corpus", str(broken)])
        assert result.exit_code == 3

    def test_weights_tsv(self, runner, synth_dir, wsuda_run, tmp_path):
        out = tmp_path / "weights.tsv"
        result = runner.invoke(cli, [
            "weights", "--checkpoint", str(wsuda_run / "wsuda"),
            "--corpus", str(synth_dir / "target.review"), "--out", str(out),
        ])
        assert result.exit_code == 0, result.output
        table = pd.read_csv(out, sep="\t")
        assert list(table.columns) == [
            "instance_id", "w_source0", "w_source1", "w_source2", "predicted_label", "confidence",
        ]
        assert len(table) == 40
        assert ((table[["w_source0", "w_source1", "w_source2"]].sum(axis=1) - 1.0).abs() < 1e-9).all()
        assert set(table["predicted_label"]) <= {"positive", "negative"}


class TestGroup:

    def test_version(self, runner):
        result = runner.invoke(cli, ["--version"])
        assert result.exit_code == 0
        assert "1.0.0" in result.output

    def test_json_logs_flag(self, runner, tmp_path):
        result = runner.invoke(cli, ["--json-logs", "--log-level", "debug", "synth",
                                     "--out", str(tmp_path / "json")] + SYNTH_FLAGS)
        assert result.exit_code == 0, result.output
