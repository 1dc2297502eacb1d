"""Configuration loading, CLI subcommands, exit codes, stage isolation."""

import dataclasses
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from gridsift.active import load_model_set
from gridsift.cli import main
from gridsift.config import (
    ConfigError,
    PipelineConfig,
    config_from_dict,
    default_config,
    load_config,
)
from gridsift.pipeline import EXIT_CODES, run_pipeline


def write_yaml(path: Path, text: str) -> Path:
    path.write_text(text, encoding="utf-8")
    return path


TINY = """
version: 1
seed: 3
detector:
  epochs: 3
  hidden: 6
  noise_dim: 3
  batch_size: 32
  max_train_windows: 128
synth:
  duration_min: 10
  events_per_hour: 30
  include_super_event: false
"""


@pytest.fixture(scope="module")
def tiny_cfg() -> PipelineConfig:
    return config_from_dict({
        "version": 1, "seed": 3,
        "detector": {"epochs": 3, "hidden": 6, "noise_dim": 3,
                     "batch_size": 32, "max_train_windows": 128},
        "synth": {"duration_min": 10, "events_per_hour": 30,
                  "include_super_event": False},
    })


@pytest.fixture(scope="module")
def stage_dirs(tiny_cfg, tmp_path_factory):
    """One tiny corpus taken through every stage via the CLI, reused
    across tests."""
    root = tmp_path_factory.mktemp("cli")
    cfg_path = write_yaml(root / "cfg.yaml", TINY)
    corpus = root / "corpus"
    models = root / "models"
    events = root / "events"
    model_json = root / "model.json"
    steps = [
        ["synth", "--out", str(corpus), "--minutes", "10", "--rate", "30"],
        ["train", "--data", str(corpus / "data.csv"), "--out", str(models)],
        ["detect", "--models", str(models), "--data", str(corpus / "data.csv"),
         "--out", str(events)],
        ["cluster", "--events", str(events), "--out", str(model_json)],
    ]
    for step in steps:
        assert main(["-q", "--config", str(cfg_path)] + step) == 0
    return {"root": root, "cfg": cfg_path, "corpus": corpus, "models": models,
            "events": events, "model": model_json}


class TestConfig:
    def test_defaults(self):
        cfg = default_config()
        assert cfg.window.length == 40
        assert cfg.window.overlap == 20
        assert cfg.detector.z_p == 3.0
        assert cfg.cluster.theta_active == 0.8
        assert cfg.threads == 1

    def test_empty_file_gives_defaults(self, tmp_path):
        p = write_yaml(tmp_path / "empty.yaml", "")
        assert load_config(p) == default_config()

    def test_negative_zp_named(self):
        with pytest.raises(ConfigError, match="z_p"):
            config_from_dict({"detector": {"z_p": -1}})

    def test_overlap_equal_to_window_named(self):
        with pytest.raises(ConfigError, match="overlap"):
            config_from_dict({"window": {"length": 40, "overlap": 40}})

    def test_unknown_top_level_key(self):
        with pytest.raises(ConfigError, match="sede"):
            config_from_dict({"sede": 1})

    def test_unknown_section_key(self):
        with pytest.raises(ConfigError, match="epoch"):
            config_from_dict({"detector": {"epoch": 5}})

    def test_version_mismatch(self):
        with pytest.raises(ConfigError, match="version"):
            config_from_dict({"version": 99})

    def test_threads_env_override(self, monkeypatch):
        monkeypatch.setenv("GRIDSIFT_THREADS", "4")
        assert default_config().threads == 4
        assert config_from_dict({"threads": 2}).threads == 4

    def test_threads_env_must_be_integer(self, monkeypatch):
        monkeypatch.setenv("GRIDSIFT_THREADS", "many")
        with pytest.raises(ConfigError, match="GRIDSIFT_THREADS"):
            default_config()

    def test_theta_range_named(self):
        with pytest.raises(ConfigError, match="theta_active"):
            config_from_dict({"cluster": {"theta_active": 1.5}})

    def test_sections_are_frozen(self):
        cfg = default_config()
        with pytest.raises(dataclasses.FrozenInstanceError):
            cfg.detector.epochs = 1


class TestExitCodes:
    def test_bad_config_file_exits_2(self, tmp_path):
        p = write_yaml(tmp_path / "bad.yaml", "detecter: {epochs: 3}\n")
        rc = main(["-q", "--config", str(p), "pipeline",
                   "--workdir", str(tmp_path / "w")])
        assert rc == EXIT_CODES["config"] == 2
        assert not (tmp_path / "w").exists()

    def test_missing_config_file_exits_2(self, tmp_path):
        rc = main(["-q", "--config", str(tmp_path / "nope.yaml"), "synth",
                   "--out", str(tmp_path / "o")])
        assert rc == 2

    def test_bad_flag_value_exits_2(self, tmp_path):
        rc = main(["-q", "train", "--data", "x.csv", "--out", str(tmp_path),
                   "--zp", "-3"])
        assert rc == 2

    def test_detect_without_models_exits_5(self, tmp_path, stage_dirs):
        rc = main(["-q", "detect", "--models", str(tmp_path / "none"),
                   "--data", str(stage_dirs["corpus"] / "data.csv"),
                   "--out", str(tmp_path / "ev")])
        assert rc == EXIT_CODES["detect"] == 5

    def test_cluster_without_events_exits_6(self, tmp_path):
        rc = main(["-q", "cluster", "--events", str(tmp_path / "none"),
                   "--out", str(tmp_path / "m.json")])
        assert rc == EXIT_CODES["cluster"] == 6

    def test_replay_with_corrupt_model_exits_7(self, tmp_path, stage_dirs):
        bad = tmp_path / "bad.json"
        bad.write_text("{}", encoding="utf-8")
        rc = main(["-q", "replay", "--model", str(bad),
                   "--events", str(stage_dirs["events"])])
        assert rc == EXIT_CODES["replay"] == 7

    def test_no_subcommand_is_usage_error(self):
        with pytest.raises(SystemExit) as err:
            main([])
        assert err.value.code == 2


class TestStagedRun:
    def test_corpus_files(self, stage_dirs):
        for name in ("data.csv", "schema.yaml", "labels.json"):
            assert (stage_dirs["corpus"] / name).exists()

    def test_model_dir(self, stage_dirs):
        index = json.loads((stage_dirs["models"] / "models.json").read_text())
        assert len(index["features"]) == 9
        assert index["norm_stats"] is not None

    def test_event_store(self, stage_dirs):
        index = json.loads((stage_dirs["events"] / "events.json").read_text())
        assert index["events"], "tiny corpus should yield at least one event"
        assert set(index["header"]["flag_fraction"]) == {
            "va_mag", "vb_mag", "vc_mag", "ia_mag", "ib_mag", "ic_mag",
            "pf_a", "pf_b", "pf_c"}

    def test_cluster_model(self, stage_dirs):
        models = load_model_set(stage_dirs["model"])
        assert models
        for model in models.values():
            assert model.n_clusters >= 1
            assert model.theta == 0.8

    def test_cluster_theta_flag(self, stage_dirs, tmp_path):
        out = tmp_path / "m.json"
        rc = main(["-q", "cluster", "--events", str(stage_dirs["events"]),
                   "--out", str(out), "--theta", "0.55", "--cmax", "3"])
        assert rc == 0
        models = load_model_set(out)
        assert all(m.theta == 0.55 for m in models.values())
        assert all(m.n_clusters <= 3 for m in models.values())

    def test_replay_writes_log_and_model(self, stage_dirs, tmp_path, capsys):
        log_path = tmp_path / "replay.json"
        out_model = tmp_path / "updated.json"
        rc = main(["-q", "replay", "--model", str(stage_dirs["model"]),
                   "--events", str(stage_dirs["events"]),
                   "--log", str(log_path), "--out", str(out_model)])
        assert rc == 0
        doc = json.loads(log_path.read_text())
        assert doc["summary"]["n_events"] == len(doc["assignments"])
        assert load_model_set(out_model)
        assert "replayed" in capsys.readouterr().out

    def test_report_files(self, stage_dirs, tmp_path):
        out = tmp_path / "reports"
        rc = main(["-q", "report", "--model", str(stage_dirs["model"]),
                   "--events", str(stage_dirs["events"]), "--out", str(out)])
        assert rc == 0
        for name in ("clusters.json", "sequences.json", "summary.json"):
            assert (out / name).exists()
        assert list((out / "scatter").glob("cluster_*_iss_inr.csv"))

    def test_stages_run_in_separate_processes(self, stage_dirs, tmp_path):
        """Each stage consumes only persisted artifacts, so a fresh
        process per stage must reproduce the in-process results."""
        events = tmp_path / "events"
        model = tmp_path / "model.json"
        steps = [
            ["detect", "--models", str(stage_dirs["models"]),
             "--data", str(stage_dirs["corpus"] / "data.csv"),
             "--out", str(events)],
            ["cluster", "--events", str(events), "--out", str(model)],
            ["report", "--model", str(model), "--events", str(events),
             "--out", str(tmp_path / "reports")],
        ]
        for step in steps:
            proc = subprocess.run(
                [sys.executable, "-m", "gridsift", "-q",
                 "--config", str(stage_dirs["cfg"])] + step,
                capture_output=True, text=True)
            assert proc.returncode == 0, proc.stderr
        assert (events / "events.json").read_bytes() == \
            (stage_dirs["events"] / "events.json").read_bytes()
        assert model.read_bytes() == stage_dirs["model"].read_bytes()


class TestRunPipeline:
    def test_end_to_end_and_resume(self, tiny_cfg, tmp_path):
        cfg = dataclasses.replace(tiny_cfg, workdir=str(tmp_path / "work"))
        assert run_pipeline(cfg) == 0
        for rel in ("corpus/data.csv", "models/models.json",
                    "events/events.json", "model.json", "replay.json",
                    "reports/summary.json"):
            assert (tmp_path / "work" / rel).exists(), rel
        marker = tmp_path / "work" / "models" / "models.json"
        before = marker.stat().st_mtime_ns
        assert run_pipeline(cfg) == 0
        assert marker.stat().st_mtime_ns == before, "resume must not retrain"

    def test_failing_stage_code(self, tiny_cfg, tmp_path):
        work = tmp_path / "work"
        cfg = dataclasses.replace(tiny_cfg, workdir=str(work))
        work.mkdir()
        (work / "corpus").mkdir()
        (work / "corpus" / "data.csv").write_text("not,a,stream\n1,2,3\n")
        assert run_pipeline(cfg) == EXIT_CODES["train"] == 4
