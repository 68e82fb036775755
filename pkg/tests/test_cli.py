import json

import pytest

from dfdet.cli import (EXIT_CONFIG, EXIT_MISSING, EXIT_OK, EXIT_USAGE, main)
from dfdet.datagen import load_dataset


def _tiny_args(workdir, *rest):
    # configuration small enough for an end-to-end CLI run in seconds
    return [
        "--workdir", str(workdir),
        "--set", "diffusion.T=10",
        "--set", "diffusion.S=5",
        "--set", "diffusion.beta_end=0.1",
        "--set", "denoiser.corpus_n=32",
        "--set", "denoiser.epochs=1",
        "--set", "detector.epochs=1",
        "--set", "detector.teacher_epochs=2",
        "--set", "data.train_real=8",
        "--set", "data.train_fake=8",
        "--set", "data.test_real=8",
        "--set", "data.test_fake_seen=8",
        "--set", "data.test_fake_unseen=4",
        "--set", "data.unseen_s_values=2",
        "--set", "data.image_size=8",
        "--set", "bench.items=2",
        *rest,
    ]


class TestExitCodes:
    def test_no_command_is_usage_error(self, capsys):
        assert main([]) == EXIT_USAGE

    def test_unknown_command_is_usage_error(self, capsys):
        assert main(["frobnicate"]) == EXIT_USAGE

    def test_help_exits_zero(self, capsys):
        assert main(["--help"]) == EXIT_OK

    def test_bad_config_value(self, tmp_path, capsys):
        rc = main(["--workdir", str(tmp_path), "--set", "diffusion.T=abc",
                   "gen-data"])
        assert rc == EXIT_CONFIG

    def test_unknown_config_path(self, tmp_path, capsys):
        rc = main(["--workdir", str(tmp_path), "--set", "nope.x=1", "gen-data"])
        assert rc == EXIT_CONFIG

    def test_malformed_config_file(self, tmp_path, capsys):
        bad = tmp_path / "cfg.json"
        bad.write_text("{")
        rc = main(["--config", str(bad), "--workdir", str(tmp_path), "gen-data"])
        assert rc == EXIT_CONFIG

    def test_missing_artifact(self, tmp_path, capsys):
        rc = main(["--workdir", str(tmp_path), "train-teacher"])
        assert rc == EXIT_MISSING
        assert "missing-artifact" in capsys.readouterr().err


class TestWorkdirSelection:
    def test_env_workdir(self, tmp_path, monkeypatch, capsys):
        monkeypatch.setenv("DFDET_WORKDIR", str(tmp_path / "envdir"))
        rc = main(_tiny_args(tmp_path)[2:] + ["train-diffusion"])
        # data was never generated there, so the artifact is missing
        assert rc == EXIT_MISSING

    def test_flag_beats_env(self, tmp_path, monkeypatch, capsys):
        monkeypatch.setenv("DFDET_WORKDIR", str(tmp_path / "envdir"))
        rc = main(_tiny_args(tmp_path / "flagdir") + ["gen-data"])
        assert rc == EXIT_OK
        assert (tmp_path / "flagdir/data/denoiser_corpus.ddfd").exists()
        assert not (tmp_path / "envdir").exists()


@pytest.mark.slow
def test_end_to_end_pipeline(tmp_path, capsys):
    work = tmp_path / "run"

    def run(*cmd):
        rc = main(_tiny_args(work, *cmd))
        out = capsys.readouterr()
        assert rc == EXIT_OK, (cmd, out.err)

    run("gen-data")  # real corpora only; fakes need a denoiser
    assert not (work / "data/train.ddfd").exists()
    run("train-diffusion")
    run("gen-data")  # now the fake corpora appear
    train = load_dataset(work / "data/train.ddfd")
    assert len(train) == 16 and sorted(set(train.labels.tolist())) == [0, 1]
    run("extract-features")
    run("train-teacher")
    run("train-student")
    run("train-student", "--no-kd")
    run("evaluate")
    evaluation = json.loads((work / "evaluation.json").read_text())
    assert set(evaluation) == {"kd", "nokd"}
    assert "overall" in evaluation["kd"]["test_seen"]
    run("bench")
    bench = json.loads((work / "bench.json").read_text())
    by_name = {r["name"]: r for r in bench if "name" in r}
    assert by_name["dire"]["denoiser_calls_per_item"] == 10.0  # 2S, S=5
    assert by_name["distil"]["denoiser_calls_per_item"] == 1.0
    run("report")
    report = json.loads((work / "report.json").read_text())
    assert report["report_version"] == 1
    assert {r["provenance"] for r in report["bench"]["reference"]} == {"paper-table-2"}
