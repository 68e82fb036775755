import json

import pytest

from dfdet.config import ConfigError, RunConfig, config_dict, load_config
from dfdet.detector import TrainConfig as DetectorTrainConfig


class TestDefaults:
    def test_defaults_load_without_file(self):
        cfg = load_config()
        assert cfg.diffusion.T == 100
        assert cfg.diffusion.S == 20
        assert cfg.detector.lam == 0.5
        assert cfg.detector.use_kd is True
        assert cfg.data.image_size == 16

    def test_lambda_matches_training_default(self):
        assert load_config().detector.lam == DetectorTrainConfig().lam


class TestJsonFile:
    def test_file_values_applied(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"seed": 7, "diffusion": {"T": 50, "S": 10}}))
        cfg = load_config(path)
        assert cfg.seed == 7 and cfg.diffusion.T == 50 and cfg.diffusion.S == 10
        # untouched sections keep defaults
        assert cfg.detector.lam == 0.5

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"difusion": {"T": 50}}))
        with pytest.raises(ConfigError, match="unknown"):
            load_config(path)

    def test_unknown_section_key_rejected(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"diffusion": {"TT": 50}}))
        with pytest.raises(ConfigError, match="unknown"):
            load_config(path)

    def test_malformed_json(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text("{nope")
        with pytest.raises(ConfigError, match="cannot read"):
            load_config(path)


class TestOverrides:
    def test_override_types(self):
        cfg = load_config(overrides=[
            "diffusion.beta_end=0.2",
            "detector.use_kd=false",
            "denoiser.epochs=3",
            "data.unseen_s_values=8,4",
            "workdir=/tmp/x",
        ])
        assert cfg.diffusion.beta_end == 0.2
        assert cfg.detector.use_kd is False
        assert cfg.denoiser.epochs == 3
        assert cfg.data.unseen_s_values == (8, 4)
        assert cfg.workdir == "/tmp/x"

    def test_bad_override_shape(self):
        with pytest.raises(ConfigError, match="key=value"):
            load_config(overrides=["diffusion.beta_end"])

    def test_unknown_override_path(self):
        with pytest.raises(ConfigError, match="unknown config path"):
            load_config(overrides=["diffusion.gamma=1"])

    def test_bad_override_value(self):
        with pytest.raises(ConfigError, match="bad value"):
            load_config(overrides=["diffusion.T=abc"])


class TestValidation:
    def test_s_greater_than_t_rejected(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"diffusion": {"T": 10, "S": 20}}))
        with pytest.raises(ConfigError, match="S must be <= T"):
            load_config(path)


class TestPaths:
    def test_workdir_layout(self):
        cfg = RunConfig(workdir="/w", seed=3)
        assert str(cfg.denoiser_ckpt) == "/w/denoiser.ddck"
        assert str(cfg.teacher_ckpt) == "/w/teacher.ddck"
        assert str(cfg.student_ckpt(True)) == "/w/student_kd_seed3.ddck"
        assert str(cfg.student_ckpt(False, seed=4)) == "/w/student_nokd_seed4.ddck"
        assert str(cfg.report_path) == "/w/report.json"


def test_config_dict_json_serializable():
    d = config_dict(load_config())
    json.dumps(d)
    assert d["diffusion"]["S"] == 20
