"""Run configuration: one dataclass tree, loadable from a JSON file, with
every value overridable on the command line. The effective config is
echoed into reports for provenance."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path


class ConfigError(ValueError):
    pass


@dataclass
class DiffusionConfig:
    T: int = 100
    beta_start: float = 1e-3
    beta_end: float = 0.15
    S: int = 20


@dataclass
class DenoiserConfig:
    epochs: int = 30
    batch_size: int = 32
    lr: float = 1e-3
    corpus_n: int = 2000


@dataclass
class DetectorConfig:
    lam: float = 0.5
    lr: float = 1e-3
    epochs: int = 20
    batch_size: int = 32
    use_kd: bool = True
    teacher_epochs: int = 20


@dataclass
class DataConfig:
    image_size: int = 16
    train_real: int = 500
    train_fake: int = 500
    test_real: int = 500
    test_fake_seen: int = 500
    test_fake_unseen: int = 400
    unseen_s_values: tuple = (10, 50)
    teacher_fake_primary: int = 250
    teacher_fake_variant: int = 250


@dataclass
class BenchConfig:
    warmup: int = 2
    runs: int = 5
    items: int = 200


@dataclass
class RunConfig:
    workdir: str = "workdir"
    seed: int = 0
    diffusion: DiffusionConfig = field(default_factory=DiffusionConfig)
    denoiser: DenoiserConfig = field(default_factory=DenoiserConfig)
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    data: DataConfig = field(default_factory=DataConfig)
    bench: BenchConfig = field(default_factory=BenchConfig)

    def __post_init__(self):
        if self.detector.lam < 0:
            raise ConfigError("lambda must be >= 0")
        if self.diffusion.S > self.diffusion.T:
            raise ConfigError("S must be <= T")

    # -- workdir layout ----------------------------------------------

    def path(self, name: str) -> Path:
        return Path(self.workdir) / name

    @property
    def denoiser_ckpt(self):
        return self.path("denoiser.ddck")

    @property
    def denoiser_variant_ckpt(self):
        return self.path("denoiser_variant.ddck")

    @property
    def denoiser_heldout_ckpt(self):
        return self.path("denoiser_heldout.ddck")

    @property
    def teacher_ckpt(self):
        return self.path("teacher.ddck")

    def student_ckpt(self, use_kd: bool, seed: int = None):
        seed = self.seed if seed is None else seed
        kd = "kd" if use_kd else "nokd"
        return self.path(f"student_{kd}_seed{seed}.ddck")

    @property
    def report_path(self):
        return self.path("report.json")


_SECTIONS = {
    "diffusion": DiffusionConfig,
    "denoiser": DenoiserConfig,
    "detector": DetectorConfig,
    "data": DataConfig,
    "bench": BenchConfig,
}


def load_config(path=None, overrides=None) -> RunConfig:
    """Build a RunConfig from an optional JSON file plus "section.key=value"
    override strings."""
    raw = {}
    if path is not None:
        try:
            raw = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
    cfg = _from_dict(raw)
    for ov in overrides or []:
        if "=" not in ov:
            raise ConfigError(f"override {ov!r} is not key=value")
        key, value = ov.split("=", 1)
        _apply_override(cfg, key.strip(), value.strip())
    return cfg


def _from_dict(raw: dict) -> RunConfig:
    kwargs = {}
    for key, value in raw.items():
        if key in _SECTIONS:
            if not isinstance(value, dict):
                raise ConfigError(f"section {key!r} must be an object")
            section_cls = _SECTIONS[key]
            known = {f.name for f in dataclasses.fields(section_cls)}
            bad = set(value) - known
            if bad:
                raise ConfigError(f"unknown keys in {key}: {sorted(bad)}")
            if "unseen_s_values" in value:
                value["unseen_s_values"] = tuple(value["unseen_s_values"])
            kwargs[key] = section_cls(**value)
        elif key in ("workdir", "seed"):
            kwargs[key] = value
        else:
            raise ConfigError(f"unknown config key {key!r}")
    return RunConfig(**kwargs)


def _apply_override(cfg: RunConfig, key: str, value: str):
    parts = key.split(".")
    obj = cfg
    for p in parts[:-1]:
        if not hasattr(obj, p):
            raise ConfigError(f"unknown config path {key!r}")
        obj = getattr(obj, p)
    leaf = parts[-1]
    if not hasattr(obj, leaf):
        raise ConfigError(f"unknown config path {key!r}")
    current = getattr(obj, leaf)
    try:
        if isinstance(current, bool):
            parsed = value.lower() in ("1", "true", "yes")
        elif isinstance(current, int):
            parsed = int(value)
        elif isinstance(current, float):
            parsed = float(value)
        elif isinstance(current, tuple):
            parsed = tuple(int(v) for v in value.split(","))
        else:
            parsed = value
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {value!r}") from exc
    setattr(obj, leaf, parsed)


def config_dict(cfg: RunConfig) -> dict:
    d = dataclasses.asdict(cfg)
    d["data"]["unseen_s_values"] = list(d["data"]["unseen_s_values"])
    return d
