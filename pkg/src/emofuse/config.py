"""Experiment configuration: YAML in, validated dataclass out.

Defaults mirror the documented training recipe: batch 32, dropout 0.5,
task weights emotion/speaker/gender = 1.0/0.3/0.6, SGD for the
feedforward nets, Adam for the recurrent net, 10% stratified validation.
Unknown keys are rejected so typos fail loudly instead of silently
falling back to defaults.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from pathlib import Path

import yaml

from emofuse.errors import EmofuseError

SUBSYSTEM_IDS = ("dnn_functionals", "dnn_embedding", "attention_rnn", "lexical_svm")


class ConfigError(EmofuseError):
    pass


@dataclass
class DnnSettings:
    enabled: bool = True
    lr: float = 0.01
    epochs: int = 100
    early_stop_patience: int = 20


@dataclass
class RnnSettings:
    enabled: bool = True
    lr: float = 0.001
    epochs: int = 100
    early_stop_patience: int = 20
    clip_norm: float = 5.0


@dataclass
class SvmSettings:
    enabled: bool = True
    lam: float = 1e-4
    epochs: int = 50
    min_df: int = 1
    missing_transcript: str = "skip"  # or "error"


@dataclass
class FusionSettings:
    max_iter: int = 20000
    grad_tol: float = 1e-7
    per_class: bool = False


@dataclass
class ReportSettings:
    plots: bool = True


@dataclass
class ExperimentConfig:
    manifest: str = ""
    out_dir: str = "runs/default"
    seed: int = 0
    validation_fraction: float = 0.10
    batch_size: int = 32
    dropout: float = 0.5
    scale_factor: float = 1.0
    workers: int = 4
    embedding_dim: int = 200
    task_weights: dict = field(
        default_factory=lambda: {"emotion": 1.0, "speaker": 0.3, "gender": 0.6}
    )
    dnn_functionals: DnnSettings = field(default_factory=DnnSettings)
    dnn_embedding: DnnSettings = field(default_factory=DnnSettings)
    attention_rnn: RnnSettings = field(default_factory=RnnSettings)
    lexical_svm: SvmSettings = field(default_factory=SvmSettings)
    fusion: FusionSettings = field(default_factory=FusionSettings)
    report: ReportSettings = field(default_factory=ReportSettings)

    def __post_init__(self):
        if not 0.0 < self.validation_fraction < 1.0:
            raise ConfigError(
                f"validation_fraction must be in (0, 1), got {self.validation_fraction}"
            )
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be positive, got {self.batch_size}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.scale_factor <= 0.0:
            raise ConfigError(f"scale_factor must be positive, got {self.scale_factor}")
        if self.lexical_svm.missing_transcript not in ("skip", "error"):
            raise ConfigError(
                "lexical_svm.missing_transcript must be 'skip' or 'error', "
                f"got {self.lexical_svm.missing_transcript!r}"
            )
        unknown = set(self.task_weights) - {"emotion", "speaker", "gender"}
        if unknown:
            raise ConfigError(f"unknown task weight keys {sorted(unknown)}")

    def enabled_subsystems(self) -> tuple[str, ...]:
        return tuple(s for s in SUBSYSTEM_IDS if getattr(self, s).enabled)

    def to_dict(self) -> dict:
        return asdict(self)


_SECTION_TYPES = {
    "dnn_functionals": DnnSettings,
    "dnn_embedding": DnnSettings,
    "attention_rnn": RnnSettings,
    "lexical_svm": SvmSettings,
    "fusion": FusionSettings,
    "report": ReportSettings,
}


def config_from_dict(data: dict) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError(f"config root must be a mapping, got {type(data).__name__}")
    data = dict(data)
    kwargs = {}
    plain_fields = {
        f for f in ExperimentConfig.__dataclass_fields__ if f not in _SECTION_TYPES
    }
    for key in list(data):
        if key in _SECTION_TYPES:
            section = data.pop(key)
            cls = _SECTION_TYPES[key]
            if not isinstance(section, dict):
                raise ConfigError(f"section {key!r} must be a mapping")
            allowed = set(cls.__dataclass_fields__)
            unknown = set(section) - allowed
            if unknown:
                raise ConfigError(
                    f"unknown keys {sorted(unknown)} in section {key!r}; "
                    f"allowed: {sorted(allowed)}"
                )
            kwargs[key] = cls(**section)
        elif key in plain_fields:
            kwargs[key] = data.pop(key)
        else:
            raise ConfigError(
                f"unknown config key {key!r}; allowed: "
                f"{sorted(ExperimentConfig.__dataclass_fields__)}"
            )
    try:
        return ExperimentConfig(**kwargs)
    except TypeError as e:
        raise ConfigError(str(e)) from None


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as e:
        raise ConfigError(f"{path}: invalid YAML ({e})") from None
    if data is None:
        data = {}
    return config_from_dict(data)


def dump_config(cfg: ExperimentConfig, path):
    Path(path).write_text(
        yaml.safe_dump(cfg.to_dict(), sort_keys=True, default_flow_style=False),
        encoding="utf-8",
    )
