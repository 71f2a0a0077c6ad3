"""Run configuration: a YAML file whose sections mirror the library's types."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Mapping, Optional

import yaml

from ..degradation import TrainingDegradationConfig
from ..networks import DenoiserArch, DiscriminatorArch
from ..objective import PRESETS, WeightingParams
from ..schedule import NoiseSchedule, StudentTimestepSet, build_schedule
from ..trainer import DistillConfig, TeacherConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ScheduleConfig:
    T: int = 1000
    beta_start: float = 1e-4
    beta_end: float = 0.02

    def build(self) -> NoiseSchedule:
        return build_schedule(self.T, self.beta_start, self.beta_end)


@dataclass(frozen=True)
class DataConfig:
    path: Optional[str] = None  # None -> procedural textures
    patch_size: int = 64
    scale: int = 4
    n_train: int = 2000
    n_test: int = 64
    test_pipeline: str = "blur2_sr4"
    seed: int = 0


@dataclass(frozen=True)
class SamplingConfig:
    steps: int = 4
    blend_r: float = 1.0
    teacher_steps: int = 50
    seed: int = 0


@dataclass(frozen=True)
class RunConfig:
    schedule: ScheduleConfig = ScheduleConfig()
    anchors: tuple[int, ...] = (999, 749, 499, 249)
    weighting: WeightingParams = WeightingParams()
    degradation: TrainingDegradationConfig = TrainingDegradationConfig()
    denoiser: DenoiserArch = DenoiserArch()
    discriminator: DiscriminatorArch = DiscriminatorArch()
    teacher: TeacherConfig = TeacherConfig()
    distill: DistillConfig = DistillConfig()
    data: DataConfig = DataConfig()
    sampling: SamplingConfig = SamplingConfig()
    seed: int = 0

    @property
    def sts(self) -> StudentTimestepSet:
        return StudentTimestepSet(self.anchors)

    def to_dict(self) -> dict:
        return _plain(asdict(self)) | {"weighting": self.weighting.to_dict()}

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()

    def override(self, dotted: Mapping[str, Any]) -> "RunConfig":
        """Apply ``{"section.key": value}`` overrides (``None`` values are skipped)."""
        d = self.to_dict()
        for key, value in dotted.items():
            if value is None:
                continue
            node = d
            *parents, leaf = key.split(".")
            for p in parents:
                if p not in node or not isinstance(node[p], dict):
                    raise ConfigError(f"unknown config section {key!r}")
                node = node[p]
            if leaf not in node:
                raise ConfigError(f"unknown config key {key!r}")
            node[leaf] = value
        return config_from_dict(d)


def _plain(x):
    if isinstance(x, dict):
        return {k: _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    return x


_SECTIONS = {
    "schedule": ScheduleConfig,
    "degradation": TrainingDegradationConfig,
    "denoiser": DenoiserArch,
    "discriminator": DiscriminatorArch,
    "teacher": TeacherConfig,
    "distill": DistillConfig,
    "data": DataConfig,
    "sampling": SamplingConfig,
}


def _build(cls, d: Mapping, section: str):
    known = {f.name: f for f in fields(cls)}
    unknown = set(d) - set(known)
    if unknown:
        raise ConfigError(f"unknown keys in [{section}]: {sorted(unknown)}")
    kw = {k: tuple(v) if isinstance(v, list) else v for k, v in d.items()}
    try:
        return cls(**kw)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"[{section}]: {e}") from e


def config_from_dict(d: Mapping) -> RunConfig:
    d = dict(d or {})
    unknown = set(d) - set(_SECTIONS) - {"anchors", "weighting", "seed"}
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    kw: dict[str, Any] = {name: _build(cls, d.get(name) or {}, name) for name, cls in _SECTIONS.items()}
    w = dict(d.get("weighting") or {})
    preset = w.pop("preset", None)
    try:
        base = PRESETS[preset] if preset else WeightingParams()
        kw["weighting"] = base.with_(**w) if w else base
    except KeyError:
        raise ConfigError(f"unknown weighting preset {preset!r}; choose from {sorted(PRESETS)}") from None
    except (TypeError, ValueError) as e:
        raise ConfigError(f"[weighting]: {e}") from e
    if "anchors" in d:
        kw["anchors"] = tuple(int(a) for a in d["anchors"])
        try:
            StudentTimestepSet(kw["anchors"])
        except ValueError as e:
            raise ConfigError(f"anchors: {e}") from e
    kw["seed"] = int(d.get("seed", 0))
    return RunConfig(**kw)


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        raw = yaml.safe_load(Path(path).read_text())
    except (OSError, yaml.YAMLError) as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    if raw is not None and not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")
    return config_from_dict(raw or {})


def save_config(cfg: RunConfig, path: str | Path) -> None:
    Path(path).write_text(yaml.safe_dump(cfg.to_dict(), sort_keys=False))
