"""Experiment configuration: nested dataclasses, YAML files and ``key=value`` overrides."""
from __future__ import annotations

import dataclasses
import hashlib
import json
import types
import typing
from dataclasses import dataclass, field
from pathlib import Path

import yaml


class ConfigError(ValueError):
    error_id = "bad_config"


@dataclass
class StageConfig:
    epochs: int
    lr: float | None
    sampler: str
    momentum: float = 0.9


@dataclass
class LMRConfig:
    w_rec: float = 0.4
    decay: float = 1.0
    p_mix: float = 0.5
    enabled: bool = True


@dataclass
class ModelConfig:
    arch: str = "linear"
    hidden: int = 64


@dataclass
class DataConfig:
    train_path: str | None = None
    test_path: str | None = None
    # used when no paths are given
    profile: str = "meteor"
    scale_divisor: int = 10
    D: int = 64
    T: int = 7
    alpha: float = 0.9
    sigma: float = 0.3
    drift: float = 0.5
    mean_scale: float = 1.0
    test_multiplier: float = 2.0
    regenerate_per_seed: bool = True


@dataclass
class ExperimentConfig:
    seed: int = 0
    n_seeds: int = 5
    batch_size: int = 64
    workers: int = 1
    noise_aug: float = 0.0
    model: ModelConfig = field(default_factory=ModelConfig)
    stage1: StageConfig = field(default_factory=lambda: StageConfig(30, 0.1, "ib"))
    stage2: StageConfig = field(default_factory=lambda: StageConfig(10, None, "cb"))
    lmr: LMRConfig = field(default_factory=LMRConfig)
    data: DataConfig = field(default_factory=DataConfig)

    def __post_init__(self):
        validate(self)

    @property
    def stage2_lr(self) -> float:
        return self.stage2.lr if self.stage2.lr is not None else self.stage1.lr / 100.0

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def validate(cfg: ExperimentConfig) -> None:
    def need(ok, key, msg):
        if not ok:
            raise ConfigError(f"{key}: {msg}")

    need(cfg.batch_size >= 1, "batch_size", "must be >= 1")
    need(cfg.n_seeds >= 1, "n_seeds", "must be >= 1")
    need(cfg.workers >= 1, "workers", "must be >= 1")
    need(cfg.noise_aug >= 0, "noise_aug", "must be >= 0")
    need(cfg.model.arch in ("linear", "mlp"), "model.arch", "must be 'linear' or 'mlp'")
    need(cfg.model.hidden >= 1, "model.hidden", "must be >= 1")
    for name in ("stage1", "stage2"):
        st = getattr(cfg, name)
        need(st.epochs >= 0, f"{name}.epochs", "must be >= 0")
        need(st.lr is None or st.lr > 0, f"{name}.lr", "must be > 0")
        need(st.sampler in ("ib", "cb"), f"{name}.sampler", "must be 'ib' or 'cb'")
        need(0 <= st.momentum < 1, f"{name}.momentum", "must lie in [0, 1)")
    need(cfg.stage1.lr is not None, "stage1.lr", "is required")
    need(0 <= cfg.lmr.w_rec <= 1, "lmr.w_rec", "must lie in [0, 1]")
    need(cfg.lmr.decay >= 0, "lmr.decay", "must be >= 0")
    need(0 <= cfg.lmr.p_mix <= 1, "lmr.p_mix", "must lie in [0, 1]")
    need(cfg.batch_size >= 2 or not cfg.lmr.enabled, "batch_size", "must be >= 2 when LMR is enabled")
    d = cfg.data
    need(d.profile in ("meteor", "hdd"), "data.profile", "must be 'meteor' or 'hdd'")
    need(d.scale_divisor >= 1, "data.scale_divisor", "must be >= 1")
    need(0 <= d.alpha <= 1, "data.alpha", "must lie in [0, 1]")
    need(d.sigma > 0, "data.sigma", "must be > 0")
    need(d.test_multiplier > 0, "data.test_multiplier", "must be > 0")


def _coerce(value, tp, key):
    """Convert ``value`` to the annotated field type ``tp``."""
    origin = typing.get_origin(tp)
    if origin in (typing.Union, types.UnionType):
        args = typing.get_args(tp)
        if value is None or (isinstance(value, str) and value.lower() in ("none", "null")):
            if type(None) in args:
                return None
        for arg in args:
            if arg is type(None):
                continue
            try:
                return _coerce(value, arg, key)
            except ConfigError:
                pass
        raise ConfigError(f"{key}: cannot interpret {value!r} as {tp}")
    if tp is bool:
        if isinstance(value, bool):
            return value
        if isinstance(value, str) and value.lower() in ("true", "1", "yes", "false", "0", "no"):
            return value.lower() in ("true", "1", "yes")
        raise ConfigError(f"{key}: expected a boolean, got {value!r}")
    if tp is int:
        if isinstance(value, bool):
            raise ConfigError(f"{key}: expected an integer, got {value!r}")
        if isinstance(value, int):
            return value
        if isinstance(value, str):
            try:
                return int(value)
            except ValueError:
                pass
        raise ConfigError(f"{key}: expected an integer, got {value!r}")
    if tp is float:
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return float(value)
        if isinstance(value, str):
            try:
                return float(value)
            except ValueError:
                pass
        raise ConfigError(f"{key}: expected a number, got {value!r}")
    if tp is str:
        if isinstance(value, str):
            return value
        raise ConfigError(f"{key}: expected a string, got {value!r}")
    raise ConfigError(f"{key}: unsupported field type {tp}")


def _build(cls, data: dict, prefix: str = ""):
    if not isinstance(data, dict):
        raise ConfigError(f"{prefix or 'config'}: expected a mapping")
    hints = typing.get_type_hints(cls)
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"{prefix}{unknown[0]}: unknown key")
    kwargs = {}
    for f in dataclasses.fields(cls):
        if f.name not in data:
            continue
        tp = hints[f.name]
        key = prefix + f.name
        if dataclasses.is_dataclass(tp):
            base = dataclasses.asdict(getattr(cls(), f.name)) if cls is ExperimentConfig else {}
            base.update(data[f.name] or {})
            kwargs[f.name] = _build(tp, base, key + ".")
        else:
            kwargs[f.name] = _coerce(data[f.name], tp, key)
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"{prefix or 'config'}: {exc}") from None


def config_from_dict(data: dict | None) -> ExperimentConfig:
    return _build(ExperimentConfig, dict(data or {}))


def apply_overrides(data: dict, overrides) -> dict:
    """Apply ``section.key=value`` strings to a nested mapping (values parsed as YAML scalars)."""
    data = json.loads(json.dumps(data))
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"{item}: override must look like key=value")
        key, raw = item.split("=", 1)
        parts = key.strip().split(".")
        node = data
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(f"{key}: {p} is not a section")
        try:
            value = yaml.safe_load(raw) if raw.strip() else None
        except yaml.YAMLError:
            value = raw
        node[parts[-1]] = value
    return data


def load_config(path=None, overrides=()) -> ExperimentConfig:
    data = {}
    if path is not None:
        data = yaml.safe_load(Path(path).read_text()) or {}
    return config_from_dict(apply_overrides(data, overrides))
