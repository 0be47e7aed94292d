"""Run configuration parsed from ``key = value`` text files with ``#`` comments."""
from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path

from .model import ModelConfig
from .nn import ConfigError
from .training import TrainConfig

REQUIRED = ("manifest", "epochs", "warmup_epochs")
_MODEL_KEYS = {f.name for f in fields(ModelConfig)} - {"seed"}
_TRAIN_KEYS = {f.name for f in fields(TrainConfig)} - {"seed"}
_RUN_KEYS = {"manifest", "crop", "seed"}


@dataclass
class RunConfig:
    model: ModelConfig
    train: TrainConfig
    manifest: Path
    crop: int = 64
    seed: int = 0
    echo: dict[str, str] = field(default_factory=dict)

    def with_seed(self, seed: int) -> RunConfig:
        self.seed = seed
        self.model.seed = seed
        self.train.seed = seed
        self.echo["seed"] = str(seed)
        return self

    def to_text(self) -> str:
        return "".join(f"{k}={v}\n" for k, v in sorted(self.echo.items()))


def _convert(key: str, raw: str, target):
    kind = type(target)
    try:
        if kind is bool:
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError
        if kind is int:
            return int(raw)
        return float(raw)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {kind.__name__}") from None


def parse_config(text: str, base_dir: str | Path = ".") -> RunConfig:
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _MODEL_KEYS | _TRAIN_KEYS | _RUN_KEYS:
            raise ConfigError(f"{key}: unknown key (line {lineno})")
        if key in values:
            raise ConfigError(f"{key}: duplicate key (line {lineno})")
        values[key] = value
    for key in REQUIRED:
        if key not in values:
            raise ConfigError(f"{key}: required key missing")

    model, train = ModelConfig(), TrainConfig()
    for key, raw in values.items():
        if key in _MODEL_KEYS:
            setattr(model, key, _convert(key, raw, getattr(model, key)))
        elif key in _TRAIN_KEYS:
            setattr(train, key, _convert(key, raw, getattr(train, key)))
    seed = _convert("seed", values["seed"], 0) if "seed" in values else 0
    crop = _convert("crop", values["crop"], 0) if "crop" in values else 64
    manifest = Path(values["manifest"])
    if not manifest.is_absolute():
        manifest = Path(base_dir) / manifest
    cfg = RunConfig(model, train, manifest, crop, seed, dict(values))
    cfg.with_seed(seed)
    for validate in (model.validate, train.validate):
        validate()
    if crop < 2**model.scales or crop % 2**model.scales:
        raise ConfigError(f"crop: {crop} must be a positive multiple of {2**model.scales}")
    return cfg


def read_config(path: str | Path) -> RunConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc.strerror or exc}") from None
    return parse_config(text, p.parent)
