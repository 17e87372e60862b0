"""Run configuration: one JSON file holding every tunable section.

Example::

    {
      "synth": {"width": 64, "height": 64, "seed": 0},
      "augment": {"degen_prob": 0.5},
      "loss_weights": {"edge": 1.0},
      "edge": {"sigma": 1.0},
      "contrastive": {"tau": 0.07},
      "model": {"num_queries": 6},
      "optimizer": {"lr": 0.003, "epochs": 30},
      "objective": {"use_geo": true, "use_contrastive": true},
      "data": {"train": "data/train/manifest.jsonl", "out": "runs/toy"}
    }

Missing sections and keys take their defaults; unknown keys are errors.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .degen import AugmentConfig
from .losses import ContrastiveConfig, EdgeLossConfig, LossWeights
from .model.config import ModelConfig, OptimizerConfig
from .model.objective import ObjectiveConfig
from .synth import SynthConfig


class ConfigError(ValueError):
    """Malformed or invalid configuration (CLI exit code 2)."""


@dataclass
class ObjectiveFlags:
    use_geo: bool = True
    use_contrastive: bool = True


@dataclass
class DataPaths:
    train: str | None = None  # manifest used by `train`
    eval: str | None = None  # manifest used by `eval`
    out: str | None = None  # output directory


SECTIONS = {
    "synth": SynthConfig,
    "augment": AugmentConfig,
    "loss_weights": LossWeights,
    "edge": EdgeLossConfig,
    "contrastive": ContrastiveConfig,
    "model": ModelConfig,
    "optimizer": OptimizerConfig,
    "objective": ObjectiveFlags,
    "data": DataPaths,
}


@dataclass
class RunConfig:
    synth: SynthConfig = field(default_factory=SynthConfig)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    loss_weights: LossWeights = field(default_factory=LossWeights)
    edge: EdgeLossConfig = field(default_factory=EdgeLossConfig)
    contrastive: ContrastiveConfig = field(default_factory=ContrastiveConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    objective: ObjectiveFlags = field(default_factory=ObjectiveFlags)
    data: DataPaths = field(default_factory=DataPaths)
    source: str = "<defaults>"

    def validate(self) -> None:
        try:
            self.synth.validate()
            self.augment.validate()
            self.loss_weights.validate()
            self.edge.validate()
            self.contrastive.validate()
            self.model.validate()
            self.optimizer.validate()
        except (ValueError, KeyError, OSError) as e:
            raise ConfigError(f"{self.source}: {e}") from e

    def with_seed(self, seed: int) -> "RunConfig":
        """Route a single seed into every random stream."""
        return replace(
            self,
            synth=replace(self.synth, seed=seed),
            augment=replace(self.augment, seed=seed),
            optimizer=replace(self.optimizer, seed=seed),
            model=replace(self.model, init_seed=seed),
        )

    def model_config(self) -> ModelConfig:
        """Model config whose initial temperature is the contrastive section's tau."""
        return replace(self.model, init_tau=self.contrastive.tau)

    def objective_config(self) -> ObjectiveConfig:
        return ObjectiveConfig(self.loss_weights, self.edge, self.objective.use_geo, self.objective.use_contrastive)

    def to_dict(self) -> dict:
        out = {}
        for name in SECTIONS:
            sec = getattr(self, name)
            out[name] = sec.to_dict() if hasattr(sec, "to_dict") else asdict(sec)
        return out


def _line_of(text: str, key: str) -> int | None:
    needle = f'"{key}"'
    for i, line in enumerate(text.splitlines(), 1):
        if needle in line:
            return i
    return None


def _where(source: str, text: str, key: str) -> str:
    line = _line_of(text, key)
    return f"{source}:{line}" if line else source


def _coerce(value, default, path: str):
    """Check a JSON value against the type of its default."""
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise TypeError(f"{path} must be true/false, got {value!r}")
    elif isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise TypeError(f"{path} must be an integer, got {value!r}")
    elif isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise TypeError(f"{path} must be a number, got {value!r}")
        value = float(value)
    elif isinstance(default, str):
        if not isinstance(value, str):
            raise TypeError(f"{path} must be a string, got {value!r}")
    elif isinstance(default, dict):
        if not isinstance(value, dict):
            raise TypeError(f"{path} must be an object, got {value!r}")
    return value


def parse_config(text: str, source: str = "<string>") -> RunConfig:
    try:
        raw = json.loads(text) if text.strip() else {}
    except json.JSONDecodeError as e:
        raise ConfigError(f"{source}:{e.lineno}:{e.colno}: {e.msg}") from e
    if not isinstance(raw, dict):
        raise ConfigError(f"{source}:1: top level must be a JSON object")
    sections = {}
    for name, body in raw.items():
        if name not in SECTIONS:
            raise ConfigError(f"{_where(source, text, name)}: unknown section {name!r} (expected one of {sorted(SECTIONS)})")
        if not isinstance(body, dict):
            raise ConfigError(f"{_where(source, text, name)}: section {name!r} must be an object")
        cls = SECTIONS[name]
        defaults = cls()
        known = {f.name for f in fields(cls)}
        kwargs = {}
        for key, value in body.items():
            if key not in known:
                raise ConfigError(f"{_where(source, text, key)}: unknown key {name}.{key} (expected one of {sorted(known)})")
            default = getattr(defaults, key)
            try:
                kwargs[key] = value if default is None else _coerce(value, default, f"{name}.{key}")
            except TypeError as e:
                raise ConfigError(f"{_where(source, text, key)}: {e}") from e
        try:
            sections[name] = cls(**kwargs)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"{_where(source, text, name)}: {e}") from e
    cfg = RunConfig(**sections, source=source)
    cfg.validate()
    return cfg


def load_config(path) -> RunConfig:
    if path is None:
        return RunConfig()
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as e:
        raise ConfigError(f"{p}: cannot read config: {e.strerror or e}") from e
    return parse_config(text, str(p))
