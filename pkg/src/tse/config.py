"""Run configuration: JSON file with model/train/simulate sections.

Command-line flags override file keys; unknown keys are rejected with the
offending dotted path; the effective merged config is echoed as
config.json into every command's output directory.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .model import ModelConfig
from .simulate import SimConfig
from .training import TrainConfig


def _build_dataclass(cls, data: dict, where: str):
    if not isinstance(data, dict):
        raise ValueError(f"config section {where!r} must be an object")
    by_name = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(by_name)
    if unknown:
        raise ValueError(f"unknown config key(s): {', '.join(f'{where}.{k}' for k in sorted(unknown))}")
    kwargs = {}
    for name, value in data.items():
        f = by_name[name]
        if dataclasses.is_dataclass(f.type) or (isinstance(f.default_factory, type)
                                                and dataclasses.is_dataclass(f.default_factory)):
            kwargs[name] = _build_dataclass(f.default_factory, value, f"{where}.{name}")
        elif isinstance(value, list) and isinstance(getattr(cls(), name, None), tuple):
            kwargs[name] = tuple(value)
        else:
            kwargs[name] = value
    return cls(**kwargs)


@dataclass
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    simulate: SimConfig = field(default_factory=SimConfig)

    @staticmethod
    def from_file(path) -> "RunConfig":
        data = json.loads(Path(path).read_text())
        if not isinstance(data, dict):
            raise ValueError(f"{path}: top level must be an object")
        unknown = set(data) - {"model", "train", "simulate"}
        if unknown:
            raise ValueError(f"unknown config key(s): {', '.join(sorted(unknown))}")
        return RunConfig(
            model=_build_dataclass(ModelConfig, data.get("model", {}), "model"),
            train=_build_dataclass(TrainConfig, data.get("train", {}), "train"),
            simulate=_build_dataclass(SimConfig, data.get("simulate", {}), "simulate"),
        )

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def echo(self, out_dir) -> Path:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        path = out_dir / "config.json"
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")
        return path


def load_run_config(path=None) -> RunConfig:
    return RunConfig.from_file(path) if path else RunConfig()
