"""Experiment configuration: one JSON file, echoed into every output artifact."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .codec import RelayConfig
from .decoder import BeamConfig
from .pipeline import PipelineConfig
from .streaming import StreamConfig
from .toymodel import SynthTaskConfig, TrainConfig


@dataclass
class ModelConfig:
    dim: int = 32
    init_seed: int = 0
    init_scale: float = 0.1


@dataclass
class DataConfig:
    num_train: int = 2000
    num_eval: int = 200
    eval_offset: int = 1


@dataclass
class Paths:
    data: str = "data/train.jsonl"
    eval_data: str = "data/eval.jsonl"
    checkpoint: str = "runs/model.ckpt"
    report: str = "runs/report.json"


@dataclass
class ExperimentConfig:
    task: SynthTaskConfig = field(default_factory=SynthTaskConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    training: TrainConfig = field(default_factory=TrainConfig)
    data: DataConfig = field(default_factory=DataConfig)
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    paths: Paths = field(default_factory=Paths)

    @property
    def time_reduction(self) -> int:
        return self.pipeline.stream.time_reduction

    def with_seed(self, seed: int) -> "ExperimentConfig":
        d = self.to_dict()
        d["task"]["seed"] = seed
        d["training"]["seed"] = seed
        d["model"]["init_seed"] = seed
        return from_dict(d)

    def to_dict(self) -> dict:
        return asdict(self)


def _build(cls, data: dict | None, where: str):
    data = dict(data or {})
    names = {f.name for f in fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ValueError(f"unknown keys in {where}: {sorted(unknown)}")
    return cls(**data)


def from_dict(d: dict) -> ExperimentConfig:
    d = dict(d)
    unknown = set(d) - {f.name for f in fields(ExperimentConfig)}
    if unknown:
        raise ValueError(f"unknown top-level config keys: {sorted(unknown)}")
    pipe = dict(d.get("pipeline") or {})
    extra = set(pipe) - {"stream", "relay", "beam"}
    if extra:
        raise ValueError(f"unknown keys in pipeline: {sorted(extra)}")
    return ExperimentConfig(
        task=_build(SynthTaskConfig, d.get("task"), "task"),
        model=_build(ModelConfig, d.get("model"), "model"),
        training=_build(TrainConfig, d.get("training"), "training"),
        data=_build(DataConfig, d.get("data"), "data"),
        pipeline=PipelineConfig(
            stream=_build(StreamConfig, pipe.get("stream"), "pipeline.stream"),
            relay=_build(RelayConfig, pipe.get("relay"), "pipeline.relay"),
            beam=_build(BeamConfig, pipe.get("beam"), "pipeline.beam"),
        ),
        paths=_build(Paths, d.get("paths"), "paths"),
    )


def load_config(path) -> ExperimentConfig:
    return from_dict(json.loads(Path(path).read_text()))


def save_config(config: ExperimentConfig, path) -> None:
    Path(path).write_text(json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n")
