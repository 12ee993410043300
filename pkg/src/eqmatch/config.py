"""Run configuration: one JSON-serializable object per training run.

Every field round-trips exactly through to_dict/from_dict; the same dict is
embedded verbatim in checkpoints so a checkpoint is self-describing.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import ToyDistribution, fixed_memorization_set
from .model import ModelConfig
from .objective import OBJECTIVES
from .sampler import SamplerConfig
from .schedule import Schedule

DATASET_KINDS = ("gaussian-mixture", "two-moons", "checkerboard", "uniform-box",
                 "memorization")
LABELED_KINDS = ("gaussian-mixture", "two-moons")


class ValidationError(ValueError):
    """A config field or field combination is invalid."""


@dataclass
class DatasetSpec:
    """Training data source: a toy distribution sampled as an endless stream,
    or the fixed memorization set used by the overfitting checks."""

    kind: str = "gaussian-mixture"
    modes: list | None = None
    mode_std: float | list | None = None
    weights: list | None = None
    box: list | None = None
    noise_scale: float | None = None
    k: int = 8
    data_seed: int = 0

    def __post_init__(self):
        if self.kind not in DATASET_KINDS:
            raise ValidationError(f"dataset.kind '{self.kind}' not one of {DATASET_KINDS}")

    @property
    def labeled(self) -> bool:
        return self.kind in LABELED_KINDS

    def distribution(self) -> ToyDistribution:
        if self.kind == "memorization":
            raise ValidationError("memorization datasets have no distribution")
        kw = {"kind": self.kind}
        if self.modes is not None:
            kw["modes"] = np.asarray(self.modes)
        if self.mode_std is not None:
            kw["mode_std"] = self.mode_std
        if self.weights is not None:
            kw["weights"] = np.asarray(self.weights)
        if self.box is not None:
            kw["box"] = tuple(self.box)
        if self.noise_scale is not None:
            kw["noise_scale"] = self.noise_scale
        try:
            return ToyDistribution(**kw)
        except ValueError as e:
            raise ValidationError(f"dataset: {e}") from e

    def memorization_points(self) -> np.ndarray:
        return fixed_memorization_set(self.k, self.data_seed)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "modes": self.modes, "mode_std": self.mode_std,
                "weights": self.weights, "box": self.box,
                "noise_scale": self.noise_scale, "k": self.k,
                "data_seed": self.data_seed}

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetSpec":
        return cls(kind=d.get("kind", "gaussian-mixture"), modes=d.get("modes"),
                   mode_std=d.get("mode_std"), weights=d.get("weights"),
                   box=d.get("box"), noise_scale=d.get("noise_scale"),
                   k=int(d.get("k", 8)), data_seed=int(d.get("data_seed", 0)))


@dataclass
class OptimizerSettings:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    weight_decay: float = 0.0
    epsilon: float = 1e-8

    def to_dict(self) -> dict:
        return {"lr": self.lr, "beta1": self.beta1, "beta2": self.beta2,
                "weight_decay": self.weight_decay, "epsilon": self.epsilon}

    @classmethod
    def from_dict(cls, d: dict) -> "OptimizerSettings":
        return cls(lr=float(d.get("lr", 1e-4)), beta1=float(d.get("beta1", 0.9)),
                   beta2=float(d.get("beta2", 0.999)),
                   weight_decay=float(d.get("weight_decay", 0.0)),
                   epsilon=float(d.get("epsilon", 1e-8)))


@dataclass
class TrainSettings:
    steps: int = 20_000
    batch_size: int = 64
    log_every: int = 100
    checkpoint_every: int = 0  # 0 disables periodic checkpoints

    def __post_init__(self):
        if self.steps < 1 or self.batch_size < 1:
            raise ValidationError("train.steps and train.batch_size must be >= 1")

    def to_dict(self) -> dict:
        return {"steps": self.steps, "batch_size": self.batch_size,
                "log_every": self.log_every, "checkpoint_every": self.checkpoint_every}

    @classmethod
    def from_dict(cls, d: dict) -> "TrainSettings":
        return cls(steps=int(d.get("steps", 20_000)),
                   batch_size=int(d.get("batch_size", 64)),
                   log_every=int(d.get("log_every", 100)),
                   checkpoint_every=int(d.get("checkpoint_every", 0)))


@dataclass
class RunConfig:
    seed: int = 0
    objective: str = "eqm"
    allow_non_equilibrium: bool = False
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    model: ModelConfig = field(default_factory=ModelConfig)
    schedule: Schedule = field(default_factory=lambda: Schedule(kind="truncated", a=0.8, lam=4.0))
    optimizer: OptimizerSettings = field(default_factory=OptimizerSettings)
    train: TrainSettings = field(default_factory=TrainSettings)
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    out_dir: str | None = None

    def validate(self) -> None:
        if self.objective not in OBJECTIVES:
            raise ValidationError(f"objective '{self.objective}' not one of {OBJECTIVES}")
        m = self.model
        if self.objective == "eqm" and m.energy_kind != "none":
            raise ValidationError("objective 'eqm' needs model.energy_kind='none'")
        if self.objective == "eqm-e" and m.energy_kind == "none":
            raise ValidationError("objective 'eqm-e' needs an explicit energy head")
        if self.objective == "fm" and not m.noise_conditioned:
            raise ValidationError("objective 'fm' needs model.noise_conditioned=true")
        if self.objective == "uncond-fm" and (m.noise_conditioned or m.energy_kind != "none"):
            raise ValidationError("objective 'uncond-fm' needs a plain unconditioned model")
        if m.num_classes > 0 and not self.dataset.labeled:
            raise ValidationError(f"model.num_classes={m.num_classes} but dataset "
                                  f"'{self.dataset.kind}' provides no labels")

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "objective": self.objective,
            "allow_non_equilibrium": self.allow_non_equilibrium,
            "dataset": self.dataset.to_dict(),
            "model": self.model.to_dict(),
            "schedule": self.schedule.to_dict(),
            "optimizer": self.optimizer.to_dict(),
            "train": self.train.to_dict(),
            "sampler": self.sampler.to_dict(),
            "out_dir": self.out_dir,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        try:
            cfg = cls(
                seed=int(d.get("seed", 0)),
                objective=d.get("objective", "eqm"),
                allow_non_equilibrium=bool(d.get("allow_non_equilibrium", False)),
                dataset=DatasetSpec.from_dict(d.get("dataset", {})),
                model=ModelConfig.from_dict(d.get("model", {})) if d.get("model") else ModelConfig(),
                schedule=Schedule.from_dict(d.get("schedule", {})) if d.get("schedule") else
                Schedule(kind="truncated", a=0.8, lam=4.0),
                optimizer=OptimizerSettings.from_dict(d.get("optimizer", {})),
                train=TrainSettings.from_dict(d.get("train", {})),
                sampler=SamplerConfig.from_dict(d.get("sampler", {})),
                out_dir=d.get("out_dir"),
            )
        except ValueError as e:
            raise ValidationError(str(e)) from e
        cfg.validate()
        return cfg


def save_config(path, config: RunConfig) -> None:
    Path(path).write_text(json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n")


def load_config(path) -> RunConfig:
    try:
        payload = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise ValidationError(f"config file {path} is not valid JSON: {e}") from e
    return RunConfig.from_dict(payload)
