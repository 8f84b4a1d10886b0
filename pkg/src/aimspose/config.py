"""One JSON document configuring every stage of an experiment."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

from .adapt import LmmdConfig, TrainConfig
from .datagen import DatasetConfig, ShiftConfig
from .errors import ConfigError
from .fitter import FitConfig
from .hipc import HipcConfig
from .nn import config_hash

SOURCE_DOMAINS = ("Synthetic", "Synthetic+Real")
METHODS = ("ImageBranch(lambda=0)", "ImageBranch(lambda=0.5)", "PoseBranch", "Full")


def pipeline_fit_config() -> FitConfig:
    """Settings for fitting whole evaluation splits from scratch.

    Gauss-Newton with light priors and fewer starts: far from any init, plain
    descent is too slow to converge in a sensible iteration budget.
    """
    return FitConfig(
        method="gauss_newton",
        pose_prior_weight=1e-4,
        shape_prior_weight=1e-5,
        multi_start_count=3,
        max_iters=40,
        rigid_candidates=12,
    )


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    fit: FitConfig = field(default_factory=pipeline_fit_config)
    train: TrainConfig = field(default_factory=TrainConfig)
    lmmd: LmmdConfig = field(default_factory=LmmdConfig)
    hipc: HipcConfig = field(default_factory=HipcConfig)
    seeds: tuple = (0,)
    source_domains: tuple = ("Synthetic",)
    lambdas: tuple = (0.0, 0.5)
    out_dir: str = "runs"

    def __post_init__(self):
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        object.__setattr__(self, "source_domains", tuple(self.source_domains))
        object.__setattr__(self, "lambdas", tuple(float(v) for v in self.lambdas))
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("seeds must be distinct")
        bad = [d for d in self.source_domains if d not in SOURCE_DOMAINS]
        if bad or not self.source_domains:
            raise ConfigError(f"source_domains must be drawn from {SOURCE_DOMAINS}, got {list(self.source_domains)}")
        if len(self.lambdas) != 2 or self.lambdas[0] != 0.0 or self.lambdas[1] <= 0:
            raise ConfigError("lambdas must be (0, lambda_adapt) with lambda_adapt > 0")

    @property
    def shift(self) -> ShiftConfig:
        return self.dataset.shift

    def with_seeds(self, seeds) -> "ExperimentConfig":
        return replace(self, seeds=tuple(seeds))

    def to_dict(self) -> dict:
        dataset = self.dataset.to_dict()
        shift = dataset.pop("shift")
        return {
            "dataset": dataset,
            "shift": shift,
            "fit": self.fit.to_dict(),
            "train": self.train.to_dict(),
            "lmmd": self.lmmd.to_dict(),
            "hipc": self.hipc.to_dict(),
            "seeds": list(self.seeds),
            "source_domains": list(self.source_domains),
            "lambdas": list(self.lambdas),
            "out_dir": self.out_dir,
        }

    def hash(self) -> str:
        doc = self.to_dict()
        doc.pop("out_dir")
        doc.pop("seeds")
        return config_hash(doc)

    @classmethod
    def from_dict(cls, doc) -> "ExperimentConfig":
        if not isinstance(doc, dict):
            raise ConfigError("experiment config must be a JSON object")
        known = {"dataset", "shift", "fit", "train", "lmmd", "hipc", "seeds", "source_domains", "lambdas", "out_dir"}
        unknown = sorted(set(doc) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        dataset = dict(doc.get("dataset", {}))
        if "shift" in doc:
            dataset["shift"] = doc["shift"]
        kwargs = {"dataset": DatasetConfig.from_dict(dataset)}
        if "fit" in doc:
            kwargs["fit"] = FitConfig.from_dict({**pipeline_fit_config().to_dict(), **doc["fit"]})
        if "train" in doc:
            kwargs["train"] = TrainConfig.from_dict(doc["train"])
        if "lmmd" in doc:
            kwargs["lmmd"] = LmmdConfig.from_dict(doc["lmmd"])
        if "hipc" in doc:
            kwargs["hipc"] = HipcConfig.from_dict(doc["hipc"])
        for key in ("seeds", "source_domains", "lambdas", "out_dir"):
            if key in doc:
                kwargs[key] = doc[key]
        try:
            return cls(**kwargs)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad experiment config: {exc}") from exc

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            doc = json.loads(Path(path).read_text())
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
        return cls.from_dict(doc)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")
