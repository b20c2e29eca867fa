"""Resolved pipeline configuration.

One JSON config file plus CLI flag overrides (flags win); the resolved
config is echoed into every stage manifest so any run can be reproduced
from its outputs alone.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from .evaluation import DEFAULT_KS
from .features import DEFAULT_CAT_DEPTH
from .forest import ForestParams
from .sage import SageHyper

WORKSPACE_ENV = "COPURCHASE_WORKSPACE"


@dataclass
class PipelineConfig:
    dataset_path: str | None = None
    workspace: str = "workspace"
    seed: int = 0
    d_cat: int = DEFAULT_CAT_DEPTH
    variant: str = "full"
    n_pos: int = 10_000
    n_neg: int = 10_000
    negatives: str = "non_adjacent"
    train_fraction: float = 0.8
    forest: ForestParams = field(default_factory=ForestParams)
    sage: SageHyper = field(default_factory=SageHyper)
    eval_n: int = 1000
    eval_ks: tuple[int, ...] = DEFAULT_KS
    eval_repeats: int = 5
    modularity_pair_samples: int = 100_000
    threads: int = 0  # 0 = all available cores

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["eval_ks"] = list(self.eval_ks)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        data = dict(data)
        unknown = set(data) - {f.name for f in dataclasses.fields(cls)}
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        if "forest" in data and isinstance(data["forest"], dict):
            data["forest"] = ForestParams(**data["forest"])
        if "sage" in data and isinstance(data["sage"], dict):
            data["sage"] = SageHyper(**data["sage"])
        if "eval_ks" in data:
            data["eval_ks"] = tuple(int(k) for k in data["eval_ks"])
        return cls(**data)

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def resolved_workspace(self) -> Path:
        env = os.environ.get(WORKSPACE_ENV)
        return Path(env) if env and self.workspace == "workspace" else Path(self.workspace)

    def n_jobs(self) -> int:
        return self.threads if self.threads > 0 else (os.cpu_count() or 1)
