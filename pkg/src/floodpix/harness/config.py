"""Harness configuration: TOML input, validation, resolved snapshots."""

from __future__ import annotations

import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from ..features import parse_feature_space

MODEL_KINDS = ("gbdt", "naive_bayes", "lda", "qda", "sgd")

DATA_ROOT_ENV = "FLOODPIX_DATA_ROOT"

DEFAULT_MANIFESTS = {
    "train": "manifests/train.json",
    "valid": "manifests/valid.json",
    "test": "manifests/test.json",
    "bolivia": "manifests/bolivia.json",
}


class ConfigError(Exception):
    pass


@dataclass
class HarnessConfig:
    model: str
    feature_spaces: list[str]
    grid: dict[str, list]
    data_root: Path
    output_dir: Path
    manifests: dict[str, str] = field(default_factory=lambda: dict(DEFAULT_MANIFESTS))
    search_seeds: int = 4
    final_seeds: int = 16
    speckle_filter: bool = False
    train_split: str = "train"
    valid_split: str = "valid"
    test_splits: tuple[str, ...] = ("test", "bolivia")
    jobs: int = 1
    sar_bounds: tuple[float, float] = (-30.0, 0.0)
    zero_division: str = "one"

    def __post_init__(self):
        self.data_root = Path(self.data_root)
        self.output_dir = Path(self.output_dir)
        if self.model not in MODEL_KINDS:
            raise ConfigError(f"unknown model {self.model!r}; choose from {MODEL_KINDS}")
        if not self.feature_spaces:
            raise ConfigError("no feature spaces configured")
        for name in self.feature_spaces:
            parse_feature_space(name)
        for key, values in self.grid.items():
            if not isinstance(values, (list, tuple)) or not values:
                raise ConfigError(f"grid entry {key!r} must be a non-empty list")
        if self.search_seeds < 1 or self.final_seeds < 1:
            raise ConfigError("seed counts must be positive")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")

    @property
    def search_seed_values(self) -> tuple[int, ...]:
        return tuple(range(self.search_seeds))

    @property
    def final_seed_values(self) -> tuple[int, ...]:
        return tuple(range(self.final_seeds))

    def manifest_path(self, split: str) -> Path:
        try:
            rel = self.manifests[split]
        except KeyError:
            raise ConfigError(f"no manifest configured for split {split!r}") from None
        path = Path(rel)
        return path if path.is_absolute() else self.data_root / path

    def as_json_dict(self) -> dict:
        return {
            "model": self.model,
            "feature_spaces": list(self.feature_spaces),
            "grid": self.grid,
            "data_root": str(self.data_root),
            "output_dir": str(self.output_dir),
            "manifests": dict(self.manifests),
            "search_seeds": self.search_seeds,
            "final_seeds": self.final_seeds,
            "speckle_filter": self.speckle_filter,
            "train_split": self.train_split,
            "valid_split": self.valid_split,
            "test_splits": list(self.test_splits),
            "jobs": self.jobs,
            "sar_bounds": list(self.sar_bounds),
            "zero_division": self.zero_division,
        }

    def write_snapshot(self) -> Path:
        self.output_dir.mkdir(parents=True, exist_ok=True)
        path = self.output_dir / "resolved_config.json"
        path.write_text(json.dumps(self.as_json_dict(), indent=2, sort_keys=True) + "\n")
        return path


def config_from_dict(doc: dict, overrides: dict | None = None) -> HarnessConfig:
    run = dict(doc.get("run", {}))
    data = dict(doc.get("data", {}))
    grid = dict(doc.get("grid", {}))
    merged = {
        "model": run.get("model"),
        "feature_spaces": run.get("feature_spaces", []),
        "grid": grid,
        "data_root": data.get("root") or os.environ.get(DATA_ROOT_ENV, ""),
        "output_dir": run.get("output_dir", "runs/out"),
        "manifests": data.get("manifests", dict(DEFAULT_MANIFESTS)),
        "search_seeds": run.get("search_seeds", 4),
        "final_seeds": run.get("final_seeds", 16),
        "speckle_filter": run.get("speckle_filter", False),
        "train_split": run.get("train_split", "train"),
        "valid_split": run.get("valid_split", "valid"),
        "test_splits": tuple(run.get("test_splits", ("test", "bolivia"))),
        "jobs": run.get("jobs", 1),
        "sar_bounds": tuple(run.get("sar_bounds", (-30.0, 0.0))),
        "zero_division": run.get("zero_division", "one"),
    }
    if overrides:
        merged.update({k: v for k, v in overrides.items() if v is not None})
    if not merged["model"]:
        raise ConfigError("config is missing run.model")
    if not merged["data_root"]:
        raise ConfigError(f"no data root: set data.root or ${DATA_ROOT_ENV} or --data-root")
    return HarnessConfig(**merged)


def load_config(path: Path, overrides: dict | None = None) -> HarnessConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    with open(path, "rb") as handle:
        doc = tomllib.load(handle)
    return config_from_dict(doc, overrides)


def load_snapshot(run_dir: Path) -> HarnessConfig:
    path = Path(run_dir) / "resolved_config.json"
    if not path.exists():
        raise ConfigError(f"no resolved_config.json under {run_dir}")
    doc = json.loads(path.read_text())
    doc["test_splits"] = tuple(doc["test_splits"])
    doc["sar_bounds"] = tuple(doc["sar_bounds"])
    return HarnessConfig(**doc)
