"""Grid expansion, resumable execution and validation-based selection."""

from __future__ import annotations

import hashlib
import itertools
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..features import build_feature_matrix, parse_feature_space
from ..metrics import ConfusionCounts, MetricReport, MetricSet
from ..raster import iter_tiles, load_manifest
from .config import HarnessConfig, load_snapshot
from .evaluate import HarnessError, evaluate_matrix, save_any_model, train_model, _tile_counts_json

# Leaf-count choices per feature-space dimensionality for the GBDT grid.
_LEAF_TABLE = (
    (2, (2, 4)),
    (3, (4, 8)),
    (4, (4, 8, 16)),
    (5, (8, 16, 32)),
    (7, (16, 32, 64)),
)
_LEAF_TABLE_HIGH = (32, 64, 128)

DEFAULT_GRIDS: dict[str, dict] = {
    "gbdt": {
        "n_trees": [50, 100, 200],
        "lambda_": [1.0],
        "learning_rate": [0.1],
        "subsample_size": [262144],
    },
    "naive_bayes": {},
    "lda": {"shrinkage": [i / 10 for i in range(11)]},
    "qda": {"regularization": [0.0, 1e-5, 1e-4, 1e-3, 0.01, 0.1, 0.5, 1.0, 2.0, 4.0, 8.0, 10.0]},
    "sgd": {
        "loss": ["hinge", "logistic", "modified_huber"],
        "alpha": [1.0, 0.1, 0.01, 0.001, 0.0001],
        "rebalance": [False, True],
    },
}


def leaf_choices(dimensionality: int) -> tuple[int, ...]:
    """Maximum-leaf grid for a feature space of the given width."""
    for upper, choices in _LEAF_TABLE:
        if dimensionality <= upper:
            return choices
    return _LEAF_TABLE_HIGH


@dataclass(frozen=True)
class Cell:
    model: str
    feature_space: str
    hyper: tuple[tuple[str, object], ...]  # sorted key/value pairs
    seed: int

    @property
    def hyper_dict(self) -> dict:
        return dict(self.hyper)

    @property
    def config_key(self) -> str:
        return json.dumps(
            {"model": self.model, "feature_space": self.feature_space, "hyper": self.hyper_dict},
            sort_keys=True,
        )


def _sanitize(text: str) -> str:
    return "".join(c if c.isalnum() else "-" for c in text).strip("-")


def cell_key(cell: Cell) -> str:
    digest = hashlib.sha1(cell.config_key.encode()).hexdigest()[:10]
    return f"{cell.model}__{_sanitize(cell.feature_space)}__{digest}__s{cell.seed}"


def expand_cells(config: HarnessConfig) -> list[Cell]:
    """Cartesian product of feature spaces, hyper grid and search seeds.

    GBDT grids without an explicit ``max_leaves`` entry draw the leaf
    choices from the dimensionality table, per feature space.
    """
    grid = {k: list(v) for k, v in (config.grid or DEFAULT_GRIDS[config.model]).items()}
    cells = []
    for fs in config.feature_spaces:
        fs_grid = dict(grid)
        if config.model == "gbdt" and "max_leaves" not in fs_grid:
            dim = parse_feature_space(fs).dimensionality
            fs_grid["max_leaves"] = list(leaf_choices(dim))
        keys = sorted(fs_grid)
        combos = [()] if not keys else itertools.product(*(fs_grid[k] for k in keys))
        for combo in combos:
            hyper = tuple(zip(keys, combo))
            for seed in config.search_seed_values:
                cells.append(Cell(model=config.model, feature_space=fs, hyper=hyper, seed=seed))
    return cells


@dataclass
class CellResult:
    model: str
    feature_space: str
    hyper: dict
    seed: int
    status: str  # "ok" | "failed"
    valid_report: MetricReport | None = None
    tile_counts: list | None = None
    model_path: str | None = None
    error: str | None = None
    wall_clock: float = 0.0

    @property
    def config_key(self) -> str:
        return json.dumps(
            {"model": self.model, "feature_space": self.feature_space, "hyper": self.hyper},
            sort_keys=True,
        )


@dataclass
class ExperimentResult:
    rows: list[CellResult] = field(default_factory=list)

    def __post_init__(self):
        seen = set()
        for row in self.rows:
            key = (row.config_key, row.seed)
            if key in seen:
                raise HarnessError(f"duplicate grid cell: {key}")
            seen.add(key)

    @property
    def ok_rows(self) -> list[CellResult]:
        return [r for r in self.rows if r.status == "ok"]


def _cell_paths(config: HarnessConfig, cell: Cell) -> tuple[Path, Path]:
    key = cell_key(cell)
    return config.output_dir / "cells" / f"{key}.json", config.output_dir / "models" / f"{key}.json"


def _atomic_write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _run_feature_space(config: HarnessConfig, feature_space: str, cells: list[Cell]) -> int:
    """Train/evaluate every pending cell of one feature space; returns the
    number of cells computed (skipping already-persisted ones)."""
    pending = [c for c in cells if not _cell_paths(config, c)[0].exists()]
    if not pending:
        return 0
    spec = parse_feature_space(feature_space)
    kwargs = {"speckle": config.speckle_filter, "sar_bounds": config.sar_bounds}
    train_tiles = list(iter_tiles(load_manifest(config.manifest_path(config.train_split), config.data_root)))
    valid_tiles = list(iter_tiles(load_manifest(config.manifest_path(config.valid_split), config.data_root)))
    train_matrix = build_feature_matrix(spec, train_tiles, **kwargs)
    valid_matrix = build_feature_matrix(spec, valid_tiles, **kwargs)
    done = 0
    for cell in pending:
        cell_path, model_path = _cell_paths(config, cell)
        doc = {
            "model": cell.model,
            "feature_space": cell.feature_space,
            "hyper": cell.hyper_dict,
            "seed": cell.seed,
        }
        started = time.perf_counter()
        try:
            model = train_model(cell.model, cell.hyper_dict, train_matrix, cell.seed)
            report, _, tile_counts = evaluate_matrix(model, valid_matrix, zero_division=config.zero_division)
            save_any_model(model, model_path)
            doc.update(
                {
                    "status": "ok",
                    "valid": {"report": report.as_dict(), "tile_counts": _tile_counts_json(tile_counts)},
                    "model_path": str(model_path.relative_to(config.output_dir)),
                }
            )
        except Exception as exc:  # individual fit failures are recorded, not fatal
            doc.update({"status": "failed", "error": f"{type(exc).__name__}: {exc}"})
        doc["wall_clock"] = time.perf_counter() - started
        _atomic_write(cell_path, json.dumps(doc, indent=2, sort_keys=True) + "\n")
        done += 1
    return done


def _run_feature_space_job(run_dir: str, feature_space: str) -> int:
    config = load_snapshot(Path(run_dir))
    cells = [c for c in expand_cells(config) if c.feature_space == feature_space]
    return _run_feature_space(config, feature_space, cells)


def run_grid_search(config: HarnessConfig) -> ExperimentResult:
    """Train every grid cell on the train split and score it on validation.

    Results persist incrementally under ``<output_dir>/cells``; completed
    cells are never recomputed, which makes interrupted runs resumable.
    With ``jobs > 1``, feature spaces are processed by a worker pool.
    """
    config.write_snapshot()
    cells = expand_cells(config)
    by_fs: dict[str, list[Cell]] = {}
    for cell in cells:
        by_fs.setdefault(cell.feature_space, []).append(cell)
    if config.jobs > 1 and len(by_fs) > 1:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            futures = [
                pool.submit(_run_feature_space_job, str(config.output_dir), fs) for fs in by_fs
            ]
            for future in futures:
                future.result()
    else:
        for fs, fs_cells in by_fs.items():
            _run_feature_space(config, fs, fs_cells)
    return load_results(config.output_dir, expected=cells)


def load_results(run_dir: Path, expected: list[Cell] | None = None) -> ExperimentResult:
    run_dir = Path(run_dir)
    cells_dir = run_dir / "cells"
    rows = []
    for path in sorted(cells_dir.glob("*.json")):
        doc = json.loads(path.read_text())
        report = None
        tile_counts = None
        if doc["status"] == "ok":
            rep = doc["valid"]["report"]
            report = MetricReport(
                mean=MetricSet(**rep["mean"]),
                std=MetricSet(**rep["std"]),
                total=MetricSet(**rep["total"]),
                n_tiles=rep["n_tiles"],
            )
            tile_counts = [
                (tc["tile_id"], tc["region"], ConfusionCounts(tp=tc["tp"], fp=tc["fp"], tn=tc["tn"], fn=tc["fn"]))
                for tc in doc["valid"]["tile_counts"]
            ]
        rows.append(
            CellResult(
                model=doc["model"],
                feature_space=doc["feature_space"],
                hyper=doc["hyper"],
                seed=doc["seed"],
                status=doc["status"],
                valid_report=report,
                tile_counts=tile_counts,
                model_path=doc.get("model_path"),
                error=doc.get("error"),
                wall_clock=doc.get("wall_clock", 0.0),
            )
        )
    result = ExperimentResult(rows=rows)
    if expected is not None:
        have = {(r.config_key, r.seed) for r in result.rows}
        missing = [c for c in expected if (c.config_key, c.seed) not in have]
        if missing:
            raise HarnessError(f"{len(missing)} grid cells missing from {cells_dir}")
    return result


# Selection: validation mean IoU first, then the remaining metrics in the
# order they appear in the results table.
DEFAULT_TIE_BREAKERS = (
    ("mean", "iou"),
    ("total", "iou"),
    ("mean", "acc"),
    ("total", "acc"),
    ("total", "precision"),
    ("total", "recall"),
    ("total", "recall_dry"),
    ("total", "f1"),
)


@dataclass(frozen=True)
class SelectionRule:
    criteria: tuple[tuple[str, str], ...] = DEFAULT_TIE_BREAKERS

    def metric_names(self) -> list[str]:
        return [f"{qualifier}_{metric}" for qualifier, metric in self.criteria]


def select_best(result: ExperimentResult, rule: SelectionRule | None = None) -> dict:
    """Seed-average validation metrics per config and pick the winner.

    Row order never matters: configs sort by the rule's metric tuple with
    the canonical config key as the final deterministic tie break.
    """
    rule = rule or SelectionRule()
    groups: dict[str, list[CellResult]] = {}
    for row in result.ok_rows:
        groups.setdefault(row.config_key, []).append(row)
    if not groups:
        raise HarnessError("no successful grid cells to select from")
    table = []
    for key, rows in groups.items():
        rows = sorted(rows, key=lambda r: r.seed)
        scores = {
            name: float(np.mean([r.valid_report.value(qualifier, metric) for r in rows]))
            for (qualifier, metric), name in zip(rule.criteria, rule.metric_names())
        }
        head = rows[0]
        table.append(
            {
                "model": head.model,
                "feature_space": head.feature_space,
                "hyper": head.hyper,
                "seeds": [r.seed for r in rows],
                "config_key": key,
                **scores,
            }
        )
    names = rule.metric_names()
    table.sort(key=lambda row: tuple(-row[name] for name in names) + (row["config_key"],))
    winner = dict(table[0])
    return {"winner": winner, "ranking": table, "rule": names}


def write_selection(run_dir: Path, selection: dict) -> Path:
    reports_dir = Path(run_dir) / "reports"
    reports_dir.mkdir(parents=True, exist_ok=True)
    path = reports_dir / "selection.json"
    path.write_text(json.dumps(selection, indent=2, sort_keys=True) + "\n")
    return path
