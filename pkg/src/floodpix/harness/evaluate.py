"""Model training/evaluation plumbing shared by grid search and final runs."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .. import classifiers
from ..features import FeatureMatrix, FeatureSpaceSpec, build_feature_matrix, compute_feature_grids, parse_feature_space
from ..gbdt import GBDTModel, GBDTParams, fit_gbdt, load_gbdt, predict_gbdt, save_gbdt
from ..metrics import (
    METRIC_ORDER,
    MetricReport,
    RegionwiseReport,
    aggregate,
    confusion_from_rows,
    correlation_test,
    regionwise,
    regionwise_to_csv,
    reports_to_csv,
)
from ..raster import LABEL_NODATA, Tile, iter_tiles, load_manifest
from .config import ConfigError, HarnessConfig


class HarnessError(Exception):
    pass


def train_model(kind: str, hyper: dict, matrix: FeatureMatrix, seed: int):
    """Fit one model kind with its grid-point hyperparameters."""
    values, labels = matrix.values, matrix.labels
    if kind == "gbdt":
        params = GBDTParams(
            n_trees=int(hyper["n_trees"]),
            max_leaves=int(hyper["max_leaves"]),
            lambda_=float(hyper["lambda_"]),
            learning_rate=float(hyper["learning_rate"]),
            subsample_size=(int(hyper["subsample_size"]) if hyper.get("subsample_size") else None),
            max_bins=int(hyper.get("max_bins", 256)),
        )
        return fit_gbdt(values, labels, params, seed=seed)
    if kind == "naive_bayes":
        return classifiers.fit_bayes("nb", values, labels)
    if kind == "lda":
        return classifiers.fit_bayes("lda", values, labels, float(hyper["shrinkage"]))
    if kind == "qda":
        return classifiers.fit_bayes("qda", values, labels, float(hyper["regularization"]))
    if kind == "sgd":
        return classifiers.fit_sgd(
            values,
            labels,
            loss=str(hyper["loss"]),
            l2_alpha=float(hyper["alpha"]),
            rebalance=bool(hyper["rebalance"]),
            seed=seed,
        )
    raise HarnessError(f"unknown model kind {kind!r}")


def predict_rows(model, values: np.ndarray) -> np.ndarray:
    if isinstance(model, GBDTModel):
        return predict_gbdt(model, values)
    return classifiers.predict(model, values)


def save_any_model(model, path: Path) -> Path:
    if isinstance(model, GBDTModel):
        return save_gbdt(model, path)
    return classifiers.save_model(model, path)


def load_any_model(path: Path):
    doc = json.loads(Path(path).read_text())
    if doc.get("model") == "gbdt":
        return load_gbdt(path)
    return classifiers.load_model(path)


def tile_counts_for(matrix: FeatureMatrix, pred: np.ndarray):
    return [
        (ts.tile_id, ts.region, confusion_from_rows(pred[ts.start : ts.stop], matrix.labels[ts.start : ts.stop]))
        for ts in matrix.tile_slices
    ]


def evaluate_matrix(model, matrix: FeatureMatrix, zero_division: str = "one"):
    """Predict a feature matrix and aggregate per-tile confusion counts."""
    pred = predict_rows(model, matrix.values)
    tile_counts = tile_counts_for(matrix, pred)
    report = aggregate(tile_counts, zero_division=zero_division)
    region_report = regionwise(tile_counts)
    return report, region_report, tile_counts


def predict_tile(model, spec: FeatureSpaceSpec, tile: Tile, speckle: bool = False, sar_bounds=(-30.0, 0.0)) -> np.ndarray:
    """Label grid prediction for one tile: -1 on invalid pixels, else 0/1."""
    cube = compute_feature_grids(spec, tile, speckle=speckle, sar_bounds=sar_bounds)
    mask = tile.valid_mask
    pred = np.full(mask.shape, LABEL_NODATA, dtype=np.int8)
    if mask.any():
        pred[mask] = predict_rows(model, cube[mask].astype(np.float32))
    return pred


def correlation_report(region_report: RegionwiseReport) -> dict:
    """Water-pixel-count vs per-region-metric correlations for one split."""
    regions = sorted(region_report.per_region)
    x = [region_report.water_pixels[r] for r in regions]
    out: dict = {"n_regions": len(regions)}
    if len(regions) < 3:
        out["note"] = "needs at least 3 regions"
        return out
    for metric in METRIC_ORDER:
        y = [region_report.per_region[r].value(metric) for r in regions]
        entry = {}
        for kind in ("pearson", "spearman"):
            try:
                coef, p = correlation_test(x, y, kind)
                entry[kind] = {"coefficient": coef, "p_value": p}
            except Exception as exc:  # degenerate variance etc.
                entry[kind] = {"error": str(exc)}
        out[metric] = entry
    return out


def _tile_counts_json(tile_counts):
    return [
        {"tile_id": tile_id, "region": region, **counts.as_dict()}
        for tile_id, region, counts in tile_counts
    ]


def _report_values(report: MetricReport) -> dict:
    return {
        f"{metric}_{qualifier}": report.value(qualifier, metric)
        for metric in METRIC_ORDER
        for qualifier in ("mean", "std", "total")
    }


def _mean_report(reports: list[MetricReport]) -> dict:
    keys = list(_report_values(reports[0]).keys())
    stacked = {k: float(np.mean([_report_values(r)[k] for r in reports])) for k in keys}
    return stacked


def final_eval(config: HarnessConfig, winner: dict, out_dir: Path | None = None) -> dict:
    """Train the chosen config with the final seeds and report on the test splits.

    ``winner`` needs ``feature_space`` and ``hyper`` keys (as produced by
    ``select_best``). Emits one JSON report and regionwise/metric CSVs per
    split under ``<out_dir>/reports``.
    """
    out_dir = Path(out_dir) if out_dir is not None else config.output_dir
    reports_dir = out_dir / "reports"
    reports_dir.mkdir(parents=True, exist_ok=True)

    spec = parse_feature_space(winner["feature_space"])
    hyper = winner["hyper"]

    train_tiles = list(iter_tiles(load_manifest(config.manifest_path(config.train_split), config.data_root)))
    split_tiles = {}
    for split in config.test_splits:
        path = config.manifest_path(split)
        if not path.exists():
            raise ConfigError(f"missing split manifest for {split!r}: {path}")
        split_tiles[split] = list(iter_tiles(load_manifest(path, config.data_root)))

    kwargs = {"speckle": config.speckle_filter, "sar_bounds": config.sar_bounds}
    train_matrix = build_feature_matrix(spec, train_tiles, **kwargs)
    split_matrices = {split: build_feature_matrix(spec, tiles, **kwargs) for split, tiles in split_tiles.items()}

    per_split: dict[str, dict] = {split: {"per_seed": []} for split in config.test_splits}
    for seed in config.final_seed_values:
        model = train_model(config.model, hyper, train_matrix, seed)
        for split in config.test_splits:
            report, region_report, tile_counts = evaluate_matrix(
                model, split_matrices[split], zero_division=config.zero_division
            )
            per_split[split]["per_seed"].append(
                {
                    "seed": seed,
                    "report": report,
                    "regionwise": region_report,
                    "correlations": correlation_report(region_report),
                    "tile_counts": tile_counts,
                }
            )

    summary = {"model": config.model, "feature_space": spec.name, "hyper": hyper, "splits": {}}
    metric_rows = []
    for split in config.test_splits:
        seed_entries = per_split[split]["per_seed"]
        reports = [e["report"] for e in seed_entries]
        seed_mean = _mean_report(reports)
        doc = {
            "split": split,
            "model": config.model,
            "feature_space": spec.name,
            "hyper": hyper,
            "seeds": list(config.final_seed_values),
            "seed_mean": seed_mean,
            "per_seed": [
                {
                    "seed": e["seed"],
                    "report": e["report"].as_dict(),
                    "regionwise": e["regionwise"].as_dict(),
                    "correlations": e["correlations"],
                    "tile_counts": _tile_counts_json(e["tile_counts"]),
                }
                for e in seed_entries
            ],
        }
        (reports_dir / f"final_{split}.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
        csv_rows = [({"split": split, "seed": str(e["seed"])}, e["report"]) for e in seed_entries]
        (reports_dir / f"final_{split}_metrics.csv").write_text(reports_to_csv(csv_rows))
        regionwise_csv = "".join(
            f"# seed {e['seed']}\n" + regionwise_to_csv(e["regionwise"]) for e in seed_entries
        )
        (reports_dir / f"final_{split}_regionwise.csv").write_text(regionwise_csv)
        summary["splits"][split] = seed_mean
        metric_rows.append((split, seed_mean))

    lines = ["split," + ",".join(sorted(metric_rows[0][1].keys()))] if metric_rows else []
    for split, seed_mean in metric_rows:
        lines.append(split + "," + ",".join(f"{seed_mean[k]:.6f}" for k in sorted(seed_mean.keys())))
    (reports_dir / "final_summary.csv").write_text("\n".join(lines) + "\n")
    (reports_dir / "final_summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return summary
