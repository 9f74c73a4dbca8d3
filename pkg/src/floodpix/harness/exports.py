"""Prediction raster rendering and box-plot table export."""

from __future__ import annotations

import csv
import io
from pathlib import Path

import numpy as np
from PIL import Image

from .. import bands as B
from ..features import FeatureSpaceSpec
from ..raster import LABEL_NODATA, LABEL_WATER, LabelGrid, Tile, write_labels
from .evaluate import HarnessError, predict_tile
from .grid import ExperimentResult

# Error overlay palette: blue = correct water, magenta = missed water,
# green = false water; NoData pixels are grayed out.
COLOR_TP = (0, 0, 255)
COLOR_FN = (255, 0, 255)
COLOR_FP = (0, 255, 0)
COLOR_NODATA = (128, 128, 128)

_BACKDROP_REFLECTANCE = 3000.0  # white point for the RGB composite


def _backdrop(tile: Tile) -> np.ndarray:
    rgb_bands = (B.RED, B.GREEN, B.BLUE)
    shape = tile.valid_mask.shape
    if all(band in tile.bands for band in rgb_bands):
        stack = [np.clip(tile.bands[band] / _BACKDROP_REFLECTANCE, 0.0, 1.0) for band in rgb_bands]
        return (np.stack(stack, axis=-1) * 255).astype(np.uint8)
    for band in ("VV", "VH"):
        if band in tile.bands:
            gray = np.clip((tile.bands[band] + 30.0) / 30.0, 0.0, 1.0)
            return (np.stack([gray] * 3, axis=-1) * 255).astype(np.uint8)
    return np.zeros(shape + (3,), dtype=np.uint8)


def render_error_overlay(pred: np.ndarray, truth: LabelGrid, tile: Tile) -> np.ndarray:
    """RGB image with confusion colors over the tile backdrop."""
    image = _backdrop(tile)
    labels = truth.labels
    valid = labels != LABEL_NODATA
    truth_water = labels == LABEL_WATER
    pred_water = pred == LABEL_WATER
    image[valid & truth_water & pred_water] = COLOR_TP
    image[valid & truth_water & ~pred_water] = COLOR_FN
    image[valid & ~truth_water & pred_water] = COLOR_FP
    image[~valid] = COLOR_NODATA
    return image


def export_prediction_raster(
    model,
    spec: FeatureSpaceSpec,
    tile: Tile,
    truth: LabelGrid,
    out_stem: Path,
    speckle: bool = False,
    sar_bounds=(-30.0, 0.0),
) -> dict[str, Path]:
    """Predict one tile and write the color overlay PNG plus the raw grid.

    The raw prediction is an int8 label grid in the canonical layout
    (-1 NoData, 0 dry, 1 water).
    """
    out_stem = Path(out_stem)
    pred = predict_tile(model, spec, tile, speckle=speckle, sar_bounds=sar_bounds)
    image = render_error_overlay(pred, truth, tile)
    out_stem.parent.mkdir(parents=True, exist_ok=True)
    png_path = out_stem.with_suffix(".png")
    Image.fromarray(image).save(png_path)
    raster_path = write_labels(out_stem, pred)
    return {"png": png_path, "raster": raster_path}


def export_boxplot_data(result: ExperimentResult, group_by: str, out_csv: Path | None = None) -> str:
    """Box statistics of seed-averaged validation mean IoU per parameter value.

    Groups rows by ``feature_space`` or any hyperparameter name; one
    box per group over that group's configs, sorted by group max
    descending.
    """
    configs: dict[str, list] = {}
    meta: dict[str, dict] = {}
    for row in result.ok_rows:
        configs.setdefault(row.config_key, []).append(row)
        meta[row.config_key] = {"feature_space": row.feature_space, **row.hyper}
    if not configs:
        raise HarnessError("no successful grid cells to export")
    known = set().union(*(m.keys() for m in meta.values()))
    if group_by not in known:
        raise HarnessError(f"unknown parameter {group_by!r}; choose from {sorted(known)}")
    groups: dict[str, list[float]] = {}
    for key, rows in configs.items():
        value = meta[key].get(group_by)
        if value is None:
            continue
        score = float(np.mean([r.valid_report.value("mean", "iou") for r in rows]))
        groups.setdefault(str(value), []).append(score)
    stats = []
    for value, scores in groups.items():
        arr = np.asarray(scores, dtype=np.float64)
        qs = np.quantile(arr, [0.0, 0.25, 0.5, 0.75, 1.0])
        stats.append((value, len(scores), *qs))
    stats.sort(key=lambda s: (-s[6], s[0]))  # by max descending, then value
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([group_by, "n_configs", "min", "q1", "median", "q3", "max"])
    for value, n, mn, q1, med, q3, mx in stats:
        writer.writerow([value, n] + [f"{v:.6f}" for v in (mn, q1, med, q3, mx)])
    text = buf.getvalue()
    if out_csv is not None:
        out_csv = Path(out_csv)
        out_csv.parent.mkdir(parents=True, exist_ok=True)
        out_csv.write_text(text)
    return text
