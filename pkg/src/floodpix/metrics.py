"""Confusion accumulation and the segmentation metric algebra.

Water is the positive class. Six metrics are reported in a stable order
(accuracy, IoU, precision, recall, F1, dry-class recall); omission and
commission error rates are derived views (1 - recall and 1 - dry recall)
and never stored. Metrics aggregate two ways: *mean-based* (per-tile
metric values averaged with a population std) and *total* (single value
from the pooled counts), plus region-wise totals summarized across
regions.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy import stats as _sstats

from .raster import LABEL_NODATA, LABEL_WATER, LabelGrid

METRIC_ORDER = ("acc", "iou", "precision", "recall", "f1", "recall_dry")

# How to evaluate 0/0 metric ratios: score them 1.0 (no positives exist and
# none were predicted) or drop the tile from mean-based aggregation.
ZERO_DIVISION_ONE = "one"
ZERO_DIVISION_EXCLUDE = "exclude"


class MetricError(Exception):
    pass


@dataclass(frozen=True)
class ConfusionCounts:
    """TP/FP/TN/FN pixel counts; a commutative monoid under merge."""

    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    def __post_init__(self):
        for name in ("tp", "fp", "tn", "fn"):
            value = getattr(self, name)
            if value < 0:
                raise MetricError(f"negative count {name}={value}")

    def merge(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(
            tp=self.tp + other.tp,
            fp=self.fp + other.fp,
            tn=self.tn + other.tn,
            fn=self.fn + other.fn,
        )

    __add__ = merge

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @property
    def water_pixels(self) -> int:
        return self.tp + self.fn

    @property
    def dry_pixels(self) -> int:
        return self.tn + self.fp

    def as_dict(self) -> dict[str, int]:
        return {"tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn}


def merge_counts(counts: Iterable[ConfusionCounts]) -> ConfusionCounts:
    merged = ConfusionCounts()
    for c in counts:
        merged = merged.merge(c)
    return merged


@dataclass(frozen=True)
class MetricSet:
    acc: float
    iou: float
    precision: float
    recall: float
    f1: float
    recall_dry: float

    @property
    def omission(self) -> float:
        return 1.0 - self.recall

    @property
    def commission(self) -> float:
        return 1.0 - self.recall_dry

    def as_dict(self) -> dict[str, float]:
        return {name: getattr(self, name) for name in METRIC_ORDER}

    def value(self, name: str) -> float:
        if name not in METRIC_ORDER:
            raise MetricError(f"unknown metric {name!r}")
        return getattr(self, name)


def _ratio(num: int, den: int, zero_division: float) -> float:
    if den == 0:
        return zero_division
    return num / den


def metric_set(c: ConfusionCounts, zero_division: float = 1.0) -> MetricSet:
    """Evaluate all metrics on one set of counts.

    0/0 ratios (e.g. IoU on a tile without water in truth or prediction)
    resolve to ``zero_division``, 1.0 by default.
    """
    if c.total == 0:
        raise MetricError("metric_set on all-zero counts")
    return MetricSet(
        acc=(c.tp + c.tn) / c.total,
        iou=_ratio(c.tp, c.tp + c.fp + c.fn, zero_division),
        precision=_ratio(c.tp, c.tp + c.fp, zero_division),
        recall=_ratio(c.tp, c.tp + c.fn, zero_division),
        f1=_ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn, zero_division),
        recall_dry=_ratio(c.tn, c.tn + c.fp, zero_division),
    )


def confusion(pred: np.ndarray, truth: LabelGrid) -> ConfusionCounts:
    """Accumulate counts from a prediction grid; NoData pixels are excluded."""
    pred = np.asarray(pred)
    labels = truth.labels
    if pred.shape != labels.shape:
        raise MetricError(f"prediction shape {pred.shape} != label shape {labels.shape}")
    valid = labels != LABEL_NODATA
    truth_water = labels == LABEL_WATER
    pred_water = pred.astype(bool)
    tp = int(np.count_nonzero(valid & truth_water & pred_water))
    fp = int(np.count_nonzero(valid & ~truth_water & pred_water))
    fn = int(np.count_nonzero(valid & truth_water & ~pred_water))
    tn = int(np.count_nonzero(valid & ~truth_water & ~pred_water))
    return ConfusionCounts(tp=tp, fp=fp, tn=tn, fn=fn)


def confusion_from_rows(pred_labels: np.ndarray, true_labels: np.ndarray) -> ConfusionCounts:
    """Counts from flat row-space predictions (0=dry, 1=water); no NoData here."""
    pred_labels = np.asarray(pred_labels).astype(bool)
    true_labels = np.asarray(true_labels).astype(bool)
    if pred_labels.shape != true_labels.shape:
        raise MetricError("row-space prediction/label shape mismatch")
    tp = int(np.count_nonzero(true_labels & pred_labels))
    fp = int(np.count_nonzero(~true_labels & pred_labels))
    fn = int(np.count_nonzero(true_labels & ~pred_labels))
    tn = int(np.count_nonzero(~true_labels & ~pred_labels))
    return ConfusionCounts(tp=tp, fp=fp, tn=tn, fn=fn)


@dataclass
class MetricReport:
    """Mean-based (per-tile mean and population std) plus pooled totals."""

    mean: MetricSet
    std: MetricSet
    total: MetricSet
    n_tiles: int

    def as_dict(self) -> dict:
        return {
            "n_tiles": self.n_tiles,
            "mean": self.mean.as_dict(),
            "std": self.std.as_dict(),
            "total": self.total.as_dict(),
        }

    def value(self, qualifier: str, metric: str) -> float:
        if qualifier not in ("mean", "std", "total"):
            raise MetricError(f"unknown qualifier {qualifier!r}")
        return getattr(self, qualifier).value(metric)


TileCounts = tuple[str, str, ConfusionCounts]  # (tile_id, region, counts)


def aggregate(tile_counts: Sequence[TileCounts], zero_division: str = ZERO_DIVISION_ONE) -> MetricReport:
    """Mean-based and total metrics over per-tile confusion counts.

    ``zero_division`` selects how tiles with undefined 0/0 ratios enter the
    mean: scored as 1.0 (default) or excluded per metric.
    """
    if not tile_counts:
        raise MetricError("aggregate on empty tile list")
    total = metric_set(merge_counts(c for _, _, c in tile_counts))
    per_tile = []
    for _, _, c in tile_counts:
        if zero_division == ZERO_DIVISION_ONE:
            per_tile.append(metric_set(c).as_dict())
        elif zero_division == ZERO_DIVISION_EXCLUDE:
            per_tile.append(metric_set(c, zero_division=math.nan).as_dict())
        else:
            raise MetricError(f"unknown zero_division policy {zero_division!r}")
    means = {}
    stds = {}
    for name in METRIC_ORDER:
        values = np.array([row[name] for row in per_tile], dtype=np.float64)
        values = values[~np.isnan(values)]
        if values.size == 0:
            means[name] = math.nan
            stds[name] = math.nan
        else:
            means[name] = float(values.mean())
            stds[name] = float(values.std())  # population std
    return MetricReport(
        mean=MetricSet(**means),
        std=MetricSet(**stds),
        total=total,
        n_tiles=len(tile_counts),
    )


@dataclass
class RegionwiseReport:
    """Total metrics per region and their summary statistics across regions."""

    per_region: dict[str, MetricSet]
    summary: dict[str, dict[str, float]]  # metric -> {mean, std, min, max, median}
    water_pixels: dict[str, int]

    def as_dict(self) -> dict:
        return {
            "per_region": {r: m.as_dict() for r, m in self.per_region.items()},
            "summary": self.summary,
            "water_pixels": self.water_pixels,
        }


def regionwise(tile_counts: Sequence[TileCounts], zero_division: float = 1.0) -> RegionwiseReport:
    """Merge counts within each region, evaluate totals, summarize across regions."""
    if not tile_counts:
        raise MetricError("regionwise on empty tile list")
    by_region: dict[str, ConfusionCounts] = {}
    for _, region, c in tile_counts:
        by_region[region] = by_region.get(region, ConfusionCounts()).merge(c)
    per_region = {
        region: metric_set(c, zero_division=zero_division)
        for region, c in sorted(by_region.items())
    }
    summary = {}
    for name in METRIC_ORDER:
        values = np.array([m.value(name) for m in per_region.values()], dtype=np.float64)
        summary[name] = {
            "mean": float(values.mean()),
            "std": float(values.std()),
            "min": float(values.min()),
            "max": float(values.max()),
            "median": float(np.median(values)),
        }
    water = {region: c.water_pixels for region, c in sorted(by_region.items())}
    return RegionwiseReport(per_region=per_region, summary=summary, water_pixels=water)


def _midranks(x: np.ndarray) -> np.ndarray:
    order = np.argsort(x, kind="mergesort")
    ranks = np.empty(x.size, dtype=np.float64)
    i = 0
    while i < x.size:
        j = i
        while j + 1 < x.size and x[order[j + 1]] == x[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def correlation_test(x: Sequence[float], y: Sequence[float], kind: str = "pearson") -> tuple[float, float]:
    """Pearson or Spearman coefficient with a two-sided t-approximation p-value.

    Spearman is Pearson on midranks. The p-value uses the t statistic
    ``r * sqrt((n-2) / (1-r^2))`` with n-2 degrees of freedom.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise MetricError("correlation inputs must be 1-D of equal length")
    n = x.size
    if n < 3:
        raise MetricError("correlation needs at least 3 points")
    kind = kind.lower()
    if kind == "spearman":
        x = _midranks(x)
        y = _midranks(y)
    elif kind != "pearson":
        raise MetricError(f"unknown correlation kind {kind!r}")
    xc = x - x.mean()
    yc = y - y.mean()
    sx2 = float(xc @ xc)
    sy2 = float(yc @ yc)
    if sx2 == 0.0 or sy2 == 0.0:
        raise MetricError("degenerate variance in correlation input")
    r = float(xc @ yc) / math.sqrt(sx2 * sy2)
    r = max(-1.0, min(1.0, r))
    if abs(r) >= 1.0:
        return r, 0.0
    t = r * math.sqrt((n - 2) / (1.0 - r * r))
    p = 2.0 * float(_sstats.t.sf(abs(t), n - 2))
    return r, p


# --- report serialization -------------------------------------------------

CSV_COLUMNS = tuple(
    f"{metric}_{qualifier}" for metric in METRIC_ORDER for qualifier in ("mean", "std", "total")
)


def report_to_json(report: MetricReport) -> str:
    return json.dumps(report.as_dict(), indent=2, sort_keys=True)


def report_csv_row(report: MetricReport) -> dict[str, str]:
    row = {}
    for metric in METRIC_ORDER:
        for qualifier in ("mean", "std", "total"):
            row[f"{metric}_{qualifier}"] = f"{report.value(qualifier, metric):.6f}"
    return row


def reports_to_csv(rows: Sequence[tuple[dict[str, str], MetricReport]]) -> str:
    """CSV text for labelled reports; ``rows`` pairs a key-column dict with a report."""
    if not rows:
        raise MetricError("no reports to serialize")
    key_columns = list(rows[0][0].keys())
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=key_columns + list(CSV_COLUMNS), lineterminator="\n")
    writer.writeheader()
    for keys, report in rows:
        row = dict(keys)
        row.update(report_csv_row(report))
        writer.writerow(row)
    return buf.getvalue()


def regionwise_to_csv(report: RegionwiseReport) -> str:
    """Per-region totals plus the cross-region summary rows."""
    stat_names = ("mean", "std", "min", "max", "median")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["row", "region_or_stat", "water_pixels"] + list(METRIC_ORDER))
    for region, mset in report.per_region.items():
        writer.writerow(
            ["region", region, report.water_pixels[region]]
            + [f"{mset.value(m):.6f}" for m in METRIC_ORDER]
        )
    for stat in stat_names:
        writer.writerow(
            ["summary", stat, ""]
            + [f"{report.summary[m][stat]:.6f}" for m in METRIC_ORDER]
        )
    return buf.getvalue()
