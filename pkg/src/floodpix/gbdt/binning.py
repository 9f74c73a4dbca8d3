"""Quantile feature binning for the histogram tree grower.

Each feature gets at most ``max_bins`` bins delimited by strictly
increasing interior edges. Features with few distinct values use the
midpoints between consecutive distinct values, so a two-valued feature
splits exactly between its values; continuous features use quantile-spaced
edges computed on a seeded subsample. A row falls into bin
``searchsorted(edges, x, side="right")``, i.e. going left at bin b means
``x < edges[b]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_MAX_BINS = 256
DEFAULT_SAMPLE_LIMIT = 1 << 20


class BinningError(Exception):
    pass


@dataclass
class BinIndex:
    edges: list[np.ndarray]  # per feature, float64, strictly increasing
    codes: np.ndarray  # uint8, feature-major (d, N)
    n_bins: np.ndarray  # int64, per feature
    max_bins: int

    @property
    def n_features(self) -> int:
        return self.codes.shape[0]

    @property
    def n_rows(self) -> int:
        return self.codes.shape[1]


def _column_edges(column: np.ndarray, sample: np.ndarray, max_bins: int) -> np.ndarray:
    distinct = np.unique(sample)
    if distinct.size <= 1:
        return np.empty(0, dtype=np.float64)
    if distinct.size <= max_bins:
        return ((distinct[:-1] + distinct[1:]) / 2.0).astype(np.float64)
    quantiles = np.arange(1, max_bins, dtype=np.float64) / max_bins
    edges = np.quantile(sample.astype(np.float64), quantiles)
    return np.unique(edges)


def bin_column(column: np.ndarray, edges: np.ndarray) -> np.ndarray:
    return np.searchsorted(edges, column.astype(np.float64), side="right").astype(np.uint8)


def bin_features(
    values: np.ndarray,
    max_bins: int = DEFAULT_MAX_BINS,
    sample_limit: int = DEFAULT_SAMPLE_LIMIT,
    seed: int = 0,
) -> BinIndex:
    """Compute edges and per-row bin codes for every feature column."""
    if not 2 <= max_bins <= 256:
        raise BinningError("max_bins must lie in [2, 256]")
    values = np.asarray(values)
    if values.ndim != 2:
        raise BinningError("expected a (N, d) feature matrix")
    n, d = values.shape
    if n > sample_limit:
        rng = np.random.default_rng(seed)
        sample_rows = np.sort(rng.choice(n, size=sample_limit, replace=False))
    else:
        sample_rows = slice(None)
    edges = []
    codes = np.empty((d, n), dtype=np.uint8)
    n_bins = np.empty(d, dtype=np.int64)
    for f in range(d):
        column = values[:, f]
        col_edges = _column_edges(column, np.asarray(column[sample_rows], dtype=np.float64), max_bins)
        edges.append(col_edges)
        codes[f] = bin_column(column, col_edges)
        n_bins[f] = col_edges.size + 1
    return BinIndex(edges=edges, codes=codes, n_bins=n_bins, max_bins=max_bins)
