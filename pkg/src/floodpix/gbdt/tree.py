"""Leaf-wise (best-first) regression tree growth on binned features.

Every current leaf is a split candidate; the frontier leaf with the
highest second-order gain is expanded until ``max_leaves`` is reached or
no candidate has positive gain. Gains and leaf values use the Newton
form: gain = 1/2 [G_L^2/(H_L+lam) + G_R^2/(H_R+lam) - G^2/(H+lam)], leaf
value = -G/(H+lam). Equal gains fall to the lowest feature id, then the
lowest bin, then the earliest-created leaf.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

import numpy as np

from .binning import BinIndex
from .kernels import build_histograms, scan_best_split


class TreeError(Exception):
    pass


@dataclass
class TreeArrays:
    """Flattened binary tree; node 0 is the root."""

    feature: np.ndarray  # int32, -1 for leaves
    bin_threshold: np.ndarray  # int32, go left iff code <= threshold
    raw_threshold: np.ndarray  # float64, go left iff x < threshold
    left: np.ndarray  # int32
    right: np.ndarray  # int32
    leaf_value: np.ndarray  # float64, 0 for internal nodes
    is_leaf: np.ndarray  # bool
    gain: np.ndarray  # float64, split gain for internal nodes

    @property
    def n_nodes(self) -> int:
        return self.feature.shape[0]

    @property
    def n_leaves(self) -> int:
        return int(self.is_leaf.sum())

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "bin_threshold": self.bin_threshold.tolist(),
            "raw_threshold": self.raw_threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "leaf_value": self.leaf_value.tolist(),
            "is_leaf": self.is_leaf.tolist(),
            "gain": self.gain.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "TreeArrays":
        return cls(
            feature=np.asarray(doc["feature"], dtype=np.int32),
            bin_threshold=np.asarray(doc["bin_threshold"], dtype=np.int32),
            raw_threshold=np.asarray(doc["raw_threshold"], dtype=np.float64),
            left=np.asarray(doc["left"], dtype=np.int32),
            right=np.asarray(doc["right"], dtype=np.int32),
            leaf_value=np.asarray(doc["leaf_value"], dtype=np.float64),
            is_leaf=np.asarray(doc["is_leaf"], dtype=bool),
            gain=np.asarray(doc["gain"], dtype=np.float64),
        )


def find_best_split(rows, grad, hess, bins: BinIndex, lam: float, use_numba=None):
    """Best (feature, bin, gain) over all histogram candidates, or None.

    ``None`` means no candidate had positive gain or one child would be
    empty.
    """
    rows = np.asarray(rows, dtype=np.int64)
    if rows.size < 2:
        raise TreeError("need at least 2 rows to search for a split")
    hist_g, hist_h, hist_c = build_histograms(
        bins.codes, rows, grad, hess, bins.max_bins, use_numba=use_numba
    )
    f, b, gain = scan_best_split(hist_g, hist_h, hist_c, bins.n_bins, lam, use_numba=use_numba)
    if f < 0:
        return None
    return int(f), int(b), float(gain)


@dataclass(order=True)
class _Candidate:
    neg_gain: float
    tick: int
    node_id: int = field(compare=False)
    rows: np.ndarray = field(compare=False)
    split: tuple = field(compare=False)


class _Grower:
    def __init__(self, bins, grad, hess, lam, use_numba):
        self.bins = bins
        self.grad = grad
        self.hess = hess
        self.lam = lam
        self.use_numba = use_numba
        self.feature = [-1]
        self.bin_threshold = [-1]
        self.raw_threshold = [0.0]
        self.left = [-1]
        self.right = [-1]
        self.leaf_value = [0.0]
        self.is_leaf = [True]
        self.gain = [0.0]
        self.tick = 0

    def new_node(self) -> int:
        self.feature.append(-1)
        self.bin_threshold.append(-1)
        self.raw_threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.leaf_value.append(0.0)
        self.is_leaf.append(True)
        self.gain.append(0.0)
        return len(self.feature) - 1

    def set_leaf_value(self, node_id: int, rows: np.ndarray):
        g = float(self.grad[rows].sum())
        h = float(self.hess[rows].sum())
        den = h + self.lam
        self.leaf_value[node_id] = -g / den if den != 0.0 else 0.0

    def candidate(self, node_id: int, rows: np.ndarray):
        if rows.size < 2:
            return None
        split = find_best_split(rows, self.grad, self.hess, self.bins, self.lam, self.use_numba)
        if split is None:
            return None
        self.tick += 1
        return _Candidate(neg_gain=-split[2], tick=self.tick, node_id=node_id, rows=rows, split=split)

    def apply_split(self, cand: _Candidate) -> tuple[_Candidate | None, _Candidate | None]:
        f, b, gain = cand.split
        node = cand.node_id
        go_left = self.bins.codes[f, cand.rows] <= b
        left_rows = cand.rows[go_left]
        right_rows = cand.rows[~go_left]
        left_id = self.new_node()
        right_id = self.new_node()
        self.feature[node] = f
        self.bin_threshold[node] = b
        self.raw_threshold[node] = float(self.bins.edges[f][b])
        self.left[node] = left_id
        self.right[node] = right_id
        self.is_leaf[node] = False
        self.leaf_value[node] = 0.0
        self.gain[node] = gain
        self.set_leaf_value(left_id, left_rows)
        self.set_leaf_value(right_id, right_rows)
        return self.candidate(left_id, left_rows), self.candidate(right_id, right_rows)

    def finalize(self) -> TreeArrays:
        return TreeArrays(
            feature=np.asarray(self.feature, dtype=np.int32),
            bin_threshold=np.asarray(self.bin_threshold, dtype=np.int32),
            raw_threshold=np.asarray(self.raw_threshold, dtype=np.float64),
            left=np.asarray(self.left, dtype=np.int32),
            right=np.asarray(self.right, dtype=np.int32),
            leaf_value=np.asarray(self.leaf_value, dtype=np.float64),
            is_leaf=np.asarray(self.is_leaf, dtype=bool),
            gain=np.asarray(self.gain, dtype=np.float64),
        )


def grow_tree_leafwise(
    rows,
    grad,
    hess,
    bins: BinIndex,
    max_leaves: int,
    lam: float,
    use_numba=None,
) -> TreeArrays:
    """Grow one tree by repeatedly splitting the highest-gain frontier leaf."""
    if max_leaves < 2:
        raise TreeError("max_leaves must be >= 2")
    rows = np.asarray(rows, dtype=np.int64)
    if rows.size == 0:
        raise TreeError("cannot grow a tree on zero rows")
    grower = _Grower(bins, grad, hess, lam, use_numba)
    grower.set_leaf_value(0, rows)
    heap: list[_Candidate] = []
    root_cand = grower.candidate(0, rows)
    if root_cand is not None:
        heapq.heappush(heap, root_cand)
    n_leaves = 1
    while heap and n_leaves < max_leaves:
        cand = heapq.heappop(heap)
        if not -cand.neg_gain > 0.0:
            break
        left_cand, right_cand = grower.apply_split(cand)
        n_leaves += 1
        for child in (left_cand, right_cand):
            if child is not None:
                heapq.heappush(heap, child)
    return grower.finalize()
