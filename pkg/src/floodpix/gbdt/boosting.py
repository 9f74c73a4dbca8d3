"""Forward-stagewise boosting of leaf-wise histogram trees.

The model is an additive log-odds ensemble: margin(x) = base_score +
learning_rate * sum of tree outputs, with base_score the clamped training
log-odds of the water class. Each iteration draws a seeded per-iteration
subsample without replacement, evaluates the logistic gradient/hessian at
the current margins and grows one tree.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .binning import DEFAULT_MAX_BINS, bin_features
from .kernels import tree_outputs_codes, tree_outputs_raw
from .tree import TreeArrays, TreeError, grow_tree_leafwise

GBDT_FORMAT_VERSION = 1
BASE_SCORE_CLAMP = 10.0


@dataclass
class GBDTParams:
    n_trees: int = 200
    max_leaves: int = 128
    lambda_: float = 1.0
    learning_rate: float = 0.1
    subsample_size: int | None = None  # None: use every row each iteration
    max_bins: int = DEFAULT_MAX_BINS

    def as_dict(self) -> dict:
        return {
            "n_trees": self.n_trees,
            "max_leaves": self.max_leaves,
            "lambda_": self.lambda_,
            "learning_rate": self.learning_rate,
            "subsample_size": self.subsample_size,
            "max_bins": self.max_bins,
        }


@dataclass
class GBDTModel:
    params: GBDTParams
    base_score: float
    trees: list[TreeArrays]
    edges: list[np.ndarray]
    n_features: int
    seed: int
    train_losses: list[float] = field(default_factory=list)  # mean log-loss per iteration

    @property
    def n_trees(self) -> int:
        return len(self.trees)


def logistic_grad_hess(margins: np.ndarray, labels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Gradient p - y and hessian p(1-p) of the log loss at the margins."""
    margins = np.asarray(margins, dtype=np.float64)
    if not np.isfinite(margins).all():
        raise TreeError("non-finite margins")
    p = _sigmoid(margins)
    y = np.asarray(labels, dtype=np.float64)
    return p - y, p * (1.0 - p)


def _sigmoid(m: np.ndarray) -> np.ndarray:
    out = np.empty_like(m)
    pos = m >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-m[pos]))
    em = np.exp(m[~pos])
    out[~pos] = em / (1.0 + em)
    return out


def _log_loss(margins: np.ndarray, labels: np.ndarray) -> float:
    # -[y log p + (1-y) log(1-p)] written via logaddexp for stability.
    y = np.asarray(labels, dtype=np.float64)
    return float(np.mean(np.logaddexp(0.0, -margins) * y + np.logaddexp(0.0, margins) * (1.0 - y)))


def fit_gbdt(
    values: np.ndarray,
    labels: np.ndarray,
    params: GBDTParams | None = None,
    seed: int = 0,
    use_numba: bool | None = None,
) -> GBDTModel:
    """Fit the boosted ensemble on (N, d) float features and 0/1 labels."""
    params = params or GBDTParams()
    values = np.ascontiguousarray(values, dtype=np.float32)
    y = np.asarray(labels).astype(np.int64)
    if values.ndim != 2 or y.shape != (values.shape[0],):
        raise TreeError("expected values (N, d) with matching label vector")
    n = values.shape[0]
    n_water = int(y.sum())
    n_dry = n - n_water
    if n_water == 0 or n_dry == 0:
        raise TreeError("training data contains a single class")
    bins = bin_features(values, max_bins=params.max_bins, seed=seed)
    base_score = float(np.clip(np.log(n_water / n_dry), -BASE_SCORE_CLAMP, BASE_SCORE_CLAMP))
    margins = np.full(n, base_score, dtype=np.float64)
    y_float = y.astype(np.float64)
    rng = np.random.default_rng(seed)
    subsample = params.subsample_size
    trees: list[TreeArrays] = []
    losses: list[float] = []
    for _ in range(params.n_trees):
        if subsample is not None and subsample < n:
            rows = np.sort(rng.choice(n, size=subsample, replace=False))
        else:
            rows = np.arange(n, dtype=np.int64)
        grad, hess = logistic_grad_hess(margins, y_float)
        tree = grow_tree_leafwise(
            rows, grad, hess, bins, params.max_leaves, params.lambda_, use_numba=use_numba
        )
        trees.append(tree)
        margins += params.learning_rate * tree_outputs_codes(tree, bins.codes, use_numba=use_numba)
        losses.append(_log_loss(margins, y_float))
    return GBDTModel(
        params=params,
        base_score=base_score,
        trees=trees,
        edges=bins.edges,
        n_features=values.shape[1],
        seed=seed,
        train_losses=losses,
    )


def predict_margins(model: GBDTModel, values: np.ndarray, use_numba: bool | None = None) -> np.ndarray:
    values = np.asarray(values)
    if values.ndim != 2 or values.shape[1] != model.n_features:
        raise TreeError(
            f"feature width {values.shape[1] if values.ndim == 2 else '?'}"
            f" does not match model ({model.n_features})"
        )
    margins = np.full(values.shape[0], model.base_score, dtype=np.float64)
    for tree in model.trees:
        margins += model.params.learning_rate * tree_outputs_raw(tree, values, use_numba=use_numba)
    return margins


def predict_gbdt(model: GBDTModel, values: np.ndarray, use_numba: bool | None = None) -> np.ndarray:
    """Hard labels; water wherever the margin is positive."""
    return (predict_margins(model, values, use_numba=use_numba) > 0).astype(np.uint8)


def model_to_json(model: GBDTModel) -> str:
    doc = {
        "format_version": GBDT_FORMAT_VERSION,
        "model": "gbdt",
        "params": model.params.as_dict(),
        "base_score": model.base_score,
        "n_features": model.n_features,
        "seed": model.seed,
        "edges": [e.tolist() for e in model.edges],
        "trees": [t.to_dict() for t in model.trees],
        "train_losses": model.train_losses,
    }
    return json.dumps(doc, indent=2, sort_keys=True)


def model_from_json(text: str) -> GBDTModel:
    doc = json.loads(text)
    if doc.get("format_version") != GBDT_FORMAT_VERSION or doc.get("model") != "gbdt":
        raise TreeError("not a supported gbdt model document")
    params = GBDTParams(**doc["params"])
    return GBDTModel(
        params=params,
        base_score=doc["base_score"],
        trees=[TreeArrays.from_dict(t) for t in doc["trees"]],
        edges=[np.asarray(e, dtype=np.float64) for e in doc["edges"]],
        n_features=doc["n_features"],
        seed=doc["seed"],
        train_losses=list(doc["train_losses"]),
    )


def save_gbdt(model: GBDTModel, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(model_to_json(model))
    return path


def load_gbdt(path: Path) -> GBDTModel:
    return model_from_json(Path(path).read_text())
