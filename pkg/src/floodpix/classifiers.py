"""Gaussian Naive Bayes, LDA, QDA and a plain-SGD linear model.

All four share a train/predict contract: binary labels (0=dry, 1=water),
float32 feature rows, deterministic fits given (data, hyperparameters,
seed), and versioned JSON serialization. The Bayes family is fitted in
closed form from class moments; the linear model runs non-batchwise SGD
with a reduce-on-plateau learning-rate schedule.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .accel import jit_kernel, resolve_use_numba

MODEL_FORMAT_VERSION = 1

SGD_LOSSES = ("hinge", "logistic", "modified_huber")
_LOSS_IDS = {name: i for i, name in enumerate(SGD_LOSSES)}


class FitError(Exception):
    pass


def _validate_training_data(values, labels):
    values = np.ascontiguousarray(values, dtype=np.float64)
    labels = np.asarray(labels)
    if values.ndim != 2 or labels.shape != (values.shape[0],):
        raise FitError("expected values (N, d) with matching label vector")
    if values.shape[0] == 0:
        raise FitError("empty training data")
    if not np.isfinite(values).all():
        raise FitError("non-finite feature values")
    y = labels.astype(np.int64)
    if not np.isin(y, (0, 1)).all():
        raise FitError("labels must be 0 (dry) or 1 (water)")
    if y.min() == y.max():
        raise FitError("training data contains a single class")
    return values, y


def _class_moments(values, y):
    means = np.stack([values[y == k].mean(axis=0) for k in (0, 1)])
    priors = np.array([np.count_nonzero(y == k) / y.size for k in (0, 1)])
    return means, priors


@dataclass
class GaussianNBModel:
    priors: np.ndarray  # (2,)
    means: np.ndarray  # (2, d)
    variances: np.ndarray  # (2, d), floored > 0

    @property
    def n_features(self) -> int:
        return self.means.shape[1]


@dataclass
class LDAModel:
    priors: np.ndarray
    means: np.ndarray
    covariance: np.ndarray  # (d, d) shrunk pooled covariance
    shrinkage: float

    @property
    def n_features(self) -> int:
        return self.means.shape[1]


@dataclass
class QDAModel:
    priors: np.ndarray
    means: np.ndarray  # (2, d) in standardized space
    covariances: np.ndarray  # (2, d, d) regularized, standardized space
    regularization: float
    feature_mean: np.ndarray  # (d,)
    feature_scale: np.ndarray  # (d,)

    @property
    def n_features(self) -> int:
        return self.means.shape[1]


@dataclass
class SGDSchedule:
    initial_rate: float = 0.01
    decay: float = 0.5
    patience: int = 2
    min_epochs: int = 5
    max_epochs: int = 20
    min_rate: float = 1e-6


@dataclass
class LinearSGDModel:
    weights: np.ndarray  # (d,)
    bias: float
    loss: str
    l2_alpha: float
    class_weights: np.ndarray  # (2,)
    learning_rate: float  # final schedule state
    plateau_count: int
    epochs_run: int
    seed: int
    schedule: SGDSchedule = field(default_factory=SGDSchedule)

    @property
    def n_features(self) -> int:
        return self.weights.shape[0]


def fit_bayes(kind: str, values, labels, hyper: float = 0.0):
    """Closed-form fit of one Bayes-family model.

    ``hyper`` is the LDA shrinkage rho or the QDA covariance
    regularization r; Gaussian NB takes no hyperparameter.
    """
    values, y = _validate_training_data(values, labels)
    n, d = values.shape
    kind = kind.lower()
    if kind in ("nb", "naive_bayes"):
        means, priors = _class_moments(values, y)
        variances = np.stack([values[y == k].var(axis=0) for k in (0, 1)])
        eps = 1e-9 * max(float(values.var(axis=0).max()), 1e-30)
        return GaussianNBModel(priors=priors, means=means, variances=variances + eps)
    if n <= d:
        raise FitError(f"need more samples than features for {kind} (N={n}, d={d})")
    if kind == "lda":
        rho = float(hyper)
        if not 0.0 <= rho <= 1.0:
            raise FitError("LDA shrinkage must lie in [0, 1]")
        means, priors = _class_moments(values, y)
        pooled = np.zeros((d, d))
        for k in (0, 1):
            xc = values[y == k] - means[k]
            pooled += (xc.T @ xc) / n
        shrunk = (1.0 - rho) * pooled + rho * (np.trace(pooled) / d) * np.eye(d)
        shrunk = 0.5 * (shrunk + shrunk.T)
        try:
            np.linalg.cholesky(shrunk)
        except np.linalg.LinAlgError:
            raise FitError("singular pooled covariance; increase shrinkage") from None
        return LDAModel(priors=priors, means=means, covariance=shrunk, shrinkage=rho)
    if kind == "qda":
        r = float(hyper)
        if r < 0.0:
            raise FitError("QDA regularization must be >= 0")
        mu = values.mean(axis=0)
        scale = values.std(axis=0)
        scale = np.where(scale > 0, scale, 1.0)
        std_values = (values - mu) / scale
        means, priors = _class_moments(std_values, y)
        covariances = np.empty((2, d, d))
        for k in (0, 1):
            xc = std_values[y == k] - means[k]
            cov = (xc.T @ xc) / np.count_nonzero(y == k)
            cov = (1.0 - r) * cov + r * np.eye(d)
            covariances[k] = 0.5 * (cov + cov.T)
            try:
                np.linalg.cholesky(covariances[k])
            except np.linalg.LinAlgError:
                raise FitError(
                    f"class {k} covariance not positive definite at regularization {r}"
                ) from None
        return QDAModel(
            priors=priors,
            means=means,
            covariances=covariances,
            regularization=r,
            feature_mean=mu,
            feature_scale=scale,
        )
    raise FitError(f"unknown Bayes model kind {kind!r}")


# --- SGD ------------------------------------------------------------------


def _sgd_epoch_loop(values, targets, cweights, order, w, bias_box, lr, alpha, loss_id):
    # One pass of single-sample updates in the given order; returns summed
    # weighted data loss. L2 enters through a proximal shrink, which stays
    # stable for arbitrarily large lr * alpha.
    n_features = values.shape[1]
    total_loss = 0.0
    b = bias_box[0]
    for idx in order:
        x = values[idx]
        yi = targets[idx]
        cw = cweights[idx]
        score = b
        for j in range(n_features):
            score += w[j] * x[j]
        m = yi * score
        if loss_id == 0:  # hinge
            loss = 1.0 - m if m < 1.0 else 0.0
            dl = -yi if m < 1.0 else 0.0
        elif loss_id == 1:  # logistic
            if m > 35.0:
                loss = 0.0
            elif m < -35.0:
                loss = -m
            else:
                loss = math.log1p(math.exp(-m))
            if m >= 0.0:
                dl = -yi * math.exp(-m) / (1.0 + math.exp(-m))
            else:
                dl = -yi / (1.0 + math.exp(m))
        else:  # modified huber
            if m >= 1.0:
                loss = 0.0
                dl = 0.0
            elif m >= -1.0:
                loss = (1.0 - m) * (1.0 - m)
                dl = -2.0 * (1.0 - m) * yi
            else:
                loss = -4.0 * m
                dl = -4.0 * yi
        g = cw * dl
        shrink = 1.0 + lr * alpha
        for j in range(n_features):
            w[j] = (w[j] - lr * g * x[j]) / shrink
        b = b - lr * g
        total_loss += cw * loss
    bias_box[0] = b
    return total_loss


_sgd_epoch_jit = jit_kernel(_sgd_epoch_loop)


def fit_sgd(
    values,
    labels,
    loss: str = "logistic",
    l2_alpha: float = 1e-4,
    rebalance: bool = False,
    seed: int = 0,
    schedule: SGDSchedule | None = None,
    use_numba: bool | None = None,
) -> LinearSGDModel:
    """Train the linear model with seeded single-sample SGD."""
    values, y = _validate_training_data(values, labels)
    if loss not in _LOSS_IDS:
        raise FitError(f"unknown SGD loss {loss!r}; choose from {SGD_LOSSES}")
    schedule = schedule or SGDSchedule()
    n, d = values.shape
    targets = np.where(y == 1, 1.0, -1.0)
    if rebalance:
        counts = np.array([np.count_nonzero(y == k) for k in (0, 1)], dtype=np.float64)
        class_weights = n / (2.0 * counts)
    else:
        class_weights = np.ones(2)
    cweights = class_weights[y]
    w = np.zeros(d)
    bias_box = np.zeros(1)
    rng = np.random.default_rng(seed)
    epoch_fn = _sgd_epoch_jit if resolve_use_numba(use_numba) else _sgd_epoch_loop

    lr = schedule.initial_rate
    best_loss = math.inf
    plateau = 0
    epochs_run = 0
    for epoch in range(schedule.max_epochs):
        order = rng.permutation(n).astype(np.int64)
        total = epoch_fn(values, targets, cweights, order, w, bias_box, lr, l2_alpha, _LOSS_IDS[loss])
        epochs_run = epoch + 1
        if not (math.isfinite(total) and np.isfinite(w).all() and math.isfinite(bias_box[0])):
            raise FitError(
                f"SGD diverged at epoch {epochs_run} (loss={total!r}); lower the learning rate"
            )
        mean_loss = total / n
        if mean_loss < best_loss - 1e-12:
            best_loss = mean_loss
            plateau = 0
        else:
            plateau += 1
            if plateau >= schedule.patience:
                lr *= schedule.decay
                plateau = 0
        if epochs_run >= schedule.min_epochs and lr < schedule.min_rate:
            break
    return LinearSGDModel(
        weights=w,
        bias=float(bias_box[0]),
        loss=loss,
        l2_alpha=l2_alpha,
        class_weights=class_weights,
        learning_rate=lr,
        plateau_count=plateau,
        epochs_run=epochs_run,
        seed=seed,
        schedule=schedule,
    )


# --- prediction -----------------------------------------------------------


def _check_width(model, values) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2 or values.shape[1] != model.n_features:
        raise FitError(
            f"feature width {values.shape[1] if values.ndim == 2 else '?'} does not match model ({model.n_features})"
        )
    return values


def _log_posteriors(model, values) -> np.ndarray:
    """Unnormalized class log posteriors, shape (N, 2)."""
    x = _check_width(model, values)
    scores = np.empty((x.shape[0], 2))
    if isinstance(model, GaussianNBModel):
        for k in (0, 1):
            diff = x - model.means[k]
            scores[:, k] = (
                math.log(model.priors[k])
                - 0.5 * np.sum(np.log(2.0 * np.pi * model.variances[k]))
                - 0.5 * np.sum(diff * diff / model.variances[k], axis=1)
            )
        return scores
    if isinstance(model, LDAModel):
        solve = np.linalg.solve
        for k in (0, 1):
            coef = solve(model.covariance, model.means[k])
            scores[:, k] = x @ coef - 0.5 * model.means[k] @ coef + math.log(model.priors[k])
        return scores
    if isinstance(model, QDAModel):
        xs = (x - model.feature_mean) / model.feature_scale
        for k in (0, 1):
            chol = np.linalg.cholesky(model.covariances[k])
            diff = xs - model.means[k]
            z = np.linalg.solve(chol, diff.T)
            logdet = 2.0 * np.sum(np.log(np.diag(chol)))
            scores[:, k] = math.log(model.priors[k]) - 0.5 * logdet - 0.5 * np.sum(z * z, axis=0)
        return scores
    if isinstance(model, LinearSGDModel):
        margin = x @ model.weights + model.bias
        # Logistic squashing of the margin; a surrogate posterior for the
        # margin losses.
        scores[:, 1] = -np.logaddexp(0.0, -margin)
        scores[:, 0] = -np.logaddexp(0.0, margin)
        return scores
    raise FitError(f"unknown model type {type(model).__name__}")


def decision_scores(model, values) -> np.ndarray:
    """Water-vs-dry decision value per row (log-odds or linear margin)."""
    if isinstance(model, LinearSGDModel):
        x = _check_width(model, values)
        return x @ model.weights + model.bias
    scores = _log_posteriors(model, values)
    return scores[:, 1] - scores[:, 0]


def predict(model, values) -> np.ndarray:
    """Per-row hard labels, 1 = water."""
    return (decision_scores(model, values) > 0).astype(np.uint8)


def predict_proba(model, values) -> np.ndarray:
    """Per-row class posteriors, rows summing to 1."""
    scores = _log_posteriors(model, values)
    shift = scores.max(axis=1, keepdims=True)
    expd = np.exp(scores - shift)
    return expd / expd.sum(axis=1, keepdims=True)


# --- serialization ---------------------------------------------------------

_MODEL_TAGS = {
    GaussianNBModel: "naive_bayes",
    LDAModel: "lda",
    QDAModel: "qda",
    LinearSGDModel: "sgd",
}


def model_to_json(model) -> str:
    tag = _MODEL_TAGS.get(type(model))
    if tag is None:
        raise FitError(f"cannot serialize {type(model).__name__}")
    doc = {"format_version": MODEL_FORMAT_VERSION, "model": tag}
    if isinstance(model, LinearSGDModel):
        payload = asdict(model)
        payload["weights"] = model.weights.tolist()
        payload["class_weights"] = model.class_weights.tolist()
    else:
        payload = {
            key: (value.tolist() if isinstance(value, np.ndarray) else value)
            for key, value in asdict(model).items()
        }
    doc["payload"] = payload
    return json.dumps(doc, indent=2, sort_keys=True)


def model_from_json(text: str):
    doc = json.loads(text)
    if doc.get("format_version") != MODEL_FORMAT_VERSION:
        raise FitError(f"unsupported model format version {doc.get('format_version')!r}")
    tag = doc.get("model")
    payload = doc["payload"]
    if tag == "naive_bayes":
        return GaussianNBModel(
            priors=np.array(payload["priors"]),
            means=np.array(payload["means"]),
            variances=np.array(payload["variances"]),
        )
    if tag == "lda":
        return LDAModel(
            priors=np.array(payload["priors"]),
            means=np.array(payload["means"]),
            covariance=np.array(payload["covariance"]),
            shrinkage=payload["shrinkage"],
        )
    if tag == "qda":
        return QDAModel(
            priors=np.array(payload["priors"]),
            means=np.array(payload["means"]),
            covariances=np.array(payload["covariances"]),
            regularization=payload["regularization"],
            feature_mean=np.array(payload["feature_mean"]),
            feature_scale=np.array(payload["feature_scale"]),
        )
    if tag == "sgd":
        return LinearSGDModel(
            weights=np.array(payload["weights"]),
            bias=payload["bias"],
            loss=payload["loss"],
            l2_alpha=payload["l2_alpha"],
            class_weights=np.array(payload["class_weights"]),
            learning_rate=payload["learning_rate"],
            plateau_count=payload["plateau_count"],
            epochs_run=payload["epochs_run"],
            seed=payload["seed"],
            schedule=SGDSchedule(**payload["schedule"]),
        )
    raise FitError(f"unknown serialized model tag {tag!r}")


def save_model(model, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(model_to_json(model))
    return path


def load_model(path: Path):
    return model_from_json(Path(path).read_text())
