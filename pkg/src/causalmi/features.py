"""Derived trace variables: generalization gaps, bias/variance, centroid distance.

The bias/variance estimators work on an ensemble of ``n`` models trained on
different draws of the training set, each predicting a ``c``-vector for the
same ``m`` samples.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import Dataset, DatasetError, load_traces

__all__ = [
    "PredictionBatch",
    "BiasVariance",
    "gap",
    "mse_loss",
    "mse_variance",
    "mse_bias",
    "mse_decompose",
    "ce_decompose",
    "centroid_distance",
    "average_over_splits",
    "derive_trace_columns",
    "load_predictions",
]

PROB_FLOOR = 1e-12
KINDS = ("probability", "log_probability", "real")


@dataclass(frozen=True)
class PredictionBatch:
    """Ensemble predictions.

    ``predictions`` has shape ``(n_models, n_samples, n_classes)``;
    ``labels`` is the one-hot ground truth, shape ``(n_samples, n_classes)``.
    """

    predictions: np.ndarray
    labels: np.ndarray
    kind: str = "probability"

    def __post_init__(self):
        preds = np.asarray(self.predictions, dtype=float)
        labels = np.asarray(self.labels, dtype=float)
        if preds.ndim != 3:
            raise ValueError(f"predictions must be 3-d (model, sample, class), got {preds.shape}")
        if labels.shape != preds.shape[1:]:
            raise ValueError(f"labels shape {labels.shape} does not match {preds.shape[1:]}")
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}")
        if not np.all(np.isfinite(labels)) or not np.all((labels == 0) | (labels == 1)):
            raise ValueError("labels must be exact one-hot rows")
        if not np.all(labels.sum(axis=1) == 1):
            raise ValueError("labels must be exact one-hot rows")
        if self.kind == "probability":
            if np.any(preds < 0) or not np.allclose(preds.sum(axis=2), 1.0, atol=1e-6, rtol=0):
                raise ValueError("probability predictions must be non-negative and sum to 1")
        elif self.kind == "log_probability":
            if np.any(preds > 1e-9):
                raise ValueError("log-probabilities must be <= 0")
        elif not np.all(np.isfinite(preds)):
            raise ValueError("predictions must be finite")
        object.__setattr__(self, "predictions", preds)
        object.__setattr__(self, "labels", labels)

    @property
    def n_models(self) -> int:
        return self.predictions.shape[0]

    @property
    def n_samples(self) -> int:
        return self.predictions.shape[1]

    @property
    def n_classes(self) -> int:
        return self.predictions.shape[2]

    def log_probs(self, floor: float = PROB_FLOOR) -> np.ndarray:
        if self.kind == "log_probability":
            return np.maximum(self.predictions, np.log(floor))
        if self.kind == "probability":
            return np.log(np.maximum(self.predictions, floor))
        raise ValueError("log-probabilities are undefined for real-valued outputs")

    def probs(self) -> np.ndarray:
        if self.kind == "log_probability":
            return np.exp(self.predictions)
        return self.predictions


@dataclass(frozen=True)
class BiasVariance:
    bias: float
    variance: float
    loss: float


def gap(minuend, subtrahend) -> np.ndarray:
    """Elementwise ``minuend - subtrahend`` (AccDiff, LossDiff)."""
    a = np.asarray(minuend, dtype=float)
    b = np.asarray(subtrahend, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    return a - b


def mse_loss(batch: PredictionBatch) -> float:
    """Mean over models and samples of the squared error to the one-hot label."""
    err = batch.probs() - batch.labels[None, :, :]
    return float(np.mean(np.sum(err**2, axis=2)))


def mse_variance(batch: PredictionBatch, estimator: str = "unbiased") -> float:
    """Spread of the ensemble around its mean prediction, averaged over samples.

    ``unbiased`` divides the per-sample sum of squared deviations by ``n - 1``,
    ``population`` by ``n``.
    """
    n = batch.n_models
    if estimator == "unbiased":
        if n < 2:
            raise ValueError("unbiased variance needs at least 2 models")
        denom = n - 1
    elif estimator == "population":
        if n < 1:
            raise ValueError("empty ensemble")
        denom = n
    else:
        raise ValueError(f"unknown estimator {estimator!r}")
    f = batch.probs()
    dev = f - f.mean(axis=0, keepdims=True)
    per_sample = np.sum(dev**2, axis=(0, 2)) / denom
    return float(per_sample.mean())


def mse_bias(loss: float, variance: float) -> float:
    """Bias as loss minus variance. Not clamped; can be negative."""
    return float(loss) - float(variance)


def mse_decompose(batch: PredictionBatch, estimator: str = "unbiased") -> BiasVariance:
    loss = mse_loss(batch)
    var = mse_variance(batch, estimator)
    return BiasVariance(bias=mse_bias(loss, var), variance=var, loss=loss)


def ce_decompose(batch: PredictionBatch, floor: float | None = PROB_FLOOR) -> BiasVariance:
    """Cross-entropy decomposition around the normalized geometric-mean prediction.

    With ``pi_hat`` proportional to ``exp(mean_j log pi_j)``: bias is
    ``KL(label || pi_hat)``, variance is ``mean_j KL(pi_hat || pi_j)`` and
    their sum equals the mean cross-entropy for one-hot labels.
    """
    if floor is None:
        with np.errstate(divide="ignore"):
            logp = batch.predictions if batch.kind == "log_probability" else np.log(batch.predictions)
        if np.any(np.isneginf(logp[:, batch.labels.astype(bool)])):
            raise ValueError("zero probability at the true class")
        logp = np.maximum(logp, np.log(np.finfo(float).tiny))
    else:
        logp = batch.log_probs(floor=floor)
    mean_log = logp.mean(axis=0)
    shift = mean_log.max(axis=1, keepdims=True)
    log_z = shift[:, 0] + np.log(np.exp(mean_log - shift).sum(axis=1))
    log_hat = mean_log - log_z[:, None]
    pi_hat = np.exp(log_hat)

    y = batch.labels.astype(bool)
    bias = -log_hat[y]
    variance = np.sum(pi_hat[None] * (log_hat[None] - logp), axis=2).mean(axis=0)
    loss = -logp[:, y].mean(axis=0)
    return BiasVariance(bias=float(bias.mean()), variance=float(variance.mean()), loss=float(loss.mean()))


def centroid_distance(member_preds, nonmember_preds) -> float:
    """Euclidean distance between the mean member and non-member predictions."""
    a = np.atleast_2d(np.asarray(member_preds, dtype=float))
    b = np.atleast_2d(np.asarray(nonmember_preds, dtype=float))
    if a.size == 0 or b.size == 0:
        raise ValueError("empty prediction matrix")
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"class counts differ: {a.shape[1]} vs {b.shape[1]}")
    return float(np.linalg.norm(a.mean(axis=0) - b.mean(axis=0)))


def average_over_splits(values, expected_count: int = 3) -> float:
    values = np.asarray(values, dtype=float).ravel()
    if values.size != expected_count:
        raise ValueError(f"expected {expected_count} split values, got {values.size}")
    return float(values.mean())


# (derived column, minuend, subtrahend)
DERIVED_COLUMNS = (
    ("AccDiff", "TrainAcc", "TestAcc"),
    ("LossDiff", "TestLoss", "TrainLoss"),
    ("TrainBias", "TrainLoss", "TrainVar"),
    ("TestBias", "TestLoss", "TestVar"),
)


def derive_trace_columns(d: Dataset, overwrite: bool = False) -> tuple[Dataset, list[str]]:
    """Append every derivable gap/bias column; returns the names added."""
    added = []
    for name, left, right in DERIVED_COLUMNS:
        if left in d and right in d and (overwrite or name not in d):
            d = d.with_column(name, gap(d.column(left), d.column(right)))
            added.append(name)
    return d, added


def load_predictions(predictions_path, labels_path, kind: str = "probability") -> PredictionBatch:
    """Read a long-format prediction CSV and its label file.

    Predictions: ``model_id,sample_id,class_0,...,class_{c-1}``, one row per
    (model, sample). Labels: ``sample_id,label`` with an integer class index.
    """
    preds = load_traces(predictions_path)
    labels = load_traces(labels_path)
    for col in ("model_id", "sample_id"):
        if col not in preds:
            raise DatasetError(f"{predictions_path}: missing column {col!r}")
    class_cols = [c for c in preds.columns if c.startswith("class_")]
    expected = [f"class_{i}" for i in range(len(class_cols))]
    if not class_cols or class_cols != expected:
        raise DatasetError(f"{predictions_path}: class columns must be class_0..class_{{c-1}}")
    if labels.columns[:2] != ("sample_id", "label"):
        raise DatasetError(f"{labels_path}: expected columns sample_id,label")

    models = np.unique(preds.column("model_id"))
    samples = np.unique(labels.column("sample_id"))
    c = len(class_cols)
    if samples.size != labels.n_rows:
        raise DatasetError(f"{labels_path}: duplicate sample_id")
    tensor = np.full((models.size, samples.size, c), np.nan)
    mi = np.searchsorted(models, preds.column("model_id"))
    si = np.searchsorted(samples, preds.column("sample_id"))
    bad = (si >= samples.size) | (samples[np.minimum(si, samples.size - 1)] != preds.column("sample_id"))
    if np.any(bad):
        raise DatasetError(f"{predictions_path}: sample_id without a label")
    values = preds.select(class_cols).rows
    tensor[mi, si] = values
    if np.isnan(tensor).any() or len(set(zip(mi, si))) != preds.n_rows:
        raise DatasetError(f"{predictions_path}: every model must predict every sample exactly once")

    label_idx = labels.column("label")
    if np.any(label_idx != np.round(label_idx)) or np.any((label_idx < 0) | (label_idx >= c)):
        raise DatasetError(f"{labels_path}: labels must be class indices in [0, {c})")
    order = np.argsort(labels.column("sample_id"))
    onehot = np.zeros((samples.size, c))
    onehot[np.arange(samples.size), label_idx[order].astype(int)] = 1.0
    return PredictionBatch(tensor, onehot, kind=kind)


def write_predictions(batch: PredictionBatch, predictions_path, labels_path) -> None:
    """Inverse of :func:`load_predictions`, with ids ``0..n-1``."""
    from .dataset import format_float

    with Path(predictions_path).open("w", encoding="utf-8") as fh:
        fh.write(",".join(["model_id", "sample_id"] + [f"class_{i}" for i in range(batch.n_classes)]) + "\n")
        for j in range(batch.n_models):
            for x in range(batch.n_samples):
                vals = [str(j), str(x)] + [format_float(v) for v in batch.predictions[j, x]]
                fh.write(",".join(vals) + "\n")
    with Path(labels_path).open("w", encoding="utf-8") as fh:
        fh.write("sample_id,label\n")
        for x, row in enumerate(batch.labels):
            fh.write(f"{x},{int(np.argmax(row))}\n")
