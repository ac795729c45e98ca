"""Evaluation metrics: 1-D Wasserstein distance, discrete Frechet distance,
classification reports, the subject-leakage probe, and PCA projection."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Sequence, Tuple

import numpy as np
from numba import njit

from .core import Dataset, MovementLabel, N_CHANNELS
from .errors import ArityError, DegenerateDataError, ShapeError


def _fingerprint(arr: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(arr, dtype=np.float64).tobytes()).hexdigest()[:12]


@dataclass(frozen=True)
class DistanceResult:
    value: float
    metric: str
    fingerprint_a: str = ""
    fingerprint_b: str = ""

    def __post_init__(self):
        if not np.isfinite(self.value) or self.value < 0:
            raise ArityError(f"distance must be finite and nonnegative, got {self.value}")


# ------------------------------------------------------------------ #
#  Wasserstein distance (exact 1-D solution)                          #
# ------------------------------------------------------------------ #

def wasserstein_value(a: np.ndarray, b: np.ndarray) -> float:
    """Exact empirical W1 between two 1-D samples via CDF integration.

    For equal sizes this reduces to the mean absolute difference of the
    sorted samples; unequal sizes integrate the piecewise-constant
    quantile difference.
    """
    a = np.sort(np.asarray(a, dtype=np.float64).ravel())
    b = np.sort(np.asarray(b, dtype=np.float64).ravel())
    if a.size == 0 or b.size == 0:
        raise ArityError("wasserstein distance needs nonempty operands")
    points = np.sort(np.concatenate([a, b]))
    deltas = np.diff(points)
    cdf_a = np.searchsorted(a, points[:-1], side="right") / a.size
    cdf_b = np.searchsorted(b, points[:-1], side="right") / b.size
    return float(np.sum(np.abs(cdf_a - cdf_b) * deltas))


def pool_values(samples) -> np.ndarray:
    """Flatten a collection of (C, T) sample matrices into one value pool."""
    if isinstance(samples, np.ndarray):
        return samples.ravel().astype(np.float64)
    return np.concatenate([np.asarray(s, dtype=np.float64).ravel() for s in samples])


def wasserstein_1d(A, B) -> DistanceResult:
    """Distribution-shape distance between two sample sets; time series are
    compared by pooling all values of all channels."""
    a, b = pool_values(A), pool_values(B)
    return DistanceResult(wasserstein_value(a, b), "wasserstein",
                          _fingerprint(a), _fingerprint(b))


# ------------------------------------------------------------------ #
#  Discrete Frechet distance                                          #
# ------------------------------------------------------------------ #

@njit(cache=True)
def _frechet_dp(a, b):  # pragma: no cover - exercised through frechet_value
    n, m = a.shape[0], b.shape[0]
    dp = np.empty((n, m))
    for i in range(n):
        for j in range(m):
            d = 0.0
            for k in range(a.shape[1]):
                diff = a[i, k] - b[j, k]
                d += diff * diff
            d = np.sqrt(d)
            if i == 0 and j == 0:
                dp[i, j] = d
            elif i == 0:
                dp[i, j] = max(d, dp[0, j - 1])
            elif j == 0:
                dp[i, j] = max(d, dp[i - 1, 0])
            else:
                best = min(dp[i - 1, j], dp[i, j - 1], dp[i - 1, j - 1])
                dp[i, j] = max(d, best)
    return dp[n - 1, m - 1]


def frechet_value(a: np.ndarray, b: np.ndarray) -> float:
    """Discrete Frechet distance between two point sequences (n, k), (m, k)
    under the Euclidean point metric, via the standard dynamic program."""
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    if a.ndim == 1:
        a = a[:, None]
    if b.ndim == 1:
        b = b[:, None]
    if a.shape[0] == 0 or b.shape[0] == 0:
        raise ArityError("frechet distance needs nonempty sequences")
    if a.shape[1] != b.shape[1]:
        raise ShapeError(f"point dimensions differ: {a.shape[1]} vs {b.shape[1]}")
    return float(_frechet_dp(a, b))


def frechet_distance(A, B) -> DistanceResult:
    """Order-aware curve distance; (C, T) samples are treated as sequences
    of T points in R^C."""
    a = np.asarray(A, dtype=np.float64)
    b = np.asarray(B, dtype=np.float64)
    if a.ndim == 2 and a.shape[0] == N_CHANNELS:
        a = a.T
    if b.ndim == 2 and b.shape[0] == N_CHANNELS:
        b = b.T
    return DistanceResult(frechet_value(a, b), "frechet",
                          _fingerprint(a), _fingerprint(b))


# ------------------------------------------------------------------ #
#  Classification metrics                                             #
# ------------------------------------------------------------------ #

@dataclass(frozen=True)
class ClassificationReport:
    accuracy: float
    precision: np.ndarray          # (6,)
    recall: np.ndarray             # (6,)
    confusion: np.ndarray          # (6, 6) counts, rows = true label
    zero_predicted: tuple = ()     # labels with no predicted positives

    @property
    def n_total(self) -> int:
        return int(self.confusion.sum())


def classification_report(y_true, y_pred) -> ClassificationReport:
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.size == 0:
        raise ArityError("classification_report needs at least one pair")
    if y_true.shape != y_pred.shape:
        raise ArityError(f"label vectors differ in length: {y_true.size} vs {y_pred.size}")

    k = len(MovementLabel)
    confusion = np.zeros((k, k), dtype=np.int64)
    for t, p in zip(y_true, y_pred):
        confusion[t, p] += 1

    accuracy = float(np.trace(confusion)) / y_true.size
    pred_totals = confusion.sum(axis=0)
    true_totals = confusion.sum(axis=1)
    precision = np.zeros(k)
    recall = np.zeros(k)
    flagged = []
    for c in range(k):
        if pred_totals[c] > 0:
            precision[c] = confusion[c, c] / pred_totals[c]
        else:
            flagged.append(MovementLabel(c))
        if true_totals[c] > 0:
            recall[c] = confusion[c, c] / true_totals[c]
    return ClassificationReport(accuracy, precision, recall, confusion, tuple(flagged))


# ------------------------------------------------------------------ #
#  Subject-leakage audits                                             #
# ------------------------------------------------------------------ #

def subject_leakage_probe(d: Dataset, folds: int = 5, seed: int = 0,
                          epochs: int = 25) -> Tuple[float, float, list]:
    """How well can subject identity be predicted from the processed data?

    Trains the convolutional-recurrent classifier to predict subject_id
    under k-fold cross-validation and returns (mean, std, fold accuracies).
    Near-chance accuracy indicates subject-specific signatures are not
    encoded in the features.
    """
    from .classifiers import ConvRecurrentClassifier

    subjects = d.subjects()
    if len(subjects) < 2:
        raise DegenerateDataError("subject probe needs at least 2 subjects")
    subj_index = {s: i for i, s in enumerate(subjects)}
    X = d.values_array().astype(np.float32)
    y = np.array([subj_index[s.subject_id] for s in d.samples], dtype=np.int64)

    rng = np.random.default_rng(seed)
    order = rng.permutation(len(y))
    fold_ids = np.empty(len(y), dtype=np.int64)
    fold_ids[order] = np.arange(len(y)) % folds

    accs = []
    for f in range(folds):
        test = fold_ids == f
        clf = ConvRecurrentClassifier(epochs=epochs, seed=seed + f)
        clf.fit(X[~test], y[~test])
        accs.append(float(np.mean(clf.predict(X[test]) == y[test])))
    accs = np.array(accs)
    return float(accs.mean()), float(accs.std(ddof=1)), accs.tolist()


def pca_project(samples: np.ndarray, dims: int = 2) -> Tuple[np.ndarray, np.ndarray]:
    """Project flattened feature vectors onto the top principal components.

    Returns (coordinates (n, dims), explained-variance ratios (dims,)).
    Component signs are fixed so the largest-magnitude loading is positive,
    making the output deterministic.
    """
    X = np.asarray(samples, dtype=np.float64)
    if X.ndim != 2:
        raise ShapeError("pca_project expects an (n_samples, n_features) matrix")
    n = X.shape[0]
    if n < dims:
        raise ArityError(f"need at least {dims} samples, got {n}")
    centered = X - X.mean(axis=0, keepdims=True)
    u, s, vt = np.linalg.svd(centered, full_matrices=False)
    for i in range(vt.shape[0]):
        j = int(np.argmax(np.abs(vt[i])))
        if vt[i, j] < 0:
            vt[i] = -vt[i]
            u[:, i] = -u[:, i]
    coords = u[:, :dims] * s[:dims]
    total_var = float(np.sum(s ** 2))
    ratios = (s[:dims] ** 2) / total_var if total_var > 0 else np.zeros(dims)
    return coords, ratios
