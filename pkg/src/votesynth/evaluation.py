"""Distributional resemblance (Fréchet distance between Gaussian fits of
two embedding sets) and a pluggable downstream evaluator with a
nearest-centroid reference implementation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Protocol

import numpy as np
import scipy.linalg

from .core import EmbeddedSet
from .errors import EvaluationError

_SYMMETRY_TOL = 1e-9
_EIGENVALUE_FLOOR = -1e-9


@dataclass(frozen=True)
class GaussianSummary:
    """Mean and covariance of an embedding set."""

    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64)
        covariance = np.asarray(self.covariance, dtype=np.float64)
        if mean.ndim != 1 or covariance.shape != (mean.shape[0], mean.shape[0]):
            raise EvaluationError("summary needs a d-vector mean and a d x d covariance")
        asymmetry = np.abs(covariance - covariance.T).max() if covariance.size else 0.0
        if asymmetry > _SYMMETRY_TOL:
            raise EvaluationError(f"covariance asymmetry {asymmetry} exceeds {_SYMMETRY_TOL}")
        covariance = (covariance + covariance.T) / 2.0
        eigenvalues, eigenvectors = np.linalg.eigh(covariance)
        if eigenvalues.min(initial=0.0) < _EIGENVALUE_FLOOR:
            raise EvaluationError(
                f"covariance has eigenvalue {eigenvalues.min()} below {_EIGENVALUE_FLOOR}"
            )
        if (eigenvalues < 0).any():
            eigenvalues = np.clip(eigenvalues, 0.0, None)
            covariance = (eigenvectors * eigenvalues) @ eigenvectors.T
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", covariance)


def summarize(vectors: np.ndarray) -> GaussianSummary:
    """Gaussian fit with the unbiased covariance estimator; needs >= 2 rows."""
    vectors = np.asarray(vectors, dtype=np.float64)
    if vectors.ndim != 2 or vectors.shape[0] < 2:
        raise EvaluationError("need at least 2 vectors to fit a Gaussian")
    mean = vectors.mean(axis=0)
    covariance = np.atleast_2d(np.cov(vectors, rowvar=False, ddof=1))
    return GaussianSummary(mean=mean, covariance=covariance)


def _sqrtm_product(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    product = a @ b
    root, _ = scipy.linalg.sqrtm(product, disp=False)
    if np.iscomplexobj(root):
        if np.abs(root.imag).max(initial=0.0) > 1e-6 * max(1.0, np.abs(root.real).max()):
            raise EvaluationError("matrix square root has a large imaginary part")
        root = root.real
    return root


def frechet_gaussian(a: GaussianSummary, b: GaussianSummary) -> float:
    """||mu_a - mu_b||^2 + tr(S_a + S_b - 2 (S_a S_b)^{1/2})."""
    if a.mean.shape != b.mean.shape:
        raise EvaluationError("summaries live in different dimensions")
    diff = a.mean - b.mean
    try:
        root = _sqrtm_product(a.covariance, b.covariance)
        if not np.isfinite(root).all():
            raise EvaluationError("non-finite matrix square root")
    except EvaluationError:
        # one conditioning retry: nudge both covariances off singularity
        bump = 1e-6 * np.eye(a.mean.shape[0])
        root = _sqrtm_product(a.covariance + bump, b.covariance + bump)
        if not np.isfinite(root).all():
            raise EvaluationError("matrix square root did not converge after conditioning")
    value = float(diff @ diff + np.trace(a.covariance) + np.trace(b.covariance) - 2.0 * np.trace(root))
    return max(value, 0.0)


def frechet_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Fréchet distance between the Gaussian fits of two embedding sets."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise EvaluationError("both sets must be (n, d) with a shared d")
    return frechet_gaussian(summarize(a), summarize(b))


class DownstreamEvaluator(Protocol):
    """Anything that scores a train set against a held-out test set."""

    def __call__(self, train: EmbeddedSet, test: EmbeddedSet) -> float: ...


def nearest_centroid_eval(train: EmbeddedSet, test: EmbeddedSet) -> float:
    """Accuracy of nearest-centroid classification, fit on ``train``.

    Centroids are ordered by sorted label, and distance ties resolve to the
    earlier label in that order. Reference implementation of the downstream
    evaluator interface.
    """
    if len(train) == 0 or len(test) == 0:
        raise EvaluationError("train and test sets must be non-empty")
    if train.dimension != test.dimension:
        raise EvaluationError("train/test dimension mismatch")
    classes = sorted(set(train.labels))
    missing = sorted(set(test.labels) - set(classes))
    if missing:
        raise EvaluationError(f"test labels absent from train: {missing}")
    train_labels = np.asarray(train.labels, dtype=object)
    centroids = np.vstack(
        [train.vectors[train_labels == label].mean(axis=0) for label in classes]
    )
    distances = np.linalg.norm(test.vectors[:, None, :] - centroids[None, :, :], axis=2)
    predicted = np.argmin(distances, axis=1)  # argmin takes the first (lowest label) on ties
    actual = np.asarray([classes.index(label) for label in test.labels])
    return float(np.mean(predicted == actual))
