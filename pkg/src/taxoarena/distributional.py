"""Population-level metrics: Frechet distance and Inception Score.

Feature vectors and class-probability rows are ingested from files; no
neural inference happens here. The Frechet matrix square root runs a
Denman-Beavers iteration with an eigendecomposition fallback, plus a
trace-scaled diagonal regularizer for the rank-deficient covariances that
small per-subset populations produce.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from typing import IO, Iterable, Optional, Union

import numpy as np

from . import errors

logger = logging.getLogger(__name__)

SQRT_TOL = 1e-10
SQRT_MAX_ITER = 100
SQRT_RESIDUAL_LIMIT = 1e-6


@dataclass
class FeatureStats:
    n: int
    mu: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=np.float64)
        self.sigma = np.asarray(self.sigma, dtype=np.float64)
        if self.n < 2:
            raise errors.TooFewSamples(f"need at least 2 samples, got {self.n}")
        skew = np.abs(self.sigma - self.sigma.T).max() if self.sigma.size else 0.0
        if skew > 1e-9:
            raise ValueError(f"covariance asymmetry {skew} exceeds 1e-9")


def fit_gaussian(features: Union[np.ndarray, Iterable]) -> FeatureStats:
    """Sample mean and unbiased covariance, symmetrized."""
    mat = np.asarray(list(features) if not isinstance(features, np.ndarray) else features,
                     dtype=np.float64)
    if mat.ndim != 2:
        raise errors.DimensionMismatch(None, mat.ndim, 2)
    if mat.shape[0] < 2:
        raise errors.TooFewSamples(f"need at least 2 feature vectors, got {mat.shape[0]}")
    if not np.isfinite(mat).all():
        raise errors.NonFiniteComponent()
    mu = mat.mean(axis=0)
    centered = mat - mu
    sigma = centered.T @ centered / (mat.shape[0] - 1)
    sigma = (sigma + sigma.T) / 2.0
    return FeatureStats(n=mat.shape[0], mu=mu, sigma=sigma)


def _denman_beavers(a: np.ndarray) -> Optional[np.ndarray]:
    """Square root of a matrix with nonnegative real spectrum, or None."""
    norm = np.linalg.norm(a)
    if norm == 0.0:
        return np.zeros_like(a)
    y = a.copy()
    z = np.eye(a.shape[0])
    for _ in range(SQRT_MAX_ITER):
        try:
            y_next = (y + np.linalg.inv(z)) / 2.0
            z_next = (z + np.linalg.inv(y)) / 2.0
        except np.linalg.LinAlgError:
            return None
        y, z = y_next, z_next
        residual = np.linalg.norm(y @ y - a) / norm
        if not np.isfinite(residual):
            return None
        if residual < SQRT_TOL:
            return y
    # tolerate stagnation above the iteration tolerance if still usable
    return y if np.linalg.norm(y @ y - a) / norm < SQRT_RESIDUAL_LIMIT else None


def _eig_sqrt(a: np.ndarray) -> Optional[np.ndarray]:
    """Eigendecomposition route; valid when the spectrum is real nonnegative."""
    try:
        vals, vecs = np.linalg.eig(a)
    except np.linalg.LinAlgError:
        return None
    vals = np.where(vals.real < 0, 0.0, vals)
    try:
        root = (vecs * np.sqrt(vals.astype(complex))) @ np.linalg.inv(vecs)
    except np.linalg.LinAlgError:
        return None
    root = root.real
    norm = np.linalg.norm(a)
    if norm == 0.0:
        return np.zeros_like(a)
    if np.linalg.norm(root @ root - a) / norm < SQRT_RESIDUAL_LIMIT:
        return root
    return None


def matrix_sqrt_product(sigma_a: np.ndarray, sigma_b: np.ndarray) -> np.ndarray:
    """sqrt(sigma_a @ sigma_b), regularizing only if both routes fail raw."""
    prod = sigma_a @ sigma_b
    for attempt in range(2):
        root = _denman_beavers(prod)
        if root is None:
            root = _eig_sqrt(prod)
        if root is not None:
            return root
        if attempt == 0:
            d = sigma_a.shape[0]
            eps_a = 1e-6 * np.trace(sigma_a) / d
            eps_b = 1e-6 * np.trace(sigma_b) / d
            logger.warning(
                "matrix square root failed on raw covariances; retrying with "
                "diagonal regularization (eps_a=%.3e, eps_b=%.3e)", eps_a, eps_b)
            eye = np.eye(d)
            prod = (sigma_a + max(eps_a, 1e-12) * eye) @ (sigma_b + max(eps_b, 1e-12) * eye)
    raise errors.NonConvergentSqrt("matrix square root did not converge")


def frechet_distance(a: FeatureStats, b: FeatureStats) -> float:
    """||mu_a - mu_b||^2 + tr(S_a + S_b - 2 sqrt(S_a S_b)), floored at 0."""
    if a.mu.shape != b.mu.shape:
        raise errors.DimensionMismatch(None, b.mu.shape[0], a.mu.shape[0])
    diff = a.mu - b.mu
    root = matrix_sqrt_product(a.sigma, b.sigma)
    value = float(diff @ diff + np.trace(a.sigma) + np.trace(b.sigma) - 2.0 * np.trace(root))
    return max(value, 0.0)


def _validate_prob_rows(rows: np.ndarray) -> np.ndarray:
    if rows.ndim != 2:
        raise errors.RowLengthMismatch("class-probability rows must share one length")
    if rows.shape[1] < 2:
        raise ValueError("class-probability rows need at least 2 classes")
    if (rows < 0).any() or not np.isfinite(rows).all():
        raise ValueError("class probabilities must be finite and nonnegative")
    sums = rows.sum(axis=1)
    if np.abs(sums - 1.0).max() > 1e-6:
        raise ValueError("class-probability rows must sum to 1 within 1e-6")
    return rows


def inception_score(rows, splits: int = 10) -> tuple[float, float]:
    """exp(mean KL(p(y|x) || marginal)) per split; returns (mean, sd) over splits.

    Zero probabilities contribute 0 * log 0 = 0. The per-split KL mean is
    floored at 0 so rounding can never push a score below the analytic
    minimum of 1.
    """
    try:
        mat = np.asarray(list(rows) if not isinstance(rows, np.ndarray) else rows,
                         dtype=np.float64)
    except ValueError:
        raise errors.RowLengthMismatch("class-probability rows must share one length")
    mat = _validate_prob_rows(mat)
    if splits < 1:
        raise ValueError("splits must be positive")
    n = mat.shape[0]
    if n < splits:
        raise errors.TooFewRows(f"need at least {splits} rows, got {n}")
    scores = []
    for i in range(splits):
        part = mat[i * n // splits:(i + 1) * n // splits]
        marginal = part.mean(axis=0)
        # single ratio-log keeps exp(mean KL) exact on the analytic edge cases
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = np.where(part > 0, part * np.log(part / marginal), 0.0)
        kl_mean = max(float(terms.sum(axis=1).mean()), 0.0)
        scores.append(np.exp(kl_mean))
    scores = np.asarray(scores)
    return float(scores.mean()), float(scores.std())


def load_prob_rows(source: Union[IO[str], Iterable[str]]) -> tuple[list[str], np.ndarray]:
    """Read JSON lines {"id": str, "p": [float, ...]}; returns (ids, matrix)."""
    ids: list[str] = []
    rows: list[list[float]] = []
    width = None
    for lineno, raw in enumerate(source, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise errors.MalformedRecord(lineno, f"invalid JSON: {exc}") from exc
        if "id" not in obj or "p" not in obj:
            raise errors.MalformedRecord(lineno, "row needs 'id' and 'p' fields")
        p = list(obj["p"])
        if width is None:
            width = len(p)
        elif len(p) != width:
            raise errors.RowLengthMismatch(
                f"line {lineno}: row length {len(p)} != {width}")
        ids.append(obj["id"])
        rows.append(p)
    if not rows:
        raise errors.EmptyInput("no probability rows in input")
    return ids, np.asarray(rows, dtype=np.float64)
