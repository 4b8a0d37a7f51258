"""Single-vector estimators: identity, shrink-toward-mean, Stein, Bayes posterior mean.

The shrink-toward-mean estimator pulls every coordinate of an answer vector
toward the vector's own mean with a data-driven weight; its generalized form
replaces the default (m-3) multiplier with an arbitrary alpha >= 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NonPositiveVarianceError, ZeroNormInputError
from .model import as_answer_vector


@dataclass(frozen=True)
class ShrinkageResult:
    """Output of a shrink-toward-mean application.

    ``shrink_factor`` is the bracketed weight 1 - alpha*sigma2/ss and may be
    negative unless the positive-part option clipped it.  ``degenerate`` marks
    the m <= 3 (identity) and ss = 0 (full shrink) fallback paths, where the
    factor is not meaningful.
    """

    estimate: np.ndarray
    shrink_factor: float
    degenerate: bool


def _check_sigma2(sigma2: float) -> float:
    sigma2 = float(sigma2)
    if sigma2 <= 0:
        raise NonPositiveVarianceError(f"sigma2 must be > 0, got {sigma2}")
    return sigma2


def ebe_alpha(v, sigma2: float, alpha: float, positive_part: bool = False) -> ShrinkageResult:
    """Shrink v toward its mean with weight 1 - alpha*sigma2/ss.

    For m <= 3 the estimator reduces to the identity (returned with
    degenerate=True); a constant vector (ss = 0) is returned as-is, i.e. fully
    shrunk to the shared mean.  The weight is not clipped at zero unless
    ``positive_part`` is set: the risk identities hold for the unclipped form.
    """
    v = as_answer_vector(v)
    sigma2 = _check_sigma2(sigma2)
    alpha = float(alpha)
    if alpha < 0:
        raise ValueError(f"alpha must be >= 0, got {alpha}")
    m = v.shape[0]
    mean = v.mean()
    dev = v - mean
    ss = float((dev**2).sum())
    if m <= 3:
        return ShrinkageResult(estimate=v.copy(), shrink_factor=1.0, degenerate=True)
    if ss == 0.0:
        return ShrinkageResult(estimate=np.full(m, mean), shrink_factor=0.0, degenerate=True)
    factor = 1.0 - alpha * sigma2 / ss
    if positive_part:
        factor = max(factor, 0.0)
    return ShrinkageResult(estimate=mean + factor * dev, shrink_factor=factor, degenerate=False)


def ebe(v, sigma2: float, positive_part: bool = False) -> ShrinkageResult:
    """Shrink-toward-mean with the default alpha = m - 3."""
    v = as_answer_vector(v)
    return ebe_alpha(v, sigma2, v.shape[0] - 3 if v.shape[0] > 3 else 0.0, positive_part)


def stein(v, sigma2: float) -> ShrinkageResult:
    """Shrink v toward the origin with weight 1 - (m-2)*sigma2/||v||^2."""
    v = as_answer_vector(v)
    sigma2 = _check_sigma2(sigma2)
    m = v.shape[0]
    if m <= 2:
        return ShrinkageResult(estimate=v.copy(), shrink_factor=1.0, degenerate=True)
    norm2 = float((v**2).sum())
    if norm2 == 0.0:
        raise ZeroNormInputError("cannot shrink the zero vector toward the origin")
    factor = 1.0 - (m - 2) * sigma2 / norm2
    return ShrinkageResult(estimate=factor * v, shrink_factor=factor, degenerate=False)


def identity(v) -> np.ndarray:
    """Return the answers unchanged."""
    return as_answer_vector(v).copy()


def bayes_posterior_mean(v, sigma2: float, mu0: float, sigma0_2: float) -> np.ndarray:
    """Posterior mean per coordinate under a N(mu0, sigma0_2) prior.

    Under the hierarchical generator (truths drawn from the prior) this is the
    Bayes-risk-optimal estimator, used as a validation oracle.
    """
    v = as_answer_vector(v)
    sigma2 = _check_sigma2(sigma2)
    sigma0_2 = float(sigma0_2)
    if sigma0_2 <= 0:
        raise NonPositiveVarianceError(f"sigma0_2 must be > 0, got {sigma0_2}")
    w = sigma0_2 / (sigma0_2 + sigma2)
    return w * v + (1.0 - w) * mu0


def shrink_batch(V: np.ndarray, sigma2, alpha, positive_part: bool = False) -> np.ndarray:
    """Vectorized shrink-toward-mean over a (replicates, m) batch.

    ``sigma2`` and ``alpha`` broadcast per row.  Degenerate rules match the
    scalar path: m <= 3 returns the input, ss = 0 rows collapse to their mean.
    """
    V = np.asarray(V, dtype=float)
    m = V.shape[1]
    if m <= 3:
        return V.copy()
    mean = V.mean(axis=1, keepdims=True)
    dev = V - mean
    ss = (dev**2).sum(axis=1, keepdims=True)
    sigma2 = np.broadcast_to(np.asarray(sigma2, dtype=float), (V.shape[0],)).reshape(-1, 1)
    alpha = np.broadcast_to(np.asarray(alpha, dtype=float), (V.shape[0],)).reshape(-1, 1)
    factor = 1.0 - alpha * sigma2 / np.where(ss > 0, ss, 1.0)
    if positive_part:
        factor = np.maximum(factor, 0.0)
    return np.where(ss > 0, mean + factor * dev, mean)
