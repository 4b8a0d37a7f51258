"""The two aggregation pipelines and the optimal-alpha plug-in estimator."""

from __future__ import annotations

import numpy as np

from .baselines import TdAlgorithm, blue_aggregate, run_td
from .errors import InsufficientReplicatesError, InsufficientSignalError
from .estimators import ebe, ebe_alpha
from .model import ObservationMatrix
from .variance import VarianceEstimator, psi_value


def eb_blue(X: ObservationMatrix, sigma2s, positive_part: bool = False) -> np.ndarray:
    """Known-competence pipeline: inverse-variance aggregate, then shrink.

    The aggregated worker's variance is the reciprocal of the summed
    reciprocal worker variances, which is exactly the right scale for the
    shrinkage weight.
    """
    answers, aggregated_variance = blue_aggregate(X, sigma2s)
    return ebe(answers, aggregated_variance, positive_part=positive_part).estimate


def eb_wrap(X: ObservationMatrix, base: TdAlgorithm, psi: VarianceEstimator,
            positive_part: bool = False) -> np.ndarray:
    """Estimated-competence pipeline: run the base algorithm, estimate the
    aggregated variance with psi, then shrink.

    A zero variance estimate (legitimate on unanimous data) leaves the base
    output unchanged rather than erroring.
    """
    x_a = run_td(base, X)
    sigma2_hat = psi_value(psi, X, x_a)
    if sigma2_hat == 0.0:
        return x_a
    return ebe(x_a, sigma2_hat, positive_part=positive_part).estimate


def eb_wrap_alpha(X: ObservationMatrix, base: TdAlgorithm, psi: VarianceEstimator,
                  alpha: float, positive_part: bool = False) -> np.ndarray:
    """eb_wrap with the (m-3) multiplier replaced by alpha."""
    x_a = run_td(base, X)
    sigma2_hat = psi_value(psi, X, x_a)
    if sigma2_hat == 0.0 or alpha == 0.0:
        return x_a
    return ebe_alpha(x_a, sigma2_hat, alpha, positive_part=positive_part).estimate


def estimate_alpha_star(aggregates: np.ndarray, sigma2_hats: np.ndarray,
                        mu: np.ndarray) -> float:
    """Plug-in estimate of the risk-minimizing alpha from a replicate stream.

    ``aggregates`` is (replicates, m), ``sigma2_hats`` is (replicates,), and
    ``mu`` the known ground truth (synthetic benchmarks only: the covariances
    are taken around the truth).  The estimate is the ratio of the summed
    coordinate covariances to the mean of sigma-hat^4 over the squared
    deviation norm; the risk in alpha is a parabola maximized at that ratio.
    """
    aggregates = np.asarray(aggregates, dtype=float)
    sigma2_hats = np.asarray(sigma2_hats, dtype=float)
    mu = np.asarray(mu, dtype=float)
    if aggregates.ndim != 2 or aggregates.shape[1] != mu.shape[0]:
        raise InsufficientReplicatesError("aggregates must be (replicates, m) matching mu")
    r = aggregates.shape[0]
    if r < 30 or sigma2_hats.shape[0] != r:
        raise InsufficientReplicatesError(f"need >= 30 replicates, got {r}")
    mean = aggregates.mean(axis=1, keepdims=True)
    dev = aggregates - mean
    ss = (dev**2).sum(axis=1)
    ok = ss > 0
    if not np.any(ok) or np.all(sigma2_hats == 0.0):
        raise InsufficientSignalError("no dispersion or identically zero variance estimates")
    # E[(X_j - mu_j) g_j] is the covariance when the truth is known exactly.
    numerator = ((aggregates - mu) * sigma2_hats[:, None] * dev
                 / np.where(ok, ss, 1.0)[:, None]).sum(axis=1)[ok].mean()
    denominator = (sigma2_hats**2 / ss)[ok].mean()
    if denominator == 0.0:
        raise InsufficientSignalError("zero denominator in alpha-star estimate")
    return float(numerator / denominator)
