"""Black-box truth-discovery baselines producing one aggregated answer vector.

All baselines also have a batch form operating on a (replicates, n, m) stack,
which the Monte Carlo layers use; the single-matrix form is the batch form at
batch size 1.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import (
    EmptyMatrixError,
    IterationDivergenceError,
    LengthMismatchError,
    ParseError,
)
from .model import ObservationMatrix, as_answer_vector, validate_variances

# Workers whose answers coincide with the current truth estimate would get an
# infinite weight; this floor is applied uniformly to every squared distance.
DISTANCE_EPS = 1e-12

DEFAULT_MAX_ITERATIONS = 14
DEFAULT_CONVERGENCE_TOL = 1e-8


@dataclass(frozen=True)
class Blue:
    """Inverse-variance-weighted mean; requires the true worker variances."""

    variances: tuple

    def __init__(self, variances):
        object.__setattr__(
            self, "variances", tuple(float(v) for v in validate_variances(variances))
        )


@dataclass(frozen=True)
class Mean:
    pass


@dataclass(frozen=True)
class Median:
    pass


@dataclass(frozen=True)
class CRH:
    """Iterative log-ratio reweighting of per-worker squared deviations."""

    max_iterations: int = DEFAULT_MAX_ITERATIONS
    convergence_tol: float = DEFAULT_CONVERGENCE_TOL


@dataclass(frozen=True)
class CATD:
    """Iterative reweighting by a chi-squared upper-confidence scaling."""

    confidence: float = 0.975
    max_iterations: int = DEFAULT_MAX_ITERATIONS
    convergence_tol: float = DEFAULT_CONVERGENCE_TOL


@dataclass(frozen=True)
class DistanceWeighted:
    """Single-pass weights from average pairwise distance between workers."""


@dataclass(frozen=True)
class External:
    """Verbatim plug-in answers computed by an external algorithm."""

    answers: tuple

    def __init__(self, answers):
        object.__setattr__(self, "answers", tuple(float(a) for a in as_answer_vector(answers)))


TdAlgorithm = Blue | Mean | Median | CRH | CATD | DistanceWeighted | External


def blue_aggregate(X: ObservationMatrix, sigma2s) -> tuple[np.ndarray, float]:
    """Inverse-variance-weighted answers and the aggregated-worker variance."""
    sigma2s = validate_variances(sigma2s)
    values = X.values
    if sigma2s.shape[0] != values.shape[0]:
        raise LengthMismatchError(
            f"{sigma2s.shape[0]} variances for {values.shape[0]} workers"
        )
    w = 1.0 / sigma2s
    aggregated_variance = float(1.0 / w.sum())
    answers = (w @ values) * aggregated_variance
    return answers, aggregated_variance


def _weighted_columns_batch(Xb: np.ndarray, weights: np.ndarray) -> np.ndarray:
    # Xb: (r, n, m); weights: (r, n)
    return np.einsum("rn,rnm->rm", weights, Xb) / weights.sum(axis=1, keepdims=True)


def _iterate_batch(Xb: np.ndarray, weight_rule, max_iterations: int, tol: float) -> np.ndarray:
    t = Xb.mean(axis=1)
    w_prev = None
    for _ in range(max_iterations):
        d = ((Xb - t[:, None, :]) ** 2).sum(axis=2) + DISTANCE_EPS
        w = weight_rule(d)
        if not np.all(np.isfinite(w)):
            raise IterationDivergenceError("non-finite weight during iteration")
        t = _weighted_columns_batch(Xb, w)
        if w_prev is not None and np.max(np.abs(w - w_prev)) < tol:
            break
        w_prev = w
    return t


def run_td_batch(alg: TdAlgorithm, Xb: np.ndarray) -> np.ndarray:
    """Run a baseline on a (replicates, n, m) stack, returning (replicates, m)."""
    Xb = np.asarray(Xb, dtype=float)
    r, n, m = Xb.shape
    if isinstance(alg, Blue):
        sigma2s = np.asarray(alg.variances)
        if sigma2s.shape[0] != n:
            raise LengthMismatchError(f"{sigma2s.shape[0]} variances for {n} workers")
        w = 1.0 / sigma2s
        return np.einsum("n,rnm->rm", w, Xb) / w.sum()
    if isinstance(alg, Mean):
        return Xb.mean(axis=1)
    if isinstance(alg, Median):
        return np.median(Xb, axis=1)
    if isinstance(alg, CRH):
        def crh_weights(d):
            return -np.log(d / d.sum(axis=1, keepdims=True))

        return _iterate_batch(Xb, crh_weights, alg.max_iterations, alg.convergence_tol)
    if isinstance(alg, CATD):
        quantile = stats.chi2.ppf(alg.confidence, df=m)

        def catd_weights(d):
            return quantile / d

        return _iterate_batch(Xb, catd_weights, alg.max_iterations, alg.convergence_tol)
    if isinstance(alg, DistanceWeighted):
        if n == 1:
            return Xb[:, 0, :]
        # d[r, i] = mean over other workers of the mean squared disagreement,
        # via the Gram-matrix expansion to avoid an (r, n, n, m) intermediate.
        rowsq = (Xb**2).sum(axis=2)
        gram = Xb @ Xb.transpose(0, 2, 1)
        pairsq = np.maximum(rowsq[:, :, None] + rowsq[:, None, :] - 2.0 * gram, 0.0)
        d = pairsq.sum(axis=2) / ((n - 1) * m) + DISTANCE_EPS
        return _weighted_columns_batch(Xb, 1.0 / d)
    if isinstance(alg, External):
        answers = np.asarray(alg.answers)
        if answers.shape[0] != m:
            raise LengthMismatchError(f"{answers.shape[0]} answers for {m} questions")
        return np.broadcast_to(answers, (r, m)).copy()
    raise TypeError(f"unknown algorithm {alg!r}")


def run_td(alg: TdAlgorithm, X: ObservationMatrix) -> np.ndarray:
    """Aggregate one observation matrix into a length-m answer vector."""
    return run_td_batch(alg, X.values[None, :, :])[0]


def load_external_answers(path) -> External:
    """Read a plug-in answer vector from a one-column CSV with header 'answer'."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyMatrixError(f"{path}: empty file") from None
        if [h.strip() for h in header] != ["answer"]:
            raise ParseError(1, f"expected header 'answer', got {header!r}")
        answers = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                answers.append(float(row[0]))
            except ValueError:
                raise ParseError(lineno, f"not a number: {row[0]!r}") from None
    if not answers:
        raise EmptyMatrixError(f"{path}: no answers")
    return External(answers)
