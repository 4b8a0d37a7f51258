"""Core data containers and the dispersion statistics reused by every formula."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    EmptyMatrixError,
    LengthMismatchError,
    NonFiniteError,
    NonPositiveVarianceError,
)


@dataclass(frozen=True)
class ObservationMatrix:
    """A complete n x m matrix of worker answers (row = worker, column = question).

    Entries must all be finite; missing values are rejected outright because
    every downstream sum runs over all (worker, question) pairs.
    """

    values: np.ndarray
    worker_ids: tuple = field(default=None)
    question_ids: tuple = field(default=None)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        if values.ndim != 2 or values.shape[0] == 0 or values.shape[1] == 0:
            raise EmptyMatrixError(f"expected a non-empty 2-D matrix, got shape {values.shape}")
        bad = np.argwhere(~np.isfinite(values))
        if bad.size:
            raise NonFiniteError(int(bad[0, 0]), int(bad[0, 1]))
        if self.worker_ids is None:
            object.__setattr__(self, "worker_ids", tuple(range(values.shape[0])))
        else:
            object.__setattr__(self, "worker_ids", tuple(self.worker_ids))
        if self.question_ids is None:
            object.__setattr__(self, "question_ids", tuple(range(values.shape[1])))
        else:
            object.__setattr__(self, "question_ids", tuple(self.question_ids))
        if len(self.worker_ids) != values.shape[0]:
            raise LengthMismatchError("worker_ids length does not match row count")
        if len(self.question_ids) != values.shape[1]:
            raise LengthMismatchError("question_ids length does not match column count")
        values.setflags(write=False)

    @property
    def n_workers(self) -> int:
        return self.values.shape[0]

    @property
    def n_questions(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class DispersionStats:
    """Mean, unnormalized sum of squared deviations, and sample variance of a vector.

    ``ss`` (the unnormalized sum) is the canonical shrinkage denominator;
    ``sample_variance`` = ss/(m-1) is kept alongside because the risk
    decomposition is stated in the (m-1)-normalized convention with a
    compensating prefactor.  ``sample_variance`` is None for m = 1.
    """

    mean: float
    ss: float
    sample_variance: float | None


def validate_matrix(values, worker_ids=None, question_ids=None) -> ObservationMatrix:
    """Validate raw values into an ObservationMatrix; never silently repairs data."""
    return ObservationMatrix(np.asarray(values, dtype=float), worker_ids, question_ids)


def as_answer_vector(values) -> np.ndarray:
    """Coerce to a finite 1-D float vector."""
    v = np.asarray(values, dtype=float)
    if v.ndim != 1 or v.shape[0] == 0:
        raise EmptyMatrixError(f"expected a non-empty 1-D vector, got shape {v.shape}")
    bad = np.argwhere(~np.isfinite(v))
    if bad.size:
        raise NonFiniteError(0, int(bad[0, 0]))
    return v


def validate_variances(values) -> np.ndarray:
    """Coerce to a strictly positive 1-D variance vector."""
    v = as_answer_vector(values)
    if np.any(v <= 0):
        raise NonPositiveVarianceError("all variances must be > 0")
    return v


def dispersion(v) -> DispersionStats:
    """Mean, sum of squared deviations, and sample variance of an answer vector."""
    v = as_answer_vector(v)
    m = v.shape[0]
    mean = float(v.mean())
    ss = float(((v - mean) ** 2).sum())
    sample_variance = ss / (m - 1) if m >= 2 else None
    return DispersionStats(mean=mean, ss=ss, sample_variance=sample_variance)
