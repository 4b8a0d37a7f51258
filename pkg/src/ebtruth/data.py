"""Synthetic data generation, dataset files, subsampling, and question partitioning.

All randomness flows through counter-based Philox streams keyed by
(seed, role, index), so every generated artifact is bit-reproducible
regardless of evaluation order or thread count.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DuplicateGroundTruthError,
    EmptyMatrixError,
    NoGroundTruthError,
    ParseError,
    RequestTooLargeError,
)
from .model import ObservationMatrix, as_answer_vector, dispersion, validate_variances

log = logging.getLogger(__name__)

GROUND_TRUTH_ID = "__GROUND_TRUTH__"

# Stream roles; each (seed, role, index) triple keys an independent stream.
ROLE_GT = 0
ROLE_SIGMA = 1
ROLE_OBS = 2
ROLE_SUBSAMPLE = 3
ROLE_REPLICATE = 4


def stream(seed: int, *key: int) -> np.random.Generator:
    """Independent counter-based generator for a (seed, *key) address."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class ConstantGT:
    value: float = 2.0


@dataclass(frozen=True)
class GaussianGT:
    mean: float = 2.0
    variance: float = 1.0


@dataclass(frozen=True)
class IndexedSigmas:
    """Worker i (1-based) has standard deviation i."""


@dataclass(frozen=True)
class GaussianSqSigmas:
    """sigma_i^2 drawn from a Normal, redrawing values below the floor.

    The Normal can go nonpositive, so draws below ``floor`` are replaced;
    redraws are counted and logged.  ``variance`` is the variance of the
    Normal (not its standard deviation).
    """

    mean: float = 1.0
    variance: float = 0.5
    floor: float = 0.05


@dataclass(frozen=True)
class ExplicitSigmas:
    variances: tuple

    def __init__(self, variances):
        object.__setattr__(
            self, "variances", tuple(float(v) for v in validate_variances(variances))
        )


GtSpec = ConstantGT | GaussianGT
SigmaSpec = IndexedSigmas | GaussianSqSigmas | ExplicitSigmas


@dataclass(frozen=True)
class SyntheticSpec:
    gt: GtSpec
    worker_sigmas: SigmaSpec
    n: int
    m: int
    seed: int

    def __post_init__(self):
        if self.n < 1 or self.m < 1:
            raise EmptyMatrixError(f"n and m must be >= 1, got n={self.n}, m={self.m}")


@dataclass(frozen=True)
class Dataset:
    matrix: ObservationMatrix
    ground_truth: np.ndarray | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.ground_truth is not None:
            gt = as_answer_vector(self.ground_truth)
            if gt.shape[0] != self.matrix.n_questions:
                raise EmptyMatrixError("ground truth length != question count")
            gt.setflags(write=False)
            object.__setattr__(self, "ground_truth", gt)


def draw_ground_truth(gt: GtSpec, m: int, rng: np.random.Generator) -> np.ndarray:
    if isinstance(gt, ConstantGT):
        return np.full(m, float(gt.value))
    if isinstance(gt, GaussianGT):
        return rng.normal(gt.mean, np.sqrt(gt.variance), size=m)
    raise TypeError(f"unknown ground-truth spec {gt!r}")


def draw_worker_variances(spec: SigmaSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    if isinstance(spec, IndexedSigmas):
        return np.arange(1, n + 1, dtype=float) ** 2
    if isinstance(spec, ExplicitSigmas):
        variances = np.asarray(spec.variances)
        if variances.shape[0] != n:
            raise EmptyMatrixError(f"{variances.shape[0]} explicit variances for {n} workers")
        return variances.copy()
    if isinstance(spec, GaussianSqSigmas):
        sig2 = rng.normal(spec.mean, np.sqrt(spec.variance), size=n)
        redraws = 0
        while np.any(sig2 < spec.floor):
            low = sig2 < spec.floor
            redraws += int(low.sum())
            sig2[low] = rng.normal(spec.mean, np.sqrt(spec.variance), size=int(low.sum()))
        if redraws:
            log.debug("redrew %d worker variances below floor %g", redraws, spec.floor)
        return sig2
    raise TypeError(f"unknown worker-sigma spec {spec!r}")


def gen_synthetic(spec: SyntheticSpec, index: int = 0) -> Dataset:
    """Draw one dataset: truths, worker variances, then cellwise Gaussian noise.

    ``index`` addresses independent repetitions of the same spec (stream key
    component), used when a protocol draws many datasets from one config.
    """
    mu = draw_ground_truth(spec.gt, spec.m, stream(spec.seed, ROLE_GT, index))
    sig2 = draw_worker_variances(spec.worker_sigmas, spec.n, stream(spec.seed, ROLE_SIGMA, index))
    noise = stream(spec.seed, ROLE_OBS, index).normal(size=(spec.n, spec.m))
    values = mu[None, :] + noise * np.sqrt(sig2)[:, None]
    matrix = ObservationMatrix(values)
    return Dataset(matrix=matrix, ground_truth=mu,
                   metadata={"worker_variances": tuple(sig2), "seed": spec.seed})


def save_csv(ds: Dataset, path) -> None:
    """Write the wire format: header 'worker_id,q_<id>...', one row per worker,
    optional final ground-truth row."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["worker_id"] + [f"q_{q}" for q in ds.matrix.question_ids])
        for wid, row in zip(ds.matrix.worker_ids, ds.matrix.values):
            writer.writerow([wid] + [repr(float(x)) for x in row])
        if ds.ground_truth is not None:
            writer.writerow([GROUND_TRUTH_ID] + [repr(float(x)) for x in ds.ground_truth])


def load_csv(path) -> Dataset:
    """Parse the wire format back into a Dataset."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyMatrixError(f"{path}: empty file") from None
        if not header or header[0].strip() != "worker_id":
            raise ParseError(1, f"expected header starting with 'worker_id', got {header!r}")
        question_ids = []
        for col in header[1:]:
            col = col.strip()
            if not col.startswith("q_"):
                raise ParseError(1, f"question column must start with 'q_', got {col!r}")
            question_ids.append(col[2:])
        if not question_ids:
            raise ParseError(1, "no question columns")
        worker_ids: list = []
        rows: list = []
        ground_truth = None
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(question_ids) + 1:
                raise ParseError(lineno, f"expected {len(question_ids) + 1} fields, got {len(row)}")
            try:
                values = [float(x) for x in row[1:]]
            except ValueError as exc:
                raise ParseError(lineno, str(exc)) from None
            if row[0].strip() == GROUND_TRUTH_ID:
                if ground_truth is not None:
                    raise DuplicateGroundTruthError(f"{path}: second ground-truth row at line {lineno}")
                ground_truth = np.asarray(values)
            else:
                worker_ids.append(row[0].strip())
                rows.append(values)
    if not rows:
        raise EmptyMatrixError(f"{path}: no worker rows")
    matrix = ObservationMatrix(np.asarray(rows), worker_ids, question_ids)
    return Dataset(matrix=matrix, ground_truth=ground_truth)


def subsample(ds: Dataset, n: int, m: int, seed: int, index: int = 0) -> Dataset:
    """Uniform without-replacement sample of n workers and m questions."""
    rows, cols = ds.matrix.values.shape
    if n > rows or m > cols:
        raise RequestTooLargeError(f"requested {n}x{m} from a {rows}x{cols} dataset")
    rng = stream(seed, ROLE_SUBSAMPLE, index)
    ri = rng.permutation(rows)[:n]
    ci = rng.permutation(cols)[:m]
    matrix = ObservationMatrix(
        ds.matrix.values[np.ix_(ri, ci)],
        [ds.matrix.worker_ids[i] for i in ri],
        [ds.matrix.question_ids[j] for j in ci],
    )
    gt = ds.ground_truth[ci] if ds.ground_truth is not None else None
    return Dataset(matrix=matrix, ground_truth=gt, metadata=dict(ds.metadata))


def concat_questions(a: Dataset, b: Dataset) -> Dataset:
    """Join two datasets with the same workers along the question axis."""
    if a.matrix.n_workers != b.matrix.n_workers:
        raise EmptyMatrixError("question concat requires equal worker counts")
    values = np.hstack([a.matrix.values, b.matrix.values])
    qids = [f"a{q}" for q in a.matrix.question_ids] + [f"b{q}" for q in b.matrix.question_ids]
    matrix = ObservationMatrix(values, a.matrix.worker_ids, qids)
    gt = None
    if a.ground_truth is not None and b.ground_truth is not None:
        gt = np.concatenate([a.ground_truth, b.ground_truth])
    return Dataset(matrix=matrix, ground_truth=gt)


def partition_questions(ds: Dataset, buckets: int, sort_by=None) -> list[Dataset]:
    """Split questions into contiguous quantile groups of similar truth values.

    Questions are sorted by ground truth (or by ``sort_by`` when no truth is
    available, labeled as such in metadata) and split into ``buckets``
    contiguous groups; each output records its ground-truth sample variance.
    """
    if buckets < 1:
        raise ValueError(f"buckets must be >= 1, got {buckets}")
    if ds.ground_truth is not None:
        keys = ds.ground_truth
        sort_label = "ground_truth"
    elif sort_by is not None:
        keys = as_answer_vector(sort_by)
        if keys.shape[0] != ds.matrix.n_questions:
            raise RequestTooLargeError("sort_by length != question count")
        sort_label = "aggregate_fallback"
    else:
        raise NoGroundTruthError("partitioning needs ground truth or an explicit sort key")
    order = np.argsort(keys, kind="stable")
    out = []
    for group in np.array_split(order, buckets):
        matrix = ObservationMatrix(
            ds.matrix.values[:, group],
            ds.matrix.worker_ids,
            [ds.matrix.question_ids[j] for j in group],
        )
        gt = ds.ground_truth[group] if ds.ground_truth is not None else None
        meta = dict(ds.metadata)
        meta["sorted_by"] = sort_label
        meta["gt_sample_variance"] = (
            dispersion(gt).sample_variance if gt is not None and gt.shape[0] >= 1 else None
        )
        out.append(Dataset(matrix=matrix, ground_truth=gt, metadata=meta))
    return out
