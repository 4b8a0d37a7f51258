"""Losses, Monte Carlo risk, the Improvement Ratio, and the risk-condition checks.

Replicates are generated in fixed-size chunks, each from its own keyed
counter-based stream, so every estimate is bit-reproducible from
(seed, config) under any evaluation order.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .baselines import TdAlgorithm, run_td_batch
from .data import (
    ROLE_GT,
    ROLE_SIGMA,
    ConstantGT,
    Dataset,
    GaussianSqSigmas,
    GtSpec,
    SigmaSpec,
    SyntheticSpec,
    draw_ground_truth,
    draw_worker_variances,
    gen_synthetic,
    stream,
    subsample,
)
from .errors import (
    InsufficientDataError,
    InsufficientReplicatesError,
    LengthMismatchError,
    NonPositiveVarianceError,
)
from .estimators import shrink_batch
from .variance import Constant, HeuristicH, OracleReduced, SampleScaled, VarianceEstimator

SUM_SQUARED = "sum"
MEAN_SQUARED = "mean"

# Chunk size is part of the algorithm definition (it fixes the RNG stream
# layout), not a tuning knob.
CHUNK = 20_000

REPLICATE_ROLE = 100  # stream role for Monte Carlo replicate chunks


@dataclass(frozen=True)
class RiskReport:
    name: str
    mean_loss: float
    std_error: float
    replicates: int
    seed: int
    loss_convention: str


@dataclass(frozen=True)
class ConditionReport:
    name: str
    lhs: float
    rhs: float
    direction: str  # '<' or '>'
    satisfied: bool
    std_errors: tuple = ()


def loss(estimate, mu, convention: str = SUM_SQUARED) -> float:
    """Squared Euclidean error, summed or averaged over questions."""
    estimate = np.asarray(estimate, dtype=float)
    mu = np.asarray(mu, dtype=float)
    if estimate.shape != mu.shape:
        raise LengthMismatchError(f"estimate shape {estimate.shape} != truth shape {mu.shape}")
    total = float(((estimate - mu) ** 2).sum())
    if convention == SUM_SQUARED:
        return total
    if convention == MEAN_SQUARED:
        return total / mu.shape[0]
    raise ValueError(f"unknown loss convention {convention!r}")


# ---------------------------------------------------------------------------
# Replicate generation


@dataclass(frozen=True)
class AwgGenerator:
    """Replicate generator: fresh noise every replicate; truths and worker
    variances either fixed per run or redrawn per replicate."""

    gt: GtSpec
    worker_sigmas: SigmaSpec
    n: int
    m: int
    fresh_gt: bool = True
    fresh_sigmas: bool = False


def _draw_gt_batch(gt: GtSpec, r: int, m: int, rng: np.random.Generator) -> np.ndarray:
    if isinstance(gt, ConstantGT):
        return np.full((r, m), float(gt.value))
    return rng.normal(gt.mean, np.sqrt(gt.variance), size=(r, m))


def _draw_sigmas_batch(spec: SigmaSpec, r: int, n: int, rng: np.random.Generator) -> np.ndarray:
    if isinstance(spec, GaussianSqSigmas):
        sig2 = rng.normal(spec.mean, np.sqrt(spec.variance), size=(r, n))
        while np.any(sig2 < spec.floor):
            low = sig2 < spec.floor
            sig2[low] = rng.normal(spec.mean, np.sqrt(spec.variance), size=int(low.sum()))
        return sig2
    return np.broadcast_to(draw_worker_variances(spec, n, rng), (r, n)).copy()


def iter_replicates(gen: AwgGenerator, replicates: int, seed: int):
    """Yield (X (r,n,m), mu (r,m), sigma2 (r,n)) chunks, deterministically."""
    fixed_mu = None
    fixed_sig2 = None
    if not gen.fresh_gt:
        fixed_mu = draw_ground_truth(gen.gt, gen.m, stream(seed, ROLE_GT, 0))
    if not gen.fresh_sigmas:
        fixed_sig2 = draw_worker_variances(gen.worker_sigmas, gen.n, stream(seed, ROLE_SIGMA, 0))
    for chunk_index, start in enumerate(range(0, replicates, CHUNK)):
        r = min(CHUNK, replicates - start)
        rng = stream(seed, REPLICATE_ROLE, chunk_index)
        mu = (_draw_gt_batch(gen.gt, r, gen.m, rng) if gen.fresh_gt
              else np.broadcast_to(fixed_mu, (r, gen.m)))
        sig2 = (_draw_sigmas_batch(gen.worker_sigmas, r, gen.n, rng) if gen.fresh_sigmas
                else np.broadcast_to(fixed_sig2, (r, gen.n)))
        noise = rng.normal(size=(r, gen.n, gen.m))
        X = mu[:, None, :] + noise * np.sqrt(sig2)[:, :, None]
        yield X, mu, sig2


# ---------------------------------------------------------------------------
# Batched pipeline evaluators


def psi_batch(psi: VarianceEstimator, Xb: np.ndarray, xa: np.ndarray) -> np.ndarray:
    """Evaluate a variance estimator across a (r, n, m) batch."""
    r, n, m = Xb.shape
    if isinstance(psi, HeuristicH):
        return ((Xb - xa[:, None, :]) ** 2).sum(axis=(1, 2)) / (n * (m - 1))
    if isinstance(psi, SampleScaled):
        dev = xa - xa.mean(axis=1, keepdims=True)
        return psi.c * (dev**2).sum(axis=1) / (m - 1)
    if isinstance(psi, Constant):
        return np.full(r, psi.c)
    if isinstance(psi, OracleReduced):
        return np.full(r, 1.0 / (1.0 / np.asarray(psi.guesses)).sum())
    raise TypeError(f"no batch rule for {psi!r}")


def psi_derivative_dot_batch(psi: VarianceEstimator, Xb: np.ndarray,
                             xa: np.ndarray) -> np.ndarray:
    """sum_j dpsi/dxa_j * (xa_j - mean(xa)) per replicate (analytic forms)."""
    r, n, m = Xb.shape
    dev = xa - xa.mean(axis=1, keepdims=True)
    if isinstance(psi, (Constant, OracleReduced)):
        return np.zeros(r)
    if isinstance(psi, SampleScaled):
        return 2.0 * psi.c * (dev**2).sum(axis=1) / (m - 1)
    if isinstance(psi, HeuristicH):
        # dpsi/dxa_j = 2 (xa_j - column mean) / (m - 1), raw matrix held fixed
        grad = 2.0 * (xa - Xb.mean(axis=1)) / (m - 1)
        return (grad * dev).sum(axis=1)
    raise TypeError(f"no batch derivative rule for {psi!r}")


@dataclass(frozen=True)
class Pipeline:
    """A named map from replicate batches to estimate batches."""

    name: str
    fn: object  # callable (Xb, sig2b) -> (r, m)

    def __call__(self, Xb, sig2b):
        return self.fn(Xb, sig2b)


def _blue_batch(Xb, sig2b):
    w = 1.0 / sig2b
    return np.einsum("rn,rnm->rm", w, Xb) / w.sum(axis=1, keepdims=True)


def _agg_variance(sig2b):
    return 1.0 / (1.0 / sig2b).sum(axis=1)


def pipeline_blue() -> Pipeline:
    return Pipeline("blue", _blue_batch)


def pipeline_eb_blue(alpha: float | None = None, positive_part: bool = False) -> Pipeline:
    def fn(Xb, sig2b):
        agg = _blue_batch(Xb, sig2b)
        a = (Xb.shape[2] - 3) if alpha is None else alpha
        return shrink_batch(agg, _agg_variance(sig2b), a, positive_part)

    name = "eb_blue" if alpha is None else f"eb_blue_alpha{alpha:g}"
    return Pipeline(name, fn)


def pipeline_stein_blue() -> Pipeline:
    def fn(Xb, sig2b):
        agg = _blue_batch(Xb, sig2b)
        m = agg.shape[1]
        if m <= 2:
            return agg
        norm2 = (agg**2).sum(axis=1, keepdims=True)
        factor = 1.0 - (m - 2) * _agg_variance(sig2b)[:, None] / norm2
        return factor * agg

    return Pipeline("stein_blue", fn)


def pipeline_base(base: TdAlgorithm, name: str | None = None) -> Pipeline:
    return Pipeline(name or type(base).__name__.lower(),
                    lambda Xb, sig2b: run_td_batch(base, Xb))


def pipeline_eb_wrap(base: TdAlgorithm, psi: VarianceEstimator,
                     alpha: float | None = None, positive_part: bool = False,
                     name: str | None = None) -> Pipeline:
    def fn(Xb, sig2b):
        xa = run_td_batch(base, Xb)
        sigma2_hat = psi_batch(psi, Xb, xa)
        a = (Xb.shape[2] - 3) if alpha is None else alpha
        safe = np.where(sigma2_hat > 0, sigma2_hat, 1.0)
        shrunk = shrink_batch(xa, safe, a, positive_part)
        return np.where((sigma2_hat > 0)[:, None], shrunk, xa)

    return Pipeline(name or f"eb_{type(base).__name__.lower()}", fn)


# ---------------------------------------------------------------------------
# Monte Carlo risk


@dataclass(frozen=True)
class McResult:
    reports: dict
    losses: dict = field(repr=False)
    seed: int = 0
    convention: str = SUM_SQUARED

    def risk(self, name: str) -> float:
        return self.reports[name].mean_loss

    def diff(self, a: str, b: str) -> tuple[float, float]:
        """Mean and standard error of the paired loss difference a - b."""
        d = self.losses[a] - self.losses[b]
        return float(d.mean()), float(d.std(ddof=1) / np.sqrt(d.shape[0]))


def mc_risk(gen: AwgGenerator, pipelines, replicates: int, seed: int,
            convention: str = SUM_SQUARED) -> McResult:
    """Paired Monte Carlo risk of several pipelines on identical replicate data."""
    if replicates < 2:
        raise InsufficientReplicatesError(f"need >= 2 replicates, got {replicates}")
    pipelines = list(pipelines)
    losses = {p.name: np.empty(replicates) for p in pipelines}
    pos = 0
    for X, mu, sig2 in iter_replicates(gen, replicates, seed):
        r = X.shape[0]
        for p in pipelines:
            est = p(X, sig2)
            l = ((est - mu) ** 2).sum(axis=1)
            if convention == MEAN_SQUARED:
                l = l / gen.m
            losses[p.name][pos:pos + r] = l
        pos += r
    reports = {}
    for name, l in losses.items():
        reports[name] = RiskReport(
            name=name,
            mean_loss=float(l.mean()),
            std_error=float(l.std(ddof=1) / np.sqrt(replicates)),
            replicates=replicates,
            seed=seed,
            loss_convention=convention,
        )
    return McResult(reports=reports, losses=losses, seed=seed, convention=convention)


# ---------------------------------------------------------------------------
# Replicate streams of aggregated answers (for the condition checks)


@dataclass(frozen=True)
class AggregateStream:
    """Replicated (aggregate, sigma-hat^2, derivative dot, truth) draws for one
    base algorithm and variance estimator under an AWG generator."""

    aggregates: np.ndarray   # (R, m)
    psis: np.ndarray         # (R,)
    derivative_dots: np.ndarray  # (R,) sum_j psi'_j (xa_j - mean)
    mu: np.ndarray           # (R, m)
    seed: int


def sample_aggregate_stream(gen: AwgGenerator, base: TdAlgorithm,
                            psi: VarianceEstimator, replicates: int,
                            seed: int) -> AggregateStream:
    aggregates = np.empty((replicates, gen.m))
    psis = np.empty(replicates)
    dots = np.empty(replicates)
    mus = np.empty((replicates, gen.m))
    pos = 0
    for X, mu, sig2 in iter_replicates(gen, replicates, seed):
        r = X.shape[0]
        xa = run_td_batch(base, X)
        aggregates[pos:pos + r] = xa
        psis[pos:pos + r] = psi_batch(psi, X, xa)
        dots[pos:pos + r] = psi_derivative_dot_batch(psi, X, xa)
        mus[pos:pos + r] = mu
        pos += r
    return AggregateStream(aggregates=aggregates, psis=psis, derivative_dots=dots,
                           mu=mus, seed=seed)


def _stream_parts(s: AggregateStream):
    dev = s.aggregates - s.aggregates.mean(axis=1, keepdims=True)
    ss = (dev**2).sum(axis=1)
    if np.any(ss <= 0):
        raise InsufficientDataError("degenerate replicate with zero dispersion")
    return dev, ss


def improvement_condition(s: AggregateStream) -> ConditionReport:
    """Improvement condition for an unbiased base: twice the covariance term
    must outweigh the quadratic term.  The per-replicate statistic equals the
    paired loss difference base-minus-wrapped, so the sign doubles as a risk
    comparison."""
    m = s.aggregates.shape[1]
    if m <= 3:
        raise InsufficientDataError("condition needs m > 3")
    dev, ss = _stream_parts(s)
    alpha = m - 3
    cov_term = ((s.aggregates - s.mu) * s.psis[:, None] * dev / ss[:, None]).sum(axis=1)
    quad_term = s.psis**2 / ss
    t = 2 * alpha * cov_term - alpha**2 * quad_term
    se = float(t.std(ddof=1) / np.sqrt(t.shape[0]))
    lhs = float(t.mean())
    return ConditionReport(name="improvement_condition", lhs=lhs, rhs=0.0,
                           direction=">", satisfied=lhs > 0.0, std_errors=(se,))


def risk_decomposition(s: AggregateStream, sigma2: float) -> dict:
    """Two-sided check of the normal-model risk decomposition.

    lhs: paired Monte Carlo gap risk(wrapped) - risk(base).  rhs: the
    closed-form expectation with sample-variance normalization and the
    compensating prefactor.  They agree when the residual is within 3
    standard errors of zero.
    """
    if sigma2 <= 0:
        raise NonPositiveVarianceError(f"sigma2 must be > 0, got {sigma2}")
    m = s.aggregates.shape[1]
    dev, ss = _stream_parts(s)
    alpha = m - 3
    s2 = ss / (m - 1)
    # paired per-replicate gap via the exact algebraic expansion of the loss
    cov_term = ((s.aggregates - s.mu) * s.psis[:, None] * dev / ss[:, None]).sum(axis=1)
    lhs_r = -2 * alpha * cov_term + alpha**2 * s.psis**2 / ss
    rhs_r = (alpha**2 / (m - 1)) * (
        s.psis**2 / s2
        - 2 * sigma2 * (s.psis / s2 + s.derivative_dots / (alpha * s2))
    )
    resid = lhs_r - rhs_r
    se = float(resid.std(ddof=1) / np.sqrt(resid.shape[0]))
    return {
        "lhs_gap": float(lhs_r.mean()),
        "rhs_formula": float(rhs_r.mean()),
        "residual": float(resid.mean()),
        "residual_se": se,
        "agree": bool(abs(resid.mean()) < 3 * se if se > 0 else resid.mean() == 0),
    }


def sufficient_conditions(s: AggregateStream, sigma2: float, psi: VarianceEstimator,
                         eps: float | None = None, delta: float | None = None,
                         bound: float | None = None) -> list[ConditionReport]:
    """Monte Carlo plug-ins for the sufficient improvement conditions.

    The deviation-bound conditions take eps/delta/bound as declared properties
    of the supplied estimator and check the closed-form brackets.
    """
    m = s.aggregates.shape[1]
    dev, ss = _stream_parts(s)
    s2 = ss / (m - 1)
    reports = []

    e_psi2 = s.psis**2 / s2
    e_psi = s.psis / s2
    e_dot = s.derivative_dots / ((m - 3) * s2)

    def se(x):
        return float(np.asarray(x).std(ddof=1) / np.sqrt(len(x)))

    denom6 = float(e_psi.mean() + e_dot.mean())
    lhs6 = float(e_psi2.mean() / denom6) if denom6 != 0 else float("inf")
    reports.append(ConditionReport(
        name="general_ratio_condition", lhs=lhs6, rhs=2 * sigma2, direction="<",
        satisfied=lhs6 < 2 * sigma2, std_errors=(se(e_psi2), se(e_psi), se(e_dot))))

    denom7 = float(e_psi.mean())
    lhs7 = float(e_psi2.mean() / denom7) if denom7 != 0 else float("inf")
    reports.append(ConditionReport(
        name="mean_adjusted_ratio_condition", lhs=lhs7, rhs=2 * sigma2, direction="<",
        satisfied=lhs7 < 2 * sigma2, std_errors=(se(e_psi2), se(e_psi))))

    if isinstance(psi, (Constant, OracleReduced)):
        guess = float(s.psis[0])
        reports.append(ConditionReport(
            name="constant_guess_condition", lhs=guess, rhs=2 * sigma2, direction="<",
            satisfied=guess < 2 * sigma2))

    if eps is not None and delta is None:
        reports.append(ConditionReport(
            name="bounded_deviation_condition", lhs=float(eps), rhs=sigma2, direction="<",
            satisfied=0 < eps < sigma2))

    if eps is not None and delta is not None and bound is not None:
        b_cap = delta * sigma2**2 / (1 - delta) if delta < 1 else float("inf")
        reports.append(ConditionReport(
            name="probabilistic_bound_cap", lhs=float(bound), rhs=float(b_cap),
            direction="<", satisfied=bound < b_cap))
        radicand = 5 * sigma2**2 + bound * (1 - 1 / delta)
        eps_cap = -2 * sigma2 + np.sqrt(radicand) if radicand >= 0 else float("-inf")
        reports.append(ConditionReport(
            name="probabilistic_eps_bracket", lhs=float(eps), rhs=float(eps_cap),
            direction="<", satisfied=0 < eps < eps_cap))
    return reports


def bayes_risk_gap(sigma2: float, sigma0_2: float) -> float:
    """Per-coordinate identity-minus-posterior-mean risk gap under the
    hierarchical generator."""
    if sigma2 <= 0 or sigma0_2 <= 0:
        raise NonPositiveVarianceError("both variances must be > 0")
    return sigma2**2 / (sigma0_2 + sigma2)


# ---------------------------------------------------------------------------
# Improvement Ratio


@dataclass(frozen=True)
class IrResult:
    improvement_ratio: float
    base_risk: float
    eb_risk: float
    samples: int
    seed: int


def improvement_ratio(source, base: TdAlgorithm, psi: VarianceEstimator,
                      n: int, m: int, samples: int = 1000, seed: int = 0,
                      alpha: float | None = None,
                      positive_part: bool = True) -> IrResult:
    """Risk of the shrink-wrapped pipeline over the risk of the base algorithm.

    ``source`` is a Dataset with ground truth (subsampled without replacement
    per sample) or a (GtSpec, SigmaSpec) pair for fresh synthetic draws.  The
    benchmark protocol clips the shrinkage weight at zero by default: with a
    per-worker variance proxy the unclipped weight can turn negative on
    many-worker aggregates and the overshoot swamps the comparison.
    """
    if samples < 1:
        raise InsufficientDataError(f"need >= 1 samples, got {samples}")
    Xb = np.empty((samples, n, m))
    mub = np.empty((samples, m))
    if isinstance(source, Dataset):
        if source.ground_truth is None:
            raise InsufficientDataError("improvement ratio needs ground truth")
        if n > source.matrix.n_workers or m > source.matrix.n_questions:
            raise InsufficientDataError(
                f"cannot draw {n}x{m} samples from a "
                f"{source.matrix.n_workers}x{source.matrix.n_questions} dataset")
        for i in range(samples):
            sub = subsample(source, n, m, seed, index=i)
            Xb[i] = sub.matrix.values
            mub[i] = sub.ground_truth
    else:
        gt_spec, sigma_spec = source
        for i in range(samples):
            ds = gen_synthetic(SyntheticSpec(gt=gt_spec, worker_sigmas=sigma_spec,
                                             n=n, m=m, seed=seed), index=i)
            Xb[i] = ds.matrix.values
            mub[i] = ds.ground_truth
    xa = run_td_batch(base, Xb)
    sigma2_hat = psi_batch(psi, Xb, xa)
    a = (m - 3) if alpha is None else alpha
    safe = np.where(sigma2_hat > 0, sigma2_hat, 1.0)
    eb = np.where((sigma2_hat > 0)[:, None],
                  shrink_batch(xa, safe, a, positive_part), xa)
    base_risk = float(((xa - mub) ** 2).sum(axis=1).mean())
    eb_risk = float(((eb - mub) ** 2).sum(axis=1).mean())
    if base_risk == 0.0:
        raise InsufficientDataError("base risk is zero; ratio undefined")
    return IrResult(improvement_ratio=eb_risk / base_risk, base_risk=base_risk,
                    eb_risk=eb_risk, samples=samples, seed=seed)


# ---------------------------------------------------------------------------
# Report serialization


def report_record(obj) -> dict:
    rec = asdict(obj)
    if "std_errors" in rec:
        rec["std_errors"] = list(rec["std_errors"])
    return rec


def write_reports_csv(path_or_file, records: list[dict]) -> None:
    """Flat CSV: union of record keys, in first-seen order."""
    fields: list[str] = []
    for rec in records:
        for k in rec:
            if k not in fields:
                fields.append(k)

    def _emit(fh):
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        for rec in records:
            writer.writerow({k: _fmt(v) for k, v in rec.items()})

    if hasattr(path_or_file, "write"):
        _emit(path_or_file)
    else:
        with open(path_or_file, "w", newline="", encoding="utf-8") as fh:
            _emit(fh)


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, tuple)):
        return ";".join(repr(float(x)) for x in v)
    return v


def write_reports_jsonl(path, records: list[dict]) -> None:
    """One JSON object per line."""
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True, default=_json_scalar) + "\n")


def _json_scalar(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")
