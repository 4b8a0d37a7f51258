"""Batch command-line front end emitting reproducible CSV/JSONL reports.

Subcommands: demo-table1, simulate, evaluate, conditions.  Every run embeds
the resolved config (and seed) in a '# config:' header line of each report,
and repeated runs with the same seed produce byte-identical output under any
thread count.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import hashlib
import json
import os
import sys

import numpy as np

from . import analysis
from .analysis import (
    AwgGenerator,
    MEAN_SQUARED,
    SUM_SQUARED,
    improvement_ratio,
    mc_risk,
    pipeline_blue,
    pipeline_eb_blue,
    pipeline_stein_blue,
    sample_aggregate_stream,
    improvement_condition,
    risk_decomposition,
    sufficient_conditions,
    loss,
    report_record,
)
from .baselines import CATD, CRH, Blue, DistanceWeighted, Mean, Median, blue_aggregate
from .data import (
    ConstantGT,
    ExplicitSigmas,
    GaussianGT,
    GaussianSqSigmas,
    IndexedSigmas,
    load_csv,
    partition_questions,
)
from .errors import EbtruthError, ParseError, ValidationError
from .estimators import ebe
from .model import dispersion, validate_matrix
from .variance import Constant, HeuristicH, SampleScaled

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_IO = 2
EXIT_ASSERTION = 3

TABLE1_VALUES = [[20, 2, 3, 4], [10, 11, 18, 14], [8, 11, 23, 19], [6, 13, 7, 3]]
TABLE1_VARIANCES = [93.5, 11.0, 34.5, 56.5]
TABLE1_GT = [10.0, 9.0, 12.0, 16.0]
TABLE1_AVG = [11.0, 9.25, 12.75, 10.0]
TABLE1_AVG_LOSS = 9.41
TABLE1_BLUE = [9.85, 10.6, 16.6, 12.95]
# entries are printed at mixed precision; tolerance is half a display step
# (with a little slack), per printed digit count
TABLE1_BLUE_ATOL = [0.01, 0.05, 0.05, 0.01]
TABLE1_BLUE_LOSS = 8.22


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_VALIDATION)


def _parse_gt(text: str):
    kind, _, rest = text.partition(":")
    if kind == "constant":
        return ConstantGT(float(rest or 2.0))
    if kind == "gaussian":
        mean, var = (rest or "2,1").split(",")
        return GaussianGT(float(mean), float(var))
    raise ValidationError(f"unknown ground-truth spec {text!r}")


def _parse_sigmas(text: str):
    kind, _, rest = text.partition(":")
    if kind == "indexed":
        return IndexedSigmas()
    if kind == "gaussian-sq":
        if rest:
            mean, var, floor = rest.split(",")
            return GaussianSqSigmas(float(mean), float(var), float(floor))
        return GaussianSqSigmas()
    if kind == "explicit":
        return ExplicitSigmas([float(x) for x in rest.split(",")])
    raise ValidationError(f"unknown worker-sigma spec {text!r}")


def _parse_psi(text: str):
    kind, _, rest = text.partition(":")
    if kind == "h":
        return HeuristicH()
    if kind == "s":
        return SampleScaled(float(rest or 1.0))
    if kind == "const":
        return Constant(float(rest))
    raise ValidationError(f"unknown variance estimator {text!r}")


BASES = {
    "mean": Mean(),
    "median": Median(),
    "crh": CRH(),
    "catd": CATD(),
    "distance": DistanceWeighted(),
}


def _parse_base(text: str):
    if text in BASES:
        return BASES[text]
    raise ValidationError(f"unknown base algorithm {text!r}")


def _resolve_config(args: argparse.Namespace) -> dict:
    cfg = {k: v for k, v in vars(args).items() if k not in ("func", "config")}
    if getattr(args, "config", None):
        try:
            with open(args.config, encoding="utf-8") as fh:
                overrides = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(exc.lineno, f"config file: {exc.msg}") from None
        for key, value in overrides.items():
            key = key.replace("-", "_")
            if key not in cfg:
                raise ValidationError(f"config file: unknown key {key!r}")
            cfg[key] = value
    return cfg


def _config_header(cfg: dict) -> str:
    # threads and the output directory affect execution, not results; keeping
    # them out of the header keeps reports byte-identical across thread counts
    cfg = {k: v for k, v in cfg.items() if k not in ("threads", "out")}
    body = json.dumps(cfg, sort_keys=True, default=str)
    digest = hashlib.sha256(body.encode()).hexdigest()[:16]
    return f"# config: {body}\n# config_hash: {digest}\n"


def _write_csv(path, header: str, records: list[dict]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(header)
        analysis.write_reports_csv(fh, records)


def _threads(value: str) -> int:
    if value == "auto":
        return min(8, os.cpu_count() or 1)
    n = int(value)
    if n < 1:
        raise ValidationError("--threads must be >= 1 or 'auto'")
    return n


# ---------------------------------------------------------------------------
# demo-table1


def cmd_demo_table1(args) -> int:
    X = validate_matrix(TABLE1_VALUES)
    gt = np.asarray(TABLE1_GT)
    avg = X.values.mean(axis=0)
    blue, agg_var = blue_aggregate(X, TABLE1_VARIANCES)
    eb = ebe(blue, agg_var).estimate

    avg_loss = loss(avg, gt, MEAN_SQUARED)
    blue_loss = loss(blue, gt, MEAN_SQUARED)
    eb_loss = loss(eb, gt, MEAN_SQUARED)

    def row(label, values, l):
        print(f"{label:<10}" + "".join(f"{v:>10.4f}" for v in values) + f"  loss={l:.4f}")

    print("worker answers (rows) x questions (columns):")
    for wid, r in zip(X.worker_ids, X.values):
        print(f"  worker {wid}: " + "  ".join(f"{v:6.1f}" for v in r))
    print(f"known worker variances: {TABLE1_VARIANCES}")
    row("GT", gt, 0.0)
    row("AVG", avg, avg_loss)
    row("BLUE", blue, blue_loss)
    row("EbBlue", eb, eb_loss)
    print(f"aggregated-worker variance: {agg_var:.4f}")

    failures = []
    if not np.allclose(avg, TABLE1_AVG, atol=0.01):
        failures.append("AVG row mismatch")
    if abs(avg_loss - TABLE1_AVG_LOSS) > 0.05:
        failures.append("AVG loss mismatch")
    if np.any(np.abs(blue - np.asarray(TABLE1_BLUE)) > np.asarray(TABLE1_BLUE_ATOL)):
        failures.append("BLUE row mismatch")
    if abs(blue_loss - TABLE1_BLUE_LOSS) > 0.05:
        failures.append("BLUE loss mismatch")
    if not eb_loss < blue_loss:
        failures.append("shrinkage did not improve on BLUE")
    if failures:
        for f in failures:
            print(f"SELF-CHECK FAILED: {f}", file=sys.stderr)
        return EXIT_ASSERTION
    print("self-check: ok")
    return EXIT_OK


# ---------------------------------------------------------------------------
# simulate


def _simulate_cell(args_tuple):
    gen, replicates, seed, convention = args_tuple
    pipelines = [pipeline_blue(), pipeline_eb_blue(), pipeline_stein_blue()]
    result = mc_risk(gen, pipelines, replicates, seed, convention)
    rows = []
    for name in ("blue", "eb_blue", "stein_blue"):
        rep = result.reports[name]
        rows.append({
            "n": gen.n, "m": gen.m, "pipeline": name,
            "mean_loss": rep.mean_loss, "std_error": rep.std_error,
            "replicates": rep.replicates, "seed": rep.seed,
            "loss_convention": rep.loss_convention,
        })
    gap, gap_se = result.diff("blue", "eb_blue")
    rows.append({
        "n": gen.n, "m": gen.m, "pipeline": "gap_blue_minus_eb_blue",
        "mean_loss": gap, "std_error": gap_se,
        "replicates": replicates, "seed": seed, "loss_convention": convention,
    })
    return rows


def cmd_simulate(args) -> int:
    cfg = _resolve_config(args)
    gt = _parse_gt(cfg["gt"])
    sigmas = _parse_sigmas(cfg["sigmas"])
    n_grid = [int(x) for x in str(cfg["n_grid"]).split(",")]
    m_grid = [int(x) for x in str(cfg["m_grid"]).split(",")]
    convention = SUM_SQUARED if cfg["loss"] == "sum" else MEAN_SQUARED
    threads = _threads(str(cfg["threads"]))
    cells = []
    for ci, (n, m) in enumerate((n, m) for n in n_grid for m in m_grid):
        gen = AwgGenerator(gt=gt, worker_sigmas=sigmas, n=n, m=m, fresh_gt=True)
        # one independent seed per cell keeps results thread-order-free
        cells.append((gen, int(cfg["replicates"]), int(cfg["seed"]) * 100_003 + ci, convention))
    with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as pool:
        per_cell = list(pool.map(_simulate_cell, cells))
    records = [row for rows in per_cell for row in rows]
    os.makedirs(cfg["out"], exist_ok=True)
    out_path = os.path.join(cfg["out"], "simulate.csv")
    _write_csv(out_path, _config_header(cfg), records)
    print(f"wrote {out_path} ({len(records)} rows)")
    return EXIT_OK


# ---------------------------------------------------------------------------
# evaluate


def cmd_evaluate(args) -> int:
    cfg = _resolve_config(args)
    if not cfg.get("data"):
        raise ValidationError("evaluate requires --data")
    ds = load_csv(cfg["data"])
    psi = _parse_psi(cfg["psi"])
    bases = [(_parse_base(b), b) for b in str(cfg["bases"]).split(",")]
    buckets = int(cfg["partition"])
    datasets = [("all", ds)] if buckets <= 1 else [
        (f"bucket{i}", part) for i, part in enumerate(partition_questions(ds, buckets))
    ]
    records = []
    for label, part in datasets:
        gt_var = (dispersion(part.ground_truth).sample_variance
                  if part.ground_truth is not None and part.ground_truth.shape[0] >= 2
                  else None)
        for base, base_name in bases:
            res = improvement_ratio(part, base, psi, n=int(cfg["n"]), m=int(cfg["m"]),
                                    samples=int(cfg["samples"]), seed=int(cfg["seed"]))
            records.append({
                "subset": label, "base": base_name,
                "gt_sample_variance": gt_var,
                "improvement_ratio": res.improvement_ratio,
                "base_risk": res.base_risk, "eb_risk": res.eb_risk,
                "samples": res.samples, "seed": res.seed,
            })
            print(f"{label} base={base_name} IR={res.improvement_ratio:.6f}")
    os.makedirs(cfg["out"], exist_ok=True)
    out_path = os.path.join(cfg["out"], "evaluate.csv")
    _write_csv(out_path, _config_header(cfg), records)
    print(f"wrote {out_path} ({len(records)} rows)")
    return EXIT_OK


# ---------------------------------------------------------------------------
# conditions


def cmd_conditions(args) -> int:
    cfg = _resolve_config(args)
    gt = _parse_gt(cfg["gt"])
    sigmas = _parse_sigmas(cfg["sigmas"])
    psi = _parse_psi(cfg["psi"])
    base = _parse_base(cfg["base"])
    n, m = int(cfg["n"]), int(cfg["m"])
    gen = AwgGenerator(gt=gt, worker_sigmas=sigmas, n=n, m=m, fresh_gt=True)
    seed = int(cfg["seed"])
    stream_data = sample_aggregate_stream(gen, base, psi, int(cfg["replicates"]), seed)

    if cfg.get("sigma2") is not None:
        sigma2 = float(cfg["sigma2"])
    else:
        from .data import draw_worker_variances, stream as _stream, ROLE_SIGMA
        sig2 = draw_worker_variances(sigmas, n, _stream(seed, ROLE_SIGMA, 0))
        if isinstance(base, Mean):
            sigma2 = float(sig2.sum() / n**2)
        elif isinstance(base, Blue):
            sigma2 = float(1.0 / (1.0 / sig2).sum())
        else:
            raise ValidationError(
                "aggregated variance is only derivable for mean/blue bases; pass --sigma2")

    records = [report_record(improvement_condition(stream_data))]
    for rep in sufficient_conditions(
            stream_data, sigma2, psi,
            eps=cfg.get("eps"), delta=cfg.get("delta"), bound=cfg.get("bound")):
        records.append(report_record(rep))
    decomp = risk_decomposition(stream_data, sigma2)
    records.append({"name": "risk_decomposition", "lhs": decomp["lhs_gap"],
                    "rhs": decomp["rhs_formula"], "direction": "=",
                    "satisfied": decomp["agree"],
                    "std_errors": [decomp["residual_se"]]})
    for rec in records:
        rec["seed"] = seed
        print(f"{rec['name']}: lhs={rec['lhs']:.6g} rhs={rec['rhs']:.6g} "
              f"satisfied={rec['satisfied']}")
    os.makedirs(cfg["out"], exist_ok=True)
    csv_path = os.path.join(cfg["out"], "conditions.csv")
    jsonl_path = os.path.join(cfg["out"], "conditions.jsonl")
    _write_csv(csv_path, _config_header(cfg), records)
    analysis.write_reports_jsonl(jsonl_path, records)
    print(f"wrote {csv_path} and {jsonl_path}")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ebtruth", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--replicates", type=int, default=100_000)
        p.add_argument("--out", default="out")
        p.add_argument("--loss", choices=["sum", "mean"], default="sum")
        p.add_argument("--threads", default="auto")
        p.add_argument("--data", default=None, help="dataset CSV path")
        p.add_argument("--config", default=None,
                       help="JSON config file; file values win over flags")

    p = sub.add_parser("demo-table1", help="print the built-in worked example and self-check")
    p.set_defaults(func=cmd_demo_table1)

    p = sub.add_parser("simulate", help="paired risk sweep over an (n, m) grid")
    common(p)
    p.add_argument("--gt", default="gaussian:2,1")
    p.add_argument("--sigmas", default="indexed")
    p.add_argument("--n-grid", dest="n_grid", default="1,2,4,8")
    p.add_argument("--m-grid", dest="m_grid", default="5,10,25,100")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("evaluate", help="improvement ratio on a dataset file")
    common(p)
    p.add_argument("--bases", default="mean,median,crh,catd,distance")
    p.add_argument("--psi", default="h")
    p.add_argument("--n", type=int, required=False, default=4)
    p.add_argument("--m", type=int, required=False, default=4)
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--partition", type=int, default=1)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("conditions", help="numeric risk-condition reports on synthetic data")
    common(p)
    p.add_argument("--gt", default="constant:2")
    p.add_argument("--sigmas", default="explicit:1")
    p.add_argument("--psi", default="const:1")
    p.add_argument("--base", default="mean")
    p.add_argument("--n", type=int, default=1)
    p.add_argument("--m", type=int, default=10)
    p.add_argument("--sigma2", type=float, default=None,
                   help="true aggregated-worker variance override")
    p.add_argument("--eps", type=float, default=None)
    p.add_argument("--delta", type=float, default=None)
    p.add_argument("--bound", type=float, default=None)
    p.set_defaults(func=cmd_conditions)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (FileNotFoundError, PermissionError, IsADirectoryError, ParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValidationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except EbtruthError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    raise SystemExit(main())
