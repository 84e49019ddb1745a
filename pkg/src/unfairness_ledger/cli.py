"""Command-line front end.

Every subcommand reads a comma-separated CSV with a header row and writes its
artifacts into ``--out``: ``report.json`` (sorted keys, shortest round-trip
floats, NaN as null), ``curves.csv`` for per-cell data and ``sweep.csv`` for
sweeps (floats at 17 significant digits). Exit codes: 0 success, 2 invalid
input, 3 degenerate input.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

import jsonschema
import numpy as np

from .calibration import recalibrate_empirical
from .classifier import classifier_decompose, classifier_stats
from .core import AuditTable, BinningSpec, validate_table
from .errors import DegenerateInputError, MissingColumn, ValidationError
from .identity import budget_bound, decompose_binary, decompose_general, impossibility_diagnostic
from .models import SweepResult, TrainConfig, ablation_sweep, lambda_sweep
from .synth import (
    BinaryPopSpec,
    CounterexampleSpec,
    ExperimentSpec,
    gen_binary_population,
    gen_counterexample,
    gen_experiment_data,
)

log = logging.getLogger("unfairness_ledger")

EXIT_OK, EXIT_INVALID, EXIT_DEGENERATE = 0, 2, 3
SEED_ENV = "UNFAIRNESS_LEDGER_SEED"
_TRUE = {"1", "true"}
_FALSE = {"0", "false"}


# ---------------------------------------------------------------------------
# CSV in / out


def read_csv(path: str) -> tuple[list[str], dict[str, list[str]]]:
    p = Path(path)
    if not p.is_file():
        raise ValidationError(f"input file not found: {path}")
    with p.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ValidationError(f"{path} is empty") from None
        if len(set(header)) != len(header):
            raise ValidationError(f"{path} has duplicate column names")
        cols: dict[str, list[str]] = {h: [] for h in header}
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ValidationError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            for h, v in zip(header, row):
                cols[h].append(v.strip())
    return header, cols


def _pick(cols: dict, name: str) -> list[str]:
    if name not in cols:
        raise MissingColumn(name)
    return cols[name]


def numeric(cols: dict, name: str) -> np.ndarray:
    raw = _pick(cols, name)
    out = np.empty(len(raw))
    for i, v in enumerate(raw):
        if v == "":
            out[i] = math.nan
            continue
        try:
            out[i] = float(v)
        except ValueError:
            raise ValidationError(f"column {name!r} row {i + 2}: {v!r} is not a number") from None
    return out


def binary(cols: dict, name: str) -> np.ndarray:
    """0/1 column; also accepts false/true in any case."""
    raw = _pick(cols, name)
    out = np.empty(len(raw))
    for i, v in enumerate(raw):
        s = v.lower()
        if s in _TRUE:
            out[i] = 1.0
        elif s in _FALSE:
            out[i] = 0.0
        elif s == "":
            out[i] = math.nan
        else:
            try:
                out[i] = float(s)
            except ValueError:
                raise ValidationError(f"column {name!r} row {i + 2}: {v!r} is not 0/1/true/false") from None
    return out


def fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "" if math.isnan(v) else format(float(v), ".17g")
    return str(v)


def write_csv(path: Path, fields: Sequence[str], rows: Sequence[dict]) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(fields)
        for r in rows:
            w.writerow([fmt(r.get(f)) for f in fields])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return None if not math.isfinite(f) else f
    return obj


def write_json(path: Path, payload: dict) -> None:
    text = json.dumps(_jsonable(payload), sort_keys=True, indent=2, allow_nan=False)
    path.write_text(text + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# argument helpers


def resolve_seed(flag: Optional[int], fallback: Optional[int] = None) -> int:
    if flag is not None:
        return flag
    if fallback is not None:
        return fallback
    env = os.environ.get(SEED_ENV)
    if env:
        try:
            return int(env)
        except ValueError:
            raise ValidationError(f"{SEED_ENV} must be an integer, got {env!r}") from None
    return 0


def _csv_list(text: Optional[str]) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()] if text else []


def score_binning(args) -> BinningSpec:
    if args.bin_strategy == "distinct-values":
        return BinningSpec.distinct("score")
    return BinningSpec(args.bin_strategy, args.bins, "score")


def outcome_binning(args, table: AuditTable) -> Optional[BinningSpec]:
    strategy = args.outcome_bin_strategy
    if strategy is None:
        if args.outcome_range is None and args.outcome_bins is None:
            return None  # module default: classes for binary y, 20 equal-frequency cells otherwise
        strategy = "equal-width" if args.outcome_range is not None else "equal-frequency"
    if strategy == "distinct-values":
        return BinningSpec.distinct("outcome")
    bounds = None
    if args.outcome_range is not None:
        parts = _csv_list(args.outcome_range)
        if len(parts) != 2:
            raise ValidationError("--outcome-range takes LO,HI")
        try:
            bounds = (float(parts[0]), float(parts[1]))
        except ValueError:
            raise ValidationError("--outcome-range takes two numbers") from None
    return BinningSpec(strategy, args.outcome_bins or 20, "outcome", bounds)


def load_table(args, need_score: bool = True, general: bool = False) -> tuple[AuditTable, list[str], dict]:
    header, cols = read_csv(args.input)
    y = binary(cols, args.outcome_col)
    y_is_binary = bool(np.all(np.isin(y[~np.isnan(y)], (0.0, 1.0))))
    raw = {"y": y, "g": binary(cols, args.group_col)}
    raw["z"] = numeric(cols, args.score_col) if need_score else np.zeros_like(y)
    kind = "binary" if (y_is_binary or not general) else "continuous"
    return validate_table(raw, outcome_kind=kind), header, cols


def maybe_recalibrate(table: AuditTable, mode: str) -> AuditTable:
    return table if mode == "none" else recalibrate_empirical(table, mode)


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _wants(args, what: str) -> bool:
    return args.format in (what, "both")


def _columns(args) -> dict:
    return {"outcome": args.outcome_col, "group": args.group_col, "score": args.score_col}


CURVE_FIELDS = ("curve", "cell", "value", "lo", "hi", "delta", "omega", "mass", "n", "n_group1", "weighted_cov")


def curve_rows(report) -> list[dict]:
    rows = []
    for name, curve in (("miscalibration", report.score_curve), ("imbalance", report.outcome_curve)):
        if curve is None:
            continue
        for rec in curve.records():
            rows.append(dict(rec, curve=name))
    return rows


def _emit_report(args, payload: dict, report=None) -> list[Path]:
    out = _out_dir(args)
    written = []
    if _wants(args, "json"):
        write_json(out / "report.json", payload)
        written.append(out / "report.json")
    if report is not None and _wants(args, "csv"):
        write_csv(out / "curves.csv", CURVE_FIELDS, curve_rows(report))
        written.append(out / "curves.csv")
    return written


# ---------------------------------------------------------------------------
# subcommands


def cmd_audit(args) -> list[Path]:
    table, _, _ = load_table(args, general=args.general)
    table = maybe_recalibrate(table, args.recalibrate)
    sb = score_binning(args)
    if args.general:
        report = decompose_general(table, outcome_binning(args, table), sb, args.normalization)
    else:
        report = decompose_binary(table, sb, args.normalization)
    payload = {
        "command": "audit",
        "config": {
            "columns": _columns(args),
            "recalibrate": args.recalibrate,
            "normalization": args.normalization,
            "general": args.general,
        },
        "report": report.to_dict(curves=False),
    }
    print(f"delta_c={report.delta_c:.6g} delta_b={report.delta_b:.6g} budget={report.budget:.6g} residual={report.residual:.3g}")
    return _emit_report(args, payload, report)


def cmd_classifier_audit(args) -> list[Path]:
    _, cols = read_csv(args.input)
    y = binary(cols, args.outcome_col)
    yhat = binary(cols, args.pred_col)
    g = binary(cols, args.group_col)
    for name, a in ((args.outcome_col, y), (args.pred_col, yhat), (args.group_col, g)):
        if np.isnan(a).any():
            raise ValidationError(f"column {name!r} has missing values")
        if not np.all((a == 0) | (a == 1)):
            raise ValidationError(f"column {name!r} must be 0/1 or false/true")
    stats = classifier_stats(y, yhat, g)
    report = classifier_decompose(y, yhat, g)
    payload = {
        "command": "classifier-audit",
        "config": {"columns": {"outcome": args.outcome_col, "group": args.group_col, "prediction": args.pred_col}},
        "report": report.to_dict(curves=False),
        "rates": stats.to_dict(),
    }
    print(f"delta_c={report.delta_c:.6g} delta_b={report.delta_b:.6g} budget={report.budget:.6g}")
    return _emit_report(args, payload, report)


def cmd_recalibrate(args) -> list[Path]:
    table, header, cols = load_table(args, general=True)
    mode = "isotonic" if args.recalibrate == "none" else args.recalibrate
    new = recalibrate_empirical(table, mode)
    rows = []
    z = new.z
    for i in range(table.n):
        row = {h: cols[h][i] for h in header}
        row[args.score_col] = fmt(z[i])
        rows.append(row)
    out = _out_dir(args) / "recalibrated.csv"
    write_csv(out, header, rows)
    return [out]


def _features(args, header: list[str]) -> list[str]:
    if args.features:
        return _csv_list(args.features)
    skip = {args.outcome_col, args.group_col, args.score_col, args.pred_col}
    return [h for h in header if h not in skip]


def _sweep_inputs(args):
    header, cols = read_csv(args.input)
    names = _features(args, header)
    if not names:
        raise ValidationError("no feature columns; pass --features")
    if args.group_col in names:
        raise ValidationError(f"group column {args.group_col!r} must not be a feature; use --include-group")
    y = binary(cols, args.outcome_col)
    g = binary(cols, args.group_col)
    xs = [numeric(cols, f) for f in names]
    if args.include_group:
        names = names + [args.group_col]
        xs.append(g)
    x = np.column_stack(xs)
    validate_table({"y": y, "g": g, "z": np.zeros_like(y), "x": x, "feature_names": tuple(names)})
    return names, x, y, g


SWEEP_FIELDS = (
    "key", "mse", "raw_mse", "raw_calibration_residual", "calibration_residual", "delta_c", "delta_b",
    "delta_b0", "omega_y0", "delta_b1", "omega_y1", "lhs", "budget", "residual", "base_rate_gap",
    "train_penalty", "converged", "weights_digest",
)


def _emit_sweep(args, result: SweepResult, config: dict) -> list[Path]:
    out = _out_dir(args)
    written = []
    if _wants(args, "json"):
        payload = {
            "command": args.command,
            "config": config,
            "points": [
                dict(p.row(), report=p.report.to_dict(curves=False), weights=p.weights) for p in result.points
            ],
        }
        write_json(out / "report.json", payload)
        written.append(out / "report.json")
    if _wants(args, "csv"):
        write_csv(out / "sweep.csv", SWEEP_FIELDS, result.rows())
        written.append(out / "sweep.csv")
    for p in result.points:
        print(f"key={p.key:g} mse={p.report.mse:.6g} lhs={p.report.lhs:.6g} delta_b={p.report.delta_b:.6g}")
    return written


def _train_config(args) -> TrainConfig:
    return TrainConfig(max_iter=args.max_iter)


def cmd_ablate(args) -> list[Path]:
    names, x, y, g = _sweep_inputs(args)
    seed = resolve_seed(args.seed)
    prefixes = [int(p) for p in _csv_list(args.prefixes)] or None
    result = ablation_sweep(
        x, y, g, prefixes=prefixes, config=_train_config(args),
        train_fraction=args.train_fraction, seed=seed, recalibration=args.recalibrate_mode,
        calibration_fraction=args.calibration_fraction,
    )
    config = {
        "features": names, "seed": seed, "train_fraction": args.train_fraction,
        "recalibrate": args.recalibrate_mode, "calibration_fraction": args.calibration_fraction,
        "columns": _columns(args),
    }
    return _emit_sweep(args, result, config)


def cmd_penalize(args) -> list[Path]:
    names, x, y, g = _sweep_inputs(args)
    seed = resolve_seed(args.seed)
    try:
        lambdas = [float(v) for v in _csv_list(args.lambdas)]
    except ValueError:
        raise ValidationError("--lambdas takes comma-separated numbers") from None
    if not lambdas:
        raise ValidationError("--lambdas is empty")
    result = lambda_sweep(
        x, y, g, lambdas, target=args.target, config=_train_config(args),
        train_fraction=args.train_fraction, seed=seed, recalibration=args.recalibrate_mode,
        calibration_fraction=args.calibration_fraction,
    )
    config = {
        "features": names, "lambdas": lambdas, "target": args.target, "seed": seed,
        "train_fraction": args.train_fraction, "recalibrate": args.recalibrate_mode,
        "calibration_fraction": args.calibration_fraction, "columns": _columns(args),
    }
    return _emit_sweep(args, result, config)


def synth_schema() -> dict:
    text = resources.files("unfairness_ledger").joinpath("synth_spec.schema.json").read_text(encoding="utf-8")
    return json.loads(text)


def load_synth_spec(path: str) -> dict:
    p = Path(path)
    if not p.is_file():
        raise ValidationError(f"spec file not found: {path}")
    try:
        spec = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"spec file is not valid JSON: {exc}") from None
    try:
        jsonschema.validate(spec, synth_schema())
    except jsonschema.ValidationError as exc:
        raise ValidationError(f"spec file does not match the synth schema: {exc.message}") from None
    return spec


def cmd_synth(args) -> list[Path]:
    spec = load_synth_spec(args.spec)
    kind = spec.pop("kind")
    spec["seed"] = resolve_seed(args.seed, spec.get("seed"))
    out = _out_dir(args) / "synth.csv"
    if kind == "counterexample":
        t = gen_counterexample(CounterexampleSpec(**spec))
        fields = ("y", "g", "z", "x")
        cols = {"y": t.y, "g": t.g, "z": t.z, "x": t.feature("x")}
    elif kind == "binary":
        spec["support"] = tuple(tuple(s) for s in spec["support"])
        spec["p_group"] = tuple(spec["p_group"])
        if "p_outcome_g1" in spec:
            spec["p_outcome_g1"] = tuple(spec["p_outcome_g1"])
        t = gen_binary_population(BinaryPopSpec(**spec))
        fields = ("y", "g", "z")
        cols = {"y": t.y, "g": t.g, "z": t.z}
    else:
        d = gen_experiment_data(ExperimentSpec(**spec))
        k = d["x"].shape[1]
        fields = tuple(f"x{j}" for j in range(k)) + ("y", "g")
        cols = {f"x{j}": d["x"][:, j] for j in range(k)}
        cols.update(y=d["y"], g=d["g"])
    n = len(cols["y"])
    int_cols = {"g"} if kind == "counterexample" else {"y", "g"}
    rows = [
        {f: (int(cols[f][i]) if f in int_cols else float(cols[f][i])) for f in fields}
        for i in range(n)
    ]
    write_csv(out, fields, rows)
    print(f"wrote {n} rows to {out}")
    return [out]


def cmd_diagnose(args) -> list[Path]:
    table, _, _ = load_table(args, general=True)
    table = maybe_recalibrate(table, args.recalibrate)
    verdict = impossibility_diagnostic(table, outcome_binning(args, table), score_binning=score_binning(args))
    payload = {
        "command": "diagnose",
        "config": {"columns": _columns(args), "recalibrate": args.recalibrate},
        "diagnostic": verdict.to_dict(),
    }
    print(verdict.verdict)
    return _emit_report(args, payload)


def cmd_bound(args) -> list[Path]:
    table, _, _ = load_table(args, general=True)
    table = maybe_recalibrate(table, args.recalibrate)
    b = budget_bound(table, outcome_binning(args, table), score_binning(args))
    payload = {
        "command": "bound",
        "config": {"columns": _columns(args), "recalibrate": args.recalibrate},
        "bound": b.to_dict(),
    }
    print(f"|lhs|={b.lhs_abs:.6g} <= {b.bound_between:.6g} <= {b.bound_mse:.6g}: {'holds' if b.holds else 'VIOLATED'}")
    return _emit_report(args, payload)


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="unfairness-ledger",
        description="Audit calibrated scores and classifiers: miscalibration, imbalance and the MSE budget.",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default=".", help="output directory (created if missing)")
    common.add_argument("--format", choices=("json", "csv", "both"), default="both")
    common.add_argument("--seed", type=int, default=None, help=f"random seed (fallback: ${SEED_ENV}, then 0)")

    cols = argparse.ArgumentParser(add_help=False)
    cols.add_argument("input", help="CSV file with a header row")
    cols.add_argument("--outcome-col", default="y")
    cols.add_argument("--group-col", default="g")
    cols.add_argument("--score-col", default="z")
    cols.add_argument("--pred-col", default="yhat")

    binning = argparse.ArgumentParser(add_help=False)
    binning.add_argument("--bin-strategy", choices=("distinct-values", "equal-frequency", "equal-width"),
                         default="distinct-values", help="score cells")
    binning.add_argument("--bins", type=int, default=20, help="score cell count (binned strategies)")
    binning.add_argument("--outcome-bin-strategy", choices=("distinct-values", "equal-frequency", "equal-width"),
                         default=None)
    binning.add_argument("--outcome-bins", type=int, default=None)
    binning.add_argument("--outcome-range", default=None, metavar="LO,HI", help="fixed equal-width outcome range")
    binning.add_argument("--recalibrate", choices=("none", "isotonic", "bin-mean"), default="isotonic",
                         help="empirical recalibration applied before auditing")
    binning.add_argument("--normalization", choices=("population", "sample"), default="population")

    p = sub.add_parser("audit", parents=[cols, binning, common], help="risk-score decomposition")
    p.add_argument("--general", action="store_true", help="general-outcome budget (continuous y allowed)")
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("classifier-audit", parents=[cols, common], help="classifier decomposition from group rates")
    p.set_defaults(func=cmd_classifier_audit)

    p = sub.add_parser("recalibrate", parents=[cols, common], help="write the input with recalibrated scores")
    p.add_argument("--recalibrate", choices=("isotonic", "bin-mean"), default="isotonic")
    p.set_defaults(func=cmd_recalibrate)

    train = argparse.ArgumentParser(add_help=False)
    train.add_argument("--features", default=None, help="comma-separated feature columns, in ablation order")
    train.add_argument("--train-fraction", type=float, default=0.7)
    train.add_argument("--max-iter", type=int, default=500)
    train.add_argument("--include-group", action="store_true", help="append the group column as the last feature")
    train.add_argument("--recalibrate", dest="recalibrate_mode", choices=("isotonic", "bin-mean"), default="isotonic")
    train.add_argument("--calibration-fraction", type=float, default=0.0,
                       help="share of the eval split held out to fit the isotonic map (0: fit on all eval rows)")

    p = sub.add_parser("ablate", parents=[cols, train, common], help="feature-prefix sweep")
    p.add_argument("--prefixes", default=None, help="comma-separated prefix lengths")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("penalize", parents=[cols, train, common], help="imbalance-penalty sweep")
    p.add_argument("--lambdas", default="0,1,10")
    p.add_argument("--target", choices=("deltaB", "deltaB1"), default="deltaB1")
    p.set_defaults(func=cmd_penalize)

    p = sub.add_parser("synth", parents=[common], help="generate a CSV from a JSON spec")
    p.add_argument("spec", help="JSON spec file (see synth_spec.schema.json)")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("diagnose", parents=[cols, binning, common], help="impossibility-premise diagnostic")
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("bound", parents=[cols, binning, common], help="Cauchy-Schwarz budget bound")
    p.set_defaults(func=cmd_bound)
    return parser


def run(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    for attr in ("bins", "outcome_bins"):
        v = getattr(args, attr, None)
        if v is not None and v < 1:
            print(f"error: --{attr.replace('_', '-')} must be >= 1", file=sys.stderr)
            return EXIT_INVALID
    try:
        for path in args.func(args):
            log.info("wrote %s", path)
    except (ValidationError, jsonschema.ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except DegenerateInputError as exc:
        print(f"error: degenerate input: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
