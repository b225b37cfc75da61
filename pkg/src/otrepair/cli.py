"""Command-line front end: CSV in, deterministic JSON/CSV out.

Reports are byte-identical across runs for identical inputs and flags:
fields are emitted in a fixed order, floats are printed with 17
significant digits, and sampling randomness comes only from the u
column or an explicit --seed.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys

import numpy as np

from . import approx as approx_mod
from . import diagnostics
from .barycenter import (
    barycenter_1d,
    barycenter_1d_exact,
    barycenter_entropic,
    barycenter_fixed_support,
    barycenter_free_support,
    default_support,
)
from .errors import (
    CsvParseError,
    DatasetMismatchError,
    DimensionMismatchError,
    DimensionNotOneError,
    EmptyDatasetError,
    EmptySupportError,
    HalfNotAllowedError,
    LpInfeasibleError,
    MissingColumnError,
    MissingUError,
    NegativeComponentError,
    NegativeWeightError,
    NotHalfError,
    NumericalUnderflowError,
    SolverFailureError,
    TooManyAtomsError,
    UnknownGroupError,
    UnknownSupportPointError,
    UnseenValueError,
    UOutOfRangeError,
    WeightSumError,
)
from .measure import Dataset, DiscreteMeasure, make_measure
from .ot import solve_comonotone_1d, solve_entropic, solve_exact
from .special_binary import (
    BinaryInstance,
    brute_force,
    is_half,
    solve_half,
    solve_nonhalf,
)

EXIT_OK = 0
EXIT_IO = 2
EXIT_SCHEMA = 3
EXIT_SOLVER = 4
EXIT_CONFIG = 5

_EPILOG = """\
exit codes:
  0  success (a report with "checks_failed": true still exits 0)
  2  I/O error (missing or unreadable/unwritable file)
  3  schema or parse error (missing column, malformed cell, bad data)
  4  solver failure
  5  configuration conflict (e.g. quantile1d on multi-d data, samples
     requested without a u column or --seed, epsilon <= 0)

CSV dialect: comma-separated, UTF-8, header row required, '.' decimal
point, no thousands separators.
"""


class _ConfigConflict(Exception):
    pass


# ---------------------------------------------------------------------------
# deterministic JSON / CSV emission
# ---------------------------------------------------------------------------

def _fmt_float(x: float) -> str:
    return f"{float(x):.17g}"


def _emit_json(value) -> str:
    if value is None:
        return "null"
    if value is True:
        return "true"
    if value is False:
        return "false"
    if isinstance(value, str):
        return json.dumps(value, ensure_ascii=False)
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return _fmt_float(value)
    if isinstance(value, np.ndarray):
        return _emit_json(value.tolist())
    if isinstance(value, (list, tuple)):
        return "[" + ",".join(_emit_json(v) for v in value) + "]"
    if isinstance(value, dict):
        parts = [
            json.dumps(str(k), ensure_ascii=False) + ":" + _emit_json(v)
            for k, v in value.items()
        ]
        return "{" + ",".join(parts) + "}"
    raise TypeError(f"cannot serialize {type(value)!r}")


def _write_report(path: str, payload: dict) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(_emit_json(payload))
        fh.write("\n")


def _cell(value: float | str) -> str:
    if isinstance(value, str):
        return value
    return _fmt_float(value)


# ---------------------------------------------------------------------------
# CSV ingestion
# ---------------------------------------------------------------------------

def _read_table(path: str) -> tuple[list[str], list[list[str]]]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CsvParseError(f"{path}: empty file, header row required")
        rows = [row for row in reader if row and any(cell.strip() for cell in row)]
    return [h.strip() for h in header], rows


def _column(header: list[str], name: str, path: str) -> int:
    try:
        return header.index(name)
    except ValueError:
        raise MissingColumnError(f"{path}: column {name!r} not found in {header}")


def _parse_float(cell: str, row: int, column: str) -> float:
    try:
        return float(cell)
    except ValueError:
        raise CsvParseError(
            f"row {row}: cannot parse {cell!r} in column {column!r}",
            row=row,
            column=column,
        )


def _load_dataset(path: str, group_col: str, value_cols: list[str],
                  weight_col: str | None, u_col: str | None) -> Dataset:
    header, rows = _read_table(path)
    gi = _column(header, group_col, path)
    vis = [_column(header, c, path) for c in value_cols]
    wi = _column(header, weight_col, path) if weight_col else None
    ui = _column(header, u_col, path) if u_col else None
    if not rows:
        raise EmptyDatasetError(f"{path}: no data rows")
    groups, xs, ws, us = [], [], [], []
    for r, row in enumerate(rows, start=2):
        groups.append(row[gi].strip())
        xs.append([_parse_float(row[i], r, header[i]) for i in vis])
        ws.append(_parse_float(row[wi], r, header[wi]) if wi is not None else 1.0)
        if ui is not None:
            us.append(_parse_float(row[ui], r, header[ui]))
    return Dataset(
        groups=tuple(groups),
        x=np.asarray(xs, dtype=float),
        weights=np.asarray(ws, dtype=float),
        u=np.asarray(us, dtype=float) if ui is not None else None,
    )


def _load_measures(path: str, measure_col: str, weight_col: str,
                   value_cols: list[str]) -> dict[str, DiscreteMeasure]:
    header, rows = _read_table(path)
    mi = _column(header, measure_col, path)
    wi = _column(header, weight_col, path)
    vis = [_column(header, c, path) for c in value_cols]
    if not rows:
        raise EmptyDatasetError(f"{path}: no data rows")
    points: dict[str, list] = {}
    weights: dict[str, list] = {}
    for r, row in enumerate(rows, start=2):
        mid = row[mi].strip()
        points.setdefault(mid, []).append(
            [_parse_float(row[i], r, header[i]) for i in vis]
        )
        weights.setdefault(mid, []).append(_parse_float(row[wi], r, header[wi]))
    return {
        mid: make_measure(np.asarray(points[mid]), np.asarray(weights[mid]))
        for mid in points
    }


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _common_config(args, keys) -> dict:
    cfg = {}
    for key in keys:
        cfg[key] = getattr(args, key.replace("-", "_"))
    return cfg


def _nu0_payload(nu0: DiscreteMeasure) -> dict:
    return {"support": nu0.support, "weights": nu0.weights}


def cmd_approx(args) -> int:
    value_cols = [c.strip() for c in args.value_cols.split(",") if c.strip()]
    if args.method == "quantile1d" and len(value_cols) != 1:
        raise _ConfigConflict("method quantile1d requires exactly one value column")
    if args.method == "entropic" and not args.epsilon > 0:
        raise _ConfigConflict("method entropic requires epsilon > 0")
    data = _load_dataset(args.input, args.group_col, value_cols,
                         args.weight_col, args.u_col)
    if args.method == "quantile1d" and data.dim != 1:
        raise _ConfigConflict("method quantile1d requires 1-D data")
    if args.samples and data.u is None and args.seed is None:
        raise _ConfigConflict(
            "samples requested but the dataset has no u column and no --seed "
            "was given; refusing nondeterministic output"
        )

    ap = approx_mod.build(
        data,
        method=args.method,
        epsilon=args.epsilon,
        max_iter=args.max_iter,
        tol=args.tol,
        resolution=args.resolution,
        k=args.k,
        init_seed=args.seed if args.seed is not None else 0,
    )
    report = diagnostics.verify(ap, data)

    config = _common_config(args, [
        "input", "group_col", "weight_col", "u_col", "method", "epsilon",
        "max_iter", "tol", "resolution", "k", "seed",
    ])
    config["value_cols"] = value_cols
    payload = {
        "schema": 1,
        "subcommand": "approx",
        "config": config,
        "n_rows": data.n_rows,
        "dimension": data.dim,
        "atoms": [
            {"label": str(a.label), "p": a.p, "size": a.law.n}
            for a in ap.family.atoms
        ],
        "method": ap.method,
        "nu0": _nu0_payload(ap.nu0),
        "objective": report.objective,
        "lower_bound": report.lower_bound,
        "gap": report.gap,
        "achieved_distance_sq": ap.achieved_distance_sq,
        "mean_x": report.mean_x,
        "mean_y": report.mean_y,
        "per_atom_w2": {str(k): v for k, v in report.per_atom_w2.items()},
        "independence_tv": {str(k): v for k, v in report.independence_tv.items()},
        "checks": [
            {"name": c.name, "passed": c.passed, "value": c.value,
             "tolerance": c.tolerance}
            for c in report.checks
        ],
        "checks_failed": not report.passed,
    }
    _write_report(args.report, payload)

    if args.samples:
        out = approx_mod.transform(ap, data, seed=args.seed)
        m = data.dim
        with open(args.samples, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(
                [args.group_col] + value_cols + ["weight", "u"]
                + [f"y{i + 1}" for i in range(m)]
            )
            for r in range(out.n_rows):
                writer.writerow(
                    [out.groups[r]]
                    + [_cell(v) for v in out.x[r]]
                    + [_cell(out.weights[r]), _cell(out.u[r])]
                    + [_cell(v) for v in out.y[r]]
                )
    return EXIT_OK


def cmd_binary_case(args) -> int:
    header, rows = _read_table(args.input)
    pi = _column(header, "p", args.input)
    fi = _column(header, "f", args.input)
    gi = _column(header, "g", args.input)
    li = header.index("atom") if "atom" in header else None
    if not rows:
        raise EmptyDatasetError(f"{args.input}: no data rows")
    labels, probs, fs, gs = [], [], [], []
    for r, row in enumerate(rows, start=2):
        labels.append(row[li].strip() if li is not None else str(r - 2))
        probs.append(_parse_float(row[pi], r, "p"))
        fs.append(_parse_float(row[fi], r, "f"))
        gs.append(_parse_float(row[gi], r, "g"))
    inst = BinaryInstance(tuple(labels), np.asarray(probs), np.asarray(fs),
                          np.asarray(gs), args.pA)
    half = is_half(args.pA)
    sol = solve_half(inst) if half else solve_nonhalf(inst)
    agrees = None
    if args.verify:
        bf = brute_force(inst)
        agrees = bool(abs(bf.distance_sq - sol.distance_sq) <= 1e-12)

    payload = {
        "schema": 1,
        "subcommand": "binary-case",
        "config": {"input": args.input, "pA": args.pA, "verify": bool(args.verify)},
        "regime": "half" if half else "nonhalf",
        "alpha": sol.alpha,
        "beta": sol.beta,
        "set_b": sorted(str(l) for l in sol.set_b) if sol.set_b is not None else None,
        "y_on_event": sol.y_on_event,
        "y_off_event": sol.y_off_event,
        "distance_sq": sol.distance_sq,
        "brute_force_agrees": agrees,
    }
    _write_report(args.report, payload)
    return EXIT_OK


def _two_measures(args) -> tuple[DiscreteMeasure, DiscreteMeasure]:
    value_cols = [c.strip() for c in args.value_cols.split(",") if c.strip()]
    measures = _load_measures(args.input, args.measure_col, args.weight_col,
                              value_cols)
    if len(measures) != 2:
        raise CsvParseError(
            f"{args.input}: expected exactly 2 measures, found {len(measures)}"
        )
    ids = list(measures)
    return measures[ids[0]], measures[ids[1]]


def cmd_ot(args) -> int:
    if args.method == "entropic" and not args.epsilon > 0:
        raise _ConfigConflict("method entropic requires epsilon > 0")
    mu, nu = _two_measures(args)
    if args.method == "exact":
        sol = solve_exact(mu, nu)
    elif args.method == "comonotone1d":
        sol = solve_comonotone_1d(mu, nu)
    else:
        sol = solve_entropic(mu, nu, args.epsilon, args.max_iter, args.tol)
    payload = {
        "schema": 1,
        "subcommand": "ot",
        "config": _common_config(args, [
            "input", "measure_col", "weight_col", "value_cols", "method",
            "epsilon", "max_iter", "tol",
        ]),
        "method": sol.method,
        "cost": sol.cost,
        "iterations": sol.iterations,
        "converged": sol.converged,
        "coupling": {
            "row_support": sol.coupling.row_measure.support,
            "row_weights": sol.coupling.row_measure.weights,
            "col_support": sol.coupling.col_measure.support,
            "col_weights": sol.coupling.col_measure.weights,
            "weights": sol.coupling.weights,
        },
    }
    _write_report(args.report, payload)
    return EXIT_OK


def _load_support(path: str, value_cols: list[str]) -> np.ndarray:
    header, rows = _read_table(path)
    vis = [_column(header, c, path) for c in value_cols]
    if not rows:
        raise EmptyDatasetError(f"{path}: no data rows")
    return np.asarray(
        [[_parse_float(row[i], r, header[i]) for i in vis]
         for r, row in enumerate(rows, start=2)],
        dtype=float,
    )


def cmd_barycenter(args) -> int:
    if args.method == "entropic" and not args.epsilon > 0:
        raise _ConfigConflict("method entropic requires epsilon > 0")
    value_cols = [c.strip() for c in args.value_cols.split(",") if c.strip()]
    data = _load_dataset(args.input, args.measure_col, value_cols,
                         args.weight_col, None)
    fam = approx_mod.estimate_conditionals(data)
    support = (_load_support(args.support, value_cols)
               if args.support else default_support(fam))
    method = args.method
    if method == "auto":
        method = "quantile1d" if fam.dim == 1 else "exact"
    if method == "quantile1d":
        if fam.dim != 1:
            raise _ConfigConflict("method quantile1d requires 1-D data")
        res = (barycenter_1d(fam, args.resolution) if args.resolution
               else barycenter_1d_exact(fam))
    elif method == "exact":
        res = barycenter_fixed_support(fam, support)
    elif method == "entropic":
        res = barycenter_entropic(fam, support, args.epsilon,
                                  args.max_iter, args.tol)
    else:
        k = args.k if args.k is not None else sum(a.law.n for a in fam.atoms)
        res = barycenter_free_support(fam, k,
                                      args.seed if args.seed is not None else 0,
                                      args.max_iter, args.tol)
    payload = {
        "schema": 1,
        "subcommand": "barycenter",
        "config": _common_config(args, [
            "input", "measure_col", "weight_col", "value_cols", "method",
            "epsilon", "max_iter", "tol", "resolution", "k", "seed", "support",
        ]),
        "method": res.method,
        "objective": res.objective,
        "per_measure_w2": {str(k): v for k, v in res.per_atom_w2.items()},
        "iterations": res.iterations,
        "converged": res.converged,
        "nu0": _nu0_payload(res.nu0),
    }
    _write_report(args.report, payload)
    return EXIT_OK


def cmd_diagnose(args) -> int:
    with open(args.report, "r", encoding="utf-8") as fh:
        ref = json.load(fh)
    try:
        support = np.asarray(ref["nu0"]["support"], dtype=float)
        weights = np.asarray(ref["nu0"]["weights"], dtype=float)
        group_col = ref["config"]["group_col"]
        value_cols = list(ref["config"]["value_cols"])
    except (KeyError, TypeError):
        raise CsvParseError(f"{args.report}: not a valid approx report")
    nu0 = DiscreteMeasure(support, weights)

    header, rows = _read_table(args.samples)
    gi = _column(header, group_col, args.samples)
    wi = _column(header, "weight", args.samples)
    ui = _column(header, "u", args.samples)
    xis = [_column(header, c, args.samples) for c in value_cols]
    yis = [_column(header, f"y{i + 1}", args.samples) for i in range(len(value_cols))]
    if not rows:
        raise EmptyDatasetError(f"{args.samples}: no data rows")
    groups, xs, ws, us, ys = [], [], [], [], []
    for r, row in enumerate(rows, start=2):
        groups.append(row[gi].strip())
        xs.append([_parse_float(row[i], r, header[i]) for i in xis])
        ws.append(_parse_float(row[wi], r, "weight"))
        us.append(_parse_float(row[ui], r, "u"))
        ys.append([_parse_float(row[i], r, header[i]) for i in yis])
    w = np.asarray(ws, dtype=float)
    out = approx_mod.SampledOutput(
        groups=tuple(groups),
        x=np.asarray(xs, dtype=float),
        u=np.asarray(us, dtype=float),
        y=np.asarray(ys, dtype=float),
        weights=w / w.sum(),
    )
    emp = diagnostics.empirical_distance(out)
    tv = diagnostics.independence_tv(out, nu0)
    reference = ref.get("achieved_distance_sq")
    payload = {
        "schema": 1,
        "subcommand": "diagnose",
        "config": {"samples": args.samples, "report": args.report},
        "empirical_distance": emp,
        "independence_tv": {str(k): v for k, v in sorted(tv.items())},
        "reference_objective": reference,
        "abs_error_vs_reference": (
            abs(emp - reference) if reference is not None else None
        ),
    }
    _write_report(args.out, payload)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser / entry point
# ---------------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="otrepair",
        description="Best independent approximation of grouped data "
                    "via Wasserstein-2 barycenters.",
        epilog=_EPILOG,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def add_solver_flags(p, resolution=True):
        p.add_argument("--epsilon", type=float, default=0.01)
        p.add_argument("--max-iter", type=int, default=1000)
        p.add_argument("--tol", type=float, default=1e-9)
        if resolution:
            p.add_argument("--resolution", type=int, default=None,
                           help="quantile grid size (default: exact breakpoints)")
            p.add_argument("--k", type=int, default=None,
                           help="free-support point count")
            p.add_argument("--seed", type=int, default=None,
                           help="64-bit seed for sampling / initialization")

    p = sub.add_parser("approx", help="run the full repair pipeline on a dataset")
    p.add_argument("--input", required=True)
    p.add_argument("--group-col", default="group")
    p.add_argument("--value-cols", default="x",
                   help="comma-separated coordinate columns, order fixed")
    p.add_argument("--weight-col", default=None)
    p.add_argument("--u-col", default=None)
    p.add_argument("--method", default="auto",
                   choices=["auto", "exact", "entropic", "free", "quantile1d"])
    add_solver_flags(p)
    p.add_argument("--report", required=True, help="output JSON path")
    p.add_argument("--samples", default=None, help="optional output CSV path")
    p.set_defaults(func=cmd_approx)

    p = sub.add_parser("binary-case",
                       help="closed forms for one independent binary event")
    p.add_argument("--input", required=True,
                   help="CSV with columns p,f,g and optional atom")
    p.add_argument("--pA", type=float, required=True)
    p.add_argument("--verify", action="store_true",
                   help="cross-check against brute force")
    p.add_argument("--report", required=True)
    p.set_defaults(func=cmd_binary_case)

    p = sub.add_parser("ot", help="couple two measures from one CSV")
    p.add_argument("--input", required=True)
    p.add_argument("--measure-col", default="measure")
    p.add_argument("--weight-col", default="weight")
    p.add_argument("--value-cols", default="x")
    p.add_argument("--method", default="exact",
                   choices=["exact", "entropic", "comonotone1d"])
    add_solver_flags(p, resolution=False)
    p.add_argument("--report", required=True)
    p.set_defaults(func=cmd_ot)

    p = sub.add_parser("barycenter", help="barycenter of measures from one CSV")
    p.add_argument("--input", required=True)
    p.add_argument("--measure-col", default="measure")
    p.add_argument("--weight-col", default="weight")
    p.add_argument("--value-cols", default="x")
    p.add_argument("--method", default="auto",
                   choices=["auto", "exact", "entropic", "free", "quantile1d"])
    p.add_argument("--support", default=None,
                   help="CSV of grid points (same value columns); "
                        "default: union of the measures' supports")
    add_solver_flags(p)
    p.add_argument("--report", required=True)
    p.set_defaults(func=cmd_barycenter)

    p = sub.add_parser("diagnose", help="verify a samples CSV against its report")
    p.add_argument("--samples", required=True)
    p.add_argument("--report", required=True, help="approx report JSON")
    p.add_argument("--out", required=True, help="output JSON path")
    p.set_defaults(func=cmd_diagnose)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _ConfigConflict as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (MissingUError, NotHalfError, HalfNotAllowedError,
            DimensionNotOneError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (MissingColumnError, CsvParseError, EmptyDatasetError,
            WeightSumError, NegativeWeightError, NegativeComponentError,
            EmptySupportError, DimensionMismatchError, UOutOfRangeError,
            TooManyAtomsError, UnknownGroupError, UnseenValueError,
            DatasetMismatchError, UnknownSupportPointError,
            json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_SCHEMA
    except (SolverFailureError, LpInfeasibleError, NumericalUnderflowError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
