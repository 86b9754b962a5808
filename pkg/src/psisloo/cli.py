"""Command-line interface: ``psisloo {loo,waic,kfold-split,kfold-elpd,compare}``.

Exit status is 0 on success, 1 for usage errors, 2 for unreadable or
invalid input and 3 when an estimator fails.
"""

from __future__ import annotations

import argparse
import sys
from typing import List, Optional

import numpy as np

from . import io
from .errors import EstimationError, InputError, LengthMismatch
from .estimators import (
    ElpdResult,
    bayesian_bootstrap_se,
    compare,
    elpd_loo,
    elpd_loo_from_blocks,
    waic,
    waic_from_blocks,
)
from .kfold import FoldAssignment, FoldLogLik, burman_from_folds, elpd_kfold, make_folds
from .psis import DEFAULT_TAIL_FRACTION, LEVELS

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_ESTIMATOR = 0, 1, 2, 3

LEVEL_RANGES = {
    "good": "(-Inf, 0.5)",
    "ok": "[0.5, 0.7]",
    "warn_high": "(0.7, 1]",
    "severe": "(1, Inf)",
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _fraction(text):
    v = float(text)
    if not 0 < v < 1:
        raise argparse.ArgumentTypeError(f"must be in (0, 1), got {text}")
    return v


def _exponent(text):
    v = float(text)
    if not 0 < v <= 1:
        raise argparse.ArgumentTypeError(f"must be in (0, 1], got {text}")
    return v


def _positive(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {text}")
    return v


def _add_input_options(p):
    p.add_argument("--format", choices=io.FORMATS, default="matrix_csv",
                   help="input layout (default: matrix_csv)")
    p.add_argument("--prefix", default=io.DEFAULT_PREFIX,
                   help="log-likelihood column or field name for draws_csv/ndjson")


def _add_estimator_options(p, methods=("is", "tis", "psis", "waic")):
    p.add_argument("--method", choices=methods, default="psis")
    p.add_argument("--tail-fraction", type=_fraction, default=DEFAULT_TAIL_FRACTION)
    p.add_argument("--trunc-exponent", type=_exponent, default=None,
                   help="truncation exponent (default 0.5 for tis, 0.75 for psis)")
    p.add_argument("--jobs", type=_positive, default=1, help="worker processes")
    p.add_argument("--block-size", type=_positive, default=None,
                   help="stream a matrix_csv input in blocks of this many columns")


def _add_output_options(p):
    p.add_argument("--output", help="write the JSON result document to this path")
    p.add_argument("--json", action="store_true", help="print the JSON document instead")
    p.add_argument("--pointwise", action="store_true", help="append a pointwise table")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="psisloo",
                     description="Leave-one-out, WAIC and K-fold elpd from log-likelihood draws.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("loo", help="leave-one-out elpd (PSIS by default)")
    p.add_argument("input")
    _add_input_options(p)
    _add_estimator_options(p)
    p.add_argument("--bootstrap", type=_positive, default=None, metavar="N",
                   help="also report a Bayesian-bootstrap SE with N replicates")
    p.add_argument("--seed", type=int, default=0)
    _add_output_options(p)

    p = sub.add_parser("waic", help="widely applicable information criterion")
    p.add_argument("input")
    _add_input_options(p)
    p.add_argument("--bootstrap", type=_positive, default=None, metavar="N")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--block-size", type=_positive, default=None)
    _add_output_options(p)

    p = sub.add_parser("kfold-split", aliases=["kfold_split"], help="random fold assignment")
    p.add_argument("--points", type=_positive, help="number of data points")
    p.add_argument("--folds", type=int, required=True, metavar="K")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--strata", help="file with one stratum label per point")
    p.add_argument("--output", help="CSV path (default: standard output)")

    p = sub.add_parser("kfold-elpd", aliases=["kfold_elpd"],
                       help="combine held-out log-likelihoods from K refits")
    p.add_argument("fold_inputs", nargs="+", metavar="FOLD_FILE",
                   help="one matrix per fold, in fold order; either the held-out columns "
                        "or all n columns")
    p.add_argument("--assignment", required=True, help="CSV written by kfold-split")
    p.add_argument("--full", help="log-likelihood matrix from the all-data fit")
    p.add_argument("--correct", action="store_true",
                   help="apply the bias correction for smaller training sets")
    _add_input_options(p)
    p.add_argument("--bootstrap", type=_positive, default=None, metavar="N")
    p.add_argument("--seed", type=int, default=0)
    _add_output_options(p)

    p = sub.add_parser("compare", help="paired elpd difference, second minus first")
    p.add_argument("first")
    p.add_argument("second")
    _add_input_options(p)
    _add_estimator_options(p)
    p.add_argument("--bootstrap", type=_positive, default=None, metavar="N")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", help="write the JSON result document to this path")
    p.add_argument("--json", action="store_true")
    return parser


def _fmt(x, width):
    return f"{'NA':>{width}}" if x is None else f"{x:>{width}.1f}"


def format_report(result: ElpdResult, bootstrap_se: Optional[float] = None,
                  pointwise: bool = False) -> str:
    """Human-readable summary: three estimate/SE rows and a diagnostic line."""
    names = io.ROW_NAMES[result.method]
    se = result.se_total
    rows = [
        (names[0], result.total, se),
        (names[1], result.p_eff, result.se_p_eff),
        (names[2], result.ic_scale, None if se is None else 2.0 * se),
    ]
    if result.method == "kfold":
        lines = [f"Computed from {result.options['K']}-fold held-out log-likelihood draws "
                 f"for {result.point_count} points"]
    else:
        lines = [f"Computed from {result.draw_count} by {result.point_count} "
                 "log-likelihood matrix"]
    if result.method in ("is_loo", "tis_loo"):
        lines.append(f"Method: {result.method}")
    label_w = max(len(r[0]) for r in rows)
    est_w = max(8, *(len(_fmt(r[1], 0)) for r in rows))
    se_w = max(4, *(len(_fmt(r[2], 0)) for r in rows))
    lines.append(f"{'':<{label_w}} {'Estimate':>{est_w}} {'SE':>{se_w}}")
    for name, est, err in rows:
        lines.append(f"{name:<{label_w}} {_fmt(est, est_w)} {_fmt(err, se_w)}")
    if bootstrap_se is not None:
        lines.append(f"Bayesian bootstrap SE of {names[0]}: {bootstrap_se:.1f}")
    if result.corrected:
        lines.append(f"Bias correction applied: {result.diagnostics['correction']:+.1f}")
    lines.extend(_diagnostic_lines(result))
    if pointwise:
        lines.append("")
        lines.extend(_pointwise_lines(result))
    return "\n".join(lines)


def _diagnostic_lines(result: ElpdResult) -> List[str]:
    d = result.diagnostics
    if result.method == "waic":
        flagged = d["flagged_points"]
        if not flagged:
            return [f"All p_waic terms at most {d['variance_limit']}"]
        n = result.point_count
        return [f"Warning: {len(flagged)} ({100 * len(flagged) / n:.1f}%) p_waic terms exceed "
                f"{d['variance_limit']}; PSIS-LOO is recommended instead"]
    if "pareto_k_counts" not in d:
        return []
    counts = d["pareto_k_counts"]
    n = result.point_count
    out = []
    if counts["good"] == n:
        out.append("All Pareto k estimates OK (k < 0.5)")
    else:
        out.append("Pareto k diagnostic values:")
        out.append(f"{'':<22}{'Count':>6} {'Pct':>6}")
        for level in LEVELS:
            c = counts[level]
            out.append(f"{LEVEL_RANGES[level]:<11} {level:<10}{c:>6} {100 * c / n:>5.1f}%")
        high = counts["warn_high"] + counts["severe"]
        if counts["ok"]:
            out.append(f"Warning: {counts['ok']} ({100 * counts['ok'] / n:.1f}%) Pareto k "
                       "estimates between 0.5 and 0.7")
        if counts["warn_high"]:
            out.append(f"Warning: {counts['warn_high']} ({100 * counts['warn_high'] / n:.1f}%) "
                       "Pareto k estimates between 0.7 and 1")
        if counts["severe"]:
            out.append(f"Warning: {counts['severe']} ({100 * counts['severe'] / n:.1f}%) "
                       "Pareto k estimates greater than 1")
        if high:
            out.append("For these points, sample the leave-one-out posterior directly "
                       "or use K-fold cross-validation")
    if d.get("undefined_k"):
        out.append(f"{d['undefined_k']} Pareto k estimates undefined (degenerate tail)")
    return out


def _pointwise_lines(result: ElpdResult) -> List[str]:
    names = io.ROW_NAMES[result.method]
    has_k = result.k_hats.size > 0
    header = f"{'point':>6} {names[0]:>14} {names[1]:>14}" + (f" {'k_hat':>8}" if has_k else "")
    lines = [header]
    p = result.p_pointwise
    for i in range(result.point_count):
        line = f"{i + 1:>6} {result.elpd[i]:>14.6f} " + \
            (f"{p[i]:>14.6f}" if p is not None else f"{'NA':>14}")
        if has_k:
            k = result.k_hats[i]
            line += f" {'NA':>8}" if np.isnan(k) else f" {k:>8.3f}"
        lines.append(line)
    return lines


def _input(args, path):
    return io.InputSpec(path, args.format, args.prefix)


def _blocks(args, path):
    if args.format != "matrix_csv":
        raise InputError("--block-size streaming needs --format matrix_csv")
    return io.iter_csv_column_blocks(path, args.block_size)


def _estimate(args, path) -> ElpdResult:
    method = args.method
    if args.block_size:
        blocks = _blocks(args, path)
        if method == "waic":
            return waic_from_blocks(blocks)
        return elpd_loo_from_blocks(blocks, method, args.tail_fraction, args.trunc_exponent,
                                    args.jobs)
    m = io.load_matrix(_input(args, path))
    if method == "waic":
        return waic(m)
    return elpd_loo(m, method, args.tail_fraction, args.trunc_exponent, args.jobs)


def _bootstrap(args, result):
    if args.bootstrap is None:
        return None
    return bayesian_bootstrap_se(result.elpd, args.bootstrap, args.seed)


def _emit(args, doc, text, out):
    if args.output:
        io.dump_json(doc, args.output)
    print(io.dump_json(doc) if args.json else text, file=out)


def _cmd_estimate(args, out):
    result = _estimate(args, args.input)
    boot = _bootstrap(args, result)
    _emit(args, io.result_document(result, boot),
          format_report(result, boot, args.pointwise), out)


def _cmd_kfold_split(args, out):
    strata = io.read_strata(args.strata) if args.strata else None
    n = args.points
    if n is None:
        if strata is None:
            raise _UsageError("--points is required unless --strata is given")
        n = strata.size
    elif strata is not None and strata.size != n:
        raise LengthMismatch(f"{args.strata} has {strata.size} labels for {n} points")
    assignment = make_folds(n, args.folds, args.seed, strata)
    if args.output:
        assignment.write_csv(args.output)
    else:
        print("point_index,fold_id", file=out)
        for i, k in enumerate(assignment.assignment, start=1):
            print(f"{i},{k}", file=out)


def _cmd_kfold_elpd(args, out):
    assignment = FoldAssignment.read_csv(args.assignment)
    if len(args.fold_inputs) != assignment.K:
        raise _UsageError(f"{assignment.K} folds in {args.assignment} but "
                          f"{len(args.fold_inputs)} fold files given")
    folds = []
    for k, path in enumerate(args.fold_inputs, start=1):
        values = io.load_matrix(_input(args, path)).values
        if values.shape[1] == assignment.n:
            folds.append(FoldLogLik.from_full(k, values, assignment))
        else:
            folds.append(FoldLogLik(k, values))
    full = io.load_matrix(_input(args, args.full)) if args.full else None
    result = elpd_kfold(folds, assignment, full)
    if args.correct:
        if full is None:
            raise _UsageError("--correct needs --full")
        result = burman_from_folds(result, full, folds)
    boot = _bootstrap(args, result)
    _emit(args, io.result_document(result, boot), format_report(result, boot, args.pointwise),
          out)


def _cmd_compare(args, out):
    a = _estimate(args, args.first)
    b = _estimate(args, args.second)
    cmp = compare(a, b)
    boot = None
    if args.bootstrap is not None:
        boot = bayesian_bootstrap_se(cmp.pointwise_diff, args.bootstrap, args.seed)
    name = io.ROW_NAMES[a.method][0]
    doc = {"method": a.method, "elpd_diff": cmp.elpd_diff, "se_diff": cmp.se_diff,
           "first": io.result_document(a)["estimates"],
           "second": io.result_document(b)["estimates"],
           "pointwise_diff": io._array(cmp.pointwise_diff)}
    if boot is not None:
        doc["bootstrap_se"] = boot
    text = [f"{name} difference (second - first); positive favors the second model",
            f"{'elpd_diff':<10} {'se_diff':>8}",
            f"{cmp.elpd_diff:>10.1f} {cmp.se_diff:>8.1f}"]
    if boot is not None:
        text.append(f"Bayesian bootstrap SE of elpd_diff: {boot:.1f}")
    _emit(args, doc, "\n".join(text), out)


class _UsageError(Exception):
    pass


COMMANDS = {
    "loo": _cmd_estimate,
    "waic": _cmd_estimate,
    "kfold-split": _cmd_kfold_split,
    "kfold_split": _cmd_kfold_split,
    "kfold-elpd": _cmd_kfold_elpd,
    "kfold_elpd": _cmd_kfold_elpd,
    "compare": _cmd_compare,
}


def main(argv: Optional[List[str]] = None, out=None) -> int:
    """Run the CLI and return its exit status."""
    out = sys.stdout if out is None else out
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.command == "waic":
            args.method = "waic"
        COMMANDS[args.command](args, out)
    except _UsageError as exc:
        print(f"psisloo: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (InputError, OSError) as exc:
        print(f"psisloo: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (EstimationError, ValueError) as exc:
        print(f"psisloo: estimation error: {exc}", file=sys.stderr)
        return EXIT_ESTIMATOR
    return EXIT_OK


def main_exit() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_exit()
