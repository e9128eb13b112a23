"""``dosk`` command line: fit, predict, tune and bench."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys

from . import __version__
from .bench import DESIGNS, SUMMARY_FIELDS, run_bench, write_plot_data
from .exceptions import ConvergenceError, DataError, DimensionError, LabelError, ModelFormatError, SolverError
from .kernel import KernelSpec, median_heuristic_gamma
from .loss import LossSpec
from .model import CvGrid, cross_validate, decision_values, fit_model, load_model, save_model
from .model import selected_variables
from .simdata import CLASSIFICATION, REGRESSION, apply_ranges, column_ranges, read_csv, read_table
from .solver import Hyperparams, SolverConfig

EXIT_OK, EXIT_DATA, EXIT_SOLVER = 0, 2, 3
_TASKS = {"reg": REGRESSION, "class": CLASSIFICATION}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_DATA, f"{self.prog}: error: {message}\n")


def _floats(text):
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError as err:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from err


def _gamma(text):
    if text == "median":
        return text
    try:
        return float(text)
    except ValueError as err:
        raise argparse.ArgumentTypeError(f"gamma must be a number or 'median', got {text!r}") from err


def _default_jobs():
    try:
        return int(os.environ.get("DOSK_JOBS", "1"))
    except ValueError:
        return 1


def _dump(obj, path, pretty=False):
    text = json.dumps(obj, indent=2 if pretty else None) + "\n"
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


def _task_loss(args):
    task = _TASKS[args.task]
    loss = args.loss or ("hinge" if task == CLASSIFICATION else "squared")
    spec = LossSpec(loss)
    if spec.is_margin != (task == CLASSIFICATION):
        raise DataError(f"loss {loss!r} does not fit task {args.task!r}")
    return task, spec


def _load(args, task):
    if args.label is None:
        raise DataError("label column not found: no --label given")
    return read_csv(args.data, args.label, task)


def _kernel(args, Xs):
    gamma = median_heuristic_gamma(Xs) if args.gamma == "median" else args.gamma
    return KernelSpec(args.kernel, gamma=gamma, offset_c=args.coef0, degree_d=args.degree)


def cmd_fit(args):
    task, loss = _task_loss(args)
    data = _load(args, task)
    ranges = column_ranges(data.X) if args.standardize else None
    kernel = _kernel(args, apply_ranges(data.X, ranges) if ranges is not None else data.X)
    hp = Hyperparams(args.lambda1, args.lambda2, args.lambda3)
    cfg = SolverConfig(seed=args.seed, n_starts=args.n_starts, freeze_w=args.freeze_w,
                       max_outer_iters=args.max_iter)
    model, trace = fit_model(data.X, data.y, kernel, loss, hp, cfg, standardize=args.standardize,
                             penalty_scale=args.penalty_scale)
    save_model(model, args.out)
    report = {
        "objective": trace.final_objective,
        "iterations": trace.iters_used,
        "converged": trace.converged,
        "n_selected_vars": len(selected_variables(model)),
        "n_support_points": len(model.support_points),
        "selected_vars": [data.feature_names[j] for j in sorted(selected_variables(model))],
        "gamma": kernel.gamma,
    }
    _dump(report, args.report, args.pretty)
    return EXIT_OK


def cmd_predict(args):
    model = load_model(args.model)
    if args.label is not None:
        X = read_csv(args.data, args.label).X
    else:
        X = read_table(args.data)[1]
    scores = decision_values(model, X)
    out = sys.stdout if args.out in (None, "-") else open(args.out, "w", newline="", encoding="utf-8")
    try:
        w = csv.writer(out)
        if model.loss.is_margin:
            w.writerow(["decision", "label"])
            for s in scores:
                w.writerow([repr(float(s)), 1 if s >= 0 else -1])
        else:
            w.writerow(["prediction"])
            for s in scores:
                w.writerow([repr(float(s))])
    finally:
        if out is not sys.stdout:
            out.close()
    return EXIT_OK


def _grid(args):
    defaults = CvGrid()
    return CvGrid(
        args.lambda1_grid or defaults.lambda1_candidates,
        args.lambda2_grid or defaults.lambda2_candidates,
        args.gamma_grid or defaults.gamma_candidates,
        args.lambda3,
        args.folds,
    )


def cmd_tune(args):
    task, loss = _task_loss(args)
    data = _load(args, task)
    X = apply_ranges(data.X, column_ranges(data.X)) if args.standardize else data.X
    cfg = SolverConfig(seed=args.seed, freeze_w=args.freeze_w)
    result = cross_validate(X, data.y, KernelSpec(args.kernel).family, loss, _grid(args), cfg, args.seed,
                            penalty_scale=args.penalty_scale, n_jobs=args.jobs)
    _dump(result.best_params(), args.out, args.pretty)
    if args.table:
        with open(args.table, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            folds = len(result.table[0].fold_errors)
            w.writerow(["lambda1", "lambda2", "lambda3", "gamma", "cv_error"] + [f"fold{k + 1}" for k in range(folds)])
            for r in result.table:
                w.writerow([repr(r.lambda1), repr(r.lambda2), repr(r.lambda3), repr(r.gamma), repr(r.cv_error)]
                           + [repr(e) for e in r.fold_errors])
    return EXIT_OK


def _pretty_table(report):
    lines = [f"{report['design']}  n={report['n']}  p0={report['p0']}  replicates={report['replicates']}"]
    for name in SUMMARY_FIELDS:
        s = report["summary"].get(name)
        if s is not None:
            lines.append(f"  {name:<20} {s['mean']:.4f} ({s['std']:.4f})")
    return "\n".join(lines) + "\n"


def cmd_bench(args):
    grid = _grid(args)
    report, plot, failed = run_bench(
        args.design, args.n, args.p0, args.replicates, args.seed, grid,
        penalty_scale=args.penalty_scale, standardize_data=args.standardize, baseline=args.baseline,
        n_jobs=args.jobs, timing=args.timing,
    )
    _dump(report, args.out)
    if args.pretty:
        sys.stderr.write(_pretty_table(report))
    if args.plot_data and plot is not None:
        write_plot_data(plot, args.plot_data)
    if failed:
        sys.stderr.write("dosk: one or more replicates failed; see the 'error' fields in the report\n")
        return EXIT_SOLVER
    return EXIT_OK


def _add_model_flags(p, task_flag=True):
    p.add_argument("--data", required=True, help="CSV file with a header row")
    p.add_argument("--label", help="name of the response column")
    if task_flag:
        p.add_argument("--task", choices=sorted(_TASKS), default="reg")
    p.add_argument("--kernel", default="gaussian", choices=["gaussian", "laplacian", "linear", "poly", "polynomial"])
    p.add_argument("--loss", choices=["squared", "hinge", "deviance"])
    p.add_argument("--lambda3", type=float, default=0.5)
    p.add_argument("--penalty-scale", choices=["sum", "mean"], default="sum",
                   help="measure penalties against the summed (default) or averaged loss")
    p.add_argument("--no-standardize", dest="standardize", action="store_false",
                   help="use the predictors as given instead of scaling them to [0, 1]")
    p.add_argument("--freeze-w", action="store_true", help="keep every predictor weight at 1")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--pretty", action="store_true")


def _add_grid_flags(p):
    p.add_argument("--lambda1-grid", type=_floats)
    p.add_argument("--lambda2-grid", type=_floats)
    p.add_argument("--gamma-grid", type=_floats)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--jobs", type=int, default=_default_jobs())


def build_parser():
    parser = _Parser(prog="dosk", description="Double-sparsity kernel learning.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("fit", help="fit one model")
    _add_model_flags(p)
    p.add_argument("--gamma", type=_gamma, default=1.0)
    p.add_argument("--lambda1", type=float, default=0.0)
    p.add_argument("--lambda2", type=float, default=0.0)
    p.add_argument("--degree", type=int, default=2)
    p.add_argument("--coef0", type=float, default=1.0)
    p.add_argument("--n-starts", type=int, default=1)
    p.add_argument("--max-iter", type=int, default=300)
    p.add_argument("--out", required=True, help="model JSON path")
    p.add_argument("--report", help="fit report JSON path (default: stdout)")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", help="score a CSV with a saved model")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--label", help="response column to drop before predicting")
    p.add_argument("--out", help="CSV path (default: stdout)")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("tune", help="grid-search cross-validation")
    _add_model_flags(p)
    _add_grid_flags(p)
    p.add_argument("--out", help="best-parameter JSON path (default: stdout)")
    p.add_argument("--table", help="CSV path for the full CV table")
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("bench", help="run a simulated benchmark")
    p.add_argument("--design", required=True, choices=sorted(DESIGNS))
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--p0", type=int, default=2)
    p.add_argument("--replicates", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lambda3", type=float, default=0.5)
    p.add_argument("--penalty-scale", choices=["sum", "mean"], default="sum")
    p.add_argument("--standardize", action="store_true", help="scale predictors to [0, 1] with training ranges")
    p.add_argument("--no-baseline", dest="baseline", action="store_false",
                   help="skip the frozen-weight, lambda1 = lambda2 = 0 comparison fit")
    _add_grid_flags(p)
    p.add_argument("--out", help="report JSON path (default: stdout)")
    p.add_argument("--plot-data", help="CSV of (x1, y, fitted, is_support) for the first replicate")
    p.add_argument("--pretty", action="store_true", help="also print a summary table to stderr")
    p.add_argument("--timing", action="store_true", help="add wall-clock seconds to the report")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (DataError, LabelError, DimensionError, ModelFormatError, OSError, ValueError) as err:
        sys.stderr.write(f"dosk: error: {err}\n")
        return EXIT_DATA
    except (SolverError, ConvergenceError) as err:
        sys.stderr.write(f"dosk: solver error: {err}\n")
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
