"""Seeded simulation benchmarks: tune, fit and score each replicate."""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass
from functools import partial

import numpy as np
from joblib import Parallel, delayed

from .exceptions import DoskError
from .kernel import KernelSpec
from .loss import LossSpec
from .model import CvGrid, build_model, cross_validate, decision_values, effective_hyperparams, identity_ranges
from .model import selected_points, selected_variables
from .simdata import (
    gen_classification, gen_regression1, gen_regression2, mcr, mpe, selection_rates, standardize,
)
from .solver import Hyperparams, SolverConfig, fit_dosk


@dataclass(frozen=True)
class Design:
    name: str
    generator: object
    family: str
    loss: str
    classification: bool

    def n_test(self, n):
        return 2000 if self.classification else 10 * n


DESIGNS = {
    "reg1": Design("reg1", gen_regression1, "laplacian", "squared", False),
    "reg2": Design("reg2", gen_regression2, "gaussian", "squared", False),
    "class1": Design("class1", partial(gen_classification, signal_dim=2), "gaussian", "hinge", True),
    "class2": Design("class2", partial(gen_classification, signal_dim=4), "gaussian", "hinge", True),
}

SUMMARY_FIELDS = ("train_error", "test_error", "tp_rate", "fn_rate", "baseline_test_error",
                  "n_selected_vars", "n_support_points")


def _tune_and_fit(Xtr, ytr, design, grid, cfg, seed, penalty_scale):
    loss = LossSpec(design.loss)
    cv = cross_validate(Xtr, ytr, design.family, loss, grid, cfg, seed, penalty_scale=penalty_scale)
    best = cv.best
    kernel = KernelSpec(design.family, gamma=best.gamma)
    hp = Hyperparams(best.lambda1, best.lambda2, best.lambda3)
    state, trace = fit_dosk(Xtr, ytr, kernel, loss, effective_hyperparams(hp, len(ytr), penalty_scale), cfg)
    model = build_model(state, trace, Xtr, kernel, loss, hp, penalty_scale, identity_ranges(Xtr.shape[1]))
    return cv, model, trace


def run_replicate(design, n, p0, seed, grid=None, cfg=None, *, penalty_scale="sum", standardize_data=False,
                  baseline=True):
    """One replicate: draw train and test sets from ``seed``, tune, fit, score.

    The baseline keeps every predictor weight at 1 with ``lambda1 = lambda2 = 0``
    and tunes only ``gamma``.
    """
    if isinstance(design, str):
        design = DESIGNS[design]
    grid = grid or CvGrid()
    cfg = cfg or SolverConfig()
    rng = np.random.default_rng(seed)
    train = design.generator(n, p0=p0, seed=rng)
    test = design.generator(design.n_test(n), p0=p0, seed=rng)
    Xtr, Xte = train.X, test.X
    if standardize_data:
        Xtr, Xte, _ = standardize(Xtr, Xte)
    metric = mcr if design.classification else mpe

    cv, model, trace = _tune_and_fit(Xtr, train.y, design, grid, cfg, seed, penalty_scale)
    rates = selection_rates(selected_variables(model), train.signal_mask)
    row = {
        "seed": int(seed),
        "gamma": cv.best.gamma,
        "lambda1": cv.best.lambda1,
        "lambda2": cv.best.lambda2,
        "lambda3": cv.best.lambda3,
        "cv_error": cv.best.cv_error,
        "train_error": metric(decision_values(model, Xtr), train.y),
        "test_error": metric(decision_values(model, Xte), test.y),
        "tp_rate": rates.tp_rate,
        "fn_rate": rates.fn_rate,
        "n_selected_vars": len(selected_variables(model)),
        "n_support_points": len(model.support_points),
        "w_hat": [float(v) for v in model.w_hat],
        "objective_per_iter": [float(v) for v in trace.objective_per_iter],
        "converged": bool(trace.converged),
    }
    if baseline:
        base_grid = CvGrid((0.0,), (0.0,), grid.gamma_candidates, grid.lambda3_fixed, grid.folds)
        base_cfg = SolverConfig(**{**cfg.__dict__, "freeze_w": True})
        bcv, bmodel, btrace = _tune_and_fit(Xtr, train.y, design, base_grid, base_cfg, seed, penalty_scale)
        row["baseline_gamma"] = bcv.best.gamma
        row["baseline_test_error"] = metric(decision_values(bmodel, Xte), test.y)
        row["baseline_objective_per_iter"] = [float(v) for v in btrace.objective_per_iter]
    plot = {
        "x1": Xtr[:, 0], "y": train.y, "fitted": decision_values(model, Xtr),
        "is_support": np.isin(np.arange(len(train.y)), sorted(selected_points(model))),
    }
    return row, plot


def _safe_replicate(*args, **kwargs):
    try:
        return run_replicate(*args, **kwargs)
    except DoskError as err:
        return {"seed": int(args[3]), "error": f"{type(err).__name__}: {err}"}, None


def _summary(rows):
    ok = [r for r in rows if "error" not in r]
    out = {}
    for name in SUMMARY_FIELDS:
        vals = np.array([r[name] for r in ok if name in r], dtype=float)
        if vals.size == 0:
            continue
        std = float(np.std(vals, ddof=1)) if vals.size > 1 else 0.0
        out[name] = {"mean": float(np.mean(vals)), "std": std}
    return out


def run_bench(design, n, p0, replicates, seed=0, grid=None, cfg=None, *, penalty_scale="sum",
              standardize_data=False, baseline=True, n_jobs=1, timing=False):
    """Run ``replicates`` seeded replicates (seed, seed + 1, ...) and aggregate them.

    Returns
    -------
    report : dict
        JSON-ready; identical inputs give identical reports unless ``timing``
        adds wall-clock seconds.
    plot : dict or None
        Training-set rows of the first replicate for plotting.
    failed : bool
    """
    design_obj = DESIGNS[design]
    grid = grid or CvGrid()
    cfg = cfg or SolverConfig()
    seeds = [int(seed) + i for i in range(replicates)]
    start = time.perf_counter()
    results = Parallel(n_jobs=n_jobs)(
        delayed(_safe_replicate)(design_obj, n, p0, s, grid, cfg, penalty_scale=penalty_scale,
                                 standardize_data=standardize_data, baseline=baseline)
        for s in seeds
    )
    rows = [r for r, _ in results]
    report = {
        "design": design,
        "n": int(n),
        "p0": int(p0),
        "n_test": design_obj.n_test(n),
        "replicates": int(replicates),
        "seed": int(seed),
        "seeds": seeds,
        "kernel": design_obj.family,
        "loss": LossSpec(design_obj.loss).kind,
        "metric": "mcr" if design_obj.classification else "mpe",
        "penalty_scale": penalty_scale,
        "standardized": bool(standardize_data),
        "grid": {
            "lambda1": list(grid.lambda1_candidates), "lambda2": list(grid.lambda2_candidates),
            "gamma": list(grid.gamma_candidates), "lambda3": grid.lambda3_fixed, "folds": grid.folds,
        },
        "summary": _summary(rows),
        "rows": rows,
    }
    if timing:
        report["wall_clock_seconds"] = time.perf_counter() - start
    failed = any("error" in r for r in rows)
    return report, results[0][1], failed


def write_plot_data(plot, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["x1", "y", "fitted", "is_support"])
        for x1, y, f, s in zip(plot["x1"], plot["y"], plot["fitted"], plot["is_support"]):
            w.writerow([repr(float(x1)), repr(float(y)), repr(float(f)), int(bool(s))])
