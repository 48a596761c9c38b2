"""Hyperparameter search with unlabeled-pool cross-validation.

Stage one scores a 7x7 grid of ``log10 C`` x ``log10 sigma`` at a fixed step
size.  Stage two scores ``log10 eta`` values at the best ``(C, sigma)``.
``C*`` is left to its default ``C n_l / n_u`` in every fold.
"""
from __future__ import annotations

import csv
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .data import SemiDataset, kfold_unlabeled
from .errors import InputError
from .model import labels_from_scores, predict_scores
from .trainer import Constant, TrainConfig, train

LOG_C = tuple(range(-3, 4))
LOG_SIGMA = tuple(range(-3, 4))
LOG_ETA = (0, 1, 2, 3)
GRID_HEADER = ["phase", "log10_C", "log10_sigma", "log10_eta", "cv_error"]


@dataclass(frozen=True)
class GridRow:
    phase: str
    log10_C: float
    log10_sigma: float
    log10_eta: float
    cv_error: float


def cv_error(cfg: TrainConfig, folds) -> float:
    """Mean misclassification rate over folds, scored on each fold's held-out unlabeled subsets."""
    errs = []
    for fold in folds:
        model = train(cfg, fold.train)
        pred = labels_from_scores(predict_scores(model, fold.test_X))
        errs.append(float(np.mean(pred != fold.test_y)))
    return float(np.mean(errs))


def _cell(args):
    base, folds, lc, ls, le = args
    cfg = replace(base, C=10.0**lc, C_star=None, sigma=10.0**ls, schedule=Constant(10.0**le))
    return cv_error(cfg, folds)


def _map(fn, items, jobs):
    if jobs <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def grid_search(base: TrainConfig, data: SemiDataset, k: int = 5, seed: int = 0, log_eta0: float = 1.0,
                log_c=LOG_C, log_sigma=LOG_SIGMA, log_eta=LOG_ETA, jobs: int = 1):
    """Return ``(best_row, rows)``; ties go to smaller C, then smaller sigma, then smaller eta."""
    if data.hidden_labels is None:
        raise InputError("grid search needs hidden labels on the unlabeled pool for CV scoring")
    folds = kfold_unlabeled(data, k, seed)
    cells = [(lc, ls) for lc in log_c for ls in log_sigma]
    errs = _map(_cell, [(base, folds, lc, ls, log_eta0) for lc, ls in cells], jobs)
    rows = [GridRow("C_sigma", lc, ls, log_eta0, e) for (lc, ls), e in zip(cells, errs)]
    best = min(rows, key=lambda r: (r.cv_error, r.log10_C, r.log10_sigma))
    errs = _map(_cell, [(base, folds, best.log10_C, best.log10_sigma, le) for le in log_eta], jobs)
    eta_rows = [GridRow("eta", best.log10_C, best.log10_sigma, le, e) for le, e in zip(log_eta, errs)]
    rows += eta_rows
    best = min(eta_rows, key=lambda r: (r.cv_error, r.log10_eta))
    return best, rows


def write_grid_csv(path_or_stream, rows) -> None:
    def dump(fh):
        w = csv.writer(fh)
        w.writerow(GRID_HEADER)
        for r in rows:
            w.writerow([r.phase, f"{r.log10_C:g}", f"{r.log10_sigma:g}", f"{r.log10_eta:g}", f"{r.cv_error:.6f}"])

    if hasattr(path_or_stream, "write"):
        dump(path_or_stream)
    else:
        with open(path_or_stream, "w", newline="", encoding="utf-8") as fh:
            dump(fh)
