"""Wall-clock scaling of training and prediction.

Training evaluates the current function at every step, which touches every
earlier feature block, so training time grows as ``m T^2``.  Prediction of a
fixed point set regenerates each block once and grows as ``m T``.
"""
from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, replace

from .data import SemiDataset, two_gaussians
from .errors import ConfigError
from .model import predict_scores
from .trainer import TrainConfig, train

BENCH_HEADER = ["axis", "n", "T", "m", "batch", "train_seconds", "predict_seconds"]


@dataclass(frozen=True)
class BenchRow:
    axis: str
    n: int
    T: int
    m: int
    batch: int
    train_seconds: float
    predict_seconds: float


def synthetic(n: int, d: int = 5, n_labeled: int = 200, seed: int = 0) -> SemiDataset:
    X, y = two_gaussians(n, d, seed=seed)
    n_labeled = min(n_labeled, n // 2)
    return SemiDataset(X[:n_labeled], y[:n_labeled], X[n_labeled:], y[n_labeled:])


def time_run(cfg: TrainConfig, data: SemiDataset, X_pred, repeats: int = 1, predict_repeats: int = 5):
    """Best-of-``repeats`` training seconds and best-of-``predict_repeats`` seconds to predict ``X_pred``."""
    best_train = best_pred = math.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        model = train(cfg, data)
        best_train = min(best_train, time.perf_counter() - t0)
    for _ in range(predict_repeats):
        t0 = time.perf_counter()
        predict_scores(model, X_pred)
        best_pred = min(best_pred, time.perf_counter() - t0)
    return best_train, best_pred


def run_bench(T_list=(), n_list=(), m: int = 32, batch: int = 6, n: int = 2000, n_pred: int = 500,
              sigma: float = 0.1, seed: int = 0, repeats: int = 1) -> list[BenchRow]:
    """Time training over ``T_list`` at fixed ``m`` and over ``n_list`` at one pass with ``m = ceil(sqrt(n))``."""
    T_list, n_list = list(T_list), list(n_list)
    if not T_list and not n_list:
        raise ConfigError("bench needs a nonempty T list or n list")
    rows = []
    base = TrainConfig(C=1.0, sigma=sigma, batch_labeled=batch, batch_unlabeled=batch, base_seed=seed, data_seed=seed + 1)
    X_pred, _ = two_gaussians(n_pred, seed=seed + 7)
    if T_list:
        data = synthetic(n, seed=seed)
        for T in T_list:
            tr, pr = time_run(replace(base, T=int(T), m=m), data, X_pred, repeats)
            rows.append(BenchRow("T", data.n, int(T), m, batch, tr, pr))
    for size in n_list:
        data = synthetic(int(size), seed=seed)
        cfg = replace(base, batch_labeled=256, batch_unlabeled=256).resolve(data)
        tr, pr = time_run(cfg, data, X_pred, repeats)
        rows.append(BenchRow("n", data.n, cfg.T, cfg.m, 256, tr, pr))
    return rows


def write_bench_csv(stream, rows) -> None:
    w = csv.writer(stream)
    w.writerow(BENCH_HEADER)
    for r in rows:
        w.writerow([r.axis, r.n, r.T, r.m, r.batch, f"{r.train_seconds:.6f}", f"{r.predict_seconds:.6f}"])
