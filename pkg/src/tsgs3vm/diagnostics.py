"""Exact-kernel twin of the trained function and empirical convergence checks.

The twin ``h_t`` follows the same recursion as the random-feature iterate
``f_t`` but with exact kernel sections in place of random features:

    h_{t+1} = (1 - gamma_t) h_t - gamma_t (C l'(f_t(x_l), y_l) k(x_l, .) + C* u'(f_t(x_u)) k(x_u, .))

Loss derivatives are evaluated at ``f_t``'s scores, as supplied by the live
trainer.  Because training samples come from finite pools the twin's support
is the pool itself (labeled points first, then unlabeled points), and each
step only updates weights.  Norms are Gram quadratic forms over that support.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .data import SemiDataset
from .errors import ConfigError, ResourceError
from .loss import UnlabeledLoss, hinge, loss_bounds, unlabeled
from .model import Model, predict_scores
from .rf import rbf_gram
from .trainer import IterationInfo, TheoremRate, TrainConfig, train

MAX_SUPPORT = 5000
KAPPA = 1.0  # sup k(x, x') for the RBF kernel
PHI = 2.0  # sup |phi_w(x) phi_w(x')| for sqrt(2) cos features

SERIES_HEADER = ["iteration", "gamma", "gap2", "h_norm", "grad_norm2", "objective"]


class KernelTwin:
    """``h = sum_j weights[j] k(support[j], .)``."""

    def __init__(self, support, sigma: float, weights=None, gram=None):
        support = np.atleast_2d(np.asarray(support, dtype=np.float64))
        if support.shape[0] > MAX_SUPPORT:
            raise ResourceError(
                f"twin support of {support.shape[0]} points exceeds the cap of {MAX_SUPPORT}; subsample the pools"
            )
        self.support = support
        self.sigma = sigma
        self.weights = np.zeros(support.shape[0]) if weights is None else np.array(weights, dtype=np.float64)
        self.gram = rbf_gram(support, support, sigma) if gram is None else gram

    @classmethod
    def over_pools(cls, data: SemiDataset, sigma: float) -> "KernelTwin":
        return cls(np.vstack([data.X_l, data.X_u]), sigma)

    def copy(self) -> "KernelTwin":
        return KernelTwin(self.support, self.sigma, self.weights.copy(), self.gram)

    def __call__(self, X) -> np.ndarray:
        return rbf_gram(X, self.support, self.sigma) @ self.weights

    def values_on_support(self) -> np.ndarray:
        return self.gram @ self.weights

    def norm(self) -> float:
        return math.sqrt(max(float(self.weights @ self.gram @ self.weights), 0.0))


def twin_step(twin: KernelTwin, gamma: float, labeled_idx, y_l, f_l, unlabeled_idx, f_u,
              C: float, C_star: float, loss: UnlabeledLoss, n_labeled: int) -> KernelTwin:
    """Advance the twin one step in place.

    ``labeled_idx`` / ``unlabeled_idx`` index the labeled and unlabeled pools
    (unlabeled support rows start at ``n_labeled``); ``f_l`` and ``f_u`` are
    the scores at which the loss derivatives are taken.
    """
    _, dl = hinge(f_l, y_l)
    _, du = unlabeled(loss, f_u)
    twin.weights *= 1.0 - gamma
    np.add.at(twin.weights, np.asarray(labeled_idx), -gamma * C * dl / len(dl))
    np.add.at(twin.weights, n_labeled + np.asarray(unlabeled_idx), -gamma * C_star * du / len(du))
    return twin


def gap_estimate(f_probe, h_probe) -> float:
    """Mean of ``|f(x) - h(x)|^2`` over probe points."""
    diff = np.asarray(f_probe, dtype=np.float64) - np.asarray(h_probe, dtype=np.float64)
    return float(np.mean(diff * diff))


def _pool_gradient_weights(twin: KernelTwin, data: SemiDataset, C, C_star, loss):
    h = twin.values_on_support()
    _, dl = hinge(h[: data.n_l], data.y_l)
    _, du = unlabeled(loss, h[data.n_l:])
    w = twin.weights.copy()
    w[: data.n_l] += (C / data.n_l) * dl
    w[data.n_l:] += (C_star / data.n_u) * du
    return w


def rkhs_grad_norm(twin: KernelTwin, data: SemiDataset, C: float, C_star: float, loss: UnlabeledLoss) -> float:
    """``||grad R(h)||^2`` with the unlabeled expectation replaced by the pool mean.

    The twin's support must be the pools (see :meth:`KernelTwin.over_pools`).
    """
    if twin.support.shape[0] != data.n:
        raise ConfigError("rkhs_grad_norm needs a twin supported on the training pools")
    w = _pool_gradient_weights(twin, data, C, C_star, loss)
    return max(float(w @ twin.gram @ w), 0.0)


def objective_value(function, data: SemiDataset, C: float, C_star: float, loss: UnlabeledLoss) -> float:
    """``0.5 ||f||^2 + C mean hinge + C* mean u`` over the pools.

    For a :class:`Model` the norm term is the feature-space surrogate
    ``sum_i ||alpha_i||^2``; for a twin it is the exact RKHS norm.
    """
    if isinstance(function, Model):
        sq = float(np.sum(function.coefficients**2))
        f_l = predict_scores(function, data.X_l)
        f_u = predict_scores(function, data.X_u)
    else:
        sq = function.norm() ** 2
        f_l, f_u = function(data.X_l), function(data.X_u)
    return 0.5 * sq + C * float(hinge(f_l, data.y_l)[0].mean()) + C_star * float(unlabeled(loss, f_u)[0].mean())


@dataclass(frozen=True)
class TheoryConstants:
    kappa: float
    phi: float
    M: float
    M_prime: float
    theta: float | None
    T: int
    D: float | None

    @property
    def gap_bound(self) -> float | None:
        """Right-hand side ``D / sqrt(T)`` of the f/h gap bound."""
        return None if self.D is None else self.D / math.sqrt(self.T)

    @property
    def norm_bound(self) -> float:
        return math.sqrt(self.kappa) * self.M

    def grad_bound(self, R_gap: float, L: float) -> float | None:
        """``E / T^(1/4) + F / T^(3/4)`` given ``R(h_1) - R*`` (or an upper bound) and ``L``."""
        if self.theta is None:
            return None
        th, T = self.theta, self.T
        root = math.sqrt(self.kappa) + math.sqrt(self.phi)
        E = R_gap / th + th * self.M**2 * self.M_prime * root * self.kappa
        F = 2.0 * th * self.M**2 * L * self.kappa
        return E / T**0.25 + F / T**0.75


def theory_constants(cfg: TrainConfig, loss: UnlabeledLoss | None = None) -> TheoryConstants:
    """Constants of the convergence bounds; ``D`` is ``None`` unless the schedule is a theorem rate."""
    loss = cfg.loss if loss is None else loss
    if cfg.C_star is None or cfg.T is None:
        raise ConfigError("theory_constants needs a resolved config (C_star and T set)")
    b = loss_bounds(loss)
    M = cfg.C * b.M_l + cfg.C_star * b.M_u
    M_prime = cfg.C * b.L_prime + cfg.C_star * b.U_prime
    theta = D = None
    if isinstance(cfg.schedule, TheoremRate):
        theta = cfg.schedule.theta
        D = theta**2 * M**2 * (math.sqrt(KAPPA) + math.sqrt(PHI)) ** 2
    return TheoryConstants(KAPPA, PHI, M, M_prime, theta, cfg.T, D)


@dataclass
class DiagnosticRun:
    constants: TheoryConstants
    rows: list = field(default_factory=list)
    model: Model | None = None
    norm_violations: int = 0
    checks: dict = field(default_factory=dict)
    probe_scores: np.ndarray | None = None

    @property
    def final_gap(self) -> float:
        return self.rows[-1]["gap2"]

    @property
    def mean_grad_norm2(self) -> float:
        """Average of ``||grad R(h_t)||^2`` over ``t = 1..T``."""
        vals = [r["grad_norm2"] for r in self.rows[:-1]]
        return float(np.mean(vals)) if vals else float("nan")

    @property
    def min_grad_norm2(self) -> float:
        return float(min(r["grad_norm2"] for r in self.rows))

    def summary(self) -> dict:
        c = self.constants
        return {
            "constants": {
                "kappa": c.kappa, "phi": c.phi, "M": c.M, "M_prime": c.M_prime,
                "theta": c.theta, "T": c.T, "D": c.D, "gap_bound": c.gap_bound, "norm_bound": c.norm_bound,
            },
            "final_gap2": self.final_gap,
            "mean_grad_norm2": self.mean_grad_norm2,
            "min_grad_norm2": self.min_grad_norm2,
            "norm_violations": self.norm_violations,
            "checks": self.checks,
        }


def run_diagnostics(cfg: TrainConfig, data: SemiDataset, probes, coupling: str = "f",
                    lipschitz: float | None = None, norm_rtol: float = 1e-9) -> DiagnosticRun:
    """Train while stepping the exact-kernel twin in lockstep.

    Row ``k`` of the series describes the iterates after ``k`` updates
    (row 0 is the zero initialisation); ``gamma`` is the step that produced
    it.  ``coupling="h"`` evaluates the twin's loss derivatives at its own
    scores instead of the trainer's, and exists only to show that the
    coupling matters.
    """
    if coupling not in ("f", "h"):
        raise ConfigError("coupling must be 'f' or 'h'")
    cfg = cfg.resolve(data)
    probes = np.atleast_2d(np.asarray(probes, dtype=np.float64))
    if probes.shape[0] == 0:
        raise ConfigError("diagnostics need at least one probe point")
    consts = theory_constants(cfg)
    twin = KernelTwin.over_pools(data, cfg.sigma)
    K_probe = rbf_gram(probes, twin.support, cfg.sigma)
    f_probe = np.zeros(probes.shape[0])
    run = DiagnosticRun(consts)
    bound = consts.norm_bound * (1.0 + norm_rtol)

    def record(k, gamma):
        h_norm = twin.norm()
        if h_norm > bound:
            run.norm_violations += 1
        run.rows.append({
            "iteration": k,
            "gamma": gamma,
            "gap2": gap_estimate(f_probe, K_probe @ twin.weights),
            "h_norm": h_norm,
            "grad_norm2": rkhs_grad_norm(twin, data, cfg.C, cfg.C_star, cfg.loss),
            "objective": _twin_objective(twin, data, cfg),
        })

    def observe(info: IterationInfo):
        nonlocal f_probe
        if coupling == "f":
            f_l, f_u = info.f_labeled, info.f_unlabeled
        else:
            h = twin.values_on_support()
            f_l, f_u = h[info.labeled_idx], h[data.n_l + info.unlabeled_idx]
        twin_step(twin, info.gamma, info.labeled_idx, data.y_l[info.labeled_idx], f_l,
                  info.unlabeled_idx, f_u, cfg.C, cfg.C_star, cfg.loss, data.n_l)
        f_probe = (1.0 - info.gamma) * f_probe + info.block.transform(probes) @ info.alpha
        record(info.iteration, info.gamma)

    record(0, None)
    run.model = train(cfg, data, observe)
    run.probe_scores = f_probe
    run.checks["norm_bound"] = run.norm_violations == 0
    if consts.gap_bound is not None:
        run.checks["gap_bound"] = run.final_gap <= consts.gap_bound
    if lipschitz is not None and consts.theta is not None:
        gb = consts.grad_bound(run.rows[0]["objective"], lipschitz)
        run.checks["grad_bound"] = run.mean_grad_norm2 <= gb
    return run


def _twin_objective(twin: KernelTwin, data: SemiDataset, cfg: TrainConfig) -> float:
    h = twin.values_on_support()
    sq = float(twin.weights @ h)
    return (
        0.5 * sq
        + cfg.C * float(hinge(h[: data.n_l], data.y_l)[0].mean())
        + cfg.C_star * float(unlabeled(cfg.loss, h[data.n_l:])[0].mean())
    )


def multi_seed(cfg: TrainConfig, data: SemiDataset, probes, seeds, **kwargs) -> list[DiagnosticRun]:
    """Independent runs varying both the feature seed and the data seed."""
    return [
        run_diagnostics(replace(cfg, base_seed=int(s), data_seed=int(s) + 10_000), data, probes, **kwargs)
        for s in seeds
    ]


def write_series_csv(path, run: DiagnosticRun) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=SERIES_HEADER)
        w.writeheader()
        for row in run.rows:
            w.writerow({k: ("" if row[k] is None else repr(row[k])) for k in SERIES_HEADER})


def write_summary_json(path, run: DiagnosticRun) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(run.summary(), fh, indent=2)
