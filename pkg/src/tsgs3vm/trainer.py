"""Triply stochastic functional gradient training.

Each iteration draws a labeled mini-batch, an unlabeled mini-batch and the
iteration's feature block, evaluates the current function on both batches,
and appends the coefficient vector ``alpha_i = -gamma_i * g_i`` while all
earlier coefficients shrink by ``(1 - gamma_i)``.

Instance sampling is uniform with replacement.  With
``rng = numpy.random.default_rng(data_seed)``, iteration ``i`` draws
``rng.integers(n_l, size=batch_labeled)`` and then
``rng.integers(n_u, size=batch_unlabeled)``; feature blocks come from
``spawn_feature_block(base_seed, i, m, d, spec)`` for ``i = 1..T``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Union

import numpy as np

from .data import SemiDataset
from .errors import ConfigError, DivergenceError, InputError
from .loss import UnlabeledLoss, hinge, unlabeled
from .model import Model
from .rf import FeatureBlock, KernelSpec, spawn_feature_block

FLUSH_FACTOR = 1e-3
FLUSH_SCALE = 1e-150
_CHUNK = 1 << 14


@dataclass(frozen=True)
class Constant:
    """Fixed step ``gamma = 1 / eta``."""

    eta: float

    def __str__(self):
        return f"constant(eta={self.eta:g})"


@dataclass(frozen=True)
class TheoremRate:
    """Fixed step ``gamma = theta / T**0.75``."""

    theta: float

    def __str__(self):
        return f"theorem(theta={self.theta:g})"


Schedule = Union[Constant, TheoremRate]


def step_size(schedule: Schedule, i: int, T: int) -> float:
    if isinstance(schedule, Constant):
        if not schedule.eta >= 1.0:
            raise ConfigError(f"constant schedule needs eta >= 1 (gamma <= 1), got eta={schedule.eta}")
        gamma = 1.0 / schedule.eta
    elif isinstance(schedule, TheoremRate):
        if T < 1:
            raise ConfigError("theorem-rate schedule needs T >= 1")
        gamma = schedule.theta / T**0.75
    else:
        raise ConfigError(f"unknown schedule {schedule!r}")
    if not 0.0 < gamma <= 1.0:
        raise ConfigError(f"step size {gamma} outside (0, 1] for {schedule}")
    return gamma


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters.  ``None`` fields are resolved against the data.

    ``C_star`` defaults to ``C * n_l / n_u``, ``m`` to ``ceil(sqrt(n_l + n_u))``
    and ``T`` to one pass over the unlabeled pool, ``ceil(n_u / batch_unlabeled)``.
    """

    C: float = 1.0
    C_star: Optional[float] = None
    sigma: float = 1.0
    schedule: Schedule = field(default_factory=lambda: Constant(10.0))
    T: Optional[int] = None
    batch_labeled: int = 256
    batch_unlabeled: int = 256
    loss: UnlabeledLoss = field(default_factory=UnlabeledLoss)
    m: Optional[int] = None
    base_seed: int = 0
    data_seed: int = 1
    cache_blocks: bool = True

    def resolve(self, data: SemiDataset) -> "TrainConfig":
        if data.n_l < 1 or data.n_u < 1:
            raise InputError(f"training needs labeled and unlabeled data, got n_l={data.n_l}, n_u={data.n_u}")
        cfg = self
        if cfg.C_star is None:
            cfg = replace(cfg, C_star=cfg.C * data.n_l / data.n_u)
        if cfg.m is None:
            cfg = replace(cfg, m=math.ceil(math.sqrt(data.n)))
        if cfg.T is None:
            cfg = replace(cfg, T=math.ceil(data.n_u / cfg.batch_unlabeled))
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if not (math.isfinite(self.C) and self.C > 0):
            raise ConfigError(f"C must be positive, got {self.C}")
        if self.C_star is not None and not (math.isfinite(self.C_star) and self.C_star >= 0):
            raise ConfigError(f"C* must be nonnegative, got {self.C_star}")
        KernelSpec(self.sigma)
        for name in ("batch_labeled", "batch_unlabeled"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.m is not None and self.m < 1:
            raise ConfigError(f"m must be >= 1, got {self.m}")
        if self.T is not None:
            if self.T < 0:
                raise ConfigError(f"T must be >= 0, got {self.T}")
            if self.T > 0:
                step_size(self.schedule, 1, self.T)


@dataclass
class IterationInfo:
    """What the observer sees after iteration ``iteration`` (1-based)."""

    iteration: int
    gamma: float
    batch_loss: float
    coef_norm: float
    labeled_idx: np.ndarray
    unlabeled_idx: np.ndarray
    f_labeled: np.ndarray
    f_unlabeled: np.ndarray
    block: FeatureBlock
    alpha: np.ndarray


def composite_gradient(phi_l, y_l, f_l, phi_u, f_u, C, C_star, loss):
    """Batch-averaged loss gradient in feature space, and the batch objective.

    Returns ``(g, batch_loss)`` with
    ``g = C mean_l l'(f, y) phi(x_l) + C* mean_u u'(f) phi(x_u)``.
    """
    lv, dl = hinge(f_l, y_l)
    uv, du = unlabeled(loss, f_u)
    g = (C / len(f_l)) * (dl @ phi_l) + (C_star / len(f_u)) * (du @ phi_u)
    return g, C * float(lv.mean()) + C_star * float(uv.mean())


class TrainState:
    """Coefficients in progress with a lazily applied global scale.

    The eager coefficient ``alpha_j`` equals ``raw[j] * scale``.  Shrinking
    every coefficient then costs one multiplication of ``scale``; the store is
    flushed to eager form when a factor is tiny or the scale nears underflow.
    """

    def __init__(self, d: int, m: int, sigma: float, base_seed: int, capacity: int, cache_blocks: bool = True):
        self.d, self.m, self.sigma, self.base_seed = d, m, sigma, base_seed
        self.spec = KernelSpec(sigma)
        self.i = 0
        self.scale = 1.0
        self.raw = np.zeros((capacity, m))
        self.cache_blocks = cache_blocks
        if cache_blocks:
            self._W = np.zeros((capacity * m, d))
            self._b = np.zeros(capacity * m)
        self._sq = 0.0
        self.last_step: IterationInfo | None = None

    def block(self, i: int) -> FeatureBlock:
        return spawn_feature_block(self.base_seed, i, self.m, self.d, self.spec)

    def scores(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        f = np.zeros(X.shape[0])
        if self.i == 0:
            return f
        if self.cache_blocks:
            width = self.i * self.m
            coef = self.raw[: self.i].ravel()
            for lo in range(0, width, _CHUNK):
                hi = min(lo + _CHUNK, width)
                f += np.cos(X @ self._W[lo:hi].T + self._b[lo:hi]) @ coef[lo:hi]
            f *= math.sqrt(2.0 / self.m)
        else:
            for j in range(1, self.i + 1):
                f += self.block(j).transform(X) @ self.raw[j - 1]
        return self.scale * f

    def coefficients(self) -> np.ndarray:
        return self.raw[: self.i] * self.scale

    def coef_norm(self) -> float:
        return self.scale * math.sqrt(max(self._sq, 0.0))

    def push(self, alpha, gamma: float, block: FeatureBlock) -> None:
        """Shrink existing coefficients by ``1 - gamma`` and append ``alpha``."""
        shrink = 1.0 - gamma
        if shrink < FLUSH_FACTOR or self.scale * shrink < FLUSH_SCALE:
            self.raw[: self.i] *= self.scale * shrink
            self._sq = float(np.sum(self.raw[: self.i] ** 2))
            self.scale = 1.0
        else:
            self.scale *= shrink
        self.raw[self.i] = alpha / self.scale
        self._sq += float(self.raw[self.i] @ self.raw[self.i])
        if self.cache_blocks:
            lo = self.i * self.m
            self._W[lo : lo + self.m] = block.directions
            self._b[lo : lo + self.m] = block.phases
        self.i += 1

    def to_model(self, loss: UnlabeledLoss) -> Model:
        return Model(self.base_seed, self.m, self.d, self.sigma, loss, self.coefficients())


def tsg_step(state: TrainState, labeled_batch, unlabeled_batch, block: FeatureBlock, cfg: TrainConfig,
             gamma: float | None = None) -> TrainState:
    """One update with the given batches; ``block`` must belong to iteration ``state.i + 1``."""
    X_l, y_l = labeled_batch
    X_l = np.atleast_2d(np.asarray(X_l, dtype=np.float64))
    X_u = np.atleast_2d(np.asarray(unlabeled_batch, dtype=np.float64))
    y_l = np.asarray(y_l, dtype=np.float64).ravel()
    i = state.i + 1
    if X_l.shape[0] == 0 or X_u.shape[0] == 0:
        raise InputError("tsg_step needs nonempty batches")
    if block.iteration_index != i:
        raise ConfigError(f"block for iteration {block.iteration_index} used at iteration {i}")
    if gamma is None:
        gamma = step_size(cfg.schedule, i, cfg.T)

    with np.errstate(over="ignore", invalid="ignore"):
        f = state.scores(np.vstack([X_l, X_u]))
    if not np.all(np.isfinite(f)):
        raise DivergenceError("non-finite function value", i)
    f_l, f_u = f[: len(y_l)], f[len(y_l):]
    g, batch_loss = composite_gradient(
        block.transform(X_l), y_l, f_l, block.transform(X_u), f_u, cfg.C, cfg.C_star, cfg.loss
    )
    if not np.all(np.isfinite(g)):
        raise DivergenceError("non-finite gradient", i)
    alpha = -gamma * g
    with np.errstate(over="ignore"):
        state.push(alpha, gamma, block)
    if not (math.isfinite(state.scale) and np.all(np.isfinite(state.raw[i - 1]))):
        raise DivergenceError("coefficient overflow", i)
    state.last_step = IterationInfo(
        i, gamma, batch_loss, state.coef_norm(), None, None, f_l, f_u, block, alpha
    )
    return state


Observer = Callable[[IterationInfo], None]


def train(cfg: TrainConfig, data: SemiDataset, observer: Observer | None = None) -> Model:
    cfg = cfg.resolve(data)
    state = TrainState(data.d, cfg.m, cfg.sigma, cfg.base_seed, cfg.T, cfg.cache_blocks)
    rng = np.random.default_rng(cfg.data_seed)
    for i in range(1, cfg.T + 1):
        li = rng.integers(data.n_l, size=cfg.batch_labeled)
        ui = rng.integers(data.n_u, size=cfg.batch_unlabeled)
        block = state.block(i)
        tsg_step(state, (data.X_l[li], data.y_l[li]), data.X_u[ui], block, cfg)
        if observer is not None:
            info = state.last_step
            info.labeled_idx, info.unlabeled_idx = li, ui
            observer(info)
    return state.to_model(cfg.loss)
