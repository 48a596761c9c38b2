"""FRS3VM: plain SGD on one fixed block of random features.

The gradient is the trainer's composite gradient, evaluated in the fixed
``m_total``-dimensional feature space, so a comparison with the triply
stochastic trainer isolates the effect of drawing fresh features.

File layout (little-endian): ``b"FRS1"``, uint32 version, uint32 d,
uint32 m_total, uint64 block seed, uint64 block index, float64 sigma, then
``m_total`` float64 weights.
"""
from __future__ import annotations

import math
import os
import struct
from dataclasses import dataclass

import numpy as np

from .data import SemiDataset
from .errors import (
    BadMagicError,
    DivergenceError,
    ModelFormatError,
    ShapeError,
    TruncatedModelError,
    VersionMismatchError,
)
from .rf import FeatureBlock, KernelSpec, spawn_feature_block
from .trainer import TrainConfig, composite_gradient, step_size

MAGIC = b"FRS1"
VERSION = 1
BLOCK_INDEX = 0
_HEADER = struct.Struct("<4sIIIQQd")


@dataclass(frozen=True, eq=False)
class LinearRFModel:
    base_seed: int
    block_index: int
    d: int
    sigma: float
    w: np.ndarray

    @property
    def m_total(self) -> int:
        return self.w.shape[0]

    @property
    def block(self) -> FeatureBlock:
        return spawn_feature_block(self.base_seed, self.block_index, self.m_total, self.d, KernelSpec(self.sigma))


def predict_linear(model: LinearRFModel, X, block: FeatureBlock | None = None):
    X = np.asarray(X, dtype=np.float64)
    single = X.ndim == 1
    if np.atleast_2d(X).shape[1] != model.d:
        raise ShapeError(f"model expects dimension {model.d}, got {np.atleast_2d(X).shape[1]}")
    block = model.block if block is None else block
    scores = block.transform(X) @ model.w
    return float(scores[0]) if single else scores


def train_frs3vm(cfg: TrainConfig, data: SemiDataset, passes: int = 10, m_total: int | None = None,
                 T: int | None = None) -> LinearRFModel:
    """SGD on ``w`` with ``w <- (1 - gamma) w - gamma g``.

    One pass is ``ceil(n_u / batch_unlabeled)`` steps; ``T`` overrides the
    total step count.  ``m_total`` defaults to ``cfg.m`` after resolution,
    i.e. ``ceil(sqrt(n))`` unless set.  Instance sampling follows the trainer's
    documented stream, seeded by ``cfg.data_seed``.
    """
    cfg = cfg.resolve(data)
    m_total = cfg.m if m_total is None else m_total
    steps = passes * math.ceil(data.n_u / cfg.batch_unlabeled) if T is None else T
    block = spawn_feature_block(cfg.base_seed, BLOCK_INDEX, m_total, data.d, KernelSpec(cfg.sigma))
    phi_l_all = block.transform(data.X_l)
    phi_u_all = block.transform(data.X_u)
    w = np.zeros(m_total)
    rng = np.random.default_rng(cfg.data_seed)
    per_pass = max(1, math.ceil(data.n_u / cfg.batch_unlabeled))
    for t in range(1, steps + 1):
        li = rng.integers(data.n_l, size=cfg.batch_labeled)
        ui = rng.integers(data.n_u, size=cfg.batch_unlabeled)
        phi_l, phi_u = phi_l_all[li], phi_u_all[ui]
        gamma = step_size(cfg.schedule, t, steps)
        g, _ = composite_gradient(phi_l, data.y_l[li], phi_l @ w, phi_u, phi_u @ w, cfg.C, cfg.C_star, cfg.loss)
        w = (1.0 - gamma) * w - gamma * g
        if not np.all(np.isfinite(w)):
            raise DivergenceError(f"non-finite weights in epoch {(t - 1) // per_pass + 1}", t)
    return LinearRFModel(cfg.base_seed, BLOCK_INDEX, data.d, cfg.sigma, w)


def to_bytes(model: LinearRFModel) -> bytes:
    head = _HEADER.pack(MAGIC, VERSION, model.d, model.m_total, model.base_seed, model.block_index, model.sigma)
    return head + model.w.astype("<f8").tobytes()


def from_bytes(data: bytes) -> LinearRFModel:
    if data[:4] != MAGIC:
        if len(data) < 4:
            raise TruncatedModelError("file shorter than its magic number")
        raise BadMagicError(f"not an FRS model file (magic {data[:4]!r})")
    if len(data) < _HEADER.size:
        raise TruncatedModelError("FRS header truncated")
    _, version, d, m_total, seed, index, sigma = _HEADER.unpack_from(data)
    if version != VERSION:
        raise VersionMismatchError(f"unsupported FRS format version {version}")
    expected = _HEADER.size + 8 * m_total
    if len(data) != expected:
        cls = TruncatedModelError if len(data) < expected else ModelFormatError
        raise cls(f"FRS payload has {len(data)} bytes, expected {expected}")
    w = np.frombuffer(data, dtype="<f8", offset=_HEADER.size).astype(np.float64)
    return LinearRFModel(seed, index, d, sigma, w)


def save(model: LinearRFModel, path) -> None:
    with open(os.fspath(path), "wb") as fh:
        fh.write(to_bytes(model))


def load(path) -> LinearRFModel:
    with open(os.fspath(path), "rb") as fh:
        return from_bytes(fh.read())
