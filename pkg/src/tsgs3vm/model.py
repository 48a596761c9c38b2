"""The trained function ``f(x) = sum_i <alpha_i, phi_i(x)>`` and its file format.

Model file layout (all little-endian)::

    magic      4 bytes   b"TSG1"
    version    uint32    1
    d          uint32    input dimension
    m          uint32    features per iteration
    T          uint64    number of iterations
    sigma      float64   RBF parameter
    base_seed  uint64    feature seed
    loss tag   uint8     0 shg, 1 sshg, 2 ramp, 3 da
    literal    uint8     1 if sign-free tabulated derivatives were used
    ramp s     float64   ramp parameter (0 for other losses)
    payload    T*m float64 coefficients, iteration-major
"""
from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BadMagicError,
    ConfigError,
    ModelFormatError,
    ShapeError,
    TruncatedModelError,
    VersionMismatchError,
)
from .loss import KINDS, UnlabeledLoss
from .rf import KernelSpec, spawn_feature_block

MAGIC = b"TSG1"
VERSION = 1
_HEADER = struct.Struct("<4sIIIQdQBBd")


@dataclass(frozen=True, eq=False)
class Model:
    base_seed: int
    m: int
    d: int
    sigma: float
    loss: UnlabeledLoss = field(default_factory=UnlabeledLoss)
    coefficients: np.ndarray = None

    def __post_init__(self):
        coef = self.coefficients
        coef = np.zeros((0, self.m)) if coef is None else np.array(coef, dtype=np.float64)
        if coef.ndim != 2 or coef.shape[1] != self.m:
            raise ConfigError(f"coefficients must have shape (T, {self.m}), got {coef.shape}")
        if not np.all(np.isfinite(coef)):
            raise ConfigError("model coefficients must be finite")
        coef.setflags(write=False)
        object.__setattr__(self, "coefficients", coef)
        KernelSpec(self.sigma)

    @property
    def T(self) -> int:
        return self.coefficients.shape[0]

    @property
    def spec(self) -> KernelSpec:
        return KernelSpec(self.sigma)

    def block(self, i: int):
        """Regenerate the feature block of iteration ``i`` (1-based)."""
        return spawn_feature_block(self.base_seed, i, self.m, self.d, self.spec)

    def scaled(self, c: float) -> "Model":
        return Model(self.base_seed, self.m, self.d, self.sigma, self.loss, c * self.coefficients)


def predict_scores(model: Model, X, cache: dict | None = None) -> np.ndarray:
    """Scores of the rows of ``X``.

    Each of the ``T`` blocks is regenerated from its seed exactly once per call
    and applied to all rows.  ``cache``, if given, maps iteration index to an
    already generated block and is filled as blocks are created.
    """
    X = np.asarray(X, dtype=np.float64)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    if X.shape[1] != model.d:
        raise ShapeError(f"model expects dimension {model.d}, got {X.shape[1]}")
    f = np.zeros(X.shape[0])
    for i in range(1, model.T + 1):
        if cache is None:
            block = model.block(i)
        else:
            block = cache.get(i)
            if block is None:
                block = cache[i] = model.block(i)
        f += block.transform(X) @ model.coefficients[i - 1]
    return f[0] if single else f


def predict_score(model: Model, x) -> float:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ShapeError("predict_score takes a single point")
    return float(predict_scores(model, x))


def labels_from_scores(scores):
    """Map scores to labels; a score of exactly 0 is labelled +1."""
    return np.where(np.asarray(scores) >= 0.0, 1, -1)


def predict_label(model: Model, x) -> int:
    return 1 if predict_score(model, x) >= 0.0 else -1


def to_bytes(model: Model) -> bytes:
    header = _HEADER.pack(
        MAGIC,
        VERSION,
        model.d,
        model.m,
        model.T,
        float(model.sigma),
        int(model.base_seed),
        KINDS.index(model.loss.kind),
        int(model.loss.literal),
        float(model.loss.s),
    )
    return header + model.coefficients.astype("<f8").tobytes(order="C")


def from_bytes(data: bytes) -> Model:
    if len(data) < len(MAGIC):
        raise TruncatedModelError("model file shorter than its magic number")
    if data[:4] != MAGIC:
        raise BadMagicError(f"not a TSG model file (magic {data[:4]!r})")
    if len(data) >= 8:
        (version,) = struct.unpack_from("<I", data, 4)
        if version != VERSION:
            raise VersionMismatchError(f"unsupported model format version {version}, expected {VERSION}")
    if len(data) < _HEADER.size:
        raise TruncatedModelError(f"model header truncated ({len(data)} of {_HEADER.size} bytes)")
    _, _, d, m, T, sigma, seed, tag, literal, s = _HEADER.unpack_from(data)
    if tag >= len(KINDS) or literal > 1:
        raise ModelFormatError(f"corrupt loss descriptor (tag {tag}, literal {literal})")
    if m < 1 or d < 1:
        raise ModelFormatError(f"corrupt header: m={m}, d={d}")
    expected = _HEADER.size + 8 * T * m
    if len(data) < expected:
        raise TruncatedModelError(f"payload truncated: {len(data)} bytes, expected {expected}")
    if len(data) > expected:
        raise ModelFormatError(f"{len(data) - expected} trailing bytes after payload")
    coef = np.frombuffer(data, dtype="<f8", count=T * m, offset=_HEADER.size).astype(np.float64)
    try:
        loss = UnlabeledLoss(KINDS[tag], s, bool(literal))
        return Model(seed, m, d, sigma, loss, coef.reshape(T, m))
    except ConfigError as exc:
        raise ModelFormatError(f"invalid model contents: {exc}") from None


def save(model: Model, destination) -> None:
    payload = to_bytes(model)
    if hasattr(destination, "write"):
        destination.write(payload)
        return
    with open(os.fspath(destination), "wb") as fh:
        fh.write(payload)


def load(source) -> Model:
    if hasattr(source, "read"):
        return from_bytes(source.read())
    with open(os.fspath(source), "rb") as fh:
        return from_bytes(fh.read())
