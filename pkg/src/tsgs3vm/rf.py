"""Seed-replayable random Fourier features for the Gaussian RBF kernel.

The kernel is parametrised as ``k(x, x') = exp(-sigma * ||x - x'||^2)``.  Its
spectral measure is a zero-mean Gaussian with per-coordinate variance
``2 * sigma``, so a feature is ``sqrt(2) * cos(w . x + b)`` with
``w ~ N(0, 2 sigma I)`` and ``b ~ U[0, 2 pi)``.

Random stream
-------------
Every block is generated from a Philox-4x64 counter-based generator whose
128-bit key is ``(iteration_index << 64) | base_seed`` and whose counter starts
at zero.  Raw 64-bit words are turned into uniforms on ``[0, 1)`` by keeping the
top 53 bits.  Directions come first: ``ceil(m*d/2)`` word pairs ``(u1, u2)``
are mapped to normal pairs by Box-Muller,

    r = sqrt(-2 log(1 - u1)),  z0 = r cos(2 pi u2),  z1 = r sin(2 pi u2),

filled row-major into the ``m x d`` direction matrix (a trailing odd normal is
discarded).  Then ``m`` further words give the phases ``2 pi u``.  The stream
is therefore a pure function of ``(base_seed, iteration_index, m, d, sigma)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError

_TWO_PI = 2.0 * math.pi
_U64 = 1 << 64


@dataclass(frozen=True)
class KernelSpec:
    sigma: float

    def __post_init__(self):
        if not (math.isfinite(self.sigma) and self.sigma > 0):
            raise ConfigError(f"RBF sigma must be a positive finite number, got {self.sigma!r}")


@dataclass(frozen=True, eq=False)
class FeatureBlock:
    """One iteration's ``m`` random directions (rows) and phases."""

    iteration_index: int
    directions: np.ndarray
    phases: np.ndarray
    sigma: float

    @property
    def m(self) -> int:
        return self.directions.shape[0]

    @property
    def d(self) -> int:
        return self.directions.shape[1]

    def transform(self, X):
        """Feature vectors of the rows of ``X``; shape ``(n, m)``."""
        X = _as_points(X, self.d)
        return math.sqrt(2.0 / self.m) * np.cos(X @ self.directions.T + self.phases)


def _as_points(X, d):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != d:
        raise ShapeError(f"expected points of dimension {d}, got array of shape {X.shape}")
    return X


def _uniforms(bitgen, n):
    raw = bitgen.random_raw(n)
    return (raw >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))


def spawn_feature_block(base_seed: int, i: int, m: int, d: int, spec: KernelSpec) -> FeatureBlock:
    if not isinstance(m, (int, np.integer)) or m < 1:
        raise ConfigError(f"feature count m must be a positive integer, got {m!r}")
    if not isinstance(d, (int, np.integer)) or d < 1:
        raise ConfigError(f"dimension d must be a positive integer, got {d!r}")
    if not isinstance(spec, KernelSpec):
        raise ConfigError("spec must be a KernelSpec")
    base_seed, i = int(base_seed), int(i)
    if not 0 <= base_seed < _U64:
        raise ConfigError(f"base seed must lie in [0, 2**64), got {base_seed}")
    if not 0 <= i < _U64:
        raise ConfigError(f"iteration index must lie in [0, 2**64), got {i}")

    bitgen = np.random.Philox(key=(i << 64) | base_seed)
    n_normal = int(m) * int(d)
    n_pairs = (n_normal + 1) // 2
    u = _uniforms(bitgen, 2 * n_pairs).reshape(n_pairs, 2)
    radius = np.sqrt(-2.0 * np.log1p(-u[:, 0]))
    angle = _TWO_PI * u[:, 1]
    normals = np.empty(2 * n_pairs)
    normals[0::2] = radius * np.cos(angle)
    normals[1::2] = radius * np.sin(angle)
    directions = math.sqrt(2.0 * spec.sigma) * normals[:n_normal].reshape(int(m), int(d))

    phases = _TWO_PI * _uniforms(bitgen, int(m))
    phases[phases >= _TWO_PI] = 0.0
    directions.setflags(write=False)
    phases.setflags(write=False)
    return FeatureBlock(iteration_index=i, directions=directions, phases=phases, sigma=spec.sigma)


def feature_vector(block: FeatureBlock, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ShapeError(f"feature_vector takes a single point, got shape {x.shape}")
    return block.transform(x)[0]


def approx_kernel(block: FeatureBlock, x, x2) -> float:
    return float(feature_vector(block, x) @ feature_vector(block, x2))


def exact_rbf(x, x2, spec: KernelSpec) -> float:
    x = np.asarray(x, dtype=np.float64)
    x2 = np.asarray(x2, dtype=np.float64)
    if x.shape != x2.shape or x.ndim != 1:
        raise ShapeError(f"points must be vectors of equal length, got {x.shape} and {x2.shape}")
    diff = x - x2
    return math.exp(-spec.sigma * float(diff @ diff))


def rbf_gram(A, B, sigma: float) -> np.ndarray:
    """Exact kernel matrix ``K[i, j] = exp(-sigma ||A_i - B_j||^2)``."""
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    B = np.atleast_2d(np.asarray(B, dtype=np.float64))
    if A.shape[1] != B.shape[1]:
        raise ShapeError(f"dimension mismatch: {A.shape[1]} vs {B.shape[1]}")
    sq = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * (A @ B.T)
    np.maximum(sq, 0.0, out=sq)
    return np.exp(-sigma * sq)
