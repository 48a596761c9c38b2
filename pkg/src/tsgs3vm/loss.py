"""Hinge loss for labeled points and the non-convex unlabeled losses.

All functions are vectorised over numpy arrays of scores and return
``(value, derivative)`` pairs.  At the kinks (``|r| = 1`` for SHG/SSHG,
``r = s`` for the ramp's second hinge) the one-sided branch of the flat side
is used.

By default the SHG and SSHG derivatives carry the ``sign(r)`` factor that the
chain rule through ``|r|`` requires, with ``sign(0) = 0``.  ``literal=True``
reproduces the commonly tabulated sign-free forms (``-1`` and ``|r| - 1``
inside the band) for comparison runs.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, InputError

KINDS = ("shg", "sshg", "ramp", "da")

# sup_r 10|r| exp(-5 r^2), attained at r = 1/sqrt(10)
DA_DERIVATIVE_BOUND = math.sqrt(10.0) * math.exp(-0.5)


@dataclass(frozen=True)
class UnlabeledLoss:
    kind: str = "shg"
    s: float = 0.0
    literal: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown unlabeled loss {self.kind!r}; expected one of {', '.join(KINDS)}")
        if self.kind == "ramp" and not (math.isfinite(self.s) and self.s < 1):
            raise ConfigError(f"ramp parameter s must be < 1, got {self.s}")

    @classmethod
    def parse(cls, text: str, literal: bool = False) -> "UnlabeledLoss":
        """Parse the CLI spelling: ``shg``, ``sshg``, ``da`` or ``ramp:<s>``."""
        name, _, arg = text.strip().lower().partition(":")
        if name == "ramp":
            try:
                s = float(arg) if arg else 0.0
            except ValueError:
                raise ConfigError(f"bad ramp parameter in {text!r}") from None
            return cls("ramp", s, literal)
        if arg:
            raise ConfigError(f"loss {name!r} takes no parameter")
        return cls(name, 0.0, literal)

    def __str__(self):
        return f"ramp:{self.s:g}" if self.kind == "ramp" else self.kind

    def __call__(self, r):
        return unlabeled(self, r)


@dataclass(frozen=True)
class LossBounds:
    M_l: float
    M_u: float
    L_prime: float
    U_prime: float


def hinge(r, y):
    """Hinge loss ``max(0, 1 - y r)`` and its subgradient in ``r``."""
    r = np.asarray(r, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if not np.all((y == 1.0) | (y == -1.0)):
        raise InputError("hinge labels must be -1 or +1")
    margin = y * r
    value = np.maximum(0.0, 1.0 - margin)
    grad = np.where(margin >= 1.0, 0.0, -y)
    return value, grad


def _hinge_at(s, z):
    return np.maximum(0.0, s - z), np.where(z >= s, 0.0, -1.0)


def unlabeled(kind: UnlabeledLoss, r):
    r = np.asarray(r, dtype=np.float64)
    a = np.abs(r)
    inside = a < 1.0
    if kind.kind == "shg":
        value = np.maximum(0.0, 1.0 - a)
        slope = -1.0 if kind.literal else -np.sign(r)
        deriv = np.where(inside, slope, 0.0)
    elif kind.kind == "sshg":
        value = 0.5 * np.maximum(0.0, 1.0 - a) ** 2
        slope = (a - 1.0) if kind.literal else (a - 1.0) * np.sign(r)
        deriv = np.where(inside, slope, 0.0)
    elif kind.kind == "ramp":
        h1, d1 = _hinge_at(1.0, r)
        hs, ds = _hinge_at(kind.s, r)
        value, deriv = h1 - hs, d1 - ds
    else:
        value = np.exp(-5.0 * r * r)
        deriv = -10.0 * r * value
    return value, deriv


def loss_bounds(kind: UnlabeledLoss) -> LossBounds:
    if kind.kind == "da":
        return LossBounds(1.0, DA_DERIVATIVE_BOUND, 1.0, DA_DERIVATIVE_BOUND)
    return LossBounds(1.0, 1.0, 1.0, 1.0)
