"""Structured scalar function handles.

Wrapping payoffs and cost derivatives in these small dataclasses lets the
expectation routines recognise affine and exponential integrands and use
closed forms; anything else falls back to quadrature.  All handles are
vectorized callables.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = ["LinearFn", "ExpFn", "ConstantFn", "PowerFn", "shifted"]


@dataclass(frozen=True)
class LinearFn:
    """y -> a*y + b."""

    a: float
    b: float = 0.0

    def __call__(self, y):
        return self.a * np.asarray(y, dtype=float) + self.b

    def shifted(self, x: float) -> "LinearFn":
        return LinearFn(self.a, self.b + self.a * x)


@dataclass(frozen=True)
class ExpFn:
    """y -> scale*exp(coef*y) + shift."""

    scale: float = 1.0
    coef: float = 1.0
    shift: float = 0.0

    def __call__(self, y):
        return self.scale * np.exp(self.coef * np.asarray(y, dtype=float)) + self.shift

    def shifted(self, x: float) -> "ExpFn":
        return ExpFn(self.scale * math.exp(self.coef * x), self.coef, self.shift)


@dataclass(frozen=True)
class ConstantFn:
    """y -> value."""

    value: float

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        return np.full_like(y, self.value) if y.ndim else self.value

    def shifted(self, x: float) -> "ConstantFn":
        return self


@dataclass(frozen=True)
class PowerFn:
    """y -> coef * y**exponent, for y > 0."""

    coef: float
    exponent: float

    def __call__(self, y):
        return self.coef * np.power(np.asarray(y, dtype=float), self.exponent)


def shifted(f, x: float):
    """f(x + .) preserving closed-form structure when available."""
    if hasattr(f, "shifted"):
        return f.shifted(x)
    return lambda y: f(x + np.asarray(y, dtype=float))
