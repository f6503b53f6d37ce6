"""
Quantization grids and the scalar quantizers that map reals onto them.
"""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

INFINITE = "infinite"
FINITE = "finite"


@dataclass(frozen=True)
class Alphabet:
    """
    A symmetric grid with step ``step``.

    Without ``bits`` the grid is every integer multiple of the step. With
    ``bits`` it is {k*step : -2^(b-1) <= k <= 2^(b-1)}, which has 2^b + 1 points.
    """

    step: float = 1.0
    bits: Optional[int] = None

    def __post_init__(self):
        if not (self.step > 0 and math.isfinite(self.step)):
            raise ValueError(f"Alphabet step must be positive and finite, got {self.step}")
        if self.bits is not None and (int(self.bits) != self.bits or self.bits < 1):
            raise ValueError(f"Alphabet bits must be a positive integer, got {self.bits}")

    @classmethod
    def infinite(cls, step=1.0):
        return cls(step=step)

    @classmethod
    def finite(cls, step, bits):
        return cls(step=step, bits=bits)

    @property
    def kind(self):
        return INFINITE if self.bits is None else FINITE

    @property
    def is_finite(self):
        return self.bits is not None

    @property
    def max_level(self):
        """Largest grid magnitude, ``inf`` for the infinite grid."""
        if self.bits is None:
            return math.inf
        return 2 ** (self.bits - 1) * self.step

    @property
    def size(self):
        return math.inf if self.bits is None else 2**self.bits + 1

    def grid(self):
        if self.bits is None:
            raise ValueError("The infinite alphabet has no finite grid")
        half = 2 ** (self.bits - 1)
        return self.step * np.arange(-half, half + 1, dtype=np.float64)

    def saturates(self, z):
        """True where ``z`` lies beyond the grid range."""
        return np.abs(np.asarray(z, dtype=np.float64)) > self.max_level

    def clamp(self, z):
        z = np.asarray(z, dtype=np.float64)
        if self.bits is None:
            return z
        return np.clip(z, -self.max_level, self.max_level)

    def contains(self, values):
        """True when every entry of ``values`` is a grid point."""
        values = np.asarray(values, dtype=np.float64)
        if not np.all(np.isfinite(values)):
            return False
        k = values / self.step
        on_grid = np.all(np.abs(k - np.round(k)) <= 1e-9 * np.maximum(1.0, np.abs(k)))
        return bool(on_grid and np.all(np.abs(values) <= self.max_level * (1 + 1e-12)))

    def describe(self):
        if self.bits is None:
            return {"kind": INFINITE, "step": self.step}
        return {"kind": FINITE, "step": self.step, "bits": self.bits}


def _as_output(q, like):
    if np.ndim(like) == 0:
        return float(q)
    return q


def msq(z, a: Alphabet):
    """
    Round to nearest grid point.

    Uses delta*sign(z)*|floor(z/delta + 1/2)|, so ties go to the larger grid
    point (0.5 -> 1, -0.5 -> 0). Values beyond a finite grid saturate.
    """
    x = np.asarray(z, dtype=np.float64)
    q = a.step * np.sign(x) * np.abs(np.floor(x / a.step + 0.5))
    q = a.clamp(q) + 0.0  # drop negative zero
    return _as_output(q, z)


def stoc(z, a: Alphabet, rng: np.random.Generator):
    """
    Unbiased stochastic rounding.

    Returns floor(z/delta)*delta with probability 1 - z/delta + floor(z/delta)
    and the next grid point otherwise. On a finite grid ``z`` is clamped to the
    grid range first. Draws exactly one uniform per entry from ``rng``.
    """
    x = a.clamp(np.asarray(z, dtype=np.float64))
    scaled = x / a.step
    k = np.floor(scaled)
    up = rng.random(size=x.shape) < (scaled - k)
    q = a.step * (k + up) + 0.0
    return _as_output(q, z)
