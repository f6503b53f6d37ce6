from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np

from quant_lab.alphabet.alphabet import Alphabet, msq, stoc

DETERMINISTIC = "det"
STOCHASTIC = "stoc"
SEED_LIMIT = 2**64


def make_generator(seed, stream=()):
    """
    Counter-based generator for one stream.

    Philox keyed by SeedSequence(seed, spawn_key=stream): the triple
    (seed, stream, draw counter) fixes every value.
    """
    sequence = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(s) for s in stream))
    return np.random.Generator(np.random.Philox(sequence))


class Rounder(ABC):
    def __init__(self, alphabet: Alphabet):
        self.alphabet = alphabet

    @abstractmethod
    def round(self, z):
        """Map ``z`` onto the alphabet"""
        pass

    @property
    @abstractmethod
    def residue_limit(self):
        """Bound on |z - round(z)| for z inside the grid range"""
        pass


class DeterministicRounder(Rounder):
    def round(self, z):
        return msq(z, self.alphabet)

    @property
    def residue_limit(self):
        return self.alphabet.step / 2


class StochasticRounder(Rounder):
    def __init__(self, alphabet: Alphabet, rng: np.random.Generator):
        super().__init__(alphabet)
        self.rng = rng

    def round(self, z):
        return stoc(z, self.alphabet, self.rng)

    @property
    def residue_limit(self):
        return self.alphabet.step


@dataclass(frozen=True)
class RoundingMode:
    mode: str = DETERMINISTIC
    seed: int = 0

    def __post_init__(self):
        if self.mode not in (DETERMINISTIC, STOCHASTIC):
            raise ValueError(f"Unknown rounding mode '{self.mode}'")
        if int(self.seed) != self.seed or not 0 <= self.seed < SEED_LIMIT:
            raise ValueError(f"Seed must be an unsigned 64-bit integer, got {self.seed}")

    def rounder(self, alphabet: Alphabet, *stream) -> Rounder:
        """Rounder for one column; ``stream`` identifies the column."""
        if self.mode == DETERMINISTIC:
            return DeterministicRounder(alphabet)
        return StochasticRounder(alphabet, make_generator(self.seed, stream))
