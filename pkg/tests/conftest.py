import numpy as np
import pytest

from quant_lab.alphabet.alphabet import Alphabet
from quant_lab.alphabet.rounding import RoundingMode
from quant_lab.quantizers.quantizer import QuantConfig


@pytest.fixture
def make_instance():
    """Gaussian X (m x N) and weights uniform in [-1, 1] from one seed."""

    def _make(seed, m, n, n_prime=None):
        rng = np.random.default_rng(seed)
        X = rng.standard_normal((m, n))
        shape = n if n_prime is None else (n, n_prime)
        return X, rng.uniform(-1.0, 1.0, shape)

    return _make


@pytest.fixture
def det_config():
    def _make(lam="auto", formulation="chol", delta=1.0, bits=None, **kwargs):
        return QuantConfig(
            lam=lam,
            formulation=formulation,
            alphabet=Alphabet(step=delta, bits=bits),
            rounding=RoundingMode(),
            **kwargs,
        )

    return _make


@pytest.fixture
def stoc_config():
    def _make(seed=0, lam="auto", formulation="chol", delta=1.0, bits=None, **kwargs):
        return QuantConfig(
            lam=lam,
            formulation=formulation,
            alphabet=Alphabet(step=delta, bits=bits),
            rounding=RoundingMode("stoc", seed),
            **kwargs,
        )

    return _make
