"""
Worst-case inputs for deterministic OPTQ.

X = H^T R with H an orthonormal Hadamard matrix and R unit lower-bidiagonal.
The weights are built so that OPTQ's preround value at every step is
q_t + beta H_{t,j}, which rounds back to q_t: the accumulated error then
equals beta R^{-1} H_j, whose entries grow linearly in N.
"""

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from quant_lab.alphabet.alphabet import Alphabet, msq
from quant_lab.alphabet.rounding import RoundingMode
from quant_lab.quantizers.optq import optq_column
from quant_lab.quantizers.quantizer import LEAST_SQUARES, QuantConfig
from quant_lab.utils.errors import NotPowerOfTwo
from quant_lab.utils.logger import logger

COLUMN_INDEX = 2


def _check_power_of_two(n):
    if int(n) != n or n < 1 or (int(n) & (int(n) - 1)):
        raise NotPowerOfTwo(f"size must be a power of two, got {n}")


def hadamard(n):
    """Sylvester Hadamard matrix scaled to orthonormal columns."""
    _check_power_of_two(n)
    return scipy.linalg.hadamard(int(n)).astype(np.float64) / math.sqrt(n)


def bidiagonal(n):
    """Unit lower-triangular R with ones on the first subdiagonal."""
    return np.eye(n) + np.eye(n, k=-1)


def bidiagonal_inverse(n):
    """(R^{-1})_{ik} = (-1)^{i-k} for i >= k."""
    i, k = np.indices((n, n))
    return np.tril(np.where((i - k) % 2 == 0, 1.0, -1.0))


@dataclass
class AdversarialInstance:
    X: np.ndarray
    w: np.ndarray
    expected_q: np.ndarray
    beta: float
    column_index: int
    H: np.ndarray
    R: np.ndarray

    @property
    def size(self):
        return self.X.shape[1]

    @property
    def alphabet(self):
        return Alphabet(step=1.0)


def build_instance(n) -> AdversarialInstance:
    _check_power_of_two(n)
    if n < 2:
        raise NotPowerOfTwo(f"the construction needs N >= 2, got {n}")
    H = hadamard(n)
    R = bidiagonal(n)
    beta = math.sqrt(n) / 3
    direction = bidiagonal_inverse(n) @ H[:, COLUMN_INDEX - 1]
    drift = beta * direction
    expected_q = -msq(drift, Alphabet(step=1.0))
    return AdversarialInstance(
        X=H.T @ R,
        w=drift + expected_q,
        expected_q=expected_q,
        beta=beta,
        column_index=COLUMN_INDEX,
        H=H,
        R=R,
    )


def scaling_report(sizes, formulation=LEAST_SQUARES):
    """
    Run deterministic OPTQ (lam = 0, unit step, infinite grid) on each instance
    and tabulate ||X(w - q)||_inf against sqrt(N)/3 and ||w - q||_inf against N/3.
    """
    cfg = QuantConfig(
        lam=0.0,
        formulation=formulation,
        alphabet=Alphabet(step=1.0),
        rounding=RoundingMode(),
    )
    rows = []
    for n in sizes:
        instance = build_instance(n)
        q = optq_column(instance.X, instance.w, cfg).q
        row = {
            "N": int(n),
            "linf_error": float(np.max(np.abs(instance.X @ (instance.w - q)))),
            "weight_drift": float(np.max(np.abs(instance.w - q))),
            "expected_linf_error": math.sqrt(n) / 3,
            "expected_weight_drift": n / 3,
            "w_linf": float(np.max(np.abs(instance.w))),
            "matches_expected": bool(np.array_equal(q, instance.expected_q)),
        }
        logger.info(
            f"adversarial N={n}: linf={row['linf_error']:.6f} drift={row['weight_drift']:.6f} "
            f"matches={row['matches_expected']}"
        )
        rows.append(row)
    return rows
