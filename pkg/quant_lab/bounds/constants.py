"""
Closed-form constants and bound values for the OPTQ error guarantees.
"""

import math
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np
import scipy.linalg

from quant_lab.linops.calibration import as_array
from quant_lab.linops.linops import (
    projected_columns,
    projection_residual_norms,
    rank_tolerance,
    sigma_min_sequence,
)
from quant_lab.utils.errors import InvalidLambda
from quant_lab.utils.settings import Settings


def _require_positive_lambda(lam):
    if not lam > 0:
        raise InvalidLambda(f"bound constants need lambda > 0, got {lam}")


def head_count(X):
    """Number of leading columns j with j <= N - m."""
    m, n = as_array(X).shape
    return max(n - m, 0)


def head_sigmas(X):
    """
    sigma_min of X_{>=j+1} for the leading columns j <= N - m.

    Such a block has at least m columns. When it has full row rank this is its
    smallest singular value; otherwise it is taken as zero, which keeps the
    per-column projection bound valid for degenerate X.
    """
    A = as_array(X)
    m = A.shape[0]
    out = np.zeros(head_count(A))
    for j in range(len(out)):
        s = scipy.linalg.svdvals(A[:, j + 1 :])
        if np.sum(s > rank_tolerance(A[:, j + 1 :], s)) == m:
            out[j] = s[m - 1]
    return out


def _spread_terms(X, lam):
    """(max over the head of lam ||X_j||^2 / (sigma_j^2 + lam), max tail ||X_j||^2)."""
    A = as_array(X)
    norms_sq = np.sum(A**2, axis=0)
    k = head_count(A)
    head = 0.0
    if k:
        head = float(np.max(lam * norms_sq[:k] / (head_sigmas(A) ** 2 + lam)))
    tail = float(np.max(norms_sq[k:]))
    return head, tail


def compute_C2(X, lam):
    """C_2(X, lam): the l2 constant, including the ||X||_F^2 / N cap."""
    _require_positive_lambda(lam)
    A = as_array(X)
    head, tail = _spread_terms(A, lam)
    cap = float(np.sum(A**2)) / A.shape[1]
    return math.sqrt(min(max(head, tail), cap) + lam)


def compute_Cinf(X, lam):
    """C_inf(X, lam): the l-infinity constant, no Frobenius cap."""
    _require_positive_lambda(lam)
    head, tail = _spread_terms(X, lam)
    return math.sqrt(max(head, tail) + lam)


def projection_upper_bounds(X, lam):
    """
    Per-column upper bounds on ||P_{X^_{>=j+1}^perp} X^_j||^2 for the augmented
    matrix X^ = [X; sqrt(lam) I].
    """
    _require_positive_lambda(lam)
    A = as_array(X)
    norms_sq = np.sum(A**2, axis=0)
    k = head_count(A)
    out = norms_sq + lam
    out[:k] = lam * norms_sq[:k] / (head_sigmas(A) ** 2 + lam) + lam
    return out


def max_trailing_norm_sq(X):
    """max_{j > N - m} ||X_j||^2, the quantity descending-norm ordering minimizes."""
    A = as_array(X)
    return float(np.max(np.sum(A[:, head_count(A) :] ** 2, axis=0)))


def linf_radius(delta, n, n_prime=1, p=Settings.DEFAULT_P, p_prime=Settings.DEFAULT_P_PRIME):
    """delta * sqrt(2 pi (p log N + p' log N'))."""
    return delta * math.sqrt(2 * math.pi * (p * math.log(n) + p_prime * math.log(n_prime)))


def failure_probability(rows, n, n_prime=1, p=Settings.DEFAULT_P, p_prime=Settings.DEFAULT_P_PRIME):
    """sqrt(2) rows / (N^p N'^(p'-1)), clipped to [0, 1]."""
    value = math.sqrt(2) * rows / (n**p * n_prime ** (p_prime - 1))
    return min(max(value, 0.0), 1.0)


def solve_p_for_target(eps, rows, n, n_prime=1, p_prime=Settings.DEFAULT_P_PRIME):
    """p solving p log N + (p' - 1) log N' = log(sqrt(2) rows / eps)."""
    if not 0 < eps < 1:
        raise ValueError(f"target failure probability must lie in (0, 1), got {eps}")
    if n < 2:
        raise ValueError("no p reaches a target failure probability when N = 1")
    return (math.log(math.sqrt(2) * rows / eps) - (p_prime - 1) * math.log(n_prime)) / math.log(n)


def error_covariance(X, delta):
    """(pi delta^2 / 2) sum_j v_j v_j^T with v_j = P_{X_{>=j+1}^perp} X_j."""
    V = projected_columns(X)
    return math.pi * delta**2 / 2 * (V @ V.T)


def required_bits(w, delta, drift=0.0):
    """Smallest b with 2^(b-1) delta >= ||w||_inf + drift."""
    reach = float(np.max(np.abs(w))) + drift
    if reach <= delta:
        return 1
    return max(1, math.ceil(math.log2(reach / delta)) + 1)


def msq_l2_bound(X, delta):
    """(sqrt(N) delta / 2) ||X||_op, the memoryless rounding bound."""
    A = as_array(X)
    return math.sqrt(A.shape[1]) * delta / 2 * float(scipy.linalg.svdvals(A)[0])


def finite_alphabet_bounds(
    X, lam, delta, n_prime=1, p=Settings.DEFAULT_P, p_prime=Settings.DEFAULT_P_PRIME
):
    """Entrywise bounds with sqrt(max_j ||X_j||^2 + lam) in place of C_inf."""
    _require_positive_lambda(lam)
    A = as_array(X)
    radius = linf_radius(delta, A.shape[1], n_prime, p, p_prime)
    widest = float(np.max(np.sum(A**2, axis=0)))
    return radius * math.sqrt(widest + lam), radius * math.sqrt(widest / lam + 1)


@dataclass
class BoundReport:
    C2: float
    Cinf: float
    proj_norms: np.ndarray
    sigma_mins: np.ndarray
    head_sigmas: np.ndarray
    l2_bound_Xwq: float
    l2_bound_wq: float
    linf_bound_Xwq: float
    linf_bound_wq: float
    finite_linf_bound_Xwq: float
    finite_linf_bound_wq: float
    covariance_op_norm: float
    p: float
    p_prime: float
    failure_prob: float
    lam: float
    delta: float
    n_prime: int = 1
    required_bits: Optional[int] = None

    def to_dict(self):
        out = asdict(self)
        for key in ("proj_norms", "sigma_mins", "head_sigmas"):
            out[key] = getattr(self, key).tolist()
        return out


def bound_report(
    X,
    lam,
    delta,
    n_prime=1,
    p=Settings.DEFAULT_P,
    p_prime=Settings.DEFAULT_P_PRIME,
    eps=None,
    W=None,
):
    """
    Every constant and bound for X in its given column order.

    ``sigma_mins`` is the smallest nonzero singular value of each trailing block;
    ``head_sigmas`` are the values C2 and C_inf use, zero for a leading column
    whose trailing block lacks full row rank. With ``eps`` set, p is solved
    for that failure probability. With weights ``W``, ``required_bits`` is the
    smallest bit width whose grid covers W plus the l-infinity weight drift.
    """
    A = as_array(X)
    m, n = A.shape
    if eps is not None:
        p = solve_p_for_target(eps, m + n, n, n_prime, p_prime)
    C2 = compute_C2(A, lam)
    Cinf = compute_Cinf(A, lam)
    half_width = math.sqrt(n) * delta / 2
    radius = linf_radius(delta, n, n_prime, p, p_prime)
    finite_out, finite_w = finite_alphabet_bounds(A, lam, delta, n_prime, p, p_prime)
    linf_w = radius * Cinf / math.sqrt(lam)
    return BoundReport(
        C2=C2,
        Cinf=Cinf,
        proj_norms=projection_residual_norms(A),
        sigma_mins=sigma_min_sequence(A),
        head_sigmas=head_sigmas(A),
        l2_bound_Xwq=half_width * C2,
        l2_bound_wq=half_width * C2 / math.sqrt(lam),
        linf_bound_Xwq=radius * Cinf,
        linf_bound_wq=linf_w,
        finite_linf_bound_Xwq=finite_out,
        finite_linf_bound_wq=finite_w,
        covariance_op_norm=float(scipy.linalg.eigvalsh(error_covariance(A, delta))[-1]),
        p=p,
        p_prime=p_prime,
        failure_prob=failure_probability(m + n, n, n_prime, p, p_prime),
        lam=lam,
        delta=delta,
        n_prime=n_prime,
        required_bits=None if W is None else required_bits(W, delta, linf_w),
    )
