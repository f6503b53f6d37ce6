"""
Linear-algebra kernels shared by the quantizers and the bound evaluators.

Every pseudo-inverse, projection and "nonzero singular value" uses the same
rank tolerance: max(m, N) * sigma_max * Settings.RANK_TOLERANCE.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from quant_lab.linops.calibration import CalibrationMatrix, as_array
from quant_lab.utils.errors import InvalidLambda, NotPositiveDefinite
from quant_lab.utils.logger import logger
from quant_lab.utils.settings import Settings


@dataclass(frozen=True)
class CholeskyFactor:
    """Lower-triangular L with L @ L.T = (X^T X + lam I)^{-1}."""

    L: np.ndarray
    lam: float

    @property
    def size(self):
        return self.L.shape[0]


def auto_lambda(X):
    A = as_array(X)
    return Settings.AUTO_LAMBDA_FACTOR * float(np.sum(A**2)) / A.shape[1]


def augment(X, lam):
    """Stack X over sqrt(lam) * I, so that X_hat^T X_hat = X^T X + lam I."""
    if not lam > 0:
        raise InvalidLambda(f"augment needs lambda > 0, got {lam}")
    A = as_array(X)
    stacked = np.vstack([A, np.sqrt(lam) * np.eye(A.shape[1])])
    return CalibrationMatrix(stacked, name="X_aug")


def rank_tolerance(A, s=None):
    A = as_array(A)
    if A.size == 0:
        return 0.0
    if s is None:
        s = scipy.linalg.svdvals(A)
    sigma_max = float(s[0]) if len(s) else 0.0
    return max(A.shape) * sigma_max * Settings.RANK_TOLERANCE


def numerical_rank(A):
    A = as_array(A)
    if A.size == 0:
        return 0
    s = scipy.linalg.svdvals(A)
    return int(np.sum(s > rank_tolerance(A, s)))


def _range_basis(A):
    """Orthonormal basis of col(A) from a thin SVD."""
    U, s, _ = scipy.linalg.svd(A, full_matrices=False)
    r = int(np.sum(s > rank_tolerance(A, s)))
    return U[:, :r]


def cholesky_inverse_hessian(X, lam=0.0) -> CholeskyFactor:
    """
    Factor H^{-1} = (X^T X + lam I)^{-1} = L L^T with L lower triangular.
    """
    A = as_array(X)
    n = A.shape[1]
    if lam < 0:
        raise InvalidLambda(f"lambda must be nonnegative, got {lam}")
    H = A.T @ A + lam * np.eye(n)
    suggestion = auto_lambda(A) if A.size else None
    try:
        c, lower = scipy.linalg.cho_factor(H, lower=True)
    except scipy.linalg.LinAlgError as e:
        logger.error(f"Cholesky of the dampened Hessian failed (lambda={lam}): {e}")
        raise NotPositiveDefinite(
            f"X^T X + {lam} I is not positive definite", suggestion
        ) from e
    pivots = np.diag(c)
    # A pivot this small means H is singular to working precision.
    if pivots.min() ** 2 <= np.finfo(np.float64).eps * n * np.max(np.diag(H)):
        logger.error(f"Dampened Hessian is numerically singular (lambda={lam})")
        raise NotPositiveDefinite(f"X^T X + {lam} I is numerically singular", suggestion)

    Hinv = scipy.linalg.cho_solve((c, lower), np.eye(n))
    Hinv = (Hinv + Hinv.T) / 2
    try:
        L = scipy.linalg.cholesky(Hinv, lower=True)
    except scipy.linalg.LinAlgError as e:
        raise NotPositiveDefinite(
            f"(X^T X + {lam} I)^-1 is not positive definite", suggestion
        ) from e
    if np.diag(L).min() < Settings.PIVOT_FLOOR:
        raise NotPositiveDefinite(f"Cholesky pivot underflow (lambda={lam})", suggestion)
    return CholeskyFactor(L=L, lam=float(lam))


def pseudo_inverse(A):
    """Moore-Penrose pseudo-inverse via SVD with the shared rank tolerance."""
    A = as_array(A)
    m, n = A.shape
    if A.size == 0:
        return np.zeros((n, m))
    U, s, Vt = scipy.linalg.svd(A, full_matrices=False)
    r = int(np.sum(s > rank_tolerance(A, s)))
    return Vt[:r].T @ (U[:, :r].T / s[:r, None])


def project_residual(X_tail, v):
    """
    P_{X_tail^perp} v = v - X_tail X_tail^+ v.

    An empty (or all-zero) ``X_tail`` projects onto everything, so ``v`` comes
    back unchanged. ``v`` may be a vector or a matrix of stacked vectors.
    """
    A = as_array(X_tail)
    v = np.asarray(v, dtype=np.float64)
    if A.ndim == 1:
        A = A[:, None]
    if A.shape[1] == 0 or not np.any(A):
        return v.copy()
    U = _range_basis(A)
    return v - U @ (U.T @ v)


def ls_solve_minnorm(A, b):
    """Minimal-norm minimizer of ||A v - b||_2."""
    return pseudo_inverse(A) @ np.asarray(b, dtype=np.float64)


def sigma_min_sequence(X):
    """
    Entry j (1-based) is the smallest nonzero singular value of columns j+1..N,
    zero when that block is empty or all-zero.
    """
    A = as_array(X)
    n = A.shape[1]
    out = np.zeros(n)
    for j in range(n - 1):
        tail = A[:, j + 1 :]
        s = scipy.linalg.svdvals(tail)
        nonzero = s[s > rank_tolerance(tail, s)]
        if nonzero.size:
            out[j] = nonzero.min()
    return out


def projected_columns(X):
    """m x N matrix whose column j is P_{X_{>=j+1}^perp} X_j; the last is X_N."""
    A = as_array(X)
    out = np.empty_like(A)
    for j in range(A.shape[1]):
        out[:, j] = project_residual(A[:, j + 1 :], A[:, j])
    return out


def projection_residual_norms(X):
    return np.linalg.norm(projected_columns(X), axis=0)
