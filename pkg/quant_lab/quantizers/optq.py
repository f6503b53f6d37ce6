"""
OPTQ: greedy column-by-column rounding with least-squares error feedback.

Two formulations give the same grid vector. The Cholesky path factors
(X^T X + lam I)^{-1} = L L^T once and pushes each rounding error onto the
remaining weights through column t of L. The least-squares path re-solves the
trailing problem from scratch after every step (on the augmented matrix when
lam > 0); it is the slow reference.
"""

import numpy as np

from quant_lab.alphabet.rounding import Rounder
from quant_lab.linops.calibration import as_array
from quant_lab.linops.linops import (
    augment,
    cholesky_inverse_hessian,
    ls_solve_minnorm,
    project_residual,
)
from quant_lab.quantizers.quantizer import (
    CHOLESKY,
    PreparedLayer,
    QuantConfig,
    QuantizerInterface,
    QuantResult,
    QuantTrace,
)
from quant_lab.utils.errors import DimensionMismatch, TraceMissing


def cholesky_sweep(L, w, rounder: Rounder, record_states=False, start=0, trace=None):
    """
    Quantize w_t, then w_{>t} += (q_t - w_t) L_{>t,t} / L_tt, for t >= start.

    Steps before ``start`` must already be recorded in ``trace``.
    """
    n = len(w)
    w = w.copy()
    if trace is None:
        trace = QuantTrace.empty(n, record_states)
    if record_states:
        trace.states[start] = w
    alphabet = rounder.alphabet
    for t in range(start, n):
        z = w[t]
        q = rounder.round(z)
        trace.record(t, z, q, alphabet.saturates(z))
        w[t] = q
        if t + 1 < n:
            w[t + 1 :] += (q - z) * L[t + 1 :, t] / L[t, t]
        if record_states:
            trace.states[t + 1] = w
    return trace


def least_squares_sweep(A, target, w, rounder: Rounder, record_states=False, start=0, trace=None):
    """
    Quantize w_t, then set the trailing weights to the minimal-norm minimizer of
    ||A_{>t} v - (target - A_{<=t} q_{<=t})||, for t >= start.
    """
    n = len(w)
    current = w.copy()
    if trace is None:
        trace = QuantTrace.empty(n, record_states)
    if record_states:
        trace.states[start] = current
    alphabet = rounder.alphabet
    for t in range(start, n):
        z = current[t]
        q = rounder.round(z)
        trace.record(t, z, q, alphabet.saturates(z))
        current[t] = q
        if t + 1 < n:
            rhs = target - A[:, : t + 1] @ current[: t + 1]
            current[t + 1 :] = ls_solve_minnorm(A[:, t + 1 :], rhs)
        if record_states:
            trace.states[t + 1] = current
    return trace


class OptqQuantizer(QuantizerInterface):
    name = "optq"

    def prepare(self, X, X_tilde=None):
        A = as_array(X)
        lam = self.cfg.resolve_lambda(A)
        permutation = self.ordering_for(A)
        Ap = A[:, permutation]
        if self.cfg.formulation == CHOLESKY:
            return PreparedLayer(permutation, Ap, lam, factor=cholesky_inverse_hessian(Ap, lam))
        system = as_array(augment(Ap, lam)) if lam > 0 else Ap
        return PreparedLayer(permutation, Ap, lam, extra={"system": system})

    def sweep(self, prepared, w, rounder):
        if prepared.factor is not None:
            return cholesky_sweep(prepared.factor.L, w, rounder, self.cfg.record_states)
        system = prepared.extra["system"]
        return least_squares_sweep(system, system @ w, w, rounder, self.cfg.record_states)


def optq_column(X, w, cfg: QuantConfig) -> QuantResult:
    return OptqQuantizer(cfg).quantize_column(X, w)


def optq_layer(X, W, cfg: QuantConfig) -> QuantResult:
    return OptqQuantizer(cfg).quantize_layer(X, W)


def error_system(X, result: QuantResult):
    """The matrix the sweep actually balanced: X permuted, augmented when lam > 0."""
    A = as_array(X)[:, result.permutation]
    return as_array(augment(A, result.lam)) if result.lam > 0 else A


def error_decomposition(X, w, result: QuantResult, column=0):
    """
    Return (e_N, terms) where e_N = Xw - Xq computed directly and term j is
    r_j * P_{X_{>=j+1}^perp} X_j. The terms sum to e_N.

    With lam > 0 both sides live on the augmented matrix [X; sqrt(lam) I], so
    e_N also carries sqrt(lam) (w - q). Terms are in sweep order.
    """
    if not result.traces or result.traces[column] is None:
        raise TraceMissing("quantization result carries no trace")
    trace = result.traces[column]
    w = np.asarray(w, dtype=np.float64)
    if w.ndim == 2:
        w = w[:, column]
    A = error_system(X, result)
    if A.shape[1] != len(w):
        raise DimensionMismatch(f"weights have {len(w)} entries, X has {A.shape[1]} columns")
    wp = w[result.permutation]
    e_N = A @ wp - A @ trace.quantized
    terms = [
        trace.residue[j] * project_residual(A[:, j + 1 :], A[:, j]) for j in range(A.shape[1])
    ]
    return e_N, terms
