"""
Qronos: round against the drifted input X~ while targeting the clean output Xw.

Step one picks q_1 from the best scalar fit of X~_1 to Xw - X~_{>=2} w_{>=2}
and refits the rest of the weights by least squares. The remaining steps are
ordinary OPTQ steps on X~. With lam > 0 everything runs on X~ augmented by
sqrt(lam) I and the target becomes [Xw; sqrt(lam) w].
"""

from dataclasses import dataclass

import numpy as np

from quant_lab.linops.calibration import CalibrationMatrix, as_array, as_calibration
from quant_lab.linops.linops import (
    cholesky_inverse_hessian,
    project_residual,
    projection_residual_norms,
    pseudo_inverse,
)
from quant_lab.quantizers.optq import cholesky_sweep, least_squares_sweep
from quant_lab.quantizers.quantizer import (
    CHOLESKY,
    PreparedLayer,
    QuantConfig,
    QuantizerInterface,
    QuantResult,
    QuantTrace,
)
from quant_lab.utils.errors import DimensionMismatch, TraceMissing
from quant_lab.utils.logger import logger


@dataclass
class QronosInput:
    X: CalibrationMatrix
    X_tilde: CalibrationMatrix
    w: np.ndarray
    cfg: QuantConfig

    def __post_init__(self):
        self.X = as_calibration(self.X, "X")
        self.X_tilde = as_calibration(self.X_tilde, "X_tilde")
        self.w = np.asarray(self.w, dtype=np.float64)
        if self.X.shape != self.X_tilde.shape:
            raise DimensionMismatch(f"X is {self.X.shape} but X_tilde is {self.X_tilde.shape}")
        if self.w.shape[0] != self.X.cols:
            raise DimensionMismatch(f"w has {self.w.shape[0]} rows, X has {self.X.cols} columns")


def _stack(A, At, lam):
    """System matrix and the map from weights to the target."""
    if lam > 0:
        n = A.shape[1]
        root = np.sqrt(lam) * np.eye(n)
        return np.vstack([At, root]), np.vstack([A, root])
    return At, A


class QronosQuantizer(QuantizerInterface):
    name = "qronos"

    def prepare(self, X, X_tilde=None):
        A = as_array(X)
        At = A if X_tilde is None else as_array(X_tilde)
        if A.shape != At.shape:
            raise DimensionMismatch(f"X is {A.shape} but X_tilde is {At.shape}")
        lam = self.cfg.resolve_lambda(At)
        permutation = self.ordering_for(At)
        Ap, Atp = A[:, permutation], At[:, permutation]
        system, target_map = _stack(Ap, Atp, lam)
        extra = {"system": system, "target_map": target_map}
        if self.cfg.ls_init:
            extra["system_pinv"] = pseudo_inverse(system)
        elif system.shape[1] > 1:
            extra["tail_pinv"] = pseudo_inverse(system[:, 1:])
        factor = None
        if self.cfg.formulation == CHOLESKY:
            factor = cholesky_inverse_hessian(Atp, lam)
        return PreparedLayer(permutation, Atp, lam, factor=factor, extra=extra)

    def sweep(self, prepared, w, rounder):
        system = prepared.extra["system"]
        target = prepared.extra["target_map"] @ w
        record = self.cfg.record_states
        if self.cfg.ls_init:
            start = prepared.extra["system_pinv"] @ target
            if prepared.factor is not None:
                return cholesky_sweep(prepared.factor.L, start, rounder, record)
            return least_squares_sweep(system, target, start, rounder, record)

        n = len(w)
        trace = QuantTrace.empty(n, record)
        first, rest = system[:, 0], system[:, 1:]
        norm_sq = float(first @ first)
        if norm_sq > 0:
            z = float(first @ (target - rest @ w[1:])) / norm_sq
        else:
            logger.warning("qronos: first column of X_tilde is zero, rounding w_1 directly")
            trace.zero_first_column = True
            z = w[0]
        q = rounder.round(z)
        trace.record(0, z, q, rounder.alphabet.saturates(z))
        current = w.copy()
        if record:
            trace.states[0] = current
        current[0] = q
        if n == 1:
            if record:
                trace.states[1] = current
            return trace
        current[1:] = prepared.extra["tail_pinv"] @ (target - q * first)

        # The remaining steps are OPTQ steps on the refit weights.
        if prepared.factor is not None:
            return cholesky_sweep(prepared.factor.L, current, rounder, record, 1, trace)
        return least_squares_sweep(system, target, current, rounder, record, 1, trace)


def qronos_column(inp: QronosInput) -> QuantResult:
    return QronosQuantizer(inp.cfg).quantize_column(inp.X, inp.w, inp.X_tilde)


def qronos_layer(X, X_tilde, W, cfg: QuantConfig) -> QuantResult:
    return QronosQuantizer(cfg).quantize_layer(X, W, X_tilde)


def _systems(inp: QronosInput, result: QuantResult):
    perm = result.permutation
    return _stack(inp.X.data[:, perm], inp.X_tilde.data[:, perm], result.lam)


def qronos_error_decomposition(inp: QronosInput, result: QuantResult, column=0):
    """
    Return (e_N, leading_term, terms) with e_N = Xw - X~q.

    The leading term is P_{X~_{>=2}^perp} P_{X~_1^perp} (Xw - X~w), or
    P_{X~^perp} (Xw - X~w) for the least-squares initialised variant, and term j
    is r_j P_{X~_{>=j+1}^perp} X~_j. leading_term + sum(terms) equals e_N.
    """
    if not result.traces or result.traces[column] is None:
        raise TraceMissing("quantization result carries no trace")
    trace = result.traces[column]
    w = inp.w if inp.w.ndim == 1 else inp.w[:, column]
    system, target_map = _systems(inp, result)
    wp = w[result.permutation]
    target = target_map @ wp
    e_N = target - system @ trace.quantized
    drift = target - system @ wp
    if result.config.ls_init:
        leading = project_residual(system, drift)
    else:
        leading = project_residual(system[:, 1:], project_residual(system[:, :1], drift))
    terms = [
        trace.residue[j] * project_residual(system[:, j + 1 :], system[:, j])
        for j in range(system.shape[1])
    ]
    return e_N, leading, terms


def drift_norm(inp: QronosInput):
    """||Xw - X~w||_2, the leading term OPTQ run directly on X~ would carry."""
    return float(np.linalg.norm((inp.X.data - inp.X_tilde.data) @ inp.w))


def qronos_l2_bound(inp: QronosInput, result: QuantResult, delta, column=0):
    """
    Deterministic bound ||e_N|| <= ||leading|| + (delta/2) sqrt(N) *
    min{max_j ||P X~_j||, sqrt(Tr(X~^T X~)/N)}. Returns (realized, bound).
    """
    e_N, leading, _ = qronos_error_decomposition(inp, result, column)
    system, _ = _systems(inp, result)
    n = system.shape[1]
    spread = min(
        float(np.max(projection_residual_norms(system))),
        float(np.sqrt(np.sum(system**2) / n)),
    )
    bound = float(np.linalg.norm(leading)) + delta / 2 * np.sqrt(n) * spread
    return float(np.linalg.norm(e_N)), bound


def optq_drifted_bound(inp: QronosInput, delta):
    """The same bound for OPTQ run on X~, whose leading term is ||Xw - X~w||."""
    At = inp.X_tilde.data
    n = At.shape[1]
    spread = min(
        float(np.max(projection_residual_norms(At))),
        float(np.sqrt(np.sum(At**2) / n)),
    )
    return drift_norm(inp) + delta / 2 * np.sqrt(n) * spread
