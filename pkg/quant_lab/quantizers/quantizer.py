"""
Shared types and the column/layer driver for every quantizer.
"""

import time
from abc import ABC, abstractmethod
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Union

import numpy as np

from quant_lab.alphabet.alphabet import Alphabet
from quant_lab.alphabet.rounding import Rounder, RoundingMode
from quant_lab.linops.calibration import as_array
from quant_lab.linops.linops import auto_lambda
from quant_lab.utils.errors import DimensionMismatch, InvalidLambda
from quant_lab.utils.logger import logger
from quant_lab.utils.settings import Settings

AUTO = "auto"
ORDER_NONE = "none"
ORDER_DESC = "desc"
CHOLESKY = "chol"
LEAST_SQUARES = "ls"


@dataclass(frozen=True)
class QuantConfig:
    lam: Union[float, str] = AUTO
    ordering: str = ORDER_NONE
    formulation: str = CHOLESKY
    alphabet: Alphabet = field(default_factory=Alphabet)
    rounding: RoundingMode = field(default_factory=RoundingMode)
    record_states: bool = False
    ls_init: bool = False
    threads: Optional[int] = None

    def __post_init__(self):
        if self.ordering not in (ORDER_NONE, ORDER_DESC):
            raise ValueError(f"Unknown ordering '{self.ordering}'")
        if self.formulation not in (CHOLESKY, LEAST_SQUARES):
            raise ValueError(f"Unknown formulation '{self.formulation}'")
        if self.lam != AUTO:
            if not (isinstance(self.lam, (int, float)) and np.isfinite(self.lam)) or self.lam < 0:
                raise InvalidLambda(f"lambda must be 'auto' or a nonnegative real, got {self.lam}")

    def resolve_lambda(self, X):
        """Numeric lambda; 'auto' means 0.01 * ||X||_F^2 / N."""
        if self.lam == AUTO:
            return auto_lambda(X)
        return float(self.lam)

    def with_updates(self, **changes):
        return replace(self, **changes)

    @property
    def worker_count(self):
        return max(1, self.threads if self.threads else Settings.THREADS)

    def describe(self):
        return {
            "lambda": self.lam,
            "ordering": self.ordering,
            "formulation": self.formulation,
            "alphabet": self.alphabet.describe(),
            "rounding": self.rounding.mode,
            "seed": self.rounding.seed,
            "ls_init": self.ls_init,
        }


@dataclass
class QuantTrace:
    """
    Per-step record of one column sweep, in the (possibly permuted) sweep order.
    """

    preround: np.ndarray
    quantized: np.ndarray
    residue: np.ndarray
    saturated: np.ndarray
    states: Optional[np.ndarray] = None
    zero_first_column: bool = False

    @classmethod
    def empty(cls, n, record_states=False):
        return cls(
            preround=np.zeros(n),
            quantized=np.zeros(n),
            residue=np.zeros(n),
            saturated=np.zeros(n, dtype=bool),
            states=np.zeros((n + 1, n)) if record_states else None,
        )

    def record(self, t, z, q, saturated):
        self.preround[t] = z
        self.quantized[t] = q
        self.residue[t] = z - q
        self.saturated[t] = saturated

    def max_unsaturated_residue(self):
        free = ~self.saturated
        return float(np.max(np.abs(self.residue[free]))) if np.any(free) else 0.0


@dataclass
class PreparedLayer:
    """Everything a sweep needs that is shared by all columns of a layer."""

    permutation: np.ndarray
    X: np.ndarray
    lam: float
    factor: Any = None
    extra: Dict[str, Any] = field(default_factory=dict)


@dataclass
class QuantResult:
    q: np.ndarray
    permutation: np.ndarray
    traces: List[QuantTrace]
    wall_time: float
    lam: float
    config: QuantConfig
    method: str = "optq"

    @property
    def trace(self):
        return self.traces[0]

    def metrics(self, X, W, X_quant=None):
        """
        Realized errors: ||XW - X~Q|| in Frobenius/2-norm and max-entry form,
        and the same for W - Q. ``X_quant`` defaults to X.
        """
        A = as_array(X)
        At = A if X_quant is None else as_array(X_quant)
        W = np.asarray(W, dtype=np.float64)
        out_err = A @ W - At @ self.q
        weight_err = W - self.q
        return {
            "Xw_minus_Xq_l2": float(np.linalg.norm(out_err)),
            "Xw_minus_Xq_linf": float(np.max(np.abs(out_err))) if out_err.size else 0.0,
            "w_minus_q_l2": float(np.linalg.norm(weight_err)),
            "w_minus_q_linf": float(np.max(np.abs(weight_err))) if weight_err.size else 0.0,
        }


def reorder_descending(X):
    """Stable sort of columns by descending l2 norm; returns (X permuted, permutation)."""
    A = as_array(X)
    permutation = np.argsort(-np.linalg.norm(A, axis=0), kind="stable")
    return A[:, permutation], permutation


class QuantizerInterface(ABC):
    name = "quantizer"

    def __init__(self, cfg: QuantConfig):
        self.cfg = cfg

    @abstractmethod
    def prepare(self, X, X_tilde=None) -> PreparedLayer:
        """Factor and permute everything the columns share"""
        pass

    @abstractmethod
    def sweep(self, prepared: PreparedLayer, w: np.ndarray, rounder: Rounder) -> QuantTrace:
        """Quantize one permuted column"""
        pass

    def ordering_for(self, A):
        if self.cfg.ordering == ORDER_DESC:
            return reorder_descending(A)[1]
        return np.arange(A.shape[1])

    def quantize_prepared(self, prepared: PreparedLayer, W, stream=()):
        """
        Quantize every column of W with a prepared layer.

        Column c draws from stream (*stream, c), so serial and threaded runs
        give identical output.
        """
        start = time.perf_counter()
        W = np.asarray(W, dtype=np.float64)
        single = W.ndim == 1
        W2 = W[:, None] if single else W
        n = prepared.X.shape[1]
        if W2.shape[0] != n:
            raise DimensionMismatch(f"weights have {W2.shape[0]} rows, calibration has {n} columns")

        permutation = prepared.permutation
        Wp = W2[permutation, :]
        alphabet = self.cfg.alphabet

        def task(column):
            rounder = self.cfg.rounding.rounder(alphabet, *stream, column)
            return self.sweep(prepared, Wp[:, column].copy(), rounder)

        columns = range(W2.shape[1])
        workers = self.cfg.worker_count
        if workers > 1 and W2.shape[1] > 1:
            with ThreadPoolExecutor(max_workers=workers) as executor:
                traces = list(executor.map(task, columns))
        else:
            traces = [task(column) for column in columns]

        saturated = sum(int(trace.saturated.sum()) for trace in traces)
        if saturated:
            logger.warning(f"{self.name}: {saturated} steps fell outside the grid and were clamped")

        Q = np.empty_like(W2)
        Q[permutation, :] = np.column_stack([trace.quantized for trace in traces])
        return QuantResult(
            q=Q[:, 0] if single else Q,
            permutation=permutation,
            traces=traces,
            wall_time=time.perf_counter() - start,
            lam=prepared.lam,
            config=self.cfg,
            method=self.name,
        )

    def quantize_layer(self, X, W, X_tilde=None, stream=()):
        start = time.perf_counter()
        prepared = self.prepare(X, X_tilde)
        result = self.quantize_prepared(prepared, W, stream)
        result.wall_time = time.perf_counter() - start
        shape = "x".join(str(d) for d in np.shape(W))
        logger.debug(f"{self.name}: quantized {shape} weights in {result.wall_time:.4f}s")
        return result

    def quantize_column(self, X, w, X_tilde=None, stream=()):
        w = np.asarray(w, dtype=np.float64)
        if w.ndim != 1:
            raise DimensionMismatch(f"expected a weight vector, got shape {w.shape}")
        return self.quantize_layer(X, w, X_tilde, stream)
