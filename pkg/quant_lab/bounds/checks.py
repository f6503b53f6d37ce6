"""
Check realized quantization error against the closed-form bounds.

Deterministic checks return InequalityCheck records. The high-probability
bounds are checked by Monte Carlo: the stochastic quantizer is rerun with
independent streams and the violation rate is compared with the predicted
failure probability plus a binomial allowance.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Dict, List

import numpy as np
import scipy.linalg
from tqdm import tqdm

from quant_lab.alphabet.alphabet import Alphabet
from quant_lab.alphabet.rounding import STOCHASTIC, RoundingMode
from quant_lab.bounds.constants import (
    compute_C2,
    compute_Cinf,
    failure_probability,
    linf_radius,
    msq_l2_bound,
    solve_p_for_target,
)
from quant_lab.linops.calibration import as_array
from quant_lab.linops.linops import (
    auto_lambda,
    numerical_rank,
    projection_residual_norms,
)
from quant_lab.quantizers.optq import OptqQuantizer
from quant_lab.quantizers.qronos import (
    QronosInput,
    QronosQuantizer,
    drift_norm,
    qronos_error_decomposition,
    qronos_l2_bound,
)
from quant_lab.quantizers.quantizer import (
    LEAST_SQUARES,
    ORDER_DESC,
    QuantConfig,
)
from quant_lab.utils.errors import DimensionMismatch, RankMismatch
from quant_lab.utils.logger import logger
from quant_lab.utils.settings import Settings

RELATIVE_SLACK = 1e-9


@dataclass
class InequalityCheck:
    name: str
    realized: float
    bound: float
    holds: bool
    slack: float
    applicable: bool = True

    @classmethod
    def evaluate(cls, name, realized, bound):
        realized, bound = float(realized), float(bound)
        holds = realized <= bound * (1 + RELATIVE_SLACK) + 1e-12
        return cls(name, realized, bound, holds, bound - realized)

    def to_dict(self):
        return asdict(self)


@dataclass
class CheckReport:
    checks: List[InequalityCheck]

    @property
    def passed(self):
        return all(check.holds for check in self.checks if check.applicable)

    @property
    def min_slack(self):
        """Smallest slack among applicable checks, None when there are none."""
        return min((check.slack for check in self.checks if check.applicable), default=None)

    def by_name(self, name):
        return next(check for check in self.checks if check.name == name)

    def to_dict(self):
        return {"passed": self.passed, "checks": [check.to_dict() for check in self.checks]}


@dataclass
class MonteCarloVerdict:
    name: str
    trials: int
    failures: int
    predicted_rate: float
    bound_Xwq: float
    bound_wq: float = math.nan
    extra: Dict[str, float] = field(default_factory=dict)

    @property
    def empirical_rate(self):
        return self.failures / self.trials

    @property
    def vacuous(self):
        return self.predicted_rate >= 1.0

    @property
    def allowance(self):
        p = self.predicted_rate
        return Settings.MC_STD_ERRORS * math.sqrt(p * (1 - p) / self.trials)

    @property
    def passed(self):
        return self.vacuous or self.empirical_rate <= self.predicted_rate + self.allowance

    def to_dict(self):
        out = asdict(self)
        out.update(
            empirical_rate=self.empirical_rate,
            allowance=self.allowance,
            vacuous=self.vacuous,
            passed=self.passed,
        )
        return out


def _vector(v, name):
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1:
        raise DimensionMismatch(f"{name} must be a vector, got shape {v.shape}")
    return v


def check_l2_theorem(X, w, q, lam, delta):
    """
    ||Xw - Xq||^2 + lam ||w - q||^2 <= (delta^2 / 4) N C2^2, its two
    consequences, and the simplified trace / operator-norm forms.
    """
    A = as_array(X)
    w, q = _vector(w, "w"), _vector(q, "q")
    n = A.shape[1]
    C2 = compute_C2(A, lam)
    out_err = float(np.linalg.norm(A @ (w - q)))
    weight_err = float(np.linalg.norm(w - q))
    half_width = math.sqrt(n) * delta / 2
    trace_term = float(np.sum(A**2)) / n
    op_norm = float(scipy.linalg.svdvals(A)[0])
    return CheckReport(
        [
            InequalityCheck.evaluate(
                "l2_combined", out_err**2 + lam * weight_err**2, delta**2 / 4 * n * C2**2
            ),
            InequalityCheck.evaluate("l2_output", out_err, half_width * C2),
            InequalityCheck.evaluate("l2_weights", weight_err, half_width * C2 / math.sqrt(lam)),
            InequalityCheck.evaluate(
                "l2_output_simplified",
                out_err,
                half_width * min(math.sqrt(trace_term + lam), op_norm),
            ),
            InequalityCheck.evaluate(
                "l2_weights_simplified", weight_err, half_width * math.sqrt(trace_term / lam + 1)
            ),
        ]
    )


def check_l2_proposition(X, w, q, delta):
    """The undampened bound (delta/2) sqrt(N) min{max_j ||P X_j||, sqrt(||X||_F^2 / N)}."""
    A = as_array(X)
    w, q = _vector(w, "w"), _vector(q, "q")
    n = A.shape[1]
    spread = min(
        float(np.max(projection_residual_norms(A))), math.sqrt(float(np.sum(A**2)) / n)
    )
    out_err = float(np.linalg.norm(A @ (w - q)))
    return CheckReport(
        [
            InequalityCheck.evaluate(
                "l2_output_undampened", out_err, delta / 2 * math.sqrt(n) * spread
            ),
            InequalityCheck.evaluate("l2_output_msq", out_err, msq_l2_bound(A, delta)),
        ]
    )


def _stochastic(cfg: QuantConfig, seed):
    return cfg.with_updates(rounding=RoundingMode(STOCHASTIC, seed))


def _run_trials(run_trial, trials, workers, desc):
    """Evaluate run_trial(t) for every trial; order of results is by trial index."""
    indices = range(trials)
    progress = dict(total=trials, desc=desc, disable=not Settings.SHOW_PROGRESS)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            return list(tqdm(executor.map(run_trial, indices), **progress))
    return [run_trial(t) for t in tqdm(indices, **progress)]


def check_linf_theorem_mc(
    X,
    W,
    lam,
    delta,
    p=Settings.DEFAULT_P,
    p_prime=Settings.DEFAULT_P_PRIME,
    trials=1000,
    seed=0,
    cfg: QuantConfig = None,
    eps=None,
):
    """
    Monte Carlo check of max |XW - XQ| <= delta sqrt(2 pi (p log N + p' log N')) C_inf
    and max |W - Q| <= the same over sqrt(lam), under stochastic OPTQ.

    C_inf is evaluated on the columns in the order the quantizer sweeps them.
    With ``eps`` set, p is chosen so the failure probability equals eps.
    """
    A = as_array(X)
    W = np.asarray(W, dtype=np.float64)
    W2 = W[:, None] if W.ndim == 1 else W
    m, n = A.shape
    n_prime = W2.shape[1]
    lam = auto_lambda(A) if lam == "auto" else float(lam)
    cfg = cfg or QuantConfig(lam=lam, alphabet=Alphabet(step=delta))
    cfg = _stochastic(cfg.with_updates(lam=lam), seed)
    if eps is not None:
        p = solve_p_for_target(eps, m + n, n, n_prime, p_prime)

    quantizer = OptqQuantizer(cfg)
    prepared = quantizer.prepare(A)

    radius = linf_radius(delta, n, n_prime, p, p_prime)
    Cinf = compute_Cinf(prepared.X, lam)
    bound_out, bound_w = radius * Cinf, radius * Cinf / math.sqrt(lam)
    predicted = failure_probability(m + n, n, n_prime, p, p_prime)
    clean = A @ W2

    def run_trial(t):
        Q = quantizer.quantize_prepared(prepared, W2, stream=(t,)).q
        out_err = float(np.max(np.abs(clean - A @ Q)))
        weight_err = float(np.max(np.abs(W2 - Q)))
        return out_err > bound_out or weight_err > bound_w, out_err, weight_err

    outcomes = _run_trials(run_trial, trials, cfg.worker_count, "linf trials")
    verdict = MonteCarloVerdict(
        name="linf_theorem",
        trials=trials,
        failures=sum(o[0] for o in outcomes),
        predicted_rate=predicted,
        bound_Xwq=bound_out,
        bound_wq=bound_w,
        extra={
            "max_Xw_minus_Xq_linf": max(o[1] for o in outcomes),
            "max_w_minus_q_linf": max(o[2] for o in outcomes),
            "p": p,
        },
    )
    _log_verdict(verdict)
    return verdict


def check_lowrank_corollary(
    X,
    W,
    delta,
    rank,
    p=Settings.DEFAULT_P,
    p_prime=Settings.DEFAULT_P_PRIME,
    trials=1000,
    seed=0,
    ordering=ORDER_DESC,
):
    """
    Monte Carlo check of the low-rank bound delta sqrt(2 pi (p log N + p' log N'))
    max_{j > N - r} ||X_j|| for least-squares OPTQ with lam = 0.

    Also reports the largest ||Xw - X w^(N-r)|| / ||Xw|| seen, which should vanish.
    """
    A = as_array(X)
    detected = numerical_rank(A)
    if detected != rank:
        raise RankMismatch(f"X has numerical rank {detected}, expected {rank}")
    W = np.asarray(W, dtype=np.float64)
    W2 = W[:, None] if W.ndim == 1 else W
    n = A.shape[1]
    n_prime = W2.shape[1]
    cfg = QuantConfig(
        lam=0.0,
        ordering=ordering,
        formulation=LEAST_SQUARES,
        alphabet=Alphabet(step=delta),
        rounding=RoundingMode(STOCHASTIC, seed),
        record_states=True,
    )
    quantizer = OptqQuantizer(cfg)
    prepared = quantizer.prepare(A)
    Ap = prepared.X
    trailing = float(np.max(np.linalg.norm(Ap[:, n - rank :], axis=0)))
    bound_out = linf_radius(delta, n, n_prime, p, p_prime) * trailing
    predicted = failure_probability(rank, n, n_prime, p, p_prime)
    clean = A @ W2

    def run_trial(t):
        result = quantizer.quantize_prepared(prepared, W2, stream=(t,))
        out_err = float(np.max(np.abs(clean - A @ result.q)))
        midrun = 0.0
        for c, trace in enumerate(result.traces):
            reference = clean[:, c]
            gap = np.linalg.norm(reference - Ap @ trace.states[n - rank])
            midrun = max(midrun, gap / max(np.linalg.norm(reference), 1e-300))
        return out_err > bound_out, out_err, midrun

    outcomes = _run_trials(run_trial, trials, 1, "low-rank trials")
    verdict = MonteCarloVerdict(
        name="lowrank_corollary",
        trials=trials,
        failures=sum(o[0] for o in outcomes),
        predicted_rate=predicted,
        bound_Xwq=bound_out,
        extra={
            "max_Xw_minus_Xq_linf": max(o[1] for o in outcomes),
            "max_midrun_residual": max(o[2] for o in outcomes),
        },
    )
    _log_verdict(verdict)
    return verdict


def check_qronos_linf_mc(
    inp: QronosInput,
    delta,
    p=Settings.DEFAULT_P,
    p_prime=Settings.DEFAULT_P_PRIME,
    trials=1000,
    seed=0,
):
    """
    Monte Carlo check of |Xw - X~q|_i <= |leading_i| + delta sqrt(2 pi (p log N
    + p' log N')) max_j ||P_{X~_{>=j+1}^perp} X~_j|| for stochastic Qronos.
    """
    cfg = _stochastic(inp.cfg, seed)
    W2 = inp.w[:, None] if inp.w.ndim == 1 else inp.w
    m, n = inp.X.shape
    n_prime = W2.shape[1]
    quantizer = QronosQuantizer(cfg)
    prepared = quantizer.prepare(inp.X, inp.X_tilde)
    system = prepared.extra["system"]
    spread = float(np.max(projection_residual_norms(system)))
    radius = linf_radius(delta, n, n_prime, p, p_prime) * spread
    # N'^{p'} in the denominator here, one power more than the OPTQ bound
    predicted = failure_probability(m, n, n_prime, p, p_prime + 1)

    first = quantizer.quantize_prepared(prepared, W2, stream=(0,))
    leads = []
    for c in range(n_prime):
        column = QronosInput(inp.X, inp.X_tilde, W2[:, c], cfg)
        leads.append(np.abs(qronos_error_decomposition(column, first, c)[1][:m]))
    allowed = np.column_stack(leads) + radius
    clean = inp.X.data @ W2

    def run_trial(t):
        Q = quantizer.quantize_prepared(prepared, W2, stream=(t,)).q
        err = np.abs(clean - inp.X_tilde.data @ Q)
        return bool(np.any(err > allowed * (1 + RELATIVE_SLACK))), float(np.max(err))

    outcomes = _run_trials(run_trial, trials, cfg.worker_count, "qronos trials")
    verdict = MonteCarloVerdict(
        name="qronos_linf",
        trials=trials,
        failures=sum(o[0] for o in outcomes),
        predicted_rate=predicted,
        bound_Xwq=float(np.max(allowed)),
        extra={"max_Xw_minus_Xq_linf": max(o[1] for o in outcomes), "radius": radius},
    )
    _log_verdict(verdict)
    return verdict


def check_qronos_l2(inp: QronosInput, result, delta):
    """Deterministic Qronos l2 bound and the leading-term comparison with OPTQ on X~."""
    realized, bound = qronos_l2_bound(inp, result, delta)
    _, leading, _ = qronos_error_decomposition(inp, result)
    m = inp.X.rows
    return CheckReport(
        [
            InequalityCheck.evaluate("qronos_l2", realized, bound),
            InequalityCheck.evaluate(
                "qronos_leading_contraction", float(np.linalg.norm(leading[:m])), drift_norm(inp)
            ),
        ]
    )


def generalization_decomposition(X, w, q, Z):
    """
    Split the mean squared error on unseen rows Z into the calibration error
    (1/m) ||X(w - q)||^2 and the second-moment mismatch
    (w - q)^T (Z^T Z / k - X^T X / m) (w - q).
    """
    A = as_array(X)
    Z = np.asarray(Z, dtype=np.float64)
    if Z.ndim != 2 or Z.shape[0] == 0 or Z.shape[1] != A.shape[1]:
        raise DimensionMismatch(f"Z must be a nonempty k x {A.shape[1]} matrix, got {Z.shape}")
    d = _vector(w, "w") - _vector(q, "q")
    m, k = A.shape[0], Z.shape[0]
    calibration = float(np.sum((A @ d) ** 2)) / m
    mismatch = float(d @ (Z.T @ Z / k - A.T @ A / m) @ d)
    return calibration, mismatch


def _log_verdict(verdict: MonteCarloVerdict):
    if verdict.vacuous:
        logger.warning(f"{verdict.name}: predicted failure probability is 1, the check is vacuous")
    status = "pass" if verdict.passed else "FAIL"
    logger.info(
        f"{verdict.name}: {verdict.failures}/{verdict.trials} violations "
        f"(predicted {verdict.predicted_rate:.4g} + {verdict.allowance:.2g}) -> {status}"
    )
