"""
Exact integer least squares on tiny instances.

Depth-first enumeration over the triangular factor of X (sphere decoding):
with X = QR the objective ||Xw - Xq||^2 equals ||R(w - q)||^2, and the rows
of R, taken from the bottom up, add nonnegative partial costs, so any branch
whose partial cost already exceeds the best leaf can be pruned.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from quant_lab.alphabet.alphabet import Alphabet
from quant_lab.linops.calibration import as_array
from quant_lab.utils.errors import BudgetExceeded, DimensionMismatch
from quant_lab.utils.logger import logger
from quant_lab.utils.settings import Settings

TIE_TOLERANCE = 1e-12


@dataclass
class IlsSolution:
    q_star: np.ndarray
    objective: float
    nodes_visited: int


def _objective(A, w, q):
    return float(np.sum((A @ (w - q)) ** 2))


def brute_force_ils(X, w, a: Alphabet, budget=Settings.ORACLE_NODE_BUDGET) -> IlsSolution:
    """
    Global minimizer of ||Xw - Xq||^2 over q in a^N; ties go to the
    lexicographically smallest q.
    """
    A = as_array(X)
    w = np.asarray(w, dtype=np.float64)
    m, n = A.shape
    if w.shape != (n,):
        raise DimensionMismatch(f"w has shape {w.shape}, X has {n} columns")
    if not a.is_finite:
        raise BudgetExceeded("the infinite alphabet cannot be enumerated")
    if a.size**n > budget:
        raise BudgetExceeded(f"{a.size}^{n} grid points exceed the budget of {budget}")

    _, R = scipy.linalg.qr(A, mode="economic")
    if R.shape[0] < n:
        R = np.vstack([R, np.zeros((n - R.shape[0], n))])
    y = R @ w
    grid = a.grid()
    scale = 1.0 + float(np.sum(y**2))

    state = {"best": np.inf, "nodes": 0, "leaves": []}
    partial = np.zeros(n)

    def search(level, cost):
        state["nodes"] += 1
        if cost > state["best"] + TIE_TOLERANCE * scale:
            return
        if level < 0:
            if cost < state["best"] - TIE_TOLERANCE * scale:
                state["leaves"] = []
            state["best"] = min(state["best"], cost)
            state["leaves"].append(partial.copy())
            return
        rhs = y[level] - R[level, level + 1 :] @ partial[level + 1 :]
        pivot = R[level, level]
        centre = rhs / pivot if pivot != 0 else 0.0
        # Nearest candidates first, ties by value so the order is fixed.
        for k in np.lexsort((grid, np.abs(grid - centre))):
            partial[level] = grid[k]
            search(level - 1, cost + (rhs - pivot * grid[k]) ** 2)
        partial[level] = 0.0

    search(n - 1, 0.0)

    scored = [(_objective(A, w, q), q) for q in state["leaves"]]
    lowest = min(score for score, _ in scored)
    ties = [q for score, q in scored if score <= lowest + TIE_TOLERANCE * scale]
    q_star = min(ties, key=lambda q: tuple(q))
    logger.debug(f"ils: {state['nodes']} nodes, {len(ties)} tied minimizers")
    return IlsSolution(
        q_star=q_star, objective=_objective(A, w, q_star), nodes_visited=state["nodes"]
    )
