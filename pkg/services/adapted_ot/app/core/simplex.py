"""
Dense-tableau two-phase simplex with Bland's anti-cycling rule.

Problems are stated as

    min or max  c @ x
    subject to  A_eq @ x == b_eq
                A_ub @ x <= b_ub
                x >= 0

and solved deterministically: identical inputs always pivot identically.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional

import numpy as np

from .errors import MalformedInputError

logger = logging.getLogger(__name__)

PIVOT_EPS = 1e-10
FEASIBILITY_TOL = 1e-9
DEFAULT_MAX_ITERATIONS = 20_000


class LpSense(str, Enum):
    MIN = "min"
    MAX = "max"


class LpStatus(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    ITERATION_LIMIT = "iteration_limit"


def _as_2d(matrix, n: int, name: str) -> np.ndarray:
    if matrix is None:
        return np.zeros((0, n))
    array = np.atleast_2d(np.asarray(matrix, dtype=float))
    if array.size == 0:
        return np.zeros((0, n))
    if array.shape[1] != n:
        raise MalformedInputError(
            f"{name} has {array.shape[1]} columns, expected {n}"
        )
    return array


def _as_1d(vector, m: int, name: str) -> np.ndarray:
    if vector is None:
        vector = []
    array = np.asarray(vector, dtype=float).reshape(-1)
    if array.shape[0] != m:
        raise MalformedInputError(
            f"{name} has {array.shape[0]} entries, expected {m}"
        )
    return array


@dataclass(frozen=True)
class LpProblem:
    """A linear program over nonnegative variables."""

    c: np.ndarray
    a_eq: Optional[np.ndarray] = None
    b_eq: Optional[np.ndarray] = None
    a_ub: Optional[np.ndarray] = None
    b_ub: Optional[np.ndarray] = None
    sense: LpSense = LpSense.MIN

    def __post_init__(self) -> None:
        c = np.asarray(self.c, dtype=float).reshape(-1)
        n = c.shape[0]
        a_eq = _as_2d(self.a_eq, n, "A_eq")
        b_eq = _as_1d(self.b_eq, a_eq.shape[0], "b_eq")
        a_ub = _as_2d(self.a_ub, n, "A_ub")
        b_ub = _as_1d(self.b_ub, a_ub.shape[0], "b_ub")

        for name, array in (
            ("c", c),
            ("A_eq", a_eq),
            ("b_eq", b_eq),
            ("A_ub", a_ub),
            ("b_ub", b_ub),
        ):
            if not np.all(np.isfinite(array)):
                raise MalformedInputError(f"{name} has non-finite entries")

        object.__setattr__(self, "c", c)
        object.__setattr__(self, "a_eq", a_eq)
        object.__setattr__(self, "b_eq", b_eq)
        object.__setattr__(self, "a_ub", a_ub)
        object.__setattr__(self, "b_ub", b_ub)
        object.__setattr__(self, "sense", LpSense(self.sense))

    @property
    def n_vars(self) -> int:
        return self.c.shape[0]

    @property
    def n_eq(self) -> int:
        return self.a_eq.shape[0]

    @property
    def n_ub(self) -> int:
        return self.a_ub.shape[0]

    @property
    def rhs(self) -> np.ndarray:
        return np.concatenate([self.b_eq, self.b_ub])

    def objective(self, x: np.ndarray) -> float:
        return float(self.c @ x)

    def max_violation(self, x: np.ndarray) -> float:
        """Largest constraint violation of x (0 when feasible)."""
        parts = [np.zeros(1), np.maximum(-x, 0.0)]
        if self.n_eq:
            parts.append(np.abs(self.a_eq @ x - self.b_eq))
        if self.n_ub:
            parts.append(np.maximum(self.a_ub @ x - self.b_ub, 0.0))
        return float(max(np.max(part) for part in parts))


@dataclass(frozen=True)
class LpResult:
    """
    Outcome of solve_lp.

    dual holds one multiplier per constraint (equalities first) for the
    problem as stated, so that at optimality b @ dual equals value.
    """

    status: LpStatus
    x: Optional[np.ndarray] = field(default=None, repr=False)
    value: Optional[float] = None
    dual: Optional[np.ndarray] = field(default=None, repr=False)
    iterations: int = 0
    rhs: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def ok(self) -> bool:
        return self.status == LpStatus.OPTIMAL

    @property
    def dual_value(self) -> Optional[float]:
        if self.dual is None or self.rhs is None:
            return None
        return float(self.rhs @ self.dual)

    @property
    def duality_gap(self) -> Optional[float]:
        if self.value is None or self.dual_value is None:
            return None
        return abs(self.value - self.dual_value)


class _Tableau:
    """Constraint rows B^-1 [A | b] over a fixed basis."""

    def __init__(self, a: np.ndarray, b: np.ndarray, basis: List[int]):
        self.rows = np.hstack([a, b[:, None]])
        self.basis = list(basis)
        self.iterations = 0

    @property
    def n_cols(self) -> int:
        return self.rows.shape[1] - 1

    @property
    def rhs(self) -> np.ndarray:
        return self.rows[:, -1]

    def pivot(self, row: int, col: int) -> None:
        self.rows[row] /= self.rows[row, col]
        for i in range(self.rows.shape[0]):
            if i != row and self.rows[i, col] != 0.0:
                self.rows[i] -= self.rows[i, col] * self.rows[row]
        self.rows[np.abs(self.rows) < 1e-15] = 0.0
        self.basis[row] = col
        self.iterations += 1

    def reduced_costs(self, cost: np.ndarray) -> np.ndarray:
        return cost - cost[self.basis] @ self.rows[:, :-1]

    def run(
        self, cost: np.ndarray, allowed: np.ndarray, max_iterations: int
    ) -> LpStatus:
        """Minimize cost over the current tableau with Bland's rule."""
        while True:
            if self.iterations >= max_iterations:
                return LpStatus.ITERATION_LIMIT

            reduced = self.reduced_costs(cost)
            candidates = np.flatnonzero(allowed & (reduced < -PIVOT_EPS))
            if candidates.size == 0:
                return LpStatus.OPTIMAL
            col = int(candidates[0])

            column = self.rows[:, col]
            eligible = np.flatnonzero(column > PIVOT_EPS)
            if eligible.size == 0:
                return LpStatus.UNBOUNDED

            ratios = self.rhs[eligible] / column[eligible]
            best = ratios.min()
            ties = eligible[ratios <= best + PIVOT_EPS * max(1.0, abs(best))]
            row = int(min(ties, key=lambda i: self.basis[i]))
            self.pivot(row, col)


def solve_lp(
    problem: LpProblem, max_iterations: int = DEFAULT_MAX_ITERATIONS
) -> LpResult:
    """
    Solve a linear program with the two-phase simplex method.

    Phase I starts from an all-artificial basis on the sign-normalized
    system. Artificial columns never re-enter in phase II; a redundant row
    keeps its artificial basic at zero.

    Args:
        problem: The program to solve
        max_iterations: Pivot cap across both phases

    Returns:
        LpResult whose status distinguishes optimal, infeasible, unbounded
        and iteration-limit outcomes
    """
    n = problem.n_vars
    m_eq, m_ub = problem.n_eq, problem.n_ub
    m = m_eq + m_ub

    # Columns: original variables, slacks, artificials.
    a = np.zeros((m, n + m_ub))
    a[:m_eq, :n] = problem.a_eq
    a[m_eq:, :n] = problem.a_ub
    a[m_eq:, n:] = np.eye(m_ub)
    b = problem.rhs.copy()

    signs = np.where(b < 0.0, -1.0, 1.0)
    a *= signs[:, None]
    b *= signs

    n_struct = n + m_ub
    a_full = np.hstack([a, np.eye(m)])
    artificial = np.arange(n_struct, n_struct + m)
    tableau = _Tableau(a_full, b, list(artificial))

    logger.debug(
        f"Solving LP with {n} variables, {m_eq} equalities, {m_ub} inequalities"
    )

    phase_one_cost = np.zeros(n_struct + m)
    phase_one_cost[artificial] = 1.0
    allowed = np.ones(n_struct + m, dtype=bool)
    status = tableau.run(phase_one_cost, allowed, max_iterations)
    if status == LpStatus.ITERATION_LIMIT:
        logger.warning(f"Phase I hit the iteration limit {max_iterations}")
        return LpResult(status, iterations=tableau.iterations)

    infeasibility = float(phase_one_cost[tableau.basis] @ tableau.rhs)
    if infeasibility > FEASIBILITY_TOL * max(1.0, float(np.abs(b).sum())):
        logger.debug(f"LP infeasible, phase I residual {infeasibility!r}")
        return LpResult(LpStatus.INFEASIBLE, iterations=tableau.iterations)

    # Drive zero-level artificials out of the basis where possible.
    for row, col in enumerate(list(tableau.basis)):
        if col < n_struct:
            continue
        entries = np.flatnonzero(
            np.abs(tableau.rows[row, :n_struct]) > PIVOT_EPS
        )
        if entries.size:
            tableau.pivot(row, int(entries[0]))

    cost = np.zeros(n_struct + m)
    cost[:n] = problem.c if problem.sense == LpSense.MIN else -problem.c
    allowed[artificial] = False
    status = tableau.run(cost, allowed, max_iterations)
    if status != LpStatus.OPTIMAL:
        logger.debug(f"Phase II stopped with status {status.value}")
        return LpResult(status, iterations=tableau.iterations)

    solution = np.zeros(n_struct + m)
    solution[tableau.basis] = tableau.rhs
    x = solution[:n]
    x[(x < 0.0) & (x > -FEASIBILITY_TOL)] = 0.0

    # Artificial columns started as the identity, so they hold B^-1.
    dual = cost[tableau.basis] @ tableau.rows[:, artificial] * signs
    if problem.sense == LpSense.MAX:
        dual = -dual

    result = LpResult(
        status=LpStatus.OPTIMAL,
        x=x,
        value=problem.objective(x),
        dual=dual,
        iterations=tableau.iterations,
        rhs=problem.rhs,
    )
    logger.debug(
        f"LP optimal after {result.iterations} pivots, value {result.value!r}"
    )
    return result
