"""
Optimal transport between discrete measures on a shared space.
"""

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Sequence, Tuple

import numpy as np

from .config import active_tolerances
from .errors import PreconditionError, SolverError
from .measures import (
    DiscreteMeasure,
    MeasureKind,
    check_self_coupling_space,
    disintegrate,
    leq,
)
from .simplex import LpProblem, LpResult, LpSense, LpStatus, solve_lp
from .spaces import (
    MetricSpace,
    Point,
    ProductSpace,
    as_factors,
    doubled,
    factor_spaces,
    from_factors,
)

logger = logging.getLogger(__name__)


def _split(z: Point, base: MetricSpace) -> Tuple[Point, Point]:
    """The two base-space points of a flattened pair."""
    k = len(factor_spaces(base))
    coords = tuple(z)  # type: ignore[arg-type]
    return from_factors(base, coords[:k]), from_factors(base, coords[k:])


def _half(
    gamma: DiscreteMeasure, base: MetricSpace, side: int
) -> DiscreteMeasure:
    k = len(factor_spaces(base))
    lo, hi = side * k, (side + 1) * k
    return DiscreteMeasure(
        base,
        tuple(
            (from_factors(base, z[lo:hi]), w)  # type: ignore[index]
            for z, w in gamma.atoms
        ),
        MeasureKind.SUBPROBABILITY,
    )


@dataclass(frozen=True)
class Coupling:
    """
    A measure on doubled(S) read as a transport plan from left to right.

    Full couplings have marginals equal to their targets within the mass
    tolerance; partial couplings only need marginals dominated by them.
    """

    measure: DiscreteMeasure
    left: DiscreteMeasure
    right: DiscreteMeasure
    partial: bool = False

    def __post_init__(self) -> None:
        if self.left.space != self.right.space:
            raise PreconditionError("Coupling targets live on different spaces")
        if self.measure.space != doubled(self.left.space):
            raise PreconditionError("Coupling does not live on the doubled space")

        tol = active_tolerances().mass
        for name, got, target in (
            ("left", self.left_marginal, self.left),
            ("right", self.right_marginal, self.right),
        ):
            if self.partial:
                ok = leq(got, target, tol)
            else:
                ok = all(
                    abs(got.weight(x) - target.weight(x)) <= tol
                    for x in set(got.points) | set(target.points)
                )
            if not ok:
                raise PreconditionError(f"Coupling {name} marginal mismatch")

    @cached_property
    def left_marginal(self) -> DiscreteMeasure:
        return _half(self.measure, self.left.space, 0)

    @cached_property
    def right_marginal(self) -> DiscreteMeasure:
        return _half(self.measure, self.left.space, 1)

    def cost(self, p: float) -> float:
        """Integral of rho(s1, s2)^p, s the coordinates in the base space."""
        base = self.left.space
        return math.fsum(
            w * base.distance(*_split(z, base)) ** p for z, w in self.measure.atoms
        )


@dataclass(frozen=True)
class TransportPlan:
    value: float
    plan: np.ndarray = field(repr=False)
    lp: Optional[LpResult] = field(default=None, repr=False)


def optimal_transport(
    a: np.ndarray, b: np.ndarray, cost: np.ndarray
) -> TransportPlan:
    """
    Solve the balanced transportation problem min <cost, P> over P >= 0
    with row sums a and column sums b.

    Raises:
        SolverError: If the LP does not reach optimality
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    cost = np.asarray(cost, dtype=float)
    k1, k2 = cost.shape

    rows = np.kron(np.eye(k1), np.ones((1, k2)))
    cols = np.kron(np.ones((1, k1)), np.eye(k2))
    problem = LpProblem(
        c=cost.reshape(-1),
        a_eq=np.vstack([rows, cols]),
        b_eq=np.concatenate([a, b]),
        sense=LpSense.MIN,
    )
    result = solve_lp(problem)
    if result.status != LpStatus.OPTIMAL:
        raise SolverError(f"Transport LP ended with {result.status.value}")
    return TransportPlan(
        value=max(float(result.value), 0.0),
        plan=result.x.reshape(k1, k2),
        lp=result,
    )


@dataclass(frozen=True)
class WassersteinResult:
    distance: float
    cost: float
    p: float
    coupling: Coupling


def _coupling_from_plan(
    mu1: DiscreteMeasure, mu2: DiscreteMeasure, plan: np.ndarray
) -> Coupling:
    space = mu1.space
    atoms = []
    for i, j in zip(*np.nonzero(plan > 0.0)):
        atoms.append(
            (
                as_factors(space, mu1.points[i]) + as_factors(space, mu2.points[j]),
                float(plan[i, j]),
            )
        )
    measure = DiscreteMeasure(
        doubled(space), tuple(atoms), MeasureKind.SUBPROBABILITY
    )
    return Coupling(measure, mu1, mu2)


def _require_probability(mu: DiscreteMeasure, name: str) -> None:
    if (
        mu.kind != MeasureKind.PROBABILITY
        or abs(mu.mass - 1.0) > active_tolerances().mass
    ):
        raise PreconditionError(f"{name} is not a probability measure")


def _unit_weights(mu: DiscreteMeasure) -> np.ndarray:
    # inputs within the mass tolerance of 1 are rescaled so the LP balances
    mass = mu.mass
    return mu.weights if mass == 1.0 else mu.weights / mass


def wasserstein(
    mu1: DiscreteMeasure, mu2: DiscreteMeasure, p: float = 1.0
) -> WassersteinResult:
    """
    p-Wasserstein distance and an optimal coupling.

    Args:
        mu1: Probability measure
        mu2: Probability measure on the same space
        p: Exponent >= 1

    Returns:
        WassersteinResult with distance (optimal cost)^(1/p)

    Raises:
        PreconditionError: On a space or exponent mismatch, or on
            non-probability input
    """
    if p < 1.0:
        raise PreconditionError(f"Exponent p must be >= 1, got {p}")
    if mu1.space != mu2.space:
        raise PreconditionError("Measures live on different spaces")
    space = mu1.space
    if isinstance(space, ProductSpace) and space.p != p:
        raise PreconditionError(
            f"Product space combines factors with p={space.p:g}, not p={p:g}"
        )
    _require_probability(mu1, "First measure")
    _require_probability(mu2, "Second measure")

    cost_matrix = mu1.space.distance_matrix(mu1.points, mu2.points) ** p
    a, b = _unit_weights(mu1), _unit_weights(mu2)

    if mu1.atoms == mu2.atoms:
        plan = np.diag(a)
    elif len(mu1) == 1 or len(mu2) == 1:
        plan = np.outer(a, b)
    else:
        plan = optimal_transport(a, b, cost_matrix).plan

    cost = max(math.fsum((plan * cost_matrix).reshape(-1)), 0.0)
    coupling = _coupling_from_plan(mu1, mu2, plan)
    logger.debug(
        f"W_{p:g} between {len(mu1)} and {len(mu2)} atoms: cost {cost!r}"
    )
    return WassersteinResult(
        distance=cost ** (1.0 / p), cost=cost, p=p, coupling=coupling
    )


def displacement(gamma: DiscreteMeasure, i: int, j: int, p: float) -> float:
    """
    (integral of rho(z_i, z_j)^p dgamma)^(1/p) for two factors of gamma's
    space that share a metric.
    """
    space = gamma.space
    if not isinstance(space, ProductSpace):
        raise PreconditionError("Displacement needs a measure on a product")
    if not (0 <= i < space.arity and 0 <= j < space.arity):
        raise PreconditionError(f"Factors ({i}, {j}) out of range")
    left, right = space.components[i], space.components[j]
    if left != right:
        raise PreconditionError(f"Factors {i} and {j} are different spaces")
    coords = [(as_factors(space, z), w) for z, w in gamma.atoms]
    total = math.fsum(w * left.distance(c[i], c[j]) ** p for c, w in coords)
    return total ** (1.0 / p)


def cost_functionals(gamma: DiscreteMeasure, p: float) -> Tuple[float, float]:
    """
    (rho^X(gamma), rho^Y(gamma)) for gamma on (X x Y) x (X x Y).

    Raises:
        PreconditionError: If gamma's space is not grouped as (X x Y)^2
    """
    check_self_coupling_space(gamma.space)
    return displacement(gamma, 0, 2, p), displacement(gamma, 1, 3, p)


def _as_pairs(gamma: DiscreteMeasure, base: MetricSpace) -> DiscreteMeasure:
    pairs = ProductSpace((base, base), gamma.space.p)  # type: ignore[attr-defined]
    return DiscreteMeasure(
        pairs, tuple((_split(z, base), w) for z, w in gamma.atoms), gamma.kind
    )


def compose_couplings(gamma: Coupling, eta: Coupling) -> Coupling:
    """
    Kernel composition of couplings: for gamma in Cpl(a, b) and eta in
    Cpl(b, c), the coupling of (a, c) that transports along gamma, then
    along eta's conditional laws given the middle coordinate.

    Raises:
        PreconditionError: If gamma's right target is not eta's left target
    """
    base = gamma.left.space
    if eta.left.space != base:
        raise PreconditionError("Couplings live on different spaces")
    if not gamma.right.close_to(eta.left, active_tolerances().mass):
        raise PreconditionError("Middle marginals of the couplings differ")

    kernel = disintegrate(_as_pairs(eta.measure, base), axis=0)
    atoms = []
    for (u, v), w in _as_pairs(gamma.measure, base).atoms:  # type: ignore[misc]
        if v not in kernel:
            raise PreconditionError(f"Middle point {v} carries no mass in eta")
        _, conditional = kernel[v]
        for target, c in conditional:
            atoms.append((as_factors(base, u) + as_factors(base, target), w * c))

    measure = DiscreteMeasure(
        doubled(base), tuple(atoms), MeasureKind.SUBPROBABILITY
    )
    return Coupling(measure, gamma.left, eta.right)


def coupling_on(
    left: DiscreteMeasure, triples: Sequence[Tuple[Point, Point, float]]
) -> DiscreteMeasure:
    """Measure on doubled(left.space) from (source, target, weight) triples."""
    space = left.space
    return DiscreteMeasure(
        doubled(space),
        tuple(
            (as_factors(space, s) + as_factors(space, t), w)
            for s, t, w in triples
        ),
        MeasureKind.SUBPROBABILITY,
    )
