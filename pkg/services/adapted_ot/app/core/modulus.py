"""
Modulus of continuity of a measure on X x Y.

omega_mu(delta) is the largest Y-displacement rho^Y(gamma) over partial
self-couplings gamma of mu whose X-displacement rho^X(gamma) is at most
delta. It vanishes at delta = 0 exactly when mu sits on the graph of a
function X -> Y.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import List, Optional, Sequence, Tuple

import numpy as np

from services.shared.utils import ordered_map

from .config import active_tolerances
from .errors import MalformedInputError, PreconditionError, SolverError
from .measures import (
    DiscreteMeasure,
    MeasureKind,
    PairedMeasure,
    leq,
    marginal,
    mirror,
)
from .simplex import LpProblem, LpResult, LpSense, LpStatus, solve_lp
from .spaces import doubled
from .transport import Coupling, cost_functionals

logger = logging.getLogger(__name__)

CURVE_TOL = 1e-8


@dataclass(frozen=True)
class PartialSelfCoupling:
    """A subprobability on (X x Y)^2 whose X x Y marginals are <= mu."""

    gamma: DiscreteMeasure
    reference: PairedMeasure
    p: float = 1.0

    def __post_init__(self) -> None:
        if self.gamma.space != doubled(self.reference.space):
            raise PreconditionError(
                "Partial self-coupling does not live on (X x Y)^2"
            )
        tol = active_tolerances().mass
        if self.gamma.mass > 1.0 + tol:
            raise PreconditionError(f"Mass {self.gamma.mass!r} exceeds one")
        mu = self.reference.measure
        for axes in ((0, 1), (2, 3)):
            if not leq(marginal(self.gamma, axes), mu, tol):
                raise PreconditionError(
                    f"Marginal on factors {axes} is not dominated by mu"
                )

    @classmethod
    def empty(cls, reference: PairedMeasure, p: float = 1.0):
        space = doubled(reference.space)
        return cls(
            DiscreteMeasure(space, (), MeasureKind.SUBPROBABILITY), reference, p
        )

    @cached_property
    def functionals(self) -> Tuple[float, float]:
        return cost_functionals(self.gamma, self.p)

    @property
    def rho_x(self) -> float:
        return self.functionals[0]

    @property
    def rho_y(self) -> float:
        return self.functionals[1]

    def within(self, delta: float, tol: float = CURVE_TOL) -> bool:
        """Whether gamma belongs to the shadow set of mu at level delta."""
        return self.rho_x <= delta + tol

    def mirrored(self) -> "PartialSelfCoupling":
        return PartialSelfCoupling(mirror(self.gamma), self.reference, self.p)


@dataclass(frozen=True)
class ModulusResult:
    delta: float
    p: float
    value: float
    optimum: float
    witness: PartialSelfCoupling = field(repr=False)
    lp: Optional[LpResult] = field(default=None, repr=False)


def _require_probability(mu: PairedMeasure) -> None:
    if (
        mu.measure.kind != MeasureKind.PROBABILITY
        or not mu.is_probability()
    ):
        raise PreconditionError("The modulus needs a probability measure")


def _candidate_pairs(
    mu: PairedMeasure, p: float
) -> Tuple[List[Tuple[int, int]], np.ndarray, np.ndarray]:
    points = [z for z, _ in mu.atoms]
    xs = [z[0] for z in points]  # type: ignore[index]
    ys = [z[1] for z in points]  # type: ignore[index]
    rho_x = mu.x_space.distance_matrix(xs, xs) ** p
    rho_y = mu.y_space.distance_matrix(ys, ys) ** p

    # Pairs with rho_Y = 0 add nothing to the objective.
    pairs = [tuple(ij) for ij in np.argwhere(rho_y > 0.0).tolist()]
    return pairs, rho_x, rho_y  # type: ignore[return-value]


def modulus(mu: PairedMeasure, delta: float, p: float = 1.0) -> ModulusResult:
    """
    omega_mu(delta) as a linear program over ordered pairs of atoms.

    Maximizes sum g_ij rho_Y(y_i, y_j)^p subject to row and column sums of
    g bounded by the weights of mu and sum g_ij rho_X(x_i, x_j)^p <= delta^p.

    Args:
        mu: Probability measure on X x Y
        delta: Displacement budget >= 0
        p: Exponent >= 1

    Returns:
        ModulusResult with value = optimum^(1/p) and a maximizing coupling

    Raises:
        PreconditionError: If mu is not a probability measure or delta < 0
        SolverError: If the LP does not reach optimality
    """
    if not math.isfinite(delta) or delta < 0.0:
        raise PreconditionError(f"delta must be finite and >= 0, got {delta}")
    if p < 1.0:
        raise PreconditionError(f"Exponent p must be >= 1, got {p}")
    _require_probability(mu)

    pairs, rho_x, rho_y = _candidate_pairs(mu, p)
    if not pairs:
        return ModulusResult(
            delta, p, 0.0, 0.0, PartialSelfCoupling.empty(mu, p)
        )

    k = len(mu.atoms)
    weights = mu.measure.weights
    n = len(pairs)
    a_ub = np.zeros((2 * k + 1, n))
    for col, (i, j) in enumerate(pairs):
        a_ub[i, col] = 1.0
        a_ub[k + j, col] = 1.0
        a_ub[2 * k, col] = rho_x[i, j]
    b_ub = np.concatenate([weights, weights, [delta**p]])
    objective = np.array([rho_y[i, j] for i, j in pairs])

    result = solve_lp(
        LpProblem(c=objective, a_ub=a_ub, b_ub=b_ub, sense=LpSense.MAX)
    )
    if result.status != LpStatus.OPTIMAL:
        raise SolverError(f"Modulus LP ended with {result.status.value}")

    atoms = []
    for (i, j), g in zip(pairs, result.x):
        if g > 0.0:
            (xi, yi), (xj, yj) = mu.atoms[i][0], mu.atoms[j][0]  # type: ignore[misc]
            atoms.append(((xi, yi, xj, yj), float(g)))
    gamma = DiscreteMeasure(
        doubled(mu.space), tuple(atoms), MeasureKind.SUBPROBABILITY
    )

    optimum = max(float(result.value), 0.0)
    logger.debug(
        f"omega({delta!r}) over {n} pairs: optimum {optimum!r}, "
        f"{result.iterations} pivots"
    )
    return ModulusResult(
        delta=delta,
        p=p,
        value=optimum ** (1.0 / p),
        optimum=optimum,
        witness=PartialSelfCoupling(gamma, mu, p),
        lp=result,
    )


def symmetrize(partial: PartialSelfCoupling) -> Coupling:
    """
    Complete a partial self-coupling to a symmetric coupling of (mu, mu).

    Averages gamma' with its mirror, then places the missing marginal mass
    mu - mu' on the diagonal. Both displacement functionals are unchanged.

    Raises:
        PreconditionError: If the marginal defect has a negative atom
    """
    mu = partial.reference.measure
    gamma = partial.gamma
    reflected = mirror(gamma)
    halved = tuple((z, 0.5 * w) for z, w in gamma.atoms) + tuple(
        (z, 0.5 * w) for z, w in reflected.atoms
    )
    averaged = DiscreteMeasure(gamma.space, halved, MeasureKind.SUBPROBABILITY)
    covered = marginal(averaged, (0, 1))

    tol = active_tolerances().mass
    diagonal = []
    for (x, y), w in mu.atoms:  # type: ignore[misc]
        defect = w - covered.weight((x, y))
        if defect < -tol:
            raise PreconditionError(
                f"Negative marginal defect {defect!r} at atom {(x, y)}"
            )
        if defect > 0.0:
            diagonal.append(((x, y, x, y), defect))

    completed = DiscreteMeasure(
        gamma.space, averaged.atoms + tuple(diagonal), MeasureKind.PROBABILITY
    )
    return Coupling(completed, mu, mu)


def is_graph_measure(
    mu: PairedMeasure,
    p: float = 1.0,
    tol: Optional[float] = None,
) -> bool:
    """
    Whether mu is concentrated on the graph of a function X -> Y.

    Decided by omega_mu(0) <= tol and cross-checked against the direct
    test that no two atoms at rho_X-distance zero carry different y.
    """
    if tol is None:
        tol = active_tolerances().graph
    lp_answer = modulus(mu, 0.0, p).value <= tol
    structural = not any(
        mu.x_space.distance(a[0], b[0]) == 0.0  # type: ignore[index]
        and mu.y_space.distance(a[1], b[1]) > 0.0  # type: ignore[index]
        for (a, _), (b, _) in _ordered_atom_pairs(mu)
    )
    if lp_answer != structural:
        logger.warning(
            f"Graph test disagreement: LP says {lp_answer}, "
            f"atom scan says {structural}"
        )
    return lp_answer


def _ordered_atom_pairs(mu: PairedMeasure):
    atoms = mu.atoms
    for i in range(len(atoms)):
        for j in range(i + 1, len(atoms)):
            yield atoms[i], atoms[j]


class CurveViolationKind(str, Enum):
    MONOTONICITY = "monotonicity"
    SCALING = "scaling"


@dataclass(frozen=True)
class CurveViolation:
    kind: CurveViolationKind
    i: int
    j: int
    excess: float


@dataclass(frozen=True)
class ModulusCurve:
    deltas: Tuple[float, ...]
    values: Tuple[float, ...]
    optima: Tuple[float, ...]
    p: float
    reference: PairedMeasure = field(repr=False)

    def violations(self, tol: float = CURVE_TOL) -> List[CurveViolation]:
        """
        Grid pairs i < j breaking omega(d_i) <= omega(d_j) or
        omega(d_i) >= (d_i / d_j) omega(d_j).
        """
        found = []
        for j in range(len(self.deltas)):
            for i in range(j):
                lo, hi = self.values[i], self.values[j]
                if lo > hi + tol:
                    found.append(
                        CurveViolation(
                            CurveViolationKind.MONOTONICITY, i, j, lo - hi
                        )
                    )
                if self.deltas[j] > 0.0:
                    bound = self.deltas[i] / self.deltas[j] * hi
                    if lo < bound - tol:
                        found.append(
                            CurveViolation(
                                CurveViolationKind.SCALING, i, j, bound - lo
                            )
                        )
        return found

    def rows(self) -> List[Tuple[float, float]]:
        return list(zip(self.deltas, self.values))


def validate_grid(grid: Sequence[float]) -> Tuple[float, ...]:
    """
    Raises:
        MalformedInputError: If the grid is empty, negative, non-finite or
            not ascending
    """
    deltas = tuple(float(d) for d in grid)
    if not deltas:
        raise MalformedInputError("The delta grid is empty")
    if any(not math.isfinite(d) or d < 0.0 for d in deltas):
        raise MalformedInputError("Grid values must be finite and >= 0")
    if any(b < a for a, b in zip(deltas, deltas[1:])):
        raise MalformedInputError("The delta grid must be ascending")
    return deltas


def modulus_curve(
    mu: PairedMeasure,
    grid: Sequence[float],
    p: float = 1.0,
    max_workers: int = 1,
) -> ModulusCurve:
    """Evaluate the modulus on every grid point."""
    deltas = validate_grid(grid)
    results = ordered_map(lambda d: modulus(mu, d, p), deltas, max_workers)
    curve = ModulusCurve(
        deltas=deltas,
        values=tuple(r.value for r in results),
        optima=tuple(r.optimum for r in results),
        p=p,
        reference=mu,
    )
    for violation in curve.violations():
        logger.warning(f"Modulus curve violation: {violation}")
    return curve


def fiber_self_coupling(mu: PairedMeasure, p: float = 1.0) -> PartialSelfCoupling:
    """
    The x-preserving coupling: integral of mu_x (x) mu_x against the
    X-marginal, mu_x the conditional law of y given x.

    It has zero X-displacement and full marginals; its Y-displacement is
    zero iff mu is a graph measure.
    """
    by_x = {}
    for (x, y), w in mu.atoms:  # type: ignore[misc]
        by_x.setdefault(x, []).append((y, w))

    atoms = []
    for x, fiber in by_x.items():
        total = math.fsum(w for _, w in fiber)
        for y1, w1 in fiber:
            for y2, w2 in fiber:
                atoms.append(((x, y1, x, y2), w1 * w2 / total))

    gamma = DiscreteMeasure(
        doubled(mu.space), tuple(atoms), MeasureKind.SUBPROBABILITY
    )
    return PartialSelfCoupling(gamma, mu, p)


def scaled_witness(
    partial: PartialSelfCoupling, delta_small: float, delta_large: float
) -> PartialSelfCoupling:
    """
    Rescale a coupling feasible at delta_large by r = (d_small/d_large)^p.

    The result is feasible at delta_small and its rho^Y shrinks by the
    factor d_small / d_large.
    """
    if not 0.0 <= delta_small <= delta_large or delta_large <= 0.0:
        raise PreconditionError(
            f"Need 0 <= {delta_small} <= {delta_large} with a positive bound"
        )
    r = (delta_small / delta_large) ** partial.p
    return PartialSelfCoupling(
        partial.gamma.scaled(r), partial.reference, partial.p
    )
