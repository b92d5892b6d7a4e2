"""
Adapted lifts of process laws, the und/avg maps and kernel gluing.

lift(mu, t) sends the law of (Z_1, ..., Z_N) to the joint law of the
prefix (Z_1, ..., Z_t) and the conditional law of the tail given that
prefix. Conditional laws live in a finite metric space whose distances are
the p-Wasserstein distances between them.
"""

import itertools
import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, Iterable, List, Literal, Optional, Sequence, Tuple

import numpy as np

from services.shared.utils import ordered_map

from .config import active_tolerances
from .errors import MalformedInputError, PreconditionError
from .measures import (
    DiscreteMeasure,
    PairedMeasure,
    ProcessLaw,
    dirac,
    disintegrate,
    marginal,
)
from .spaces import (
    FiniteMetricSpace,
    MetricSpace,
    Point,
    ProductSpace,
    as_factors,
    factor_spaces,
)
from .transport import wasserstein

logger = logging.getLogger(__name__)

LiftedAtom = Tuple[Point, int, float]


def law_distance_matrix(
    laws: Sequence[DiscreteMeasure], p: float, max_workers: int = 1
) -> np.ndarray:
    """Symmetric matrix of W_p distances, computed on the upper triangle."""
    m = len(laws)
    pairs = list(itertools.combinations(range(m), 2))
    values = ordered_map(
        lambda ij: wasserstein(laws[ij[0]], laws[ij[1]], p).distance,
        pairs,
        max_workers,
    )
    matrix = np.zeros((m, m))
    for (i, j), value in zip(pairs, values):
        matrix[i, j] = matrix[j, i] = value
    return matrix


def law_space(
    laws: Sequence[DiscreteMeasure], p: float, max_workers: int = 1
) -> FiniteMetricSpace:
    return FiniteMetricSpace(
        labels=tuple(f"law{i}" for i in range(len(laws))),
        d=law_distance_matrix(laws, p, max_workers),
    )


def _index_laws(
    entries: Iterable[Tuple[Point, DiscreteMeasure, float]],
) -> Tuple[Tuple[DiscreteMeasure, ...], Tuple[LiftedAtom, ...]]:
    """Deduplicate laws by exact atom equality, first appearance first."""
    laws: List[DiscreteMeasure] = []
    index: Dict[Tuple, int] = {}
    atoms = []
    for x, law, w in entries:
        key = law.atoms
        if key not in index:
            index[key] = len(laws)
            laws.append(law)
        atoms.append((x, index[key], float(w)))
    return tuple(laws), tuple(atoms)


@dataclass(frozen=True, eq=False)
class LiftedMeasure:
    """
    A measure on X x P(Y) with finitely many distinct laws.

    Atoms are (x, law index, weight). The law component carries the W_p
    metric, so the lifted metric between atoms is
    (rho_X(x, x')^p + W_p(law, law')^p)^(1/p).
    """

    x_space: MetricSpace
    y_space: MetricSpace
    laws: Tuple[DiscreteMeasure, ...]
    atoms: Tuple[LiftedAtom, ...]
    p: float = 1.0
    law_distances: np.ndarray = field(default=None, repr=False)  # type: ignore

    def __post_init__(self) -> None:
        object.__setattr__(self, "laws", tuple(self.laws))
        merged: Dict[Tuple[Point, int], float] = {}
        for x, k, w in self.atoms:
            if not 0 <= k < len(self.laws):
                raise MalformedInputError(f"Law index {k} out of range")
            if not self.x_space.contains(x):
                raise MalformedInputError(f"Point {x} is not in the space")
            merged[(x, k)] = merged.get((x, k), 0.0) + float(w)
        object.__setattr__(
            self,
            "atoms",
            tuple(
                (x, k, w)
                for (x, k), w in sorted(merged.items(), key=lambda e: e[0])
                if w > 0.0
            ),
        )

        for k, law in enumerate(self.laws):
            if law.space != self.y_space:
                raise PreconditionError(f"Law {k} lives on another space")
            if abs(law.mass - 1.0) > active_tolerances().mass:
                raise PreconditionError(f"Law {k} is not a probability")
        total = math.fsum(w for _, _, w in self.atoms)
        if abs(total - 1.0) > active_tolerances().mass:
            raise PreconditionError(f"Lifted measure has mass {total!r}")

        if self.law_distances is None:
            distances = law_distance_matrix(self.laws, self.p)
        else:
            distances = np.asarray(self.law_distances, dtype=float)
        distances.setflags(write=False)
        object.__setattr__(self, "law_distances", distances)

    @classmethod
    def from_entries(
        cls,
        x_space: MetricSpace,
        y_space: MetricSpace,
        entries: Iterable[Tuple[Point, DiscreteMeasure, float]],
        p: float = 1.0,
        max_workers: int = 1,
    ) -> "LiftedMeasure":
        """Build from (x, law, weight) triples, sharing equal laws."""
        laws, atoms = _index_laws(entries)
        return cls(
            x_space,
            y_space,
            laws,
            atoms,
            p,
            law_distance_matrix(laws, p, max_workers),
        )

    @cached_property
    def law_space(self) -> FiniteMetricSpace:
        return FiniteMetricSpace(
            labels=tuple(f"law{i}" for i in range(len(self.laws))),
            d=self.law_distances,
        )

    def as_paired(self) -> PairedMeasure:
        """The lift as a measure on X x (law space)."""
        return PairedMeasure.from_atoms(
            self.x_space,
            self.law_space,
            (((x, k), w) for x, k, w in self.atoms),
            p=self.p,
        )

    def law_of(self, x: Point) -> DiscreteMeasure:
        for z, k, _ in self.atoms:
            if z == x:
                return self.laws[k]
        raise PreconditionError(f"Point {x} carries no mass")

    def is_graph(self) -> bool:
        xs = [x for x, _, _ in self.atoms]
        return len(xs) == len(set(xs))


@dataclass(frozen=True)
class Kernel:
    """A measure on Y x Z read through its disintegration y -> lambda_y."""

    measure: PairedMeasure

    @cached_property
    def fibers(self) -> Dict[Point, Tuple[float, Tuple[Tuple[Point, float], ...]]]:
        return disintegrate(self.measure.measure, axis=0)

    def marginal_weight(self, y: Point) -> float:
        return self.fibers[y][0] if y in self.fibers else 0.0

    def conditional(self, y: Point) -> Tuple[Tuple[Point, float], ...]:
        if y not in self.fibers:
            raise PreconditionError(f"Point {y} carries no mass in the kernel")
        return self.fibers[y][1]


def lift(
    mu: ProcessLaw, t: int, p: float = 1.0, max_workers: int = 1
) -> LiftedMeasure:
    """
    The adapted lift at time t.

    Args:
        mu: Process law with horizon N
        t: Prefix length, 1 <= t < N
        p: Exponent of the W_p metric on conditional laws
        max_workers: Thread cap for the law distance matrix

    Raises:
        PreconditionError: If t is out of range
    """
    n = mu.horizon
    if not 1 <= t < n:
        raise PreconditionError(f"Time {t} outside 1..{n - 1}")

    prefix_space = ProductSpace(mu.spaces[:t], p)
    tail_space = ProductSpace(mu.spaces[t:], p)

    grouped: Dict[Point, List[Tuple[Point, float]]] = {}
    for path, w in mu.paths:
        grouped.setdefault(path[:t], []).append((path[t:], w))  # type: ignore[index]

    entries = []
    for prefix, tails in grouped.items():
        mass = math.fsum(w for _, w in tails)
        law = DiscreteMeasure(
            tail_space, tuple((tail, w / mass) for tail, w in tails)
        )
        entries.append((prefix, law, mass))

    lifted = LiftedMeasure.from_entries(
        prefix_space, tail_space, entries, p, max_workers
    )
    logger.debug(
        f"Lift at t={t}: {len(lifted.atoms)} prefixes, "
        f"{len(lifted.laws)} distinct laws"
    )
    return lifted


def und(lifted: LiftedMeasure) -> DiscreteMeasure:
    """Integrate out the law coordinate: (x, law) -> law of (x, y)."""
    target = ProductSpace(
        factor_spaces(lifted.x_space) + factor_spaces(lifted.y_space), lifted.p
    )
    atoms = []
    for x, k, w in lifted.atoms:
        for y, v in lifted.laws[k].atoms:
            point = as_factors(lifted.x_space, x) + as_factors(lifted.y_space, y)
            atoms.append((point, w * v))
    return DiscreteMeasure(target, tuple(atoms))


def law_marginal(lifted: LiftedMeasure) -> Tuple[Tuple[DiscreteMeasure, float], ...]:
    """The P(Y)-marginal: each distinct law with its total weight."""
    totals = [0.0] * len(lifted.laws)
    for _, k, w in lifted.atoms:
        totals[k] += w
    return tuple(
        (law, total) for law, total in zip(lifted.laws, totals) if total > 0.0
    )


def avg(weighted_laws: Iterable[Tuple[DiscreteMeasure, float]]) -> DiscreteMeasure:
    """
    Barycenter of a measure on P(X) given as (law, weight) pairs.

    Raises:
        MalformedInputError: If no laws are given
        PreconditionError: If the laws live on different spaces
    """
    entries = list(weighted_laws)
    if not entries:
        raise MalformedInputError("Cannot average an empty family of laws")
    space = entries[0][0].space
    atoms = []
    for law, weight in entries:
        if law.space != space:
            raise PreconditionError("Averaged laws live on different spaces")
        atoms.extend((x, weight * w) for x, w in law.atoms)
    return DiscreteMeasure(space, tuple(atoms))


def _check_shared_marginal(
    gamma: PairedMeasure, lam: PairedMeasure, tol: float
) -> None:
    if gamma.y_space != lam.x_space:
        raise PreconditionError("The middle factors are different spaces")
    left, right = gamma.y_marginal, lam.x_marginal
    for y in sorted(set(left.points) | set(right.points)):
        if abs(left.weight(y) - right.weight(y)) > tol:
            raise PreconditionError(
                f"Y-marginals differ at {y}: "
                f"{left.weight(y)!r} vs {right.weight(y)!r}"
            )


def glue_full(
    gamma: PairedMeasure,
    lam: PairedMeasure,
    via: Literal["right", "left"] = "right",
    tol: Optional[float] = None,
) -> DiscreteMeasure:
    """
    Conditionally independent product of gamma on X x Y and lam on Y x Z.

    With via="right" lam is disintegrated along Y and its kernel is
    attached to gamma; via="left" disintegrates gamma instead. Both give
    the same measure on X x Y x Z.

    Raises:
        PreconditionError: If the Y-marginals differ, naming the atom
    """
    if tol is None:
        tol = active_tolerances().mass
    _check_shared_marginal(gamma, lam, tol)
    target = ProductSpace((gamma.x_space, gamma.y_space, lam.y_space), gamma.p)

    atoms = []
    if via == "right":
        kernel = Kernel(lam)
        for (x, y), w in gamma.atoms:  # type: ignore[misc]
            for z, c in kernel.conditional(y):
                atoms.append(((x, y, z), w * c))
    elif via == "left":
        fibers = disintegrate(gamma.measure, axis=1)
        for (y, z), w in lam.atoms:  # type: ignore[misc]
            if y not in fibers:
                raise PreconditionError(f"Point {y} carries no mass in gamma")
            _, conditional = fibers[y]
            for x, c in conditional:
                atoms.append(((x, y, z), w * c))
    else:
        raise MalformedInputError(f"Unknown disintegration side {via!r}")

    return DiscreteMeasure(target, tuple(atoms))


def glue_compose(
    gamma: PairedMeasure,
    lam: PairedMeasure,
    tol: Optional[float] = None,
) -> PairedMeasure:
    """gamma o lam: the X x Z marginal of glue_full(gamma, lam)."""
    glued = glue_full(gamma, lam, tol=tol)
    return PairedMeasure(marginal(glued, (0, 2)))


def lifted_wasserstein(
    a: LiftedMeasure, b: LiftedMeasure, max_workers: int = 1
) -> float:
    """
    W_p between two lifted measures in the lifted metric.

    Their laws are pooled into one law space so both live on the same
    product.

    Raises:
        PreconditionError: If the lifts have different base spaces or p
    """
    if a.x_space != b.x_space or a.y_space != b.y_space or a.p != b.p:
        raise PreconditionError("Lifted measures live on different spaces")

    laws, _ = _index_laws(
        [(None, law, 0.0) for law in a.laws + b.laws]  # type: ignore[misc]
    )
    position = {law.atoms: k for k, law in enumerate(laws)}
    pooled = law_space(laws, a.p, max_workers)
    space = ProductSpace((a.x_space, pooled), a.p)

    def on_pool(lifted: LiftedMeasure) -> DiscreteMeasure:
        return DiscreteMeasure(
            space,
            tuple(
                ((x, position[lifted.laws[k].atoms]), w)
                for x, k, w in lifted.atoms
            ),
        )

    return wasserstein(on_pool(a), on_pool(b), a.p).distance


@dataclass(frozen=True)
class InfoDistance:
    """Per-time lifted W_p distances and their aggregate."""

    p: float
    per_t: Tuple[float, ...]
    aggregate: float
    mode: str
    plain: float


def info_pseudometric(
    mu: ProcessLaw,
    nu: ProcessLaw,
    p: float = 1.0,
    aggregate: Literal["max", "sum"] = "max",
    max_workers: int = 1,
) -> InfoDistance:
    """
    Compare two process laws lift by lift.

    Returns W_p(lift(mu, t), lift(nu, t)) for t = 1..N-1, aggregated by max
    (or sum). For N = 1 there are no lifts and the aggregate is the plain
    W_p distance.

    Raises:
        PreconditionError: If the laws have different spaces or horizons
    """
    if not mu.same_shape(nu):
        raise PreconditionError("Process laws have different shapes")
    if aggregate not in ("max", "sum"):
        raise MalformedInputError(f"Unknown aggregate {aggregate!r}")

    plain = wasserstein(mu.as_measure(p), nu.as_measure(p), p).distance
    per_t = tuple(
        ordered_map(
            lambda t: lifted_wasserstein(lift(mu, t, p), lift(nu, t, p)),
            range(1, mu.horizon),
            max_workers,
        )
    )
    if not per_t:
        value = plain
    elif aggregate == "max":
        value = max(per_t)
    else:
        value = math.fsum(per_t)
    return InfoDistance(
        p=p, per_t=per_t, aggregate=value, mode=aggregate, plain=plain
    )


def lifted_moment(lifted: LiftedMeasure) -> float:
    """
    Integral of rho(z0_hat, .)^p over the lift, z0_hat the pair of the
    prefix base point and the dirac law at the tail base point.
    """
    p = lifted.p
    base_law = dirac(lifted.y_space, lifted.y_space.base_point)
    x0 = lifted.x_space.base_point
    law_costs = [wasserstein(base_law, law, p).cost for law in lifted.laws]
    return math.fsum(
        w * (lifted.x_space.distance(x0, x) ** p + law_costs[k])
        for x, k, w in lifted.atoms
    )
