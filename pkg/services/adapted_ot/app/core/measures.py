"""
Discrete (sub)probability measures on finite metric spaces.

Measures are immutable and always held in canonical form: duplicate points
merged by summing, zero weights dropped, atoms sorted by point.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from typing import (
    Callable,
    Dict,
    Iterable,
    Mapping,
    Optional,
    Sequence,
    Tuple,
    Union,
)

import numpy as np

from .config import active_tolerances
from .errors import MalformedInputError, PreconditionError
from .spaces import (
    MetricSpace,
    Point,
    ProductSpace,
    as_factors,
    doubled,
    factor_spaces,
)

logger = logging.getLogger(__name__)

Atom = Tuple[Point, float]
PointMap = Union[Callable[[Point], Point], Mapping[Point, Point]]


class MeasureKind(str, Enum):
    """Whether a measure must have mass one or at most one."""

    PROBABILITY = "probability"
    SUBPROBABILITY = "subprobability"


def canonical_atoms(atoms: Iterable[Tuple[Point, float]]) -> Tuple[Atom, ...]:
    """Merge duplicate points, drop zero weights and sort by point."""
    merged: Dict[Point, float] = {}
    for point, weight in atoms:
        w = float(weight)
        if not math.isfinite(w) or w < 0.0:
            raise MalformedInputError(f"Invalid weight {weight} at {point}")
        merged[point] = merged.get(point, 0.0) + w
    return tuple(
        sorted(
            ((point, w) for point, w in merged.items() if w > 0.0),
            key=lambda atom: atom[0],
        )
    )


@dataclass(frozen=True)
class DiscreteMeasure:
    space: MetricSpace
    atoms: Tuple[Atom, ...]
    kind: MeasureKind = MeasureKind.PROBABILITY

    def __post_init__(self) -> None:
        object.__setattr__(self, "atoms", canonical_atoms(self.atoms))
        object.__setattr__(self, "kind", MeasureKind(self.kind))

        for point, _ in self.atoms:
            if not self.space.contains(point):
                raise MalformedInputError(f"Point {point} is not in the space")

        total = self.mass
        tol = active_tolerances().mass
        if self.kind == MeasureKind.PROBABILITY and abs(total - 1.0) > tol:
            raise PreconditionError(
                f"Probability measure has total mass {total!r}"
            )
        if self.kind == MeasureKind.SUBPROBABILITY and total > 1.0 + tol:
            raise PreconditionError(
                f"Subprobability measure has total mass {total!r}"
            )

    @property
    def points(self) -> Tuple[Point, ...]:
        return tuple(point for point, _ in self.atoms)

    @property
    def weights(self) -> np.ndarray:
        return np.array([w for _, w in self.atoms], dtype=float)

    @property
    def mass(self) -> float:
        return math.fsum(w for _, w in self.atoms)

    @cached_property
    def _index(self) -> Dict[Point, float]:
        return dict(self.atoms)

    def weight(self, point: Point) -> float:
        return self._index.get(point, 0.0)

    def __len__(self) -> int:
        return len(self.atoms)

    def scaled(self, r: float) -> "DiscreteMeasure":
        """r times this measure, as a subprobability (0 <= r <= 1)."""
        if not 0.0 <= r <= 1.0:
            raise PreconditionError(f"Scaling factor {r} outside [0, 1]")
        return DiscreteMeasure(
            self.space,
            tuple((x, w * r) for x, w in self.atoms),
            MeasureKind.SUBPROBABILITY,
        )

    def as_kind(self, kind: MeasureKind) -> "DiscreteMeasure":
        return DiscreteMeasure(self.space, self.atoms, kind)

    def close_to(
        self, other: "DiscreteMeasure", tol: Optional[float] = None
    ) -> bool:
        """Same space, same support and weights equal to within tol."""
        if tol is None:
            tol = active_tolerances().atom
        if self.space != other.space or self.points != other.points:
            return False
        return all(
            abs(w - v) <= tol
            for (_, w), (_, v) in zip(self.atoms, other.atoms)
        )


def dirac(space: MetricSpace, point: Point) -> DiscreteMeasure:
    return DiscreteMeasure(space, ((point, 1.0),))


def _require_same_space(mu: DiscreteMeasure, nu: DiscreteMeasure) -> None:
    if mu.space != nu.space:
        raise PreconditionError("Measures live on different spaces")


def marginal(mu: DiscreteMeasure, axes: Sequence[int]) -> DiscreteMeasure:
    """
    Push mu forward under the projection onto the given factors.

    A single axis yields a measure on that factor itself; several axes yield
    a measure on the product of the selected factors, in the given order.

    Raises:
        MalformedInputError: If axes is empty, repeats a factor or is out
            of range
    """
    if not isinstance(mu.space, ProductSpace):
        raise MalformedInputError("Marginals need a measure on a product")
    axes = tuple(axes)
    arity = mu.space.arity
    if not axes or len(set(axes)) != len(axes):
        raise MalformedInputError(f"Invalid axes {axes}")
    if any(not 0 <= a < arity for a in axes):
        raise MalformedInputError(f"Axes {axes} out of range for {arity}")

    if len(axes) == 1:
        (axis,) = axes
        target: MetricSpace = mu.space.components[axis]
        atoms = ((x[axis], w) for x, w in mu.atoms)
    else:
        target = ProductSpace(
            tuple(mu.space.components[a] for a in axes), mu.space.p
        )
        atoms = (
            (tuple(x[a] for a in axes), w)
            for x, w in mu.atoms  # type: ignore[index]
        )
    return DiscreteMeasure(target, tuple(atoms), mu.kind)


def leq(
    mu: DiscreteMeasure,
    nu: DiscreteMeasure,
    tol: Optional[float] = None,
) -> bool:
    """Atomwise mu <= nu, which on finite spaces is setwise domination."""
    if tol is None:
        tol = active_tolerances().atom
    _require_same_space(mu, nu)
    return all(w <= nu.weight(x) + tol for x, w in mu.atoms)


def pushforward(
    mu: DiscreteMeasure,
    f: PointMap,
    target: Optional[MetricSpace] = None,
) -> DiscreteMeasure:
    """
    Image of mu under f, with coinciding images merged.

    Args:
        mu: Measure to push forward
        f: Callable or mapping defined on the support of mu
        target: Space of the image (defaults to mu's space)

    Raises:
        PreconditionError: If f is undefined on an atom or leaves target
    """
    target = mu.space if target is None else target
    images = []
    for x, w in mu.atoms:
        try:
            y = f[x] if isinstance(f, Mapping) else f(x)
        except (KeyError, IndexError, TypeError, ValueError) as e:
            raise PreconditionError(f"Map undefined on atom {x}: {e}") from e
        if not target.contains(y):
            raise PreconditionError(f"Map sends {x} to {y}, outside target")
        images.append((y, w))
    return DiscreteMeasure(target, tuple(images), mu.kind)


def check_self_coupling_space(space: MetricSpace) -> ProductSpace:
    if not isinstance(space, ProductSpace) or space.arity != 4:
        raise PreconditionError(
            "Expected a measure on the four-factor space (X x Y)^2"
        )
    x1, y1, x2, y2 = space.components
    if x1 != x2 or y1 != y2:
        raise PreconditionError("Factors are not grouped as (X x Y)^2")
    return space


def mirror(gamma: DiscreteMeasure) -> DiscreteMeasure:
    """Pushforward under (x1, y1, x2, y2) -> (x2, y2, x1, y1)."""
    check_self_coupling_space(gamma.space)
    return pushforward(gamma, lambda z: (z[2], z[3], z[0], z[1]))


def diagonal_coupling(mu: DiscreteMeasure) -> DiscreteMeasure:
    """Identity coupling of mu, flattened onto doubled(mu.space)."""
    target = doubled(mu.space)
    return DiscreteMeasure(
        target,
        tuple(
            (as_factors(mu.space, x) + as_factors(mu.space, x), w)
            for x, w in mu.atoms
        ),
        mu.kind,
    )


def convex_combination(
    mu: DiscreteMeasure, nu: DiscreteMeasure, s: float
) -> DiscreteMeasure:
    """(1 - s) mu + s nu."""
    _require_same_space(mu, nu)
    if not 0.0 <= s <= 1.0:
        raise PreconditionError(f"Mixing weight {s} outside [0, 1]")
    atoms = [(x, (1.0 - s) * w) for x, w in mu.atoms]
    atoms += [(x, s * w) for x, w in nu.atoms]
    kind = (
        MeasureKind.PROBABILITY
        if mu.kind == nu.kind == MeasureKind.PROBABILITY
        else MeasureKind.SUBPROBABILITY
    )
    return DiscreteMeasure(mu.space, tuple(atoms), kind)


def product_measure(
    mu: DiscreteMeasure, nu: DiscreteMeasure, p: Optional[float] = None
) -> DiscreteMeasure:
    """Independent product, flattened over the factors of both spaces."""
    if p is None:
        p = mu.space.p if isinstance(mu.space, ProductSpace) else 1.0
    target = ProductSpace(
        factor_spaces(mu.space) + factor_spaces(nu.space), p
    )
    atoms = tuple(
        (as_factors(mu.space, x) + as_factors(nu.space, y), w * v)
        for x, w in mu.atoms
        for y, v in nu.atoms
    )
    kind = (
        MeasureKind.PROBABILITY
        if mu.kind == nu.kind == MeasureKind.PROBABILITY
        else MeasureKind.SUBPROBABILITY
    )
    return DiscreteMeasure(target, atoms, kind)


def moment(mu: DiscreteMeasure, p: float) -> float:
    """Integral of rho(x0, x)^p, x0 the space's base point."""
    base = mu.space.base_point
    return math.fsum(w * mu.space.distance(base, x) ** p for x, w in mu.atoms)


def phi_integral(
    mu: DiscreteMeasure, p: float, outside: Optional[Iterable[Point]] = None
) -> float:
    """
    Integral of phi(x) = 1 + rho(x0, x)^p, optionally restricted to the
    complement of the point set `outside`.
    """
    excluded = frozenset(outside) if outside is not None else frozenset()
    base = mu.space.base_point
    return math.fsum(
        w * (1.0 + mu.space.distance(base, x) ** p)
        for x, w in mu.atoms
        if x not in excluded
    )


@dataclass(frozen=True)
class PairedMeasure:
    """A measure on a two-factor product X x Y with cached marginals."""

    measure: DiscreteMeasure

    def __post_init__(self) -> None:
        space = self.measure.space
        if not isinstance(space, ProductSpace) or space.arity != 2:
            raise PreconditionError("A paired measure lives on X x Y")

    @classmethod
    def from_atoms(
        cls,
        x_space: MetricSpace,
        y_space: MetricSpace,
        atoms: Iterable[Tuple[Point, float]],
        p: float = 1.0,
        kind: MeasureKind = MeasureKind.PROBABILITY,
    ) -> "PairedMeasure":
        space = ProductSpace((x_space, y_space), p)
        return cls(DiscreteMeasure(space, tuple(atoms), kind))

    @property
    def space(self) -> ProductSpace:
        return self.measure.space  # type: ignore[return-value]

    @property
    def x_space(self) -> MetricSpace:
        return self.space.components[0]

    @property
    def y_space(self) -> MetricSpace:
        return self.space.components[1]

    @property
    def atoms(self) -> Tuple[Atom, ...]:
        return self.measure.atoms

    @property
    def p(self) -> float:
        return self.space.p

    @cached_property
    def x_marginal(self) -> DiscreteMeasure:
        return marginal(self.measure, (0,))

    @cached_property
    def y_marginal(self) -> DiscreteMeasure:
        return marginal(self.measure, (1,))

    def is_probability(self, tol: Optional[float] = None) -> bool:
        if tol is None:
            tol = active_tolerances().mass
        return abs(self.measure.mass - 1.0) <= tol


@dataclass(frozen=True)
class ProcessLaw:
    """Finitely many weighted paths through Z_1 x ... x Z_N."""

    spaces: Tuple[MetricSpace, ...]
    paths: Tuple[Atom, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "spaces", tuple(self.spaces))
        if not self.spaces:
            raise MalformedInputError("A process law needs horizon N >= 1")
        paths = canonical_atoms(
            (tuple(path), w) for path, w in self.paths  # type: ignore
        )
        object.__setattr__(self, "paths", paths)
        # Validates membership and total mass.
        self.as_measure()

    @property
    def horizon(self) -> int:
        return len(self.spaces)

    def path_space(self, p: float = 1.0) -> ProductSpace:
        return ProductSpace(self.spaces, p)

    def as_measure(self, p: float = 1.0) -> DiscreteMeasure:
        return DiscreteMeasure(self.path_space(p), self.paths)

    def coordinates(
        self, start: int, stop: int, p: float = 1.0
    ) -> DiscreteMeasure:
        """Law of (Z_{start+1}, ..., Z_stop) on the product of those spaces."""
        if not 0 <= start < stop <= self.horizon:
            raise MalformedInputError(
                f"Invalid coordinate range [{start}, {stop})"
            )
        space = ProductSpace(self.spaces[start:stop], p)
        return DiscreteMeasure(
            space,
            tuple((path[start:stop], w) for path, w in self.paths),  # type: ignore
        )

    def same_shape(self, other: "ProcessLaw") -> bool:
        return self.spaces == other.spaces


def scale(mu: DiscreteMeasure, r: float) -> DiscreteMeasure:
    return mu.scaled(r)


def disintegrate(
    mu: DiscreteMeasure, axis: int = 0
) -> Dict[Point, Tuple[float, Tuple[Atom, ...]]]:
    """
    Disintegrate a measure on a two-factor product along one factor.

    Returns:
        For each point u of the chosen factor carrying mass, the pair
        (marginal weight of u, conditional law of the other factor given u)
    """
    space = mu.space
    if not isinstance(space, ProductSpace) or space.arity != 2:
        raise PreconditionError("Disintegration needs a two-factor product")
    if axis not in (0, 1):
        raise MalformedInputError(f"Invalid axis {axis}")

    grouped: Dict[Point, list] = {}
    for (a, b), w in mu.atoms:  # type: ignore[misc]
        key, other = (a, b) if axis == 0 else (b, a)
        grouped.setdefault(key, []).append((other, w))

    fibers = {}
    for key, atoms in grouped.items():
        total = math.fsum(w for _, w in atoms)
        fibers[key] = (
            total,
            canonical_atoms((other, w / total) for other, w in atoms),
        )
    return fibers
