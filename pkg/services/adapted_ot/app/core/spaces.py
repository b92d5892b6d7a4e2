"""
Finite metric spaces and their p-sum products.
"""

import itertools
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import (
    Iterator,
    List,
    Optional,
    Protocol,
    Sequence,
    Tuple,
    Union,
    runtime_checkable,
)

import numpy as np

from .errors import MalformedInputError, PreconditionError

logger = logging.getLogger(__name__)

# A point is an index into a FiniteMetricSpace or a tuple of points of the
# components of a ProductSpace.
Point = Union[int, Tuple["Point", ...]]

TRIANGLE_RELATIVE_TOL = 1e-9


@runtime_checkable
class MetricSpace(Protocol):
    """Anything measures can live on."""

    @property
    def n(self) -> int: ...

    @property
    def base_point(self) -> Point: ...

    def contains(self, point: Point) -> bool: ...

    def distance(self, a: Point, b: Point) -> float: ...

    def distance_matrix(
        self, rows: Sequence[Point], cols: Sequence[Point]
    ) -> np.ndarray: ...

    def points(self) -> Iterator[Point]: ...

    def label(self, point: Point) -> str: ...


class ViolationKind(str, Enum):
    """Metric axioms, in the order they are checked."""

    ASYMMETRY = "asymmetry"
    NONZERO_DIAGONAL = "nonzero_diagonal"
    NEGATIVE_ENTRY = "negative_entry"
    TRIANGLE = "triangle"


@dataclass(frozen=True)
class MetricViolation:
    kind: ViolationKind
    indices: Tuple[int, ...]

    def describe(self) -> str:
        if self.kind == ViolationKind.TRIANGLE:
            i, j, k = self.indices
            return f"triangle at ({i},{j}) via {k}"
        return f"{self.kind.value} at {self.indices}"


@dataclass(frozen=True)
class MetricReport:
    """Result of validate_metric: ok, or the first violated axiom."""

    violation: Optional[MetricViolation] = None

    @property
    def ok(self) -> bool:
        return self.violation is None

    def describe(self) -> str:
        if self.violation is None:
            return "ok"
        return f"violation({self.violation.describe()})"


def _as_matrix(d) -> np.ndarray:
    try:
        matrix = np.array(d, dtype=float)
    except (TypeError, ValueError) as e:
        raise MalformedInputError(f"Distance matrix is not numeric: {e}") from e
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise MalformedInputError(
            f"Distance matrix must be square, got shape {matrix.shape}"
        )
    if not np.all(np.isfinite(matrix)):
        raise MalformedInputError("Distance matrix has NaN or infinite entries")
    return matrix


def validate_metric(d) -> MetricReport:
    """
    Check the metric axioms on a square matrix.

    Args:
        d: Square matrix of finite reals

    Returns:
        MetricReport with the first violated axiom, checked in the order
        asymmetry, nonzero diagonal, negative entry, triangle inequality

    Raises:
        MalformedInputError: If d is not square or has non-finite entries
    """
    matrix = _as_matrix(d)
    n = matrix.shape[0]

    asymmetric = np.argwhere(matrix != matrix.T)
    if asymmetric.size:
        i, j = (int(v) for v in asymmetric[0])
        return MetricReport(MetricViolation(ViolationKind.ASYMMETRY, (i, j)))

    diagonal = np.flatnonzero(np.diag(matrix) != 0.0)
    if diagonal.size:
        i = int(diagonal[0])
        return MetricReport(
            MetricViolation(ViolationKind.NONZERO_DIAGONAL, (i, i))
        )

    negative = np.argwhere(matrix < 0.0)
    if negative.size:
        i, j = (int(v) for v in negative[0])
        return MetricReport(
            MetricViolation(ViolationKind.NEGATIVE_ENTRY, (i, j))
        )

    tol = TRIANGLE_RELATIVE_TOL * (float(matrix.max()) if n else 0.0)
    for i in range(n):
        # excess[j, k] = d[i][j] - d[i][k] - d[k][j]
        excess = matrix[i][:, None] - matrix[i][None, :] - matrix.T
        bad = np.argwhere(excess > tol)
        if bad.size:
            j, k = (int(v) for v in bad[0])
            return MetricReport(
                MetricViolation(ViolationKind.TRIANGLE, (i, j, k))
            )

    return MetricReport()


@dataclass(frozen=True, eq=False)
class FiniteMetricSpace:
    """Labeled finite point set with a validated distance matrix."""

    labels: Tuple[str, ...]
    d: np.ndarray = field(repr=False)
    base_point: int = 0

    def __post_init__(self) -> None:
        matrix = _as_matrix(self.d)
        matrix.setflags(write=False)
        object.__setattr__(self, "d", matrix)
        object.__setattr__(self, "labels", tuple(str(x) for x in self.labels))

        if len(self.labels) != matrix.shape[0]:
            raise MalformedInputError(
                f"Got {len(self.labels)} labels for {matrix.shape[0]} points"
            )
        if matrix.shape[0] == 0:
            raise MalformedInputError("A metric space needs at least one point")
        if not 0 <= self.base_point < matrix.shape[0]:
            raise MalformedInputError(
                f"Base point {self.base_point} out of range"
            )

        report = validate_metric(matrix)
        if not report.ok:
            raise PreconditionError(f"Not a metric: {report.describe()}")

    @classmethod
    def from_points(
        cls,
        coords: Sequence,
        labels: Optional[Sequence[str]] = None,
        base_point: int = 0,
    ) -> "FiniteMetricSpace":
        """Euclidean distances between coordinates (scalars or vectors)."""
        array = np.asarray(coords, dtype=float)
        if array.ndim == 1:
            d = np.abs(array[:, None] - array[None, :])
        elif array.ndim == 2:
            d = np.linalg.norm(array[:, None, :] - array[None, :, :], axis=-1)
        else:
            raise MalformedInputError(
                f"Coordinates must be 1-D or 2-D, got {array.ndim}-D"
            )
        if labels is None:
            labels = [
                format(c, "g") if array.ndim == 1 else str(tuple(c))
                for c in array.tolist()
            ]
        return cls(labels=tuple(labels), d=d, base_point=base_point)

    def __eq__(self, other: object) -> bool:
        if self is other:
            return True
        if not isinstance(other, FiniteMetricSpace):
            return NotImplemented
        return (
            self.labels == other.labels
            and self.base_point == other.base_point
            and np.array_equal(self.d, other.d)
        )

    def __hash__(self) -> int:
        return hash((self.labels, self.base_point, self.d.tobytes()))

    @property
    def n(self) -> int:
        return len(self.labels)

    def contains(self, point: Point) -> bool:
        return (
            isinstance(point, (int, np.integer))
            and not isinstance(point, bool)
            and 0 <= point < self.n
        )

    def distance(self, a: Point, b: Point) -> float:
        return float(self.d[a, b])

    def distance_matrix(
        self, rows: Sequence[Point], cols: Sequence[Point]
    ) -> np.ndarray:
        return self.d[np.ix_(list(rows), list(cols))]

    def points(self) -> Iterator[Point]:
        return iter(range(self.n))

    def label(self, point: Point) -> str:
        return self.labels[point]

    def phi(self, point: Point, p: float) -> float:
        """Tail weight 1 + rho(x0, x)^p."""
        return 1.0 + self.distance(self.base_point, point) ** p


@dataclass(frozen=True)
class ProductSpace:
    """
    Product of metric spaces with the p-sum metric.

    Points are tuples with one entry per component. Point sets are never
    materialized unless points() or to_finite() is called.
    """

    components: Tuple[MetricSpace, ...]
    p: float = 1.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "components", tuple(self.components))
        if not self.components:
            raise MalformedInputError("A product needs at least one space")
        if not self.p >= 1.0 or not math.isfinite(self.p):
            raise MalformedInputError(f"Exponent p must be >= 1, got {self.p}")

    @property
    def arity(self) -> int:
        return len(self.components)

    @property
    def n(self) -> int:
        return math.prod(c.n for c in self.components)

    @property
    def base_point(self) -> Tuple[Point, ...]:
        return tuple(c.base_point for c in self.components)

    def contains(self, point: Point) -> bool:
        return (
            isinstance(point, tuple)
            and len(point) == self.arity
            and all(c.contains(x) for c, x in zip(self.components, point))
        )

    def distance(self, a: Point, b: Point) -> float:
        total = sum(
            c.distance(x, y) ** self.p
            for c, x, y in zip(self.components, a, b)
        )
        return total ** (1.0 / self.p)

    def distance_matrix(
        self, rows: Sequence[Point], cols: Sequence[Point]
    ) -> np.ndarray:
        rows = list(rows)
        cols = list(cols)
        total = np.zeros((len(rows), len(cols)))
        for axis, component in enumerate(self.components):
            part = component.distance_matrix(
                [r[axis] for r in rows], [c[axis] for c in cols]
            )
            total += part**self.p
        return total ** (1.0 / self.p)

    def points(self) -> Iterator[Point]:
        return itertools.product(*(c.points() for c in self.components))

    def label(self, point: Point) -> str:
        parts = (c.label(x) for c, x in zip(self.components, point))
        return "(" + ",".join(parts) + ")"

    def phi(self, point: Point, p: float) -> float:
        """Tail weight 1 + rho(x0, x)^p with x0 the tuple of base points."""
        return 1.0 + self.distance(self.base_point, point) ** p

    def to_finite(self) -> FiniteMetricSpace:
        """Materialize every point; only sensible for small products."""
        pts: List[Point] = list(self.points())
        return FiniteMetricSpace(
            labels=tuple(self.label(x) for x in pts),
            d=self.distance_matrix(pts, pts),
            base_point=pts.index(self.base_point),
        )


def product(spaces: Sequence[MetricSpace], p: float = 1.0) -> ProductSpace:
    """
    Build the p-sum product of the given spaces.

    Raises:
        MalformedInputError: If spaces is empty or p < 1
    """
    if not spaces:
        raise MalformedInputError("Cannot take the product of no spaces")
    space = ProductSpace(tuple(spaces), p)
    logger.debug(f"Built product of {space.arity} spaces with {space.n} points")
    return space


def factor_spaces(space: MetricSpace) -> Tuple[MetricSpace, ...]:
    """Top-level factors of a space; a plain space is its own only factor."""
    if isinstance(space, ProductSpace):
        return space.components
    return (space,)


def diameter(space: MetricSpace, points: Sequence[Point]) -> float:
    """Largest distance between the given points (0 for fewer than two)."""
    pts = list(points)
    if len(pts) < 2:
        return 0.0
    return float(space.distance_matrix(pts, pts).max())


def as_factors(space: MetricSpace, point: Point) -> Tuple[Point, ...]:
    """Coordinates of a point along factor_spaces(space)."""
    if isinstance(space, ProductSpace):
        return tuple(point)  # type: ignore[arg-type]
    return (point,)


def from_factors(space: MetricSpace, coords: Sequence[Point]) -> Point:
    """Inverse of as_factors."""
    if isinstance(space, ProductSpace):
        return tuple(coords)
    (point,) = coords
    return point


def doubled(space: MetricSpace, p: Optional[float] = None) -> ProductSpace:
    """
    The space a self-coupling lives on, flattened to one level.

    For X x Y this is X x Y x X x Y; for a plain space S it is S x S.
    """
    factors = factor_spaces(space)
    if p is None:
        p = space.p if isinstance(space, ProductSpace) else 1.0
    return ProductSpace(factors + factors, p)
