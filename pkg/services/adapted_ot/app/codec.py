"""
Reading and writing the JSON and CSV file formats.
"""

import csv
import io
import json
import logging
from pathlib import Path
from typing import (
    Any,
    Dict,
    Iterable,
    List,
    Mapping,
    Optional,
    Sequence,
    Type,
    TypeVar,
)

from pydantic import BaseModel, ValidationError

from services.shared.utils import to_serializable

from .core.adapted import LiftedMeasure
from .core.errors import MalformedInputError
from .core.measures import DiscreteMeasure, PairedMeasure, ProcessLaw
from .core.spaces import (
    FiniteMetricSpace,
    MetricSpace,
    Point,
    ProductSpace,
    as_factors,
)
from .schemas import (
    AnySpaceSchema,
    FamilySchema,
    LiftedMeasureSchema,
    MeasureSchema,
    PointSchema,
    ProcessLawSchema,
    ProductSchema,
    SpaceRefSchema,
    SpaceSchema,
    SpacesFileSchema,
    TailSetsSchema,
)

logger = logging.getLogger(__name__)

SchemaT = TypeVar("SchemaT", bound=BaseModel)


def format_number(value: float) -> str:
    """Shortest decimal that round-trips the double, at most 17 digits."""
    return repr(float(value))


def read_json(path: str) -> Any:
    try:
        with open(path, encoding="utf-8") as f:
            return json.load(f)
    except OSError as e:
        raise MalformedInputError(f"Cannot read {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise MalformedInputError(f"{path} is not valid JSON: {e}") from e


def parse(schema: Type[SchemaT], data: Any, source: str = "input") -> SchemaT:
    try:
        return schema.model_validate(data)
    except ValidationError as e:
        raise MalformedInputError(f"Invalid {source}: {e}") from e


def load(schema: Type[SchemaT], path: str) -> SchemaT:
    return parse(schema, read_json(path), Path(path).name)


class SpaceRegistry:
    """Spaces of a sidecar file, resolvable by id."""

    def __init__(self, spaces: Optional[Mapping[str, FiniteMetricSpace]] = None):
        self._spaces: Dict[str, FiniteMetricSpace] = dict(spaces or {})

    @classmethod
    def from_file(cls, path: Optional[str]) -> "SpaceRegistry":
        if path is None:
            return cls()
        schema = load(SpacesFileSchema, path)
        registry = cls({k: to_space(v) for k, v in schema.root.items()})
        logger.debug(f"Loaded {len(registry._spaces)} spaces from {path}")
        return registry

    def resolve(self, ref: str) -> FiniteMetricSpace:
        if ref not in self._spaces:
            raise MalformedInputError(f"Unknown space_ref {ref!r}")
        return self._spaces[ref]

    def ref_of(self, space: MetricSpace) -> Optional[str]:
        for ref, known in self._spaces.items():
            if known == space:
                return ref
        return None


def to_space(schema: SpaceSchema) -> FiniteMetricSpace:
    return FiniteMetricSpace(
        labels=tuple(schema.labels), d=schema.d, base_point=schema.base_point
    )


def _finite(schema: Any, registry: SpaceRegistry) -> FiniteMetricSpace:
    if isinstance(schema, SpaceRefSchema):
        return registry.resolve(schema.space_ref)
    return to_space(schema)


def resolve_space(
    schema: AnySpaceSchema, registry: SpaceRegistry, p: float
) -> MetricSpace:
    if isinstance(schema, ProductSchema):
        return ProductSpace(tuple(_finite(s, registry) for s in schema.product), p)
    return _finite(schema, registry)


def to_point(space: MetricSpace, raw: PointSchema) -> Point:
    if isinstance(space, ProductSpace):
        if not isinstance(raw, list):
            raise MalformedInputError(f"Point {raw} needs one index per factor")
        return tuple(raw)
    if isinstance(raw, list):
        if len(raw) != 1:
            raise MalformedInputError(f"Point {raw} has too many indices")
        return raw[0]
    return raw


def to_measure(
    schema: MeasureSchema, registry: SpaceRegistry, p: float
) -> DiscreteMeasure:
    space = resolve_space(schema.space, registry, p)
    return DiscreteMeasure(
        space,
        tuple((to_point(space, a.point), a.w) for a in schema.atoms),
        schema.kind,
    )


def to_paired(
    schema: MeasureSchema, registry: SpaceRegistry, p: float
) -> PairedMeasure:
    measure = to_measure(schema, registry, p)
    if not isinstance(measure.space, ProductSpace) or measure.space.arity != 2:
        raise MalformedInputError("Expected a measure on a two-factor product")
    return PairedMeasure(measure)


def to_process_law(
    schema: ProcessLawSchema, registry: SpaceRegistry
) -> ProcessLaw:
    spaces = tuple(_finite(s, registry) for s in schema.spaces)
    for path in schema.paths:
        if len(path.path) != len(spaces):
            raise MalformedInputError(
                f"Path {path.path} does not have length {len(spaces)}"
            )
    return ProcessLaw(spaces, tuple((tuple(x.path), x.w) for x in schema.paths))


def load_measure(path: str, registry: SpaceRegistry, p: float) -> DiscreteMeasure:
    return to_measure(load(MeasureSchema, path), registry, p)


def load_paired(path: str, registry: SpaceRegistry, p: float) -> PairedMeasure:
    return to_paired(load(MeasureSchema, path), registry, p)


def load_process_law(path: str, registry: SpaceRegistry) -> ProcessLaw:
    return to_process_law(load(ProcessLawSchema, path), registry)


def load_family(path: str) -> FamilySchema:
    return load(FamilySchema, path)


def load_tail_sets(path: str) -> TailSetsSchema:
    return load(TailSetsSchema, path)


def space_to_wire(space: MetricSpace, registry: SpaceRegistry) -> Dict[str, Any]:
    def one(component: MetricSpace) -> Dict[str, Any]:
        ref = registry.ref_of(component)
        if ref is not None:
            return {"space_ref": ref}
        if not isinstance(component, FiniteMetricSpace):
            raise MalformedInputError("Only finite spaces can be written")
        return {
            "labels": list(component.labels),
            "d": component.d,
            "base_point": component.base_point,
        }

    if isinstance(space, ProductSpace):
        return {"product": [one(c) for c in space.components]}
    return one(space)


def point_to_wire(space: MetricSpace, point: Point) -> PointSchema:
    if isinstance(space, ProductSpace):
        return list(as_factors(space, point))  # type: ignore[arg-type]
    return point  # type: ignore[return-value]


def measure_to_wire(
    mu: DiscreteMeasure, registry: Optional[SpaceRegistry] = None
) -> Dict[str, Any]:
    registry = registry or SpaceRegistry()
    return {
        "space": space_to_wire(mu.space, registry),
        "atoms": [
            {"point": point_to_wire(mu.space, x), "w": w} for x, w in mu.atoms
        ],
        "kind": mu.kind,
    }


def lifted_to_wire(lifted: LiftedMeasure, t: int) -> Dict[str, Any]:
    return {
        "t": t,
        "p": lifted.p,
        "laws": [
            {
                "atoms": [
                    {"point": point_to_wire(law.space, y), "w": w}
                    for y, w in law.atoms
                ]
            }
            for law in lifted.laws
        ],
        "atoms": [
            {"prefix": list(as_factors(lifted.x_space, x)), "law": k, "w": w}
            for x, k, w in lifted.atoms
        ],
        "law_distances": lifted.law_distances,
    }


def dumps_json(obj: Any) -> str:
    """Serialize with repr floats, so every double reads back unchanged."""
    return json.dumps(to_serializable(obj), indent=2, allow_nan=False)


def dumps_csv(header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow(
            [format_number(v) if isinstance(v, float) else v for v in row]
        )
    return buffer.getvalue().rstrip("\n")


def dumps_human(fields: Mapping[str, Any]) -> str:
    lines: List[str] = []
    for key, value in fields.items():
        if isinstance(value, float):
            value = format_number(value)
        lines.append(f"{key}: {value}")
    return "\n".join(lines)


def lifted_schema(data: Any) -> LiftedMeasureSchema:
    """Re-parse emitted lift JSON (round-trip checks)."""
    return parse(LiftedMeasureSchema, data, "lifted measure")
