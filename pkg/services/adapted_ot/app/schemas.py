from typing import Dict, List, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, RootModel, model_validator

from .core.measures import MeasureKind

PointSchema = Union[int, List[int]]


class SpaceSchema(BaseModel):
    """Schema for a finite metric space"""

    model_config = ConfigDict(extra="forbid")

    labels: List[str]
    d: List[List[float]]
    base_point: int = 0


class SpaceRefSchema(BaseModel):
    """Schema for a reference into a sidecar spaces file"""

    model_config = ConfigDict(extra="forbid")

    space_ref: str


class ProductSchema(BaseModel):
    """Schema for a product of finite spaces"""

    model_config = ConfigDict(extra="forbid")

    product: List[Union[SpaceRefSchema, SpaceSchema]] = Field(min_length=1)


AnySpaceSchema = Union[SpaceRefSchema, ProductSchema, SpaceSchema]


class SpacesFileSchema(RootModel[Dict[str, SpaceSchema]]):
    """Schema for a sidecar file mapping ids to spaces"""


class AtomSchema(BaseModel):
    point: PointSchema
    w: float


class MeasureSchema(BaseModel):
    """Schema for a discrete measure"""

    model_config = ConfigDict(extra="forbid")

    space: AnySpaceSchema
    atoms: List[AtomSchema]
    kind: MeasureKind = MeasureKind.PROBABILITY


class PathSchema(BaseModel):
    path: List[int] = Field(min_length=1)
    w: float


class ProcessLawSchema(BaseModel):
    """Schema for the law of a finite-horizon process"""

    model_config = ConfigDict(extra="forbid")

    spaces: List[Union[SpaceRefSchema, SpaceSchema]] = Field(min_length=1)
    paths: List[PathSchema]


class FamilySchema(BaseModel):
    """Schema for a family of process laws or of measures"""

    model_config = ConfigDict(extra="forbid")

    laws: List[ProcessLawSchema] = Field(default_factory=list)
    measures: List[MeasureSchema] = Field(default_factory=list)

    @model_validator(mode="after")
    def validate_nonempty(self) -> "FamilySchema":
        if not self.laws and not self.measures:
            raise ValueError("A family needs at least one law or measure")
        return self


class TailSetsSchema(BaseModel):
    """Schema for nested candidate sets of points"""

    sets: List[List[PointSchema]]


class LiftedAtomSchema(BaseModel):
    prefix: List[int]
    law: int
    w: float


class LawSchema(BaseModel):
    atoms: List[AtomSchema]


class LiftedMeasureSchema(BaseModel):
    """Schema for an adapted lift, with the distances between its laws"""

    t: int
    p: float
    laws: List[LawSchema]
    atoms: List[LiftedAtomSchema]
    law_distances: List[List[float]]


class MetricReportSchema(BaseModel):
    ok: bool
    kind: Optional[str] = None
    indices: Optional[List[int]] = None
    message: str
