from typing import Self

from pydantic import Field, model_validator

from .base import XrayModel
from .uschema import Upper


class AttributeSpec(XrayModel):
    name: str
    type: str = Field("string", description="Primitive type: string, int, double or bool")


class RelationSpec(XrayModel):
    name: str
    target: str
    lower: int = Field(0, ge=0, le=1)
    upper: Upper = 1


class EntitySpec(XrayModel):
    name: str
    collection: str | None = Field(None, description="Container of a root entity; derived from the name when absent")
    root: bool = True
    attributes: list[AttributeSpec] = Field(default_factory=list)
    aggregates: list[RelationSpec] = Field(default_factory=list)
    references: list[RelationSpec] = Field(default_factory=list)

    @property
    def container(self) -> str:
        return self.collection or f"{self.name[:1].lower()}{self.name[1:]}s"


class SchemaSpec(XrayModel):
    """Designed schema an application is generated from."""

    name: str = "schema"
    database: str = "app"
    entities: list[EntitySpec] = Field(default_factory=list)

    @model_validator(mode="after")
    def check_unique_names(self) -> Self:
        names = [e.name for e in self.entities]
        if duplicated := sorted({n for n in names if names.count(n) > 1}):
            raise ValueError(f"Duplicated entities: {', '.join(duplicated)}")
        return self

    def entity(self, name: str) -> EntitySpec | None:
        return next((e for e in self.entities if e.name == name), None)

    @property
    def roots(self) -> list[EntitySpec]:
        return [e for e in self.entities if e.root]


class CategoryScore(XrayModel):
    expected: int = 0
    found: int = 0
    matched: int = 0
    precision: float = Field(1.0, ge=0.0, le=1.0)
    recall: float = Field(1.0, ge=0.0, le=1.0)


class RoundTripReport(XrayModel):
    entities: CategoryScore = Field(default_factory=CategoryScore)
    attributes: CategoryScore = Field(default_factory=CategoryScore)
    references: CategoryScore = Field(default_factory=CategoryScore)
    aggregates: CategoryScore = Field(default_factory=CategoryScore)
    defaulted_type_count: int = 0
    lowered_cardinality_count: int = 0
    op_count: int = 0
    join_count: int = 0

    @property
    def perfect(self) -> bool:
        scores = (self.entities, self.attributes, self.references, self.aggregates)
        return all(s.precision == 1.0 and s.recall == 1.0 for s in scores)
