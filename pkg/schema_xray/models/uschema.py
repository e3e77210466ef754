"""
U-Schema logical model.

A schema is a list of entity types; each entity type aggregates structural variations
made of features. Root entity types stand for containers, non-root ones only exist
embedded in another entity through an aggregate feature.
"""

from typing import Annotated, Literal, Self

from pydantic import Field, model_validator

from .base import XrayModel

MANY = "many"

Upper = int | Literal["many"]


class AttributeFeature(XrayModel):
    variant: Literal["attribute"] = "attribute"
    name: str
    type: str = Field(..., description="Primitive type name, of the elements when `collection` is set")
    collection: bool = False
    defaulted: bool = Field(False, description="The type was not determined and the default applies")
    duplicated_from: str | None = Field(None, description="`<container>.<field>` the attribute is copied from")


class AggregateFeature(XrayModel):
    variant: Literal["aggregate"] = "aggregate"
    name: str
    target: str
    target_variation: int = 1
    lower: int = Field(0, ge=0, le=1)
    upper: Upper = 1


class ReferenceFeature(XrayModel):
    variant: Literal["reference"] = "reference"
    name: str
    target: str
    lower: int = Field(0, ge=0, le=1)
    upper: Upper = 1


class KeyFeature(XrayModel):
    variant: Literal["key"] = "key"
    attribute_name: str

    @property
    def name(self) -> str:
        return self.attribute_name


Feature = Annotated[
    AttributeFeature | AggregateFeature | ReferenceFeature | KeyFeature,
    Field(discriminator="variant"),
]


def feature_identity(feature: Feature) -> str:
    return f"{feature.variant}:{feature.name}"


class StructuralVariation(XrayModel):
    id: int = Field(1, ge=1)
    features: list[Feature] = Field(default_factory=list)

    @model_validator(mode="after")
    def check_features(self) -> Self:
        names = [f.name for f in self.features if not isinstance(f, KeyFeature)]
        if len(names) != len(set(names)):
            raise ValueError(f"Variation {self.id} has duplicated feature names")
        attributes = {f.name for f in self.features if isinstance(f, AttributeFeature)}
        for key in (f for f in self.features if isinstance(f, KeyFeature)):
            if key.attribute_name not in attributes:
                raise ValueError(f"Key {key.attribute_name} names no attribute of variation {self.id}")
        return self

    def feature(self, name: str) -> Feature | None:
        return next((f for f in self.features if f.name == name and not isinstance(f, KeyFeature)), None)


class EntityType(XrayModel):
    name: str
    root: bool = True
    variations: list[StructuralVariation] = Field(..., min_length=1)


class USchemaModel(XrayModel):
    name: str
    entity_types: list[EntityType] = Field(default_factory=list)
    relationship_types: list[dict] = Field(default_factory=list)

    @model_validator(mode="after")
    def check_entities(self) -> Self:
        names = [e.name for e in self.entity_types]
        if len(names) != len(set(names)):
            raise ValueError("Entity type names are not unique")
        for entity in self.entity_types:
            for variation in entity.variations:
                for feature in variation.features:
                    if isinstance(feature, ReferenceFeature | AggregateFeature) and feature.target not in names:
                        raise ValueError(f"{entity.name}.{feature.name} targets unknown entity {feature.target}")
        return self

    def entity(self, name: str) -> EntityType | None:
        return next((e for e in self.entity_types if e.name == name), None)


class CardinalityMismatch(XrayModel):
    feature: str
    expected: str
    actual: str


class TypeMismatch(XrayModel):
    feature: str
    expected: str
    actual: str


class EntityDiff(XrayModel):
    entity: str
    missing_features: list[str] = Field(default_factory=list)
    extra_features: list[str] = Field(default_factory=list)
    type_mismatches: list[TypeMismatch] = Field(default_factory=list)
    cardinality_mismatches: list[CardinalityMismatch] = Field(default_factory=list)
    defaulted_types: list[TypeMismatch] = Field(default_factory=list, description="Expected type found as the default")
    lowered_cardinalities: list[CardinalityMismatch] = Field(
        default_factory=list, description="Only the lower bound differs, 0 found for 1"
    )

    @property
    def significant(self) -> bool:
        return bool(self.missing_features or self.extra_features or self.type_mismatches or self.cardinality_mismatches)

    @property
    def empty(self) -> bool:
        return not (self.significant or self.defaulted_types or self.lowered_cardinalities)


class SchemaDiff(XrayModel):
    missing_entities: list[str] = Field(default_factory=list)
    extra_entities: list[str] = Field(default_factory=list)
    per_entity: list[EntityDiff] = Field(default_factory=list)

    @property
    def empty(self) -> bool:
        return not (self.missing_entities or self.extra_entities or self.per_entity)

    @property
    def significant(self) -> bool:
        """Differences beyond defaulted types and lowered cardinalities."""
        return bool(self.missing_entities or self.extra_entities or any(e.significant for e in self.per_entity))
