"""DOS to U-Schema mapping, canonical serialization, structural diff and rendering."""

import json
import logging
import re

import networkx as nx

from .errors import FormatError, MappingError, ModelError
from .models.base import canonical_json, load_document
from .models.dos import DataStructure, DosField, DOSModel, FieldKind, FieldType
from .models.uschema import (
    MANY,
    AggregateFeature,
    AttributeFeature,
    CardinalityMismatch,
    EntityDiff,
    EntityType,
    Feature,
    KeyFeature,
    ReferenceFeature,
    SchemaDiff,
    StructuralVariation,
    TypeMismatch,
    Upper,
    USchemaModel,
    feature_identity,
)

logger = logging.getLogger(__name__)

ENTITY_PATH = re.compile(r"entityTypes\[(\d+)\]")


class USchemaMapper:
    """Maps the containers and structures of a DOS model onto entity types.

    Parameters
    ----------
    dos : DOSModel
        Extracted model.
    include_references : bool
        When False, reference fields are left out of the schema.
    primary_key : str
        Attribute promoted to a key feature.
    """

    def __init__(self, dos: DOSModel, include_references: bool = True, primary_key: str = "_id"):
        self.logger = logging.getLogger(__name__)
        self.dos = dos
        self.include_references = include_references
        self.primary_key = primary_key
        self.entities: dict[str, EntityType] = {}
        self.variations: dict[str, tuple[str, int]] = {}
        self.root_names = {ds.name for c in dos.containers for ds in c.data_structures}

    def container_entity(self, container: str | None) -> str:
        found = self.dos.container(container) if container is not None else None
        if found is None or not found.data_structures:
            raise MappingError(f"Reference to unmapped container {container}")
        return found.data_structures[0].name

    def entity_name(self, structure: DataStructure, root: bool, owner: str | None) -> str:
        """Root names are reserved: a nested structure named like a root entity takes its owner as prefix."""
        if root or structure.name not in self.root_names:
            return structure.name
        name = f"{owner or ''}{structure.name}"
        while name in self.root_names:
            name += "_"
        self.logger.warning(f"Nested structure {structure.id} is named like root entity {structure.name}, mapped as {name}")
        return name

    def structure(self, structure: DataStructure, root: bool, owner: str | None = None) -> tuple[str, int]:
        if structure.id in self.variations:
            return self.variations[structure.id]
        name = self.entity_name(structure, root, owner)
        variation = StructuralVariation(id=1)
        entity = self.entities.get(name)
        if entity is None:
            self.entities[name] = EntityType(name=name, root=root, variations=[variation])
        else:
            variation.id = len(entity.variations) + 1
            entity.variations.append(variation)
        self.variations[structure.id] = (name, variation.id)
        for field in structure.fields:
            variation.features.extend(self.features(field, owner=name))
        return self.variations[structure.id]

    def features(self, field: DosField, owner: str | None = None) -> list[Feature]:
        type: FieldType | None = field.type
        upper: Upper = 1
        if type is not None and type.kind == FieldKind.COLLECTION:
            upper = MANY
            while type is not None and type.kind == FieldKind.COLLECTION:
                type = type.element
        if type is None:
            type = FieldType.attribute(None)
        match type.kind:
            case FieldKind.ATTRIBUTE:
                copied = field.duplicated_from
                attribute = AttributeFeature(
                    name=field.name,
                    type=str(type.primitive),
                    collection=upper == MANY,
                    defaulted=type.defaulted,
                    duplicated_from=f"{copied.container}.{copied.field}" if copied else None,
                )
                if field.name == self.primary_key:
                    return [attribute, KeyFeature(attribute_name=field.name)]
                return [attribute]
            case FieldKind.AGGREGATE:
                target, variation = self.structure(self.dos.structure(type.target or ""), root=False, owner=owner)
                return [AggregateFeature(name=field.name, target=target, target_variation=variation, upper=upper)]
            case FieldKind.REFERENCE:
                if not self.include_references:
                    return []
                return [ReferenceFeature(name=field.name, target=self.container_entity(type.target_container), upper=upper)]
        raise MappingError(f"Field {field.name} has no mapping for {type.kind}")

    def assign(self) -> dict[str, tuple[str, int]]:
        """Entity name and variation id of every structure reachable from a container."""
        for container in self.dos.containers:
            for structure in container.data_structures:
                self.structure(structure, root=True)
        return self.variations

    def map(self, name: str) -> USchemaModel:
        self.assign()
        schema = USchemaModel(name=name, entity_types=list(self.entities.values()))
        validate_uschema(schema)
        self.logger.info(f"Mapped {len(self.dos.containers)} containers onto {len(schema.entity_types)} entity types")
        return schema


def validate_uschema(schema: USchemaModel) -> None:
    """Check that aggregation is acyclic and reaches every non-root entity from a root.

    Raises
    ------
    ModelError
        On the first violated invariant.
    """
    graph = nx.DiGraph()
    graph.add_nodes_from(entity.name for entity in schema.entity_types)
    for entity in schema.entity_types:
        for variation in entity.variations:
            for feature in variation.features:
                if isinstance(feature, AggregateFeature):
                    graph.add_edge(entity.name, feature.target)
    if not nx.is_directed_acyclic_graph(graph):
        raise ModelError(f"Schema {schema.name} aggregates entities cyclically")
    reachable: set[str] = set()
    for entity in schema.entity_types:
        if entity.root:
            reachable |= {entity.name} | nx.descendants(graph, entity.name)
    if orphans := sorted(e.name for e in schema.entity_types if e.name not in reachable):
        raise ModelError(f"Non-root entities not aggregated by any root: {', '.join(orphans)}")


def structure_entities(dos: DOSModel) -> dict[str, str]:
    """Name of the entity type each structure of `dos` maps onto, keyed by structure id."""
    mapper = USchemaMapper(dos, include_references=False)
    return {structure_id: entity for structure_id, (entity, _) in mapper.assign().items()}


def to_uschema(dos: DOSModel, name: str = "schema", include_references: bool = True) -> USchemaModel:
    """Map a DOS model onto a U-Schema model.

    Parameters
    ----------
    dos : DOSModel
        The extracted model.
    name : str
        Name of the schema.
    include_references : bool
        Keep reference fields; turning it off drops them.

    Returns
    -------
    USchemaModel
        One root entity type per container, one non-root entity type per distinct
        aggregate name, one variation per data structure.

    Raises
    ------
    MappingError
        When a reference targets a container the model does not hold.
    """
    return USchemaMapper(dos, include_references).map(name)


def serialize(schema: USchemaModel) -> str:
    return canonical_json(schema)


def deserialize(text: str) -> USchemaModel:
    """Parse canonical JSON into a schema.

    Raises
    ------
    FormatError
        With the JSON path, and the entity name when the problem lies inside an entity.
    """
    try:
        schema = load_document(USchemaModel, text)
    except FormatError as e:
        if (match := ENTITY_PATH.match(e.path)) is None:
            raise
        entity = json.loads(text)["entityTypes"][int(match.group(1))]
        name = entity.get("name", "?") if isinstance(entity, dict) else "?"
        raise FormatError(f"entity {name}: {e.message}", path=e.path) from e
    validate_uschema(schema)
    return schema


def _features(entity: EntityType) -> dict[str, Feature]:
    features: dict[str, Feature] = {}
    for variation in entity.variations:
        for feature in variation.features:
            features.setdefault(feature_identity(feature), feature)
    return features


def _cardinality(feature: AggregateFeature | ReferenceFeature) -> str:
    upper = "*" if feature.upper == MANY else str(feature.upper)
    return f"{feature.lower}..{upper}"


def _type(feature: AttributeFeature) -> str:
    return f"[{feature.type}]" if feature.collection else feature.type


def _diff_entity(expected: EntityType, actual: EntityType) -> EntityDiff:
    result = EntityDiff(entity=expected.name)
    wanted, found = _features(expected), _features(actual)
    result.missing_features = sorted(set(wanted) - set(found))
    result.extra_features = sorted(set(found) - set(wanted))
    for identity in sorted(set(wanted) & set(found)):
        left, right = wanted[identity], found[identity]
        match left, right:
            case AttributeFeature(), AttributeFeature():
                if _type(left) != _type(right):
                    mismatch = TypeMismatch(feature=left.name, expected=_type(left), actual=_type(right))
                    if right.defaulted:
                        result.defaulted_types.append(mismatch)
                    else:
                        result.type_mismatches.append(mismatch)
            case (AggregateFeature(), AggregateFeature()) | (ReferenceFeature(), ReferenceFeature()):
                if left.target != right.target:
                    result.type_mismatches.append(TypeMismatch(feature=left.name, expected=left.target, actual=right.target))
                if (left.lower, left.upper) != (right.lower, right.upper):
                    mismatch = CardinalityMismatch(
                        feature=left.name, expected=_cardinality(left), actual=_cardinality(right)
                    )
                    if left.upper == right.upper and left.lower > right.lower:
                        result.lowered_cardinalities.append(mismatch)
                    else:
                        result.cardinality_mismatches.append(mismatch)
    return result


def diff(expected: USchemaModel, actual: USchemaModel) -> SchemaDiff:
    """Structural comparison of two schemas.

    Types found as the default string where another primitive is expected land in
    `defaultedTypes`; a lower bound of 0 found for 1 lands in `loweredCardinalities`.
    """
    wanted = {e.name: e for e in expected.entity_types}
    found = {e.name: e for e in actual.entity_types}
    result = SchemaDiff(
        missing_entities=sorted(set(wanted) - set(found)),
        extra_entities=sorted(set(found) - set(wanted)),
    )
    for name in sorted(set(wanted) & set(found)):
        entity_diff = _diff_entity(wanted[name], found[name])
        if not entity_diff.empty:
            result.per_entity.append(entity_diff)
    return result


def _feature_line(feature: Feature) -> str:
    match feature:
        case AttributeFeature():
            suffix = " (default)" if feature.defaulted else ""
            return f"attr {feature.name}: {_type(feature)}{suffix}"
        case KeyFeature():
            return f"key {feature.attribute_name}"
        case ReferenceFeature():
            return f"ref {feature.name} -> {feature.target} [{_cardinality(feature)}]"
        case AggregateFeature():
            return f"aggr {feature.name} -> {feature.target} [{_cardinality(feature)}]"


def render_text(schema: USchemaModel) -> str:
    blocks = []
    for entity in schema.entity_types:
        lines = [f"entity {entity.name}{'' if entity.root else ' (non-root)'}"]
        for variation in entity.variations:
            indent = "  "
            if len(entity.variations) > 1:
                lines.append(f"  variation {variation.id}")
                indent = "    "
            lines.extend(indent + _feature_line(feature) for feature in variation.features)
        blocks.append("\n".join(lines) + "\n")
    return "\n".join(blocks)


def _record_text(text: str) -> str:
    for char in "\\{}|<>\"":
        text = text.replace(char, "\\" + char)
    return text


def render_dot(schema: USchemaModel) -> str:
    lines = ["digraph uschema {", "  node [shape=record];"]
    edges = []
    for entity in schema.entity_types:
        keys = {f.attribute_name for v in entity.variations for f in v.features if isinstance(f, KeyFeature)}
        rows = []
        for feature in _features(entity).values():
            if isinstance(feature, AttributeFeature):
                marker = " (key)" if feature.name in keys else ""
                rows.append(_record_text(f"{feature.name}: {_type(feature)}{marker}") + "\\l")
            elif isinstance(feature, AggregateFeature | ReferenceFeature):
                style = "" if isinstance(feature, AggregateFeature) else ", style=dashed"
                label = f"{feature.name} [{_cardinality(feature)}]"
                edges.append(f'  "{entity.name}" -> "{feature.target}" [label="{label}"{style}];')
        title = entity.name if entity.root else f"{entity.name} (non-root)"
        lines.append(f'  "{entity.name}" [label="{{{_record_text(title)}|{"".join(rows)}}}"];')
    lines.extend(edges)
    lines.append("}")
    return "\n".join(lines) + "\n"


def render(schema: USchemaModel, format: str = "text") -> str:
    """Render a schema as indented text or as a Graphviz DOT digraph."""
    match format:
        case "text":
            return render_text(schema)
        case "dot":
            return render_dot(schema)
    raise ValueError(f"Unknown schema format {format}")
