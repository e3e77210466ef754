"""Round-trip validation: designed schema, generated application, extracted schema, score."""

import json
import logging
from collections.abc import Iterable
from pathlib import Path

import yaml
from pydantic import ValidationError

from .errors import FormatError
from .generator import check_spec, generate_app
from .models.base import error_path
from .models.roundtrip import CategoryScore, RoundTripReport, SchemaSpec
from .models.uschema import (
    AggregateFeature,
    AttributeFeature,
    EntityType,
    KeyFeature,
    ReferenceFeature,
    StructuralVariation,
    USchemaModel,
)
from .parser import DEFAULT_INCLUDE
from .pipeline import analyze_path, analyze_sources
from .uschema import diff

logger = logging.getLogger(__name__)

BUNDLED_SPECS = Path(__file__).parent / "specs"


def load_spec(path: Path | str) -> SchemaSpec:
    """Read a schema spec from a JSON or YAML file.

    A bare name such as `music` resolves to the spec bundled with the package.

    Raises
    ------
    FormatError
        When the file is not a valid spec document.
    SpecError
        When the spec is well formed but inconsistent.
    """
    path = Path(path)
    if not path.exists() and (BUNDLED_SPECS / f"{path.name}.json").exists():
        path = BUNDLED_SPECS / f"{path.name}.json"
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise FormatError(f"Cannot read spec: {e.strerror}", path=str(path)) from e
    try:
        data = yaml.safe_load(text) if path.suffix in (".yml", ".yaml") else json.loads(text)
    except (yaml.YAMLError, json.JSONDecodeError) as e:
        raise FormatError(f"Malformed spec: {e}", path=str(path)) from e
    try:
        spec = SchemaSpec.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]
        raise FormatError(first["msg"], path=f"{path}:{error_path(first['loc'])}") from e
    check_spec(spec)
    return spec


def spec_to_uschema(spec: SchemaSpec) -> USchemaModel:
    """The designed schema as a U-Schema model; root entities get the `_id` key."""
    check_spec(spec)
    entity_types = []
    for entity in spec.entities:
        features = []
        if entity.root:
            features += [AttributeFeature(name="_id", type="string"), KeyFeature(attribute_name="_id")]
        features += [AttributeFeature(name=a.name, type=a.type) for a in entity.attributes]
        features += [
            AggregateFeature(name=r.name, target=r.target, lower=r.lower, upper=r.upper) for r in entity.aggregates
        ]
        features += [
            ReferenceFeature(name=r.name, target=r.target, lower=r.lower, upper=r.upper) for r in entity.references
        ]
        variation = StructuralVariation(id=1, features=features)
        entity_types.append(EntityType(name=entity.name, root=entity.root, variations=[variation]))
    return USchemaModel(name=spec.name, entity_types=entity_types)


def _identities(schema: USchemaModel) -> dict[str, set[tuple[str, ...]]]:
    found: dict[str, set[tuple[str, ...]]] = {
        category: set() for category in ("entities", "attributes", "references", "aggregates")
    }
    for entity in schema.entity_types:
        found["entities"].add((entity.name,))
        for feature in (f for variation in entity.variations for f in variation.features):
            match feature:
                case AttributeFeature():
                    found["attributes"].add((entity.name, feature.name))
                case ReferenceFeature():
                    found["references"].add((entity.name, feature.name, feature.target))
                case AggregateFeature():
                    found["aggregates"].add((entity.name, feature.name, feature.target))
    return found


def _score(expected: set[tuple[str, ...]], found: set[tuple[str, ...]]) -> CategoryScore:
    matched = len(expected & found)
    return CategoryScore(
        expected=len(expected),
        found=len(found),
        matched=matched,
        precision=matched / len(found) if found else 1.0,
        recall=matched / len(expected) if expected else 1.0,
    )


def compare(designed: USchemaModel, extracted: USchemaModel) -> RoundTripReport:
    """Score an extracted schema against the designed one.

    Entities match by name, attributes by entity and name, references and aggregates by
    entity, name and target. A type found as the default is counted as defaulted and a
    lower bound of 0 found for 1 as lowered; neither counts against the scores.
    """
    wanted, found = _identities(designed), _identities(extracted)
    report = RoundTripReport(**{category: _score(wanted[category], found[category]) for category in wanted})
    differences = diff(designed, extracted)
    report.defaulted_type_count = sum(len(e.defaulted_types) for e in differences.per_entity)
    report.lowered_cardinality_count = sum(len(e.lowered_cardinalities) for e in differences.per_entity)
    return report


def run_roundtrip(
    spec: SchemaSpec,
    seed: int = 0,
    include_references: bool = True,
    app: Path | str | None = None,
    include: Iterable[str] | None = None,
) -> RoundTripReport:
    """Generate the application of `spec` (or read it from `app`), extract it and compare.

    Raises
    ------
    SpecError
        When the spec is inconsistent.
    """
    if app is None:
        analysis = analyze_sources(generate_app(spec, seed), name=spec.name, include_references=include_references)
    else:
        analysis = analyze_path(app, include=include or DEFAULT_INCLUDE, include_references=include_references)
    report = compare(spec_to_uschema(spec), analysis.schema)
    report.op_count = len(analysis.dos.operations)
    report.join_count = len(analysis.dos.joins())
    logger.info(
        f"Round trip of {spec.name}: {report.op_count} operations, {report.join_count} joins, "
        f"{'perfect' if report.perfect else 'imperfect'} recovery"
    )
    return report
