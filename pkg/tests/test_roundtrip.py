import json

import pytest

from schema_xray.errors import FormatError, SpecError
from schema_xray.models.roundtrip import AttributeSpec, EntitySpec, SchemaSpec
from schema_xray.models.uschema import KeyFeature
from schema_xray.pipeline import Analysis
from schema_xray.roundtrip import compare, load_spec, run_roundtrip, spec_to_uschema
from schema_xray.uschema import diff

from .conftest import FIXTURES


def test_bundled_spec(music_spec: SchemaSpec):
    assert music_spec.name == "music"
    assert [e.name for e in music_spec.roots] == ["Artist", "Album", "Track", "Genre"]


def test_spec_to_uschema(music_spec: SchemaSpec):
    schema = spec_to_uschema(music_spec)

    album = schema.entity("Album").variations[0]
    assert isinstance(album.features[1], KeyFeature)
    assert (album.feature("songs").lower, album.feature("songs").upper) == (1, "many")
    rating = schema.entity("Rating")
    assert not rating.root
    assert [f.name for f in rating.variations[0].features] == ["score", "comment"]


def test_generated_music_app_round_trips(music_spec: SchemaSpec):
    report = run_roundtrip(music_spec, seed=0)

    assert report.perfect
    assert report.op_count == 28
    assert report.join_count > 0
    assert report.references.expected == 6


def test_round_trip_is_independent_of_the_seed(music_spec: SchemaSpec):
    assert run_roundtrip(music_spec, seed=5) == run_roundtrip(music_spec, seed=6)


def test_round_trip_without_references(music_spec: SchemaSpec):
    report = run_roundtrip(music_spec, include_references=False)

    assert report.references.found == 0
    assert report.references.recall == 0.0
    assert report.entities.recall == 1.0
    assert not report.perfect


def test_round_trip_of_an_existing_app(music_spec: SchemaSpec):
    report = run_roundtrip(music_spec, app=FIXTURES / "music")

    assert report.perfect
    assert report.op_count == 28


def test_fixture_schema_only_differs_in_defaults_and_lower_bounds(music: Analysis, music_spec: SchemaSpec):
    designed = spec_to_uschema(music_spec)

    differences = diff(designed, music.schema)

    assert not differences.significant
    report = compare(designed, music.schema)
    assert report.lowered_cardinality_count == 1
    assert report.defaulted_type_count > 0


def test_missing_reference_lowers_recall(music: Analysis, music_spec: SchemaSpec):
    extracted = music.schema.model_copy(deep=True)
    album = extracted.entity("Album").variations[0]
    album.features = [f for f in album.features if f.name != "songs"]

    report = compare(spec_to_uschema(music_spec), extracted)

    assert report.references.matched == 5
    assert report.references.recall == pytest.approx(5 / 6)
    assert report.references.precision == 1.0
    per_entity = {e.entity: e for e in diff(spec_to_uschema(music_spec), extracted).per_entity}
    assert per_entity["Album"].missing_features == ["reference:songs"]


def test_small_spec_round_trips():
    spec = SchemaSpec(name="shop", entities=[EntitySpec(name="Product", attributes=[AttributeSpec(name="price")])])

    report = run_roundtrip(spec)

    assert report.perfect
    assert (report.op_count, report.join_count) == (5, 0)


def test_load_yaml_spec(tmp_path):
    path = tmp_path / "shop.yml"
    path.write_text("name: shop\nentities:\n  - name: Product\n    attributes:\n      - name: price\n        type: double\n")

    spec = load_spec(path)

    assert spec.entity("Product").attributes[0].type == "double"


def test_load_spec_errors(tmp_path):
    with pytest.raises(FormatError, match="Cannot read spec"):
        load_spec(tmp_path / "missing.json")

    broken = tmp_path / "broken.json"
    broken.write_text("{")
    with pytest.raises(FormatError, match="Malformed spec"):
        load_spec(broken)

    invalid = tmp_path / "invalid.json"
    invalid.write_text(json.dumps({"entities": [{"name": "A", "references": [{"name": "b", "target": "B", "lower": 2}]}]}))
    with pytest.raises(FormatError) as info:
        load_spec(invalid)
    assert "entities[0].references[0].lower" in info.value.path

    inconsistent = tmp_path / "inconsistent.json"
    inconsistent.write_text(json.dumps({"entities": [{"name": "A", "references": [{"name": "b", "target": "B"}]}]}))
    with pytest.raises(SpecError):
        load_spec(inconsistent)


def test_renamed_references_are_still_recovered(music_spec: SchemaSpec):
    renamed = music_spec.model_copy(deep=True)
    album, track = renamed.entity("Album"), renamed.entity("Track")
    next(r for r in album.references if r.name == "songs").name = "tracks"
    next(r for r in track.references if r.name == "album_id").name = "disc"

    report = run_roundtrip(renamed)

    assert report.references.expected == 6
    assert report.references.recall == 1.0
    assert report.entities.recall == 1.0
    assert report.op_count == 28
