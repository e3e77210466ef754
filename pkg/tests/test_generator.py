import pytest

from schema_xray.errors import SpecError
from schema_xray.generator import check_spec, generate_app
from schema_xray.models.roundtrip import AttributeSpec, EntitySpec, RelationSpec, SchemaSpec
from schema_xray.parser import inject_sources
from schema_xray.pipeline import analyze_sources


def test_one_routes_file_per_root_entity(music_spec: SchemaSpec):
    files = generate_app(music_spec)

    assert list(files) == ["album.routes.js", "artist.routes.js", "genre.routes.js", "index.js", "track.routes.js"]


def test_generation_is_deterministic(music_spec: SchemaSpec):
    assert generate_app(music_spec, seed=11) == generate_app(music_spec, seed=11)


def test_seed_only_changes_the_index(music_spec: SchemaSpec):
    first, second = generate_app(music_spec, seed=1), generate_app(music_spec, seed=2)

    assert {name: text for name, text in first.items() if name != "index.js"} == {
        name: text for name, text in second.items() if name != "index.js"
    }
    assert "app.listen(" in first["index.js"]


def test_generated_app_parses_in_strict_mode(music_spec: SchemaSpec):
    code = inject_sources(generate_app(music_spec))

    assert code.warnings == []
    assert len(code.files()) == 5


def test_generated_app_operations(music_spec: SchemaSpec):
    dos = analyze_sources(generate_app(music_spec)).dos

    assert len(dos.operations) == 28
    joins = dos.joins()
    assert len(joins) == 7
    assert sum(len(op.joins) for op in joins) == 8
    sequential = [op for op in joins if op.prev_dbo is not None]
    assert not any(op.aggregate for op in sequential)
    assert sorted((link.reference_container, link.reference_field) for op in sequential for link in op.joins) == [
        ("albums", ["songs"]),
        ("artists", ["albums"]),
        ("artists", ["tracks"]),
    ]
    lookups = [op for op in joins if op.aggregate]
    assert len(lookups) == 4
    assert sorted(len(op.joins) for op in lookups) == [1, 1, 1, 2]
    assert {op.kind for op in dos.operations} == {"Read", "Insert", "Update", "Delete"}


def test_index_wires_every_handler(music_spec: SchemaSpec):
    index = generate_app(music_spec)["index.js"]

    assert "const db = client.db('music');" in index
    assert index.count("require('./") == 4
    assert "app.get('/albums/:id', albums.findAlbum);" in index


def test_entity_without_references_gets_crud_only():
    spec = SchemaSpec(name="shop", entities=[EntitySpec(name="Product", attributes=[AttributeSpec(name="price")])])

    files = generate_app(spec)

    assert list(files) == ["index.js", "product.routes.js"]
    assert len(analyze_sources(files).dos.operations) == 5


@pytest.mark.parametrize(
    "entities, message",
    [
        ([EntitySpec(name="A", references=[RelationSpec(name="b", target="B")])], "targets no root entity B"),
        (
            [EntitySpec(name="A", aggregates=[RelationSpec(name="b", target="B")]), EntitySpec(name="B")],
            "targets root entity B",
        ),
        ([EntitySpec(name="A", aggregates=[RelationSpec(name="b", target="B")])], "targets unknown entity B"),
        (
            [EntitySpec(name="A", attributes=[AttributeSpec(name="x")], references=[RelationSpec(name="x", target="A")])],
            "declares x more than once",
        ),
    ],
)
def test_inconsistent_specs_are_rejected(entities: list[EntitySpec], message: str):
    spec = SchemaSpec(entities=entities)

    with pytest.raises(SpecError, match=message):
        check_spec(spec)
    with pytest.raises(SpecError):
        generate_app(spec)
