from schema_xray.migration import emit_copy, emit_migration
from schema_xray.models.dos import JoinDirection
from schema_xray.models.plans import Duplicate, JoinRemovalPlan, JoinType, PlanLink
from schema_xray.pipeline import Analysis

from .conftest import golden


def plan_of(*links: PlanLink, join_type: JoinType = JoinType.AGGREGATION, query: str | None = "findAlbums") -> JoinRemovalPlan:
    return JoinRemovalPlan(
        id="0",
        number=2,
        join_op="op3",
        query=query,
        join_type=join_type,
        path="album.routes.js",
        line=10,
        source_entity=links[0].destination_entity,
        target_entity=[link.target_entity for link in links],
        links=list(links),
        join_stmt_ref="0:1",
        join_call_ref="0:2",
        join_statement="",
    )


ARTIST_NAME = PlanLink(
    target_entity="Artist",
    target_container="artists",
    destination_entity="Album",
    destination_container="albums",
    reference_container="artists",
    reference_field=["albums"],
    direction=JoinDirection.REVERSE,
    duplicates=[Duplicate(source_field="name", new_name="artist_name")],
)

GENRES = PlanLink(
    target_entity="Genre",
    target_container="genres",
    destination_entity="Track",
    destination_container="tracks",
    reference_container="tracks",
    reference_field=["genres"],
    collection=True,
    embedded="genre",
    duplicates=[
        Duplicate(source_field="name", new_name="name", destination_path=["genre"]),
        Duplicate(source_field="description", new_name="description", destination_path=["genre"]),
    ],
)


def test_running_example_copy(fwm: Analysis):
    plan = fwm.plans()[0]

    assert emit_copy(plan) == golden("fwm_copy.txt")


def test_running_example_migration(fwm: Analysis):
    plan = fwm.plans()[0]

    assert emit_migration(plan) == golden("fwm_migration.js")


def test_reverse_link_copy():
    assert emit_copy(plan_of(ARTIST_NAME)) == "COPY Artists::{name} TO Albums::_id WHERE _id = albums\n"


def test_reverse_link_migration():
    assert emit_migration(plan_of(ARTIST_NAME)) == (
        "// Join removal plan 2: Aggregation in findAlbums\n"
        "db.albums.find().forEach(function (doc) {\n"
        "  const artistDoc = db.artists.findOne({ albums: doc._id });\n"
        "  if (artistDoc) {\n"
        "    doc.artist_name = artistDoc.name;\n"
        "  }\n"
        "  db.albums.replaceOne({ _id: doc._id }, doc);\n"
        "});\n"
    )


def test_embedded_collection_copy():
    assert emit_copy(plan_of(GENRES)) == "COPY Genres::{name,description} TO Tracks::genres WHERE genres = _id\n"


def test_embedded_collection_migration():
    assert emit_migration(plan_of(GENRES, query=None)) == (
        "// Join removal plan 2: Aggregation in album.routes.js\n"
        "db.tracks.find().forEach(function (doc) {\n"
        "  const genresDocs = db.genres.find({ _id: { $in: doc.genres || [] } }).toArray();\n"
        "  doc.genre = genresDocs.map(function (genresDoc) "
        "{ return { name: genresDoc.name, description: genresDoc.description }; });\n"
        "  db.tracks.replaceOne({ _id: doc._id }, doc);\n"
        "});\n"
    )


def test_one_copy_line_per_link():
    text = emit_copy(plan_of(ARTIST_NAME, GENRES))

    assert text.splitlines() == [
        "COPY Artists::{name} TO Albums::_id WHERE _id = albums",
        "COPY Genres::{name,description} TO Tracks::genres WHERE genres = _id",
    ]


def test_links_are_grouped_by_receiving_container():
    text = emit_migration(plan_of(ARTIST_NAME, GENRES))

    assert text.count("db.albums.find().forEach") == 1
    assert text.count("db.tracks.find().forEach") == 1
    assert text.index("db.albums.replaceOne") < text.index("db.tracks.find()")
