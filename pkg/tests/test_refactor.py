import pytest

from schema_xray.errors import PlanStaleError, RewriteError
from schema_xray.models.plans import JoinType
from schema_xray.models.uschema import AttributeFeature
from schema_xray.pipeline import Analysis, analyze_sources
from schema_xray.refactor import apply_plan, build_plans, detect_duplications, plan_rows, render_plan_table

from .conftest import golden

JOIN = (
    "const db = client.db('app');\n"
    "db.collection('users').findOne({ name: 'x' }, (err, user) => {\n"
    "  db.collection('movies').findOne({ _id: user.movie_id }, (err, movie) => {\n"
    "    console.log(user.name + movie.title);\n"
    "{extra}"
    "  });\n"
    "});\n"
)


def analyze_join(extra: str = "") -> Analysis:
    return analyze_sources({"app.js": JOIN.replace("{extra}", extra)})


def test_running_example_plan(fwm: Analysis):
    plans = fwm.plans()

    assert len(plans) == 1
    plan = plans[0]
    assert (plan.number, plan.query, plan.path, plan.join_type) == (1, None, "fwm.js", JoinType.SEQUENTIAL)
    assert (plan.join_op, plan.prev_op) == ("op1", "op0")
    assert plan.source_entity == "User"
    assert plan.target_entity == ["Movie"]
    assert [(d.source_field, d.new_name, d.type) for d in plan.duplicates] == [("title", "movie_title", "string")]
    assert plan.links[0].destination_entity == "WatchedMovie"
    assert plan.links[0].destination_path == ["watchedMovies", "[]"]
    assert not plan.partial
    assert "movie.title" in plan.original_snippet
    assert "user.watchedMovies[0].movie_title" in plan.rewritten_snippet


def test_detection_adds_the_copy_to_the_structure(fwm: Analysis):
    marked = detect_duplications(fwm.cfg, fwm.dos, fwm.code, fwm.profile)

    users = marked.container("users").data_structures[0]
    watched = marked.structure(users.field("watchedMovies").type.element.target)
    copy = watched.field("movie_title")
    assert copy is not None
    assert (copy.duplicated_from.container, copy.duplicated_from.field) == ("movies", "title")
    assert fwm.dos.structure(watched.id).field("movie_title") is None


def test_plan_ids_are_content_hashes(fwm: Analysis):
    again = build_plans(detect_duplications(fwm.cfg, fwm.dos, fwm.code, fwm.profile), fwm.code, fwm.profile)

    assert [p.id for p in again] == [p.id for p in fwm.plans()]
    assert len(again[0].id) == 12


def test_apply_running_example_plan(fwm: Analysis):
    outcome = apply_plan(fwm.plans()[0], fwm.code, fwm.schema, fwm.profile)

    assert outcome.sources == {"fwm.js": golden("fwm_rewritten.js")}
    assert outcome.copy_statement == golden("fwm_copy.txt")
    assert outcome.migration_script == golden("fwm_migration.js")
    change = outcome.report[0]
    assert (change.path, change.removed_statements, change.rewritten_accesses) == ("fwm.js", 1, 1)

    copy = outcome.updated_schema.entity("WatchedMovie").variations[0].feature("movie_title")
    assert isinstance(copy, AttributeFeature)
    assert copy.duplicated_from == "movies.title"
    assert fwm.schema.entity("WatchedMovie").variations[0].feature("movie_title") is None


def test_applied_code_has_a_single_read(fwm: Analysis):
    outcome = apply_plan(fwm.plans()[0], fwm.code, fwm.schema, fwm.profile)

    text = outcome.sources["fwm.js"]
    assert text.count("findOne") == 1
    assert "movie." not in text
    assert [f.path for f in outcome.updated_code.files()] == ["fwm.js"]


def test_applying_twice_is_stale(fwm: Analysis):
    plan = fwm.plans()[0]
    outcome = apply_plan(plan, fwm.code, fwm.schema, fwm.profile)

    with pytest.raises(PlanStaleError):
        apply_plan(plan, outcome.updated_code, outcome.updated_schema, fwm.profile)


def test_join_without_co_use_has_no_plan():
    analysis = analyze_sources(
        {
            "app.js": "const db = client.db('app');\n"
            "db.collection('users').findOne({ name: 'x' }, (err, user) => {\n"
            "  db.collection('movies').findOne({ _id: user.movie_id }, (err, movie) => {\n"
            "    console.log(movie.title);\n"
            "  });\n"
            "});\n"
        }
    )

    assert len(analysis.dos.joins()) == 1
    assert analysis.plans() == []


def test_sequential_join_on_root_field():
    analysis = analyze_join()

    plan = analysis.plans()[0]
    outcome = apply_plan(plan, analysis.code, analysis.schema, analysis.profile)

    assert outcome.sources["app.js"] == (
        "const db = client.db('app');\n"
        "db.collection('users').findOne({ name: 'x' }, (err, user) => {\n"
        "  console.log(user.name + user.movie_title);\n"
        "});\n"
    )
    assert outcome.copy_statement == "COPY Movies::{title} TO Users::movie_id WHERE movie_id = _id\n"


def test_escaping_join_result_makes_a_partial_plan():
    analysis = analyze_join("    send(movie);\n")

    plan = analysis.plans()[0]

    assert plan.partial
    with pytest.raises(RewriteError, match="partial"):
        apply_plan(plan, analysis.code, analysis.schema, analysis.profile)


def test_field_used_without_copy_cannot_be_rewritten():
    analysis = analyze_join("    console.log(movie.year);\n")

    plan = analysis.plans()[0]

    assert not plan.partial
    assert plan.rewritten_snippet == ""
    with pytest.raises(RewriteError, match="year"):
        apply_plan(plan, analysis.code, analysis.schema, analysis.profile)


def test_music_plan_rows(music: Analysis):
    rows = plan_rows(music.plans())

    sequential, aggregation = JoinType.SEQUENTIAL, JoinType.AGGREGATION
    assert [
        (r.number, r.query, r.target_entity, r.source_entity, r.fields, r.location, r.join_type) for r in rows
    ] == [
        (1, "findAlbum", "Album", "Track", "title", "In Album", sequential),
        (2, "listAlbumsWithCategories", "Album", "Genre", "name", "In Album", aggregation),
        (3, "listAlbumsWithArtist", "Album", "Artist", "name", "In Album", aggregation),
        (4, "findArtist", "Artist", "Album", "title", "In Artist", sequential),
        (5, "findArtistTracks", "Artist", "Track", "title", "In Artist", sequential),
        (6, "listTracksWithGenres", "Track", "Genre", "name", "In Track", aggregation),
        (7, "listTracksWithAlbumAndArtist", "Track", "Album", "title, releaseYear", "In Track", aggregation),
        (7, "listTracksWithAlbumAndArtist", "Track", "Artist", "name", "In Track", aggregation),
    ]


def test_plans_are_numbered_in_source_order(music: Analysis):
    plans = music.plans()

    assert [p.number for p in plans] == list(range(1, len(plans) + 1))
    assert [(p.path, p.line) for p in plans] == sorted((p.path, p.line) for p in plans)


def test_render_plan_table(fwm: Analysis):
    lines = render_plan_table(fwm.plans()).splitlines()

    assert [cell.strip() for cell in lines[0].split(" | ")] == ["#", "Query", "Target Entity", "Source Entity", "Fields", "Location", "Join Type"]
    assert set(lines[1]) <= {"-", "+"}
    cells = [cell.strip() for cell in lines[2].split(" | ")]
    assert cells == ["1", "-", "User", "Movie", "title", "In WatchedMovie", "Sequential Query"]
