import json

import pytest

from schema_xray.cli import EXIT_FAILURE, EXIT_OK, EXIT_USAGE, run

from .conftest import FIXTURES, golden

FWM = str(FIXTURES / "fwm")


def test_analyze_writes_every_model(tmp_path, capsys):
    out = tmp_path / "out"

    assert run(["analyze", FWM, "--out", str(out)]) == EXIT_OK

    assert sorted(p.name for p in out.iterdir()) == ["cfg.json", "code.json", "dos.json", "uschema.json"]
    assert json.loads((out / "uschema.json").read_text())["name"] == "fwm"
    assert capsys.readouterr().out == "1 file(s), 2 database operation(s), 1 join(s), 3 entity type(s)\n"


def test_schema_text(capsys):
    assert run(["schema", FWM]) == EXIT_OK

    text = capsys.readouterr().out
    assert text.startswith("entity User\n")
    assert "  aggr watchedMovies -> WatchedMovie [0..*]\n" in text


def test_schema_without_references(capsys):
    assert run(["schema", FWM, "--no-references"]) == EXIT_OK

    assert "ref movie_id" not in capsys.readouterr().out


def test_cfg_formats(capsys):
    assert run(["cfg", FWM]) == EXIT_OK
    assert capsys.readouterr().out.startswith("digraph cfg {")

    assert run(["cfg", FWM, "--format", "graph-cypher"]) == EXIT_OK
    assert capsys.readouterr().out.startswith("CREATE (")


def test_dos_prints_json(capsys):
    assert run(["dos", FWM]) == EXIT_OK

    data = json.loads(capsys.readouterr().out)
    assert [op["containerName"] for op in data["operations"]] == ["users", "movies"]


def test_plans(tmp_path, capsys):
    assert run(["plans", FWM, "--out", str(tmp_path)]) == EXIT_OK

    out = capsys.readouterr().out
    assert "Sequential Query" in out
    assert "\nplan 1: " in out
    assert len(json.loads((tmp_path / "plans.json").read_text())["plans"]) == 1


def test_copy(capsys):
    assert run(["copy", FWM, "--plan", "1"]) == EXIT_OK

    assert capsys.readouterr().out == golden("fwm_copy.txt")


def test_apply_writes_into_out(tmp_path, capsys):
    out = tmp_path / "rewritten"

    assert run(["apply", FWM, "--plan", "1", "--out", str(out)]) == EXIT_OK

    assert (out / "fwm.js").read_text() == golden("fwm_rewritten.js")
    assert (out / "migration.js").read_text() == golden("fwm_migration.js")
    assert (out / "copy.txt").read_text() == golden("fwm_copy.txt")
    assert "movie_title" in (out / "uschema.json").read_text()
    assert capsys.readouterr().out == "fwm.js: 1 statement(s) and 0 stage(s) removed, 1 access(es) rewritten\n"
    assert "movie.title" in (FIXTURES / "fwm" / "fwm.js").read_text()


def test_apply_refuses_to_rewrite_in_place(capsys):
    assert run(["apply", FWM, "--plan", "1", "--out", FWM]) == EXIT_USAGE

    assert "--out must not be the analyzed tree" in capsys.readouterr().err


def test_unknown_plan(capsys):
    assert run(["copy", FWM, "--plan", "9"]) == EXIT_USAGE

    assert "No plan 9" in capsys.readouterr().err


@pytest.mark.parametrize(
    "argv",
    [
        [],
        ["explode", FWM],
        ["schema", FWM, "--format", "svg"],
        ["schema", "does/not/exist"],
        ["schema", FWM, "--profile", "missing-profile.json"],
    ],
)
def test_bad_usage(argv: list[str]):
    assert run(argv) == EXIT_USAGE


def test_strict_mode_fails_on_unsupported_code(capsys):
    assert run(["schema", str(FIXTURES / "mixed")]) == EXIT_FAILURE

    assert "legacy.js" in capsys.readouterr().err


def test_lenient_mode_recovers(capsys):
    assert run(["schema", str(FIXTURES / "mixed"), "--mode", "lenient"]) == EXIT_OK

    assert "entity User" in capsys.readouterr().out


def test_roundtrip_check(capsys):
    assert run(["roundtrip", "check", "--spec", "music"]) == EXIT_OK

    report = json.loads(capsys.readouterr().out)
    assert report["references"]["recall"] == 1.0
    assert report["opCount"] == 28


def test_roundtrip_check_without_references_fails():
    assert run(["roundtrip", "check", "--spec", "music", "--no-references"]) == EXIT_FAILURE


def test_roundtrip_gen(tmp_path, capsys):
    assert run(["roundtrip", "gen", "--spec", "music", "--seed", "3", "--out", str(tmp_path)]) == EXIT_OK

    assert sorted(p.name for p in tmp_path.iterdir()) == [
        "album.routes.js",
        "artist.routes.js",
        "genre.routes.js",
        "index.js",
        "track.routes.js",
    ]
    assert capsys.readouterr().out == f"Generated 5 file(s) into {tmp_path}\n"
