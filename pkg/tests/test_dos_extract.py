from collections.abc import Iterator
from pathlib import Path

import pytest

from schema_xray.code_walk import access_path, child_nodes, walk
from schema_xray.dos_extract import backward_traverse, find_db_call_nodes
from schema_xray.errors import ProfileError
from schema_xray.models.code import (
    ArrayLiteral,
    Binary,
    Call,
    CodeBlock,
    CodeModel,
    Expr,
    IndexAccess,
    Lambda,
    LiteralExpr,
    ObjectLiteral,
    ParseMode,
    PrimitiveType,
    PropertyAccess,
    StatementNode,
    VarAccess,
    VariableDeclStmt,
)
from schema_xray.models.dos import (
    DataStructure,
    DOSModel,
    ExtractOptions,
    FieldKind,
    JoinDirection,
    OperationKind,
    VariablePath,
)
from schema_xray.models.profile import ApiProfile, OpKind, ProfileEntry
from schema_xray.pipeline import Analysis, analyze_sources

from .conftest import FIXTURES, database_program

HEADER = "const db = client.db('app');\n"


def extract(source: str, **options) -> DOSModel:
    return analyze_sources({"app.js": HEADER + source}, options=ExtractOptions(**options)).dos


def field_names(dos: DOSModel, container: str) -> list[str]:
    return [f.name for f in dos.container(container).data_structures[0].fields]


def test_find_db_call_nodes(fwm: Analysis):
    found = find_db_call_nodes(fwm.cfg, fwm.code, fwm.profile)

    assert [(db.call.method, db.container, db.path) for db in found] == [
        ("findOne", "users", "fwm.js"),
        ("findOne", "movies", "fwm.js"),
    ]


def test_backward_traverse_links_the_sequential_join(fwm: Analysis):
    dos = backward_traverse(find_db_call_nodes(fwm.cfg, fwm.code, fwm.profile), fwm.cfg, fwm.code, fwm.profile)

    users, movies = dos.operations
    assert (users.id, users.result_variable, users.next_dbos) == ("op0", "user", ["op1"])
    assert (movies.id, movies.prev_dbo, movies.is_join) == ("op1", "op0", True)
    link = movies.joins[0]
    assert link.direction == JoinDirection.FORWARD
    assert (link.reference_container, link.reference_field) == ("users", ["watchedMovies", "[]", "movie_id"])
    assert (link.referenced_container, link.target_attribute) == ("movies", "_id")
    assert dos.containers == []


def test_running_example_operations(fwm: Analysis):
    users, movies = fwm.dos.operations

    assert users.kind == OperationKind.READ and users.container_name == "users"
    assert users.filter.conjuncts[0].field_path == ["name"]
    assert movies.container_name == "movies"
    conjunct = movies.filter.conjuncts[0]
    assert conjunct.field_path == ["_id"]
    assert isinstance(conjunct.rhs, VariablePath) and conjunct.rhs.root == "user"
    assert fwm.dos.joins() == [movies]


def test_running_example_structures(fwm: Analysis):
    dos = fwm.dos
    users = dos.container("users").data_structures[0]

    assert [f.name for f in users.fields] == ["_id", "name", "watchedMovies", "surname", "email"]
    assert users.field("name").type.primitive == PrimitiveType.STRING
    watched = users.field("watchedMovies").type
    assert watched.kind == FieldKind.COLLECTION
    assert watched.element.kind == FieldKind.AGGREGATE

    nested = dos.structure(watched.element.target)
    assert (nested.name, nested.root) == ("WatchedMovie", False)
    reference = nested.field("movie_id").type
    assert reference.kind == FieldKind.REFERENCE
    assert (reference.target_container, reference.target_attribute) == ("movies", "_id")
    assert nested.field("stars").type.primitive == PrimitiveType.INT

    assert field_names(dos, "movies") == ["_id", "title"]
    assert dos.container("movies").data_structures[0].field("title").type.defaulted is True
    assert [op.result_ds for op in dos.operations] == ["ds1", "ds3"]


@pytest.mark.parametrize("seed", range(40))
def test_nested_reads_collect_every_accessed_field(seed: int):
    source, expected = database_program(seed)

    dos = analyze_sources({"app.js": source}).dos

    assert {c.name: set(field_names(dos, c.name)) for c in dos.containers} == expected
    assert dos.joins() == []


def test_extraction_is_deterministic():
    source, _ = database_program(7)

    first = analyze_sources({"app.js": source}).dos
    second = analyze_sources({"app.js": source}).dos

    assert first.model_dump() == second.model_dump()


def test_join_through_an_alias():
    dos = extract(
        "db.collection('users').findOne({ name: 'x' }, (err, user) => {\n"
        "  let u2 = user;\n"
        "  db.collection('movies').findOne({ _id: u2.movie_id }, (err, movie) => {\n"
        "    console.log(movie.title);\n"
        "  });\n"
        "});\n"
    )

    movies = dos.operations[1]
    assert movies.is_join and movies.prev_dbo == "op0"
    assert movies.joins[0].reference_field == ["movie_id"]
    reference = dos.container("users").data_structures[0].field("movie_id").type
    assert reference.kind == FieldKind.REFERENCE and reference.target_container == "movies"


def test_independent_reads_are_not_linked():
    dos = extract(
        "db.collection('users').findOne({ name: 'a' }, (err, user) => {\n"
        "  console.log(user.name);\n"
        "});\n"
        "db.collection('movies').findOne({ title: 'b' }, (err, movie) => {\n"
        "  console.log(movie.title);\n"
        "});\n"
    )

    assert [op.prev_dbo for op in dos.operations] == [None, None]
    assert dos.joins() == []


def test_insert_payload_contributes_fields():
    source = "db.collection('users').insertOne({ a: 1, b: 'x' }, (err, res) => {});\n"

    dos = extract(source)

    users = dos.container("users").data_structures[0]
    assert [f.name for f in users.fields] == ["_id", "a", "b"]
    assert users.field("a").type.primitive == PrimitiveType.INT
    assert users.field("b").type.primitive == PrimitiveType.STRING
    assert dos.operations[0].kind == OperationKind.INSERT
    assert field_names(extract(source, payload_structures=False), "users") == ["_id"]


def test_update_payload_uses_the_set_operator():
    dos = extract("db.collection('users').updateOne({ name: 'a' }, { $set: { age: 3 } }, (err, res) => {});\n")

    assert field_names(dos, "users") == ["_id", "name", "age"]


def test_unused_read_result_only_has_the_key():
    dos = extract("db.collection('users').findOne({}, (err, user) => {});\n")

    assert field_names(dos, "users") == ["_id"]
    assert dos.container("users").data_structures[0].field("_id").type.primitive == PrimitiveType.STRING


def test_list_results_bind_their_elements():
    dos = extract(
        "db.collection('orders').find({ status: 'open' }).toArray((err, orders) => {\n"
        "  orders.forEach((order) => {\n"
        "    console.log(order.total);\n"
        "  });\n"
        "});\n"
    )

    assert dos.operations[0].many is True
    assert dos.operations[0].result_variable == "orders"
    assert field_names(dos, "orders") == ["_id", "status", "total"]


def test_lookup_stage_is_a_join():
    dos = extract(
        "db.collection('tracks').aggregate([\n"
        "  { $lookup: { from: 'albums', localField: 'album_id', foreignField: '_id', as: 'album' } },\n"
        "  { $unwind: '$album' }\n"
        "]).toArray((err, tracks) => {\n"
        "  tracks.forEach((track) => {\n"
        "    console.log(track.album.title);\n"
        "  });\n"
        "});\n"
    )

    op = dos.operations[0]
    assert op.aggregate and op.is_join and op.prev_dbo is None
    link = op.joins[0]
    assert (link.container, link.alias, link.reference_field) == ("albums", "album", ["album_id"])
    assert link.unwind_ref is not None
    assert field_names(dos, "albums") == ["_id", "title"]
    reference = dos.container("tracks").data_structures[0].field("album_id").type
    assert (reference.kind, reference.target_container) == (FieldKind.REFERENCE, "albums")


def test_references_can_be_disabled():
    dos = extract(
        "db.collection('users').findOne({ name: 'x' }, (err, user) => {\n"
        "  db.collection('movies').findOne({ _id: user.movie_id }, (err, movie) => {});\n"
        "});\n",
        references=False,
    )

    assert dos.joins()[0].prev_dbo == "op0"
    movie_id = dos.container("users").data_structures[0].field("movie_id").type
    assert movie_id.kind == FieldKind.ATTRIBUTE


def test_identical_nested_structures_are_merged():
    dos = extract(
        "db.collection('users').insertOne({ address: { city: 'a' } });\n"
        "db.collection('orders').insertOne({ shipping: { city: 'b' } });\n"
    )

    assert [s.id for s in dos.nested_structures] == ["ds2"]
    shipping = dos.container("orders").data_structures[0].field("shipping").type
    assert shipping.target == "ds2"


def test_non_constant_container_is_rejected():
    with pytest.raises(ProfileError, match="not a constant string"):
        extract("function find(name) {\n  return db.collection(name).findOne({});\n}\n")


def test_music_operations(music: Analysis):
    dos = music.dos

    assert len(dos.operations) == 28
    assert len(dos.joins()) == 7
    assert [op.id for op in dos.operations] == [f"op{n}" for n in range(28)]
    assert {c.name for c in dos.containers} == {"albums", "artists", "genres", "tracks"}


@pytest.mark.parametrize("name", ["fwm", "music"])
def test_join_predecessors(name: str, request: pytest.FixtureRequest):
    dos = request.getfixturevalue(name).dos

    for op in dos.joins():
        assert op.joins
        if op.aggregate:
            assert op.prev_dbo is None
            assert all(link.stage_ref is not None for link in op.joins)
        else:
            prev = dos.operation(op.prev_dbo)
            assert prev.container_name != op.container_name
            assert op.id in prev.next_dbos
    assert sum(op.aggregate for op in dos.joins()) == (4 if name == "music" else 0)


Paths = dict[str, set[tuple[str, ...]]]


def parents(block: CodeBlock) -> dict[str, object]:
    found: dict[str, object] = {}
    for node in walk(block):
        for child in child_nodes(node):
            found[child.id] = node
    return found


def named_container(call: Call) -> str | None:
    current = call.receiver
    while isinstance(current, Call | PropertyAccess):
        if isinstance(current, PropertyAccess):
            current = current.object
            continue
        if current.method == "collection" and current.args and isinstance(current.args[0], LiteralExpr):
            return current.args[0].lexeme
        current = current.receiver
    return None


def payload_paths(prefix: list[str], literal: ObjectLiteral) -> Iterator[list[str]]:
    for pair in literal.pairs:
        if pair.name.startswith("$"):
            continue
        path = [*prefix, *pair.name.split(".")]
        yield path
        value = pair.value
        if isinstance(value, Binary):
            value = next((side for side in (value.rhs, value.lhs) if isinstance(side, ObjectLiteral | ArrayLiteral)), value)
        if isinstance(value, ObjectLiteral):
            yield from payload_paths(path, value)
        elif isinstance(value, ArrayLiteral):
            for item in value.items:
                if isinstance(item, ObjectLiteral):
                    yield from payload_paths(path, item)


class UseOracle:
    """Fields per container, found by pairing every database call with every variable use in its callback."""

    def __init__(self, profile: ApiProfile):
        self.profile = profile
        self.fields: Paths = {}

    def add(self, container: str, path: list[str]) -> None:
        paths = self.fields.setdefault(container, {(self.profile.primary_key,)})
        names = [name for name in path if name != "[]"]
        paths.update(tuple(names[:end]) for end in range(1, len(names) + 1))

    @staticmethod
    def argument(call: Call, index: int | None) -> Expr | None:
        return call.args[index] if index is not None and index < len(call.args) else None

    def run(self, code: CodeModel) -> Paths:
        for script in code.scripts():
            parent = parents(script.body)
            for call in [node for node in walk(script.body) if isinstance(node, Call)]:
                entry = self.profile.entry(call.method)
                container = named_container(call) if entry is not None else None
                if entry is not None and container is not None:
                    self.operation(call, entry, container, parent)
        return self.fields

    def operation(self, call: Call, entry: ProfileEntry, container: str, parent: dict[str, object]) -> None:
        key = self.profile.primary_key
        self.add(container, [])
        aliases: dict[str, str] = {}
        filter = self.argument(call, entry.filter_arg_index)
        if entry.op_kind == OpKind.AGGREGATE_READ and isinstance(filter, ArrayLiteral):
            for stage in (item for item in filter.items if isinstance(item, ObjectLiteral)):
                if isinstance(lookup := stage.get("$lookup"), ObjectLiteral):
                    joined, local, foreign, alias = (lookup.get(k).lexeme for k in ("from", "localField", "foreignField", "as"))
                    self.add(joined, [])
                    if foreign == key:
                        self.add(container, local.split("."))
                    else:
                        self.add(joined, foreign.split("."))
                    aliases[alias] = joined
                elif isinstance(match := stage.get("$match"), ObjectLiteral):
                    filter = match
        if isinstance(filter, ObjectLiteral):
            for pair in filter.pairs:
                if not pair.name.startswith("$"):
                    self.add(container, pair.name.split("."))
        payload = self.argument(call, entry.payload_arg_index)
        if entry.payload_operator and isinstance(payload, ObjectLiteral):
            payload = payload.get(entry.payload_operator)
        if isinstance(payload, ObjectLiteral):
            for path in payload_paths([], payload):
                self.add(container, path)
        if entry.op_kind not in (OpKind.READ, OpKind.AGGREGATE_READ):
            return
        callback = self.argument(call, entry.callback_arg_index)
        current = call
        while not isinstance(callback, Lambda):
            owner = parent.get(current.id)
            if not isinstance(owner, Call) or owner.method not in self.profile.cursor_methods:
                return
            callback = next((arg for arg in owner.args if isinstance(arg, Lambda)), None)
            current = owner
        if len(callback.params) > self.profile.callback_result_index:
            result = callback.params[self.profile.callback_result_index]
            self.uses(callback, {result: (container, [])}, container, aliases, parent)

    def uses(
        self,
        callback: Lambda,
        bindings: dict[str, tuple[str, list[str]]],
        container: str,
        aliases: dict[str, str],
        parent: dict[str, object],
    ) -> None:
        def resolve(path: list[str] | None) -> tuple[str, list[str]] | None:
            if not path or path[0] not in bindings:
                return None
            owner, prefix = bindings[path[0]]
            full = [*prefix, *(name for name in path[1:] if name != "[]")]
            if owner == container and full and full[0] in aliases:
                return aliases[full[0]], full[1:]
            return owner, full

        for node in walk(callback.body):
            if isinstance(node, VariableDeclStmt) and node.init is not None:
                if (bound := resolve(access_path(node.init))) is not None:
                    bindings[node.name] = bound
            if isinstance(node, Call) and node.method in self.profile.collection_methods and node.receiver is not None:
                if (bound := resolve(access_path(node.receiver))) is not None:
                    for arg in node.args:
                        if isinstance(arg, Lambda) and arg.params:
                            bindings[arg.params[0]] = bound
            if not isinstance(node, VarAccess | PropertyAccess | IndexAccess):
                continue
            above = parent.get(node.id)
            if isinstance(above, PropertyAccess | IndexAccess) and above.object.id == node.id:
                continue
            path = access_path(node)
            if path and path[-1] in self.profile.collection_methods:
                path = path[:-1]
            if (bound := resolve(path)) is not None:
                self.add(*bound)


def extracted_fields(dos: DOSModel) -> Paths:
    def paths(structure: DataStructure, prefix: tuple[str, ...]) -> Iterator[tuple[str, ...]]:
        for field in structure.fields:
            path = (*prefix, field.name)
            yield path
            inner = field.type.innermost
            if inner.kind == FieldKind.AGGREGATE and inner.target is not None:
                yield from paths(dos.structure(inner.target), path)

    return {c.name: set(paths(c.data_structures[0], ())) for c in dos.containers}


@pytest.mark.parametrize("path", sorted(FIXTURES.rglob("*.js")), ids=lambda p: str(p.relative_to(FIXTURES)))
def test_fixture_fields_match_the_use_oracle(path: Path, profile: ApiProfile):
    analysis = analyze_sources({path.name: path.read_text(encoding="utf-8")}, mode=ParseMode.LENIENT)
    statements = sum(isinstance(node, StatementNode) for script in analysis.code.scripts() for node in walk(script.body))
    if statements > 60:
        pytest.skip(f"{path.name} has {statements} statements")

    assert extracted_fields(analysis.dos) == UseOracle(profile).run(analysis.code)
