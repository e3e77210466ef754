"""
Deterministic generation of a document-store backend from a designed schema.

The generated application is what the round-trip check extracts the schema back from.
It uses the MongoDB Node.js driver in callback style and only the constructs the parser
accepts. Every root entity gets a `<entity>.routes.js` file and `index.js` wires them up:

- five CRUD handlers per root entity;
- a sequential join for each many-valued reference whose target declares references;
  the first one extends the `findOne` handler, later ones get a handler of their own;
- a `$lookup` join for each many-valued reference whose target declares none;
- one pipeline per referencing root entity, looking up every parent: targets of its
  single-valued references, then the entities holding a many-valued reference to it.
"""

import logging
import random
from dataclasses import dataclass

from .errors import SpecError
from .models.roundtrip import EntitySpec, RelationSpec, SchemaSpec
from .models.uschema import MANY
from .naming import capitalize, singular

logger = logging.getLogger(__name__)

INDENT = "  "


@dataclass(frozen=True)
class Parent:
    """An entity a pipeline looks up: `field` is local for a forward lookup, foreign otherwise."""

    entity: EntitySpec
    field: str
    reverse: bool


def _indent(lines: list[str], depth: int = 1) -> list[str]:
    return [INDENT * depth + line if line else line for line in lines]


def _variable(entity: EntitySpec) -> str:
    return entity.name[:1].lower() + entity.name[1:]


def check_spec(spec: SchemaSpec) -> None:
    """Raises SpecError when a relation targets an unknown entity or an aggregate targets a root."""
    for entity in spec.entities:
        for relation in entity.references:
            target = spec.entity(relation.target)
            if target is None or not target.root:
                raise SpecError(f"Reference {entity.name}.{relation.name} targets no root entity {relation.target}")
        for relation in entity.aggregates:
            target = spec.entity(relation.target)
            if target is None:
                raise SpecError(f"Aggregate {entity.name}.{relation.name} targets unknown entity {relation.target}")
            if target.root:
                raise SpecError(f"Aggregate {entity.name}.{relation.name} targets root entity {relation.target}")
        names = [a.name for a in entity.attributes] + [r.name for r in entity.aggregates + entity.references]
        if duplicated := sorted({n for n in names if names.count(n) > 1}):
            raise SpecError(f"Entity {entity.name} declares {', '.join(duplicated)} more than once")


class AppGenerator:
    """Writes the backend of one schema.

    Parameters
    ----------
    spec : SchemaSpec
        Designed schema; checked on construction.
    seed : int
        Seed of the choices left open by the schema, such as the listening port.
    """

    def __init__(self, spec: SchemaSpec, seed: int = 0):
        check_spec(spec)
        self.logger = logging.getLogger(__name__)
        self.spec = spec
        self.random = random.Random(seed)

    def target(self, relation: RelationSpec) -> EntitySpec:
        return self.spec.entity(relation.target)  # type: ignore[return-value]

    def first_field(self, entity: EntitySpec) -> str:
        return entity.attributes[0].name if entity.attributes else "_id"

    def sequential_joins(self, entity: EntitySpec) -> list[RelationSpec]:
        return [r for r in entity.references if r.upper == MANY and self.target(r).references]

    def lookup_joins(self, entity: EntitySpec) -> list[RelationSpec]:
        return [r for r in entity.references if r.upper == MANY and not self.target(r).references]

    def parents(self, entity: EntitySpec) -> list[Parent]:
        if not entity.references:
            return []
        found = [Parent(self.target(r), r.name, False) for r in entity.references if r.upper != MANY]
        covered = {p.entity.name for p in found}
        for other in self.spec.roots:
            for relation in other.references:
                if relation.upper == MANY and relation.target == entity.name and other.name not in covered:
                    found.append(Parent(other, relation.name, True))
                    covered.add(other.name)
        return found

    # -- handler fragments -----------------------------------------------------------

    def pairs(self, entity: EntitySpec, source: str) -> list[str]:
        """`name: value` pairs writing every field of `entity` from the request value `source`."""
        pairs = [f"{a.name}: {source}.{a.name}" for a in entity.attributes]
        for relation in entity.aggregates:
            nested = self.target(relation)
            if relation.upper == MANY:
                pairs.append(f"{relation.name}: [{self.inline(nested, f'{source}.{relation.name}[0]')}]")
            else:
                pairs.append(f"{relation.name}: {self.inline(nested, f'{source}.{relation.name}')}")
        for relation in entity.references:
            value = f"{source}.{relation.name}"
            pairs.append(f"{relation.name}: {value} || []" if relation.upper == MANY else f"{relation.name}: {value}")
        return pairs

    def inline(self, entity: EntitySpec, source: str) -> str:
        return "{ " + ", ".join(self.pairs(entity, source)) + " }"

    def payload(self, entity: EntitySpec, source: str) -> list[str]:
        body = [f"{INDENT}{pair}," for pair in self.pairs(entity, source)]
        if body:
            body[-1] = body[-1].rstrip(",")
        return ["{", *body, "}"]

    def collection(self, entity: EntitySpec) -> str:
        return f"db.collection('{entity.container}')"

    def required(self, entity: EntitySpec) -> list[str]:
        if not entity.attributes:
            return []
        name = entity.attributes[0].name
        return [
            f"if (req.body.{name} == null) {{",
            f"{INDENT}return res.status(400).json({{ error: '{name} is required' }});",
            "}",
        ]

    def sequential(self, entity: EntitySpec, relation: RelationSpec) -> list[str]:
        """Join reading the documents `relation` points to, inside the callback of the base read."""
        base, target = _variable(entity), self.target(relation)
        documents, element = target.container, singular(target.container)
        return [
            f"{self.collection(target)}.find({{ _id: {{ $in: {base}.{relation.name} }} }}).toArray(function (err, {documents}) {{",
            f"{INDENT}{documents}.forEach(function ({element}) {{",
            f"{INDENT * 2}console.log({base}.{self.first_field(entity)}, {element}.{self.first_field(target)});",
            f"{INDENT}}});",
            "});",
        ]

    # -- handlers --------------------------------------------------------------------

    def find_all(self, entity: EntitySpec) -> list[str]:
        documents = entity.container
        return [
            f"function find{capitalize(documents)}(req, res) {{",
            f"{INDENT}{self.collection(entity)}.find({{}}).toArray(function (err, {documents}) {{",
            f"{INDENT * 2}res.json({documents});",
            f"{INDENT}}});",
            "}",
        ]

    def find_one(self, entity: EntitySpec, name: str, join: RelationSpec | None) -> list[str]:
        variable = _variable(entity)
        inner = self.sequential(entity, join) if join is not None else []
        return [
            f"function {name}(req, res) {{",
            f"{INDENT}{self.collection(entity)}.findOne({{ _id: req.params.id }}, function (err, {variable}) {{",
            *_indent(inner, 2),
            f"{INDENT * 2}res.json({variable});",
            f"{INDENT}}});",
            "}",
        ]

    def insert(self, entity: EntitySpec) -> list[str]:
        payload = self.payload(entity, "req.body")
        return [
            f"function insert{entity.name}(req, res) {{",
            *_indent(self.required(entity)),
            f"{INDENT}{self.collection(entity)}.insertOne({payload[0]}",
            *_indent(payload[1:-1]),
            f"{INDENT}{payload[-1]}, function (err, result) {{",
            f"{INDENT * 2}res.json(result);",
            f"{INDENT}}});",
            "}",
        ]

    def update(self, entity: EntitySpec) -> list[str]:
        payload = self.payload(entity, "req.body")
        return [
            f"function update{entity.name}(req, res) {{",
            *_indent(self.required(entity)),
            f"{INDENT}{self.collection(entity)}.updateOne({{ _id: req.params.id }}, {{ $set: {payload[0]}",
            *_indent(payload[1:-1]),
            f"{INDENT}{payload[-1]} }}, function (err, result) {{",
            f"{INDENT * 2}res.json(result);",
            f"{INDENT}}});",
            "}",
        ]

    def delete(self, entity: EntitySpec) -> list[str]:
        return [
            f"function delete{entity.name}(req, res) {{",
            f"{INDENT}{self.collection(entity)}.deleteOne({{ _id: req.params.id }}, function (err, result) {{",
            f"{INDENT * 2}res.json(result);",
            f"{INDENT}}});",
            "}",
        ]

    def lookup(self, entity: EntitySpec, relation: RelationSpec) -> list[str]:
        target = self.target(relation)
        documents, base = entity.container, _variable(entity)
        alias, element = f"{_variable(target)}List", singular(target.container)
        stage = f"{{ $lookup: {{ from: '{target.container}', localField: '{relation.name}', foreignField: '_id', as: '{alias}' }} }}"
        return [
            f"function list{capitalize(documents)}With{capitalize(relation.name)}(req, res) {{",
            f"{INDENT}{self.collection(entity)}.aggregate([",
            f"{INDENT * 2}{stage}",
            f"{INDENT}]).toArray(function (err, {documents}) {{",
            f"{INDENT * 2}{documents}.forEach(function ({base}) {{",
            f"{INDENT * 3}{base}.{alias}.forEach(function ({element}) {{",
            f"{INDENT * 4}console.log({base}.{self.first_field(entity)}, {element}.{self.first_field(target)});",
            f"{INDENT * 3}}});",
            f"{INDENT * 2}}});",
            f"{INDENT * 2}res.json({documents});",
            f"{INDENT}}});",
            "}",
        ]

    def pipeline(self, entity: EntitySpec, parents: list[Parent]) -> list[str]:
        documents, base = entity.container, _variable(entity)
        taken = {a.name for a in entity.attributes} | {r.name for r in entity.aggregates + entity.references}
        stages: list[str] = []
        reads = [f"{base}.{self.first_field(entity)}"]
        for parent in parents:
            alias = _variable(parent.entity)
            if alias in taken:
                alias += "Doc"
            taken.add(alias)
            local, foreign = ("_id", parent.field) if parent.reverse else (parent.field, "_id")
            stages.append(
                f"{{ $lookup: {{ from: '{parent.entity.container}', localField: '{local}', "
                f"foreignField: '{foreign}', as: '{alias}' }} }}"
            )
            stages.append(f"{{ $unwind: '${alias}' }}")
            fields = [a.name for a in parent.entity.attributes] or ["_id"]
            reads.extend(f"{base}.{alias}.{name}" for name in fields)
        stages = [f"{stage}," for stage in stages[:-1]] + stages[-1:]
        name = "And".join(p.entity.name for p in parents)
        return [
            f"function list{capitalize(documents)}With{name}(req, res) {{",
            f"{INDENT}{self.collection(entity)}.aggregate([",
            *_indent(stages, 2),
            f"{INDENT}]).toArray(function (err, {documents}) {{",
            f"{INDENT * 2}{documents}.forEach(function ({base}) {{",
            f"{INDENT * 3}console.log({', '.join(reads)});",
            f"{INDENT * 2}}});",
            f"{INDENT * 2}res.json({documents});",
            f"{INDENT}}});",
            "}",
        ]

    def handlers(self, entity: EntitySpec) -> list[tuple[str, str, str, list[str]]]:
        """Name, HTTP verb, route and source lines of every handler of a root entity."""
        documents = capitalize(entity.container)
        path = f"/{entity.container}"
        sequential = self.sequential_joins(entity)
        first = sequential[0] if sequential else None
        found = [
            (f"find{documents}", "get", path, self.find_all(entity)),
            (f"find{entity.name}", "get", f"{path}/:id", self.find_one(entity, f"find{entity.name}", first)),
            (f"insert{entity.name}", "post", path, self.insert(entity)),
            (f"update{entity.name}", "put", f"{path}/:id", self.update(entity)),
            (f"delete{entity.name}", "delete", f"{path}/:id", self.delete(entity)),
        ]
        for relation in sequential[1:]:
            name = f"find{entity.name}{capitalize(relation.name)}"
            found.append((name, "get", f"{path}/:id/{relation.name}", self.find_one(entity, name, relation)))
        for relation in self.lookup_joins(entity):
            name = f"list{documents}With{capitalize(relation.name)}"
            found.append((name, "get", f"{path}/with/{relation.name}", self.lookup(entity, relation)))
        if parents := self.parents(entity):
            name = f"list{documents}With{'And'.join(p.entity.name for p in parents)}"
            found.append((name, "get", f"{path}/with/parents", self.pipeline(entity, parents)))
        return found

    def routes(self, entity: EntitySpec) -> str:
        handlers = self.handlers(entity)
        lines = ["const db = require('./index').db;", ""]
        for _, _, _, body in handlers:
            lines.extend([*body, ""])
        exports = [f"{INDENT}{name}: {name}," for name, _, _, _ in handlers]
        exports[-1] = exports[-1].rstrip(",")
        lines.extend(["module.exports = {", *exports, "};"])
        return "\n".join(lines) + "\n"

    def index(self) -> str:
        port = 3000 + self.random.randrange(1000)
        lines = [
            "const express = require('express');",
            "const MongoClient = require('mongodb').MongoClient;",
            "",
            "const client = new MongoClient('mongodb://localhost:27017');",
            f"const db = client.db('{self.spec.database}');",
            "module.exports.db = db;",
            "",
        ]
        lines.extend(f"const {e.container} = require('./{_variable(e)}.routes');" for e in self.spec.roots)
        lines.extend(["", "const app = express();", "app.use(express.json());"])
        for entity in self.spec.roots:
            for name, verb, route, _ in self.handlers(entity):
                lines.append(f"app.{verb}('{route}', {entity.container}.{name});")
        lines.extend(["", f"app.listen({port});"])
        return "\n".join(lines) + "\n"

    def generate(self) -> dict[str, str]:
        files = {f"{_variable(entity)}.routes.js": self.routes(entity) for entity in self.spec.roots}
        files["index.js"] = self.index()
        self.logger.info(f"Generated {len(files)} files for schema {self.spec.name}")
        return dict(sorted(files.items()))


def generate_app(spec: SchemaSpec, seed: int = 0) -> dict[str, str]:
    """Generate the backend of `spec`: file name to source text, deterministic in `(spec, seed)`.

    Raises
    ------
    SpecError
        When a reference or aggregate targets an unknown entity.
    """
    return AppGenerator(spec, seed).generate()
