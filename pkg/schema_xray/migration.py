"""Copy statements and mongosh migration scripts for join removal plans."""

from .models.dos import JoinDirection
from .models.plans import JoinRemovalPlan, PlanLink
from .naming import capitalize, reference_stem, singular

INDENT = "  "


def _copy_line(link: PlanLink) -> str:
    fields = ",".join(d.source_field for d in link.duplicates)
    source = f"{capitalize(link.target_container)}::{{{fields}}}"
    if link.direction == JoinDirection.FORWARD:
        path = ".".join(p for p in link.reference_field if p != "[]")
        target = f"{capitalize(link.reference_container)}::{path}"
        return f"COPY {source} TO {target} WHERE {link.reference_field[-1]} = {link.target_attribute}"
    target = f"{capitalize(link.destination_container)}::{link.target_attribute}"
    return f"COPY {source} TO {target} WHERE {link.target_attribute} = {'.'.join(link.reference_field)}"


def emit_copy(plan: JoinRemovalPlan) -> str:
    """Declarative statement of the copies a plan makes, one line per join link."""
    return "\n".join(_copy_line(link) for link in plan.links) + "\n"


def _key(name: str) -> str:
    return f"'{name}'" if "." in name or "[" in name else name


def _value(link: PlanLink, source: str) -> str:
    if link.embedded:
        pairs = ", ".join(f"{d.new_name}: {source}.{d.source_field}" for d in link.duplicates)
        return f"{{ {pairs} }}"
    return f"{source}.{link.duplicates[0].source_field}"


def _stem(link: PlanLink) -> str:
    if link.direction == JoinDirection.FORWARD:
        return reference_stem(link.reference_field[-1])
    return singular(link.target_container)


def _fill(link: PlanLink, holder: str, depth: int) -> list[str]:
    pad = INDENT * depth
    name = f"{_stem(link)}Doc"
    if link.direction == JoinDirection.FORWARD:
        reference = f"{holder}.{link.reference_field[-1]}"
        if link.collection:
            query = f"{{ {link.target_attribute}: {{ $in: {reference} || [] }} }}"
        else:
            query = f"{{ {link.target_attribute}: {reference} }}"
    else:
        query = f"{{ {_key('.'.join(p for p in link.reference_field if p != '[]'))}: {holder}.{link.target_attribute} }}"
    copy = f"{holder}.{link.copy_name}"
    if link.collection:
        return [
            f"{pad}const {name}s = db.{link.target_container}.find({query}).toArray();",
            f"{pad}{copy} = {name}s.map(function ({name}) {{ return {_value(link, name)}; }});",
        ]
    return [
        f"{pad}const {name} = db.{link.target_container}.findOne({query});",
        f"{pad}if ({name}) {{",
        f"{pad}{INDENT}{copy} = {_value(link, name)};",
        f"{pad}}}",
    ]


def _descend(link: PlanLink, path: list[str], holder: str, depth: int, items: int = 0) -> list[str]:
    if not path:
        return _fill(link, holder, depth)
    pad = INDENT * depth
    name, rest = path[0], path[1:]
    if rest[:1] == ["[]"]:
        item = "item" if items == 0 else f"item{items + 1}"
        return [
            f"{pad}({holder}.{name} || []).forEach(function ({item}) {{",
            *_descend(link, rest[1:], item, depth + 1, items + 1),
            f"{pad}}});",
        ]
    return [
        f"{pad}if ({holder}.{name}) {{",
        *_descend(link, rest, f"{holder}.{name}", depth + 1, items),
        f"{pad}}}",
    ]


def emit_migration(plan: JoinRemovalPlan) -> str:
    """mongosh script filling the copies of a plan into the documents already stored.

    Every document of the receiving container is read, its copies are looked up in the
    referenced container and the document is written back in place.
    """
    lines = [f"// Join removal plan {plan.number}: {plan.join_type} in {plan.query or plan.path}"]
    containers = list(dict.fromkeys(link.destination_container for link in plan.links))
    for container in containers:
        lines.append(f"db.{container}.find().forEach(function (doc) {{")
        for link in (link for link in plan.links if link.destination_container == container):
            lines.extend(_descend(link, list(link.destination_path), "doc", 1))
        lines.append(f"{INDENT}db.{container}.replaceOne({{ _id: doc._id }}, doc);")
        lines.append("});")
    return "\n".join(lines) + "\n"
