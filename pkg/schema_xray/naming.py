def singular(name: str) -> str:
    """Strip one trailing `s`, leaving the name unchanged otherwise."""
    return name[:-1] if len(name) > 1 and name.endswith("s") else name


def capitalize(name: str) -> str:
    return name[:1].upper() + name[1:]


def entity_name(name: str) -> str:
    """Entity type name for a container or aggregate field: `watchedMovies` gives `WatchedMovie`."""
    return capitalize(singular(name))


def reference_stem(field: str) -> str:
    """Reference field name without its identifier suffix: `movie_id` gives `movie`."""
    for suffix in ("_id", "Id", "_ids", "Ids"):
        if field.endswith(suffix) and len(field) > len(suffix):
            return field[: -len(suffix)]
    return field
