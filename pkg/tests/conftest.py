import random
from pathlib import Path

import pytest

from schema_xray.models.profile import ApiProfile, load_profile
from schema_xray.pipeline import Analysis, analyze_path
from schema_xray.roundtrip import load_spec

ROOT = Path(__file__).resolve().parent.parent
FIXTURES = ROOT / "fixtures"
GOLDEN = Path(__file__).resolve().parent / "golden"

NAMES = ("user", "movie", "items", "total", "count", "doc", "res", "result")
PROPERTIES = ("name", "title", "stars", "length", "watchedMovies", "movie_id", "email")
METHODS = ("log", "findOne", "push", "forEach", "json", "send")
FUNCTIONS = ("print", "send", "require", "check")
WORDS = ("Brian", "hello world", "it's", "a\\b", "", "Last watched movie:")


def golden(name: str) -> str:
    return (GOLDEN / name).read_text(encoding="utf-8")


@pytest.fixture(scope="session")
def profile() -> ApiProfile:
    return load_profile()


@pytest.fixture(scope="session")
def fwm(profile: ApiProfile) -> Analysis:
    return analyze_path(FIXTURES / "fwm", profile=profile)


@pytest.fixture(scope="session")
def music(profile: ApiProfile) -> Analysis:
    return analyze_path(FIXTURES / "music", profile=profile)


@pytest.fixture(scope="session")
def music_spec():
    return load_spec("music")


class ProgramGenerator:
    """Random programs in the parser's subset, reproducible from a seed."""

    def __init__(self, seed: int):
        self.random = random.Random(seed)
        self.level = 0

    def literal(self) -> str:
        match self.random.randrange(5):
            case 0:
                return str(self.random.randrange(100))
            case 1:
                return f"{self.random.randrange(10)}.{self.random.randrange(1, 10)}"
            case 2:
                word = self.random.choice(WORDS).replace("\\", "\\\\").replace("'", "\\'")
                return f"'{word}'"
            case 3:
                return self.random.choice(("true", "false"))
        return "null"

    def access(self) -> str:
        text = self.random.choice(NAMES)
        for _ in range(self.random.randrange(3)):
            if self.random.random() < 0.7:
                text += "." + self.random.choice(PROPERTIES)
            else:
                text += f"[{self.random.randrange(3)}]"
        return text

    def callback(self, depth: int) -> str:
        params = ", ".join(self.random.sample(NAMES, self.random.randrange(3)))
        body = self.block(depth + 1)
        if self.random.random() < 0.5:
            return f"({params}) => {body}"
        return f"function ({params}) {body}"

    def expr(self, depth: int = 0) -> str:
        choice = self.random.randrange(8 if depth < 2 else 2)
        match choice:
            case 0:
                return self.literal()
            case 1:
                return self.access()
            case 2:
                op = self.random.choice(("+", "-", "==", "===", "!=", ">=", "<", "&&", "||"))
                return f"({self.expr(depth + 1)} {op} {self.expr(depth + 1)})"
            case 3:
                args = [self.expr(depth + 1) for _ in range(self.random.randrange(3))]
                return f"{self.random.choice(FUNCTIONS)}({', '.join(args)})"
            case 4:
                args = [self.expr(depth + 1) for _ in range(self.random.randrange(2))]
                if self.random.random() < 0.5:
                    args.append(self.callback(self.level))
                return f"{self.access()}.{self.random.choice(METHODS)}({', '.join(args)})"
            case 5:
                pairs = [f"{self.random.choice(PROPERTIES)}: {self.expr(depth + 1)}" for _ in range(self.random.randrange(3))]
                return "{ " + ", ".join(dict.fromkeys(pairs)) + " }" if pairs else "{}"
            case 6:
                return "[" + ", ".join(self.expr(depth + 1) for _ in range(self.random.randrange(3))) + "]"
        return f"new MongoClient({self.literal()})"

    def statement(self, depth: int) -> list[str]:
        self.level = depth
        pad = "  " * depth
        match self.random.randrange(7 if depth < 3 else 4):
            case 0:
                keyword = self.random.choice(("const", "let", "var"))
                return [f"{pad}{keyword} {self.random.choice(NAMES)} = {self.expr()};"]
            case 1:
                return [f"{pad}{self.access()} = {self.expr()};"]
            case 2:
                return [f"{pad}{self.random.choice(FUNCTIONS)}({self.expr()});"]
            case 3:
                return [f"{pad}{self.access()}.{self.random.choice(METHODS)}({self.expr()}, {self.callback(depth)});"]
            case 4:
                text = f"{pad}if ({self.expr()}) {self.block(depth)}"
                if self.random.random() < 0.5:
                    text += f" else {self.block(depth)}"
                return [text]
            case 5:
                return [f"{pad}while ({self.expr()}) {self.block(depth)}"]
        params = ", ".join(self.random.sample(NAMES, self.random.randrange(3)))
        return [f"{pad}function {self.random.choice(FUNCTIONS)}({params}) {self.block(depth, returns=True)}"]

    def block(self, depth: int, returns: bool = False) -> str:
        lines = [line for _ in range(self.random.randrange(3) if depth < 5 else 0) for line in self.statement(depth + 1)]
        if returns:
            lines.append(f"{'  ' * (depth + 1)}return {self.expr()};")
        if not lines:
            return "{}"
        return "{\n" + "\n".join(lines) + "\n" + "  " * depth + "}"

    def program(self) -> str:
        return "\n".join(line for _ in range(self.random.randrange(1, 6)) for line in self.statement(0)) + "\n"


CONTAINERS = {"users": "user", "movies": "movie", "orders": "order", "carts": "cart", "books": "book"}
FIELDS = ("name", "email", "title", "price", "status", "total")


def database_program(seed: int) -> tuple[str, dict[str, set[str]]]:
    """Nested reads using literal filters, and the fields each container is expected to hold.

    Each callback logs fields of its own result and of the results of the enclosing reads.
    """
    rng = random.Random(seed)
    containers = rng.sample(sorted(CONTAINERS), rng.randint(1, 3))
    expected: dict[str, set[str]] = {}
    lines = ["const db = client.db('app');"]
    opened: list[str] = []
    for depth, container in enumerate(containers):
        pad = "  " * depth
        variable = CONTAINERS[container]
        key = rng.choice(FIELDS)
        expected[container] = {"_id", key}
        lines.append(f"{pad}db.collection('{container}').findOne({{ {key}: 'x' }}, (err, {variable}) => {{")
        opened.append(container)
        for _ in range(rng.randrange(4)):
            owner = rng.choice(opened)
            field = rng.choice(FIELDS)
            expected[owner].add(field)
            lines.append(f"{pad}  console.log({CONTAINERS[owner]}.{field});")
    for depth in reversed(range(len(containers))):
        lines.append("  " * depth + "});")
    return "\n".join(lines) + "\n", expected


@pytest.fixture
def programs() -> list[str]:
    return [ProgramGenerator(seed).program() for seed in range(200)]
