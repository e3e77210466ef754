from schema_xray.models.code import PrimitiveType
from schema_xray.parser import inject_sources
from schema_xray.typing_inference import infer_local_types, resolve_evidence


def infer(source: str):
    return infer_local_types(inject_sources({"a.js": source}))


def test_literal_initialization_types_the_variable():
    model = infer("const name = 'Brian';\nlet count = 3;\nvar ratio = 0.5;\nconst done = true;\n")

    declared = {decl.name: decl.declared_type for decl in model.globals}
    assert declared == {
        "name": PrimitiveType.STRING,
        "count": PrimitiveType.INT,
        "ratio": PrimitiveType.DOUBLE,
        "done": PrimitiveType.BOOL,
    }


def test_comparison_with_literal_is_evidence():
    model = infer("if (user.stars >= 5) {\n  f();\n}\n")

    assert model.type_evidence["stars"] == PrimitiveType.INT
    user = next(c for c in model.classes if c.name == "user")
    assert [(p.name, p.type) for p in user.properties] == [("stars", PrimitiveType.INT)]


def test_filter_literal_is_evidence():
    model = infer("db.collection('users').findOne({ name: 'Brian' }, (err, user) => {});\n")

    assert model.type_evidence["name"] == PrimitiveType.STRING


def test_int_and_double_widen_to_double():
    model = infer("let total = 1;\ntotal = 2.5;\n")

    assert model.type_evidence["total"] == PrimitiveType.DOUBLE


def test_conflicting_evidence_falls_back_to_unknown_with_warning():
    model = infer("let value = 1;\nvalue = 'one';\n")

    assert model.type_evidence["value"] == PrimitiveType.UNKNOWN
    assert [w.code for w in model.warnings] == ["type-conflict"]


def test_variables_without_evidence_stay_unknown():
    model = infer("const client = new MongoClient(url);\n")

    assert model.globals[0].declared_type == PrimitiveType.UNKNOWN
    assert "client" not in model.type_evidence


def test_input_model_is_not_modified():
    code = inject_sources({"a.js": "const name = 'x';\n"})

    infer_local_types(code)

    assert code.globals[0].declared_type == PrimitiveType.UNKNOWN
    assert code.type_evidence == {}


def test_resolve_evidence():
    assert resolve_evidence({PrimitiveType.STRING}) == PrimitiveType.STRING
    assert resolve_evidence({PrimitiveType.NULL, PrimitiveType.INT}) == PrimitiveType.INT
    assert resolve_evidence({PrimitiveType.INT, PrimitiveType.DOUBLE}) == PrimitiveType.DOUBLE
    assert resolve_evidence({PrimitiveType.BOOL, PrimitiveType.STRING}) is None
