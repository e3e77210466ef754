"""
Command line surface of the analysis pipeline.

Usage:
    schema-xray analyze fixtures/fwm --out out/
    schema-xray plans fixtures/music
    schema-xray apply fixtures/fwm --plan 1 --out rewritten/
    schema-xray roundtrip check --spec music
"""

import argparse
import logging
import logging.config
import sys
from collections.abc import Callable, Sequence
from pathlib import Path

import uvicorn
import yaml

from .config import config
from .control_flow import export_graph
from .errors import SchemaXrayError, UsageError
from .generator import generate_app
from .migration import emit_copy
from .models.base import canonical_json
from .models.code import ParseMode
from .models.dos import ExtractOptions
from .models.plans import JoinRemovalPlan, PlanList
from .models.profile import load_profile
from .parser import collect_files
from .pipeline import Analysis, analyze_path
from .refactor import apply_plan, render_plan_table
from .roundtrip import load_spec, run_roundtrip
from .uschema import render, serialize

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2

DEFAULT_OUT = Path("schema-xray-out")


def configure_logging(verbosity: int, log_config: Path | None) -> None:
    """Apply the dictConfig file when it exists, else log to stderr at a level set by `-v`."""
    if log_config is not None and log_config.is_file():
        with log_config.open(encoding="utf-8") as f:
            logging.config.dictConfig(yaml.safe_load(f))
        if verbosity:
            logging.getLogger("schema_xray").setLevel(logging.DEBUG if verbosity > 1 else logging.INFO)
        return
    level = {0: logging.WARNING, 1: logging.INFO}.get(verbosity, logging.DEBUG)
    logging.basicConfig(level=level, format="%(asctime)s - %(levelname)s - %(name)s - %(message)s", force=True)


def _write(files: dict[Path, str]) -> None:
    for path, text in files.items():
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
        logger.info(f"Wrote {path}")


def _source(args: argparse.Namespace) -> Path:
    path = Path(args.path)
    if not path.exists():
        raise UsageError(f"{path} does not exist")
    return path


def _analyze(args: argparse.Namespace) -> Analysis:
    profile = Path(args.profile)
    if not profile.is_file():
        raise UsageError(f"Profile {profile} does not exist")
    return analyze_path(
        _source(args),
        profile=load_profile(profile),
        mode=ParseMode(args.mode),
        options=ExtractOptions(payload_structures=args.payload_structures),
        include=config.include,
        max_workers=config.max_workers,
        include_references=not getattr(args, "no_references", False),
    )


def _plan(analysis: Analysis, plan_id: str) -> JoinRemovalPlan:
    plan = PlanList(plans=analysis.plans()).plan(plan_id)
    if plan is None:
        raise UsageError(f"No plan {plan_id}; run `plans` to list them")
    return plan


def cmd_analyze(args: argparse.Namespace) -> int:
    analysis = _analyze(args)
    out = Path(args.out)
    _write(
        {
            out / "code.json": canonical_json(analysis.code),
            out / "cfg.json": export_graph(analysis.cfg, "json"),
            out / "dos.json": canonical_json(analysis.dos),
            out / "uschema.json": serialize(analysis.schema),
        }
    )
    for diagnostic in analysis.code.warnings + analysis.dos.diagnostics:
        print(diagnostic, file=sys.stderr)
    print(
        f"{len(analysis.code.files())} file(s), {len(analysis.dos.operations)} database operation(s), "
        f"{len(analysis.dos.joins())} join(s), {len(analysis.schema.entity_types)} entity type(s)"
    )
    return EXIT_OK


def cmd_schema(args: argparse.Namespace) -> int:
    analysis = _analyze(args)
    print(serialize(analysis.schema) if args.format == "json" else render(analysis.schema, args.format), end="")
    return EXIT_OK


def cmd_cfg(args: argparse.Namespace) -> int:
    print(export_graph(_analyze(args).cfg, args.format), end="")
    return EXIT_OK


def cmd_dos(args: argparse.Namespace) -> int:
    print(canonical_json(_analyze(args).dos), end="")
    return EXIT_OK


def cmd_plans(args: argparse.Namespace) -> int:
    plans = _analyze(args).plans()
    _write({Path(args.out) / "plans.json": canonical_json(PlanList(plans=plans))})
    print(render_plan_table(plans), end="")
    for plan in plans:
        flag = " (partial)" if plan.partial else ""
        print(f"plan {plan.number}: {plan.id}{flag}")
    return EXIT_OK


def cmd_copy(args: argparse.Namespace) -> int:
    print(emit_copy(_plan(_analyze(args), args.plan)), end="")
    return EXIT_OK


def cmd_apply(args: argparse.Namespace) -> int:
    source, out = _source(args), Path(args.out)
    tree = source if source.is_dir() else source.parent
    if out.resolve() == tree.resolve():
        raise UsageError("--out must not be the analyzed tree; sources are never rewritten in place")
    analysis = _analyze(args)
    plan = _plan(analysis, args.plan)
    outcome = apply_plan(plan, analysis.code, analysis.schema, analysis.profile)
    texts = collect_files(source, config.include) | outcome.sources
    files = {out / path: text for path, text in texts.items()}
    files[out / "migration.js"] = outcome.migration_script
    files[out / "copy.txt"] = outcome.copy_statement
    files[out / "uschema.json"] = serialize(outcome.updated_schema)
    _write(files)
    for change in outcome.report:
        print(
            f"{change.path}: {change.removed_statements} statement(s) and {change.removed_stages} stage(s) removed, "
            f"{change.rewritten_accesses} access(es) rewritten"
        )
    return EXIT_OK


def cmd_roundtrip_gen(args: argparse.Namespace) -> int:
    files = generate_app(load_spec(args.spec), args.seed)
    _write({Path(args.out) / path: text for path, text in files.items()})
    print(f"Generated {len(files)} file(s) into {args.out}")
    return EXIT_OK


def cmd_roundtrip_check(args: argparse.Namespace) -> int:
    spec = load_spec(args.spec)
    report = run_roundtrip(spec, args.seed, include_references=not args.no_references, app=args.app)
    print(canonical_json(report), end="")
    return EXIT_OK if report.perfect else EXIT_FAILURE


def cmd_serve(args: argparse.Namespace) -> int:
    log_config = str(args.log_config) if args.log_config and Path(args.log_config).is_file() else None
    uvicorn.run("schema_xray.main:app", host=args.host, port=args.port, log_config=log_config)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="schema-xray", description=config.app_description)
    parser.add_argument("-v", "--verbose", action="count", default=0, help="-v for INFO, -vv for DEBUG")
    parser.add_argument("--log-config", type=Path, default=config.log_config, help="dictConfig YAML file")
    commands = parser.add_subparsers(dest="command", required=True)

    def command(name: str, handler: Callable[[argparse.Namespace], int], help: str) -> argparse.ArgumentParser:
        sub = commands.add_parser(name, help=help)
        sub.set_defaults(handler=handler)
        return sub

    def analysis(sub: argparse.ArgumentParser) -> argparse.ArgumentParser:
        sub.add_argument("path", help="Source file or directory")
        sub.add_argument("--profile", default=str(config.profile), help="API profile JSON (env SCHEMA_XRAY_PROFILE)")
        sub.add_argument("--mode", choices=[m.value for m in ParseMode], default=str(config.mode))
        sub.add_argument(
            "--no-payload-structures",
            dest="payload_structures",
            action="store_false",
            default=config.payload_structures,
            help="Do not derive structure from insert and update payloads",
        )
        return sub

    sub = analysis(command("analyze", cmd_analyze, "Write the code, CFG, DOS and schema models as JSON"))
    sub.add_argument("--out", default=str(DEFAULT_OUT))

    sub = analysis(command("schema", cmd_schema, "Print the extracted schema"))
    sub.add_argument("--format", choices=["text", "json", "dot"], default=config.output_format)
    sub.add_argument("--no-references", action="store_true", help="Leave reference features out")

    sub = analysis(command("cfg", cmd_cfg, "Export the control flow graph"))
    sub.add_argument("--format", choices=["dot", "graph-cypher", "json"], default="dot")

    analysis(command("dos", cmd_dos, "Print the database operation and structure model"))

    sub = analysis(command("plans", cmd_plans, "List join removal plans and write them as JSON"))
    sub.add_argument("--out", default=str(DEFAULT_OUT))

    sub = analysis(command("copy", cmd_copy, "Print the copy statement of a plan"))
    sub.add_argument("--plan", required=True, help="Plan id or number")

    sub = analysis(command("apply", cmd_apply, "Apply a plan, writing rewritten sources into --out"))
    sub.add_argument("--plan", required=True, help="Plan id or number")
    sub.add_argument("--out", required=True)

    roundtrip = commands.add_parser("roundtrip", help="Generate an application from a schema and score it")
    steps = roundtrip.add_subparsers(dest="step", required=True)
    sub = steps.add_parser("gen", help="Generate the application of a schema spec")
    sub.set_defaults(handler=cmd_roundtrip_gen)
    sub.add_argument("--spec", required=True, help="Spec file, or the name of a bundled spec")
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--out", required=True)
    sub = steps.add_parser("check", help="Extract the schema of a generated application and compare")
    sub.set_defaults(handler=cmd_roundtrip_check)
    sub.add_argument("--spec", required=True, help="Spec file, or the name of a bundled spec")
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--app", default=None, help="Already generated application; generated in memory otherwise")
    sub.add_argument("--no-references", action="store_true", help="Leave reference features out of the extraction")

    sub = command("serve", cmd_serve, "Serve the HTTP API")
    sub.add_argument("--host", default="127.0.0.1")
    sub.add_argument("--port", type=int, default=8000)
    return parser


def run(argv: Sequence[str] | None = None) -> int:
    """Run one command and return its exit code: 0 on success, 1 on analysis failure, 2 on bad usage."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_USAGE
    configure_logging(args.verbose, args.log_config)
    try:
        return args.handler(args)
    except UsageError as e:
        print(f"schema-xray: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except SchemaXrayError as e:
        logger.error(f"{args.command} failed: {e}")
        print(f"schema-xray: {e}", file=sys.stderr)
        return EXIT_FAILURE


def main() -> None:
    sys.exit(run())
