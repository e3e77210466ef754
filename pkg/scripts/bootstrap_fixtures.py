#!/usr/bin/env python
"""
Bootstrap script generating sample applications from the bundled schema specs.

Each application is written under `fixtures/generated/<spec>/`, then extracted back
and scored, so a broken generator or extractor shows up before the test suite runs.

Usage:
    uv run python -m scripts.bootstrap_fixtures
"""

import logging
import sys
from pathlib import Path

sys.path.append(".")  # Add the current directory to path for imports

from schema_xray.errors import SchemaXrayError
from schema_xray.generator import generate_app
from schema_xray.roundtrip import load_spec, run_roundtrip

# Configure logging
logging.basicConfig(
    level=logging.INFO,
    format="%(asctime)s - %(levelname)s - %(message)s",
    handlers=[logging.StreamHandler()],
)
logger = logging.getLogger(__name__)

SAMPLE_SPECS: list[str] = ["music"]
SEEDS: list[int] = [0]
OUT = Path("fixtures") / "generated"


def write_app(name: str, seed: int) -> Path:
    """
    Generate the application of a bundled spec and write it to disk.

    Parameters
    ----------
    name : str
        Name of the bundled spec
    seed : int
        Generation seed

    Returns
    -------
    Path
        Directory the application was written to
    """
    target = OUT / (name if seed == 0 else f"{name}-{seed}")
    files = generate_app(load_spec(name), seed)
    for path, text in files.items():
        (target / path).parent.mkdir(parents=True, exist_ok=True)
        (target / path).write_text(text, encoding="utf-8")
    logger.info(f"Wrote {len(files)} files of {name} (seed {seed}) to {target}")
    return target


def check_app(name: str, app: Path) -> bool:
    report = run_roundtrip(load_spec(name), app=app)
    if not report.perfect:
        logger.error(f"{app} does not round trip: {report.model_dump(by_alias=True)}")
        return False
    logger.info(f"{app}: {report.op_count} operations, {report.join_count} joins, perfect recovery")
    return True


def main() -> None:
    """Main entry point for the bootstrap script."""
    try:
        logger.info("Starting fixture bootstrap process")
        results = [check_app(name, write_app(name, seed)) for name in SAMPLE_SPECS for seed in SEEDS]
    except SchemaXrayError as e:
        logger.exception(f"Error bootstrapping fixtures: {str(e)}")
        sys.exit(1)
    if not all(results):
        sys.exit(1)
    logger.info("Fixture bootstrapping completed successfully!")


if __name__ == "__main__":
    main()
