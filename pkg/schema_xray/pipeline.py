"""The analysis pipeline: code model, control flow, DOS model, schema and join removal plans."""

import logging
from collections.abc import Iterable
from dataclasses import dataclass, field
from pathlib import Path

from .control_flow import build_cfg
from .dos_extract import extract_dos
from .models.code import CodeModel, ParseMode
from .models.control_flow import ControlFlowModel
from .models.dos import DOSModel, ExtractOptions
from .models.plans import JoinRemovalPlan
from .models.profile import ApiProfile, load_profile
from .models.uschema import USchemaModel
from .parser import DEFAULT_INCLUDE, inject_project, inject_sources
from .refactor import build_plans, detect_duplications
from .typing_inference import infer_local_types
from .uschema import to_uschema

logger = logging.getLogger(__name__)


@dataclass
class Analysis:
    """Every model derived from one code base.

    `dos` is the extracted model the schema is mapped from; `marked` is the same model
    annotated with the fields each join would copy, which plans are built from.
    """

    code: CodeModel
    cfg: ControlFlowModel
    dos: DOSModel
    schema: USchemaModel
    profile: ApiProfile
    marked: DOSModel | None = None
    _plans: list[JoinRemovalPlan] | None = field(default=None, repr=False)

    def plans(self) -> list[JoinRemovalPlan]:
        if self._plans is None:
            self.marked = detect_duplications(self.cfg, self.dos, self.code, self.profile)
            self._plans = build_plans(self.marked, self.code, self.profile)
        return self._plans


def analyze_code(
    code: CodeModel,
    profile: ApiProfile | None = None,
    options: ExtractOptions | None = None,
    name: str = "schema",
    include_references: bool = True,
) -> Analysis:
    profile = profile or load_profile()
    code = infer_local_types(code)
    cfg = build_cfg(code)
    dos = extract_dos(cfg, code, profile, options)
    schema = to_uschema(dos, name, include_references)
    return Analysis(code=code, cfg=cfg, dos=dos, schema=schema, profile=profile)


def analyze_sources(
    files: dict[str, str],
    profile: ApiProfile | None = None,
    mode: ParseMode = ParseMode.STRICT,
    options: ExtractOptions | None = None,
    name: str = "schema",
    include_references: bool = True,
) -> Analysis:
    """Run the whole pipeline over in-memory sources keyed by relative path."""
    return analyze_code(inject_sources(files, mode), profile, options, name, include_references)


def analyze_path(
    root: Path | str,
    profile: ApiProfile | None = None,
    mode: ParseMode = ParseMode.STRICT,
    options: ExtractOptions | None = None,
    include: Iterable[str] = DEFAULT_INCLUDE,
    max_workers: int = 4,
    include_references: bool = True,
) -> Analysis:
    """Run the whole pipeline over the files of a directory, the schema named after it."""
    root = Path(root)
    code = inject_project(root, include, mode, max_workers)
    analysis = analyze_code(code, profile, options, root.resolve().name or "schema", include_references)
    logger.info(f"Analyzed {root}: {len(analysis.dos.operations)} operations, {len(analysis.schema.entity_types)} entity types")
    return analysis
