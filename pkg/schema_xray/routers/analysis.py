import logging
from collections.abc import Callable

from fastapi import APIRouter, HTTPException, Response, status
from pydantic import Field

from ..control_flow import export_graph
from ..errors import FormatError, PlanStaleError, ProjectSyntaxError, SchemaXrayError, SourceSyntaxError
from ..models.base import XrayModel, canonical_json
from ..models.code import ParseMode
from ..models.dos import ExtractOptions
from ..models.plans import PlanList
from ..pipeline import Analysis, analyze_sources
from ..uschema import serialize

logger = logging.getLogger(__name__)

router = APIRouter(prefix="/analysis", tags=["analysis"])


class AnalysisRequest(XrayModel):
    """Sources to analyze, keyed by relative path."""

    files: dict[str, str] = Field(..., description="Source text keyed by relative path")
    mode: ParseMode = ParseMode.STRICT
    payload_structures: bool = True


def _status(error: SchemaXrayError) -> int:
    match error:
        case SourceSyntaxError() | ProjectSyntaxError() | FormatError():
            return status.HTTP_422_UNPROCESSABLE_ENTITY
        case PlanStaleError():
            return status.HTTP_409_CONFLICT
    return status.HTTP_400_BAD_REQUEST


def _respond(request: AnalysisRequest, render: Callable[[Analysis], str]) -> Response:
    logger.info(f"API request to analyze {len(request.files)} file(s)")
    try:
        analysis = analyze_sources(
            request.files, mode=request.mode, options=ExtractOptions(payload_structures=request.payload_structures)
        )
        return Response(content=render(analysis), media_type="application/json")
    except SchemaXrayError as e:
        logger.warning(f"Analysis failed: {e}")
        raise HTTPException(status_code=_status(e), detail=str(e)) from e


@router.post("/schema", status_code=status.HTTP_200_OK)
async def extract_schema(request: AnalysisRequest) -> Response:
    """Extract the U-Schema model of the sources."""
    return _respond(request, lambda analysis: serialize(analysis.schema))


@router.post("/cfg", status_code=status.HTTP_200_OK)
async def extract_cfg(request: AnalysisRequest) -> Response:
    return _respond(request, lambda analysis: export_graph(analysis.cfg, "json"))


@router.post("/dos", status_code=status.HTTP_200_OK)
async def extract_dos(request: AnalysisRequest) -> Response:
    """Extract the database operations and the structures they read and write."""
    return _respond(request, lambda analysis: canonical_json(analysis.dos))


@router.post("/plans", status_code=status.HTTP_200_OK)
async def list_plans(request: AnalysisRequest) -> Response:
    """Join removal plans of the sources, partial ones included."""
    return _respond(request, lambda analysis: canonical_json(PlanList(plans=analysis.plans())))
