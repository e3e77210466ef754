import logging
from collections.abc import AsyncGenerator
from contextlib import asynccontextmanager
from typing import Any

from fastapi import FastAPI
from fastapi.responses import RedirectResponse

from .config import config
from .models.profile import load_profile
from .routers import analysis

logger = logging.getLogger(__name__)


@asynccontextmanager
async def lifespan(app: FastAPI) -> AsyncGenerator[None, Any]:
    profile = load_profile(config.profile)
    logger.info(f"Serving with profile {config.profile} ({len(profile.entries)} methods)")
    yield


app = FastAPI(
    lifespan=lifespan,
    debug=config.debug,
    title=config.app_name,
    description=config.app_description,
    version=config.app_version,
)
app.include_router(analysis.router, prefix="/api/v1")


@app.get("/", include_in_schema=False)
async def docs_redirect() -> RedirectResponse:
    return RedirectResponse(url="/docs")
