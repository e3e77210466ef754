from pathlib import Path
from typing import Annotated, Literal

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict

from .models.code import ParseMode
from .models.profile import BUNDLED_PROFILE


class Config(BaseSettings):
    model_config = SettingsConfigDict(env_prefix="schema_xray_", env_file=".env", extra="ignore")

    profile: Path = BUNDLED_PROFILE
    mode: ParseMode = ParseMode.STRICT
    payload_structures: Annotated[
        bool, Field(description="Derive structure from the payloads of inserts and updates.")
    ] = True
    output_format: Literal["json", "text", "dot"] = "text"
    include: list[str] = ["**/*.js"]
    max_workers: Annotated[int, Field(description="Threads parsing the files of a project.", gt=0)] = 4

    debug: bool = False
    log_config: Path = Path("log_config.yml")

    app_name: str = "schema-xray"
    app_description: str = "Extract the implicit schema of document-store applications and remove their joins."
    app_version: str = "0.1.0"


config = Config()
