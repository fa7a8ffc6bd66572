import configparser
import logging
from pathlib import Path
from typing import Any, Dict, Mapping, Optional

from dotenv import load_dotenv
from pydantic import Field, ValidationError
from pydantic_settings import BaseSettings, SettingsConfigDict

from app.exceptions import ConfigurationError
from app.schemas import ExperimentConfig, SweepConfig

load_dotenv()

SECTIONS = ("graph", "problem", "solver", "output")
LIST_KEYS = {("graph", "p"), ("solver", "name")}


class Settings(BaseSettings):
    log_level: str = "INFO"
    workers: int = Field(1, ge=1)
    divergence_threshold: float = Field(1e12, gt=0.0)

    model_config = SettingsConfigDict(env_prefix="DATOS_", extra="ignore")


def get_settings() -> Settings:
    return Settings()


def configure_logging(level: str = "INFO") -> None:
    logging.basicConfig(
        level=getattr(logging, level.upper(), logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        force=True,
    )


# ---------- experiment files ----------


def _read_sections(path: str | Path) -> Dict[str, Dict[str, str]]:
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"config file not found: {path}")
    parser = configparser.ConfigParser(
        inline_comment_prefixes=("#", ";"),
        comment_prefixes=("#", ";"),
        interpolation=None,
    )
    try:
        parser.read(path, encoding="utf-8")
    except configparser.Error as e:
        raise ConfigurationError(f"{path}: {e}")
    raw: Dict[str, Dict[str, str]] = {}
    for section in parser.sections():
        if section not in SECTIONS:
            raise ConfigurationError(f"{path}: unknown section [{section}]; expected one of {', '.join(SECTIONS)}")
        raw[section] = dict(parser.items(section))
    return raw


def _apply_overrides(raw: Dict[str, Dict[str, Any]], overrides: Optional[Mapping[str, Any]]) -> None:
    """Overrides use dotted keys, e.g. {"solver.name": "local_datos"}; None values are skipped."""
    for dotted, value in (overrides or {}).items():
        if value is None:
            continue
        section, _, key = dotted.partition(".")
        raw.setdefault(section, {})[key] = value


def _validation_message(err: ValidationError) -> str:
    parts = []
    for e in err.errors():
        where = ".".join(str(loc) for loc in e["loc"])
        parts.append(f"{where}: {e['msg']}")
    return "; ".join(parts)


def parse_experiment(raw: Mapping[str, Mapping[str, Any]]) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(raw)
    except ValidationError as e:
        raise ConfigurationError(_validation_message(e))


def load_experiment(path: str | Path, overrides: Optional[Mapping[str, Any]] = None) -> ExperimentConfig:
    raw = _read_sections(path)
    _apply_overrides(raw, overrides)
    return parse_experiment(raw)


def _split_list(value: Any) -> list:
    if isinstance(value, (list, tuple)):
        return list(value)
    return [item.strip() for item in str(value).split(",") if item.strip()]


def load_sweep(path: str | Path, overrides: Optional[Mapping[str, Any]] = None) -> SweepConfig:
    """
    Sweep files share the experiment grammar; graph.p and solver.name may be
    comma-separated lists and span the (solver x p) grid.
    """
    raw = _read_sections(path)
    _apply_overrides(raw, overrides)
    lists = {}
    for section, key in LIST_KEYS:
        lists[(section, key)] = _split_list(raw.get(section, {}).pop(key, ""))
    try:
        ps = [float(p) for p in lists[("graph", "p")]]
    except ValueError as e:
        raise ConfigurationError(f"graph.p: {e}")
    base = parse_experiment(raw)
    try:
        return SweepConfig(base=base, solvers=lists[("solver", "name")], ps=ps)
    except ValidationError as e:
        raise ConfigurationError(_validation_message(e))
