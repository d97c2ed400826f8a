"""Run configuration files.

One INI section per RunConfig section. Lists are comma-separated, maps are
`key=value` pairs, the learning-rate schedule is `epoch:multiplier` pairs:

    [activation]
    kind = lp_relu2
    params = A=5.0,B=8.1
    [optim]
    schedule = 50:0.2,100:0.2,140:0.2
"""

from __future__ import annotations

import configparser
import logging
from pathlib import Path
from typing import Any, Dict, Optional

from pydantic import BaseModel, ValidationError

from .errors import ConfigError
from .models import RunConfig

logger = logging.getLogger(__name__)

LIST_KEYS = {("eval", "kinds"), ("eval", "severities"), ("eval", "fp_kinds")}
MAP_KEYS = {("activation", "params"), ("activation", "learnable")}
SCHEDULE_KEYS = {("optim", "schedule")}


def _split(text: str) -> list:
    return [item.strip() for item in text.split(",") if item.strip()]


def parse_pairs(text: str, sep: str = "=") -> Dict[str, str]:
    pairs = {}
    for item in _split(text):
        key, found, value = item.partition(sep)
        if not found or not key.strip():
            raise ConfigError(f"Expected key{sep}value, got '{item}'")
        pairs[key.strip()] = value.strip()
    return pairs


def parse_schedule(text: str) -> list:
    try:
        return [(int(epoch), float(mult)) for epoch, mult in parse_pairs(text, ":").items()]
    except ValueError:
        raise ConfigError(f"Bad schedule '{text}', expected epoch:multiplier,...") from None


def _from_text(section: str, key: str, text: str) -> Any:
    if (section, key) in LIST_KEYS:
        return _split(text)
    if (section, key) in MAP_KEYS:
        return parse_pairs(text)
    if (section, key) in SCHEDULE_KEYS:
        return parse_schedule(text)
    return None if text.strip() == "" else text.strip()


def _to_text(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, dict):
        return ",".join(f"{k}={_to_text(v)}" for k, v in value.items())
    if isinstance(value, (list, tuple)) and value and isinstance(value[0], (list, tuple)):
        return ",".join(f"{e}:{_to_text(float(m))}" for e, m in value)
    if isinstance(value, (list, tuple)):
        return ",".join(_to_text(v) for v in value)
    return str(value)


def read_sections(path) -> Dict[str, Dict[str, Any]]:
    parser = configparser.ConfigParser(interpolation=None)
    path = Path(path)
    try:
        if not parser.read(path, encoding="utf-8"):
            raise ConfigError(f"Config file not found: {path}")
    except configparser.Error as e:
        raise ConfigError(f"{path}: {e}") from None
    fields = RunConfig.model_fields
    sections: Dict[str, Dict[str, Any]] = {}
    for name in parser.sections():
        if name not in fields:
            raise ConfigError(f"{path}: unknown section [{name}]")
        known = fields[name].annotation.model_fields
        for key, text in parser[name].items():
            if key not in known:
                raise ConfigError(f"{path}: unknown key '{key}' in [{name}]")
            sections.setdefault(name, {})[key] = _from_text(name, key, text)
    return sections


def merge(base: Dict[str, Dict[str, Any]], overrides: Dict[str, Dict[str, Any]]) -> Dict[str, Dict[str, Any]]:
    out = {name: dict(values) for name, values in base.items()}
    for name, values in overrides.items():
        out.setdefault(name, {}).update({k: v for k, v in values.items() if v is not None})
    return out


def load_config(path: Optional[str] = None, overrides: Optional[Dict[str, Dict[str, Any]]] = None) -> RunConfig:
    """Defaults, then the file, then flag overrides (None values are ignored)."""
    sections = read_sections(path) if path else {}
    sections = merge(sections, overrides or {})
    try:
        config = RunConfig.model_validate(sections)
    except ValidationError as e:
        first = e.errors()[0]
        where = ".".join(str(p) for p in first["loc"])
        raise ConfigError(f"Invalid config {where}: {first['msg']}") from None
    logger.debug("Effective config: %s", config.model_dump())
    return config


def write_config(config: RunConfig, path) -> Path:
    parser = configparser.ConfigParser(interpolation=None)
    for name in RunConfig.model_fields:
        section: BaseModel = getattr(config, name)
        parser[name] = {key: _to_text(getattr(section, key)) for key in type(section).model_fields}
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        parser.write(f)
    return path
