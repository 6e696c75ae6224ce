"""
Config Loading - JSON files, dotted-path overrides, schema validation
"""

import copy
import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

from pydantic import ValidationError

from api.errors import ConfigError
from api.models import ExperimentConfig

logger = logging.getLogger(__name__)

# free-form mappings where overrides may add keys
_OPEN_KEYS = ("params",)


def parse_override(text: str) -> Tuple[List[str], Any]:
    """
    Split 'a.b.c=value'

    The value is parsed as JSON when possible and kept as a string otherwise.
    """
    path, sep, raw = text.partition("=")
    if not sep or not path.strip():
        raise ConfigError(f"override '{text}' is not of the form key.path=value")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return [part for part in path.strip().split(".")], value


def apply_override(data: Dict[str, Any], path: Sequence[str], value: Any) -> None:
    node: Any = data
    for depth, key in enumerate(path):
        last = depth == len(path) - 1
        if isinstance(node, list):
            try:
                index = int(key)
                node[index]
            except (ValueError, IndexError) as exc:
                raise ConfigError(f"override path {'.'.join(path)}: bad list index '{key}'") from exc
            if last:
                node[index] = value
                return
            node = node[index]
            continue
        if not isinstance(node, dict):
            raise ConfigError(f"override path {'.'.join(path)}: '{key}' goes below a scalar")
        open_mapping = depth > 0 and path[depth - 1] in _OPEN_KEYS
        if key not in node and not (last and open_mapping):
            raise ConfigError(f"unknown config path '{'.'.join(path)}'")
        if last:
            node[key] = value
            return
        if node[key] is None:
            raise ConfigError(f"'{'.'.join(path[: depth + 1])}' is unset; override it as a whole")
        node = node[key]


def validate_config(data: Dict[str, Any]) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        problems = "; ".join(f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}" for err in exc.errors())
        raise ConfigError(f"invalid config: {problems}") from exc


def load_config(
    source: Optional[Union[str, Path, Dict[str, Any]]],
    overrides: Sequence[str] = (),
) -> ExperimentConfig:
    """
    Read, override and validate an experiment configuration

    Args:
        source: Path of a JSON file, or an already parsed mapping
        overrides: 'key.path=value' strings applied after defaults are filled in

    Returns:
        Validated ExperimentConfig

    Raises:
        ConfigError: unreadable file, bad JSON, unknown override path or schema violation
    """
    if source is None:
        raise ConfigError("no config given; pass --config")
    if isinstance(source, dict):
        raw = copy.deepcopy(source)
    else:
        try:
            raw = json.loads(Path(source).read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read config {source}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {source} is not valid JSON: {exc}") from exc
    cfg = validate_config(raw)
    if not overrides:
        return cfg
    data = cfg.model_dump(mode="json")
    for text in overrides:
        path, value = parse_override(text)
        apply_override(data, path, value)
    logger.debug("overrides applied", extra={"overrides": list(overrides)})
    return validate_config(data)
