"""
Logging Setup - structured logs on stderr
JSON records by default, plain text when NONLOCAL_LOG_FORMAT=text
"""

import logging
import logging.config
from typing import Any, Dict, Optional

from config import LOG_FORMAT, LOG_LEVEL

# noisy third-party loggers kept at WARNING whatever the level
_QUIET_LOGGERS = ("matplotlib", "asyncio")


def logging_config(level: Optional[str] = None, fmt: Optional[str] = None) -> Dict[str, Any]:
    level = (level or LOG_LEVEL).upper()
    fmt = (fmt or LOG_FORMAT).lower()
    formatters = {
        "json": {
            "()": "pythonjsonlogger.jsonlogger.JsonFormatter",
            "fmt": "%(asctime)s %(levelname)s %(name)s %(message)s",
        },
        "text": {
            "format": "%(asctime)s %(levelname)-7s %(name)s: %(message)s",
        },
    }
    return {
        "version": 1,
        "disable_existing_loggers": False,
        "formatters": formatters,
        "handlers": {
            "stderr": {
                "class": "logging.StreamHandler",
                "stream": "ext://sys.stderr",
                "formatter": "text" if fmt == "text" else "json",
            },
        },
        "loggers": {name: {"level": "WARNING"} for name in _QUIET_LOGGERS},
        "root": {
            "handlers": ["stderr"],
            "level": level,
        },
    }


def configure_logging(level: Optional[str] = None, fmt: Optional[str] = None) -> None:
    """Call once at startup; reports never depend on what is logged"""
    logging.config.dictConfig(logging_config(level, fmt))
    logging.captureWarnings(True)
