"""
Error Handling - maps failures around a command to exit codes
0 success, 1 config error, 2 numerical guard, 3 acceptance failure
"""

import json
import logging
import sys
from typing import Callable, Optional, TextIO

from pydantic import ValidationError

from api.errors import ConfigError, NonlocalError

logger = logging.getLogger(__name__)

EXIT_CONFIG = ConfigError.exit_code


def run_guarded(command: Callable[[], int], stream: Optional[TextIO] = None) -> int:
    """
    Run command and turn known failures into an exit code

    Args:
        command: Zero-argument callable returning an exit code
        stream: Where the one-line error message goes; stderr by default

    Returns:
        The command's code, or the code of the failure it raised
    """
    stream = stream or sys.stderr
    try:
        return command()
    except NonlocalError as exc:
        logger.error(
            "command failed",
            extra={"error": type(exc).__name__, "guard": exc.guard, "hypothesis": exc.hypothesis, "exit_code": exc.exit_code},
        )
        print(f"error: {exc.describe()}", file=stream)
        return exc.exit_code
    except ValidationError as exc:
        logger.error("config validation failed", extra={"errors": exc.error_count()})
        print(f"error: invalid config: {exc}", file=stream)
        return EXIT_CONFIG
    except json.JSONDecodeError as exc:
        print(f"error: config is not valid JSON: {exc}", file=stream)
        return EXIT_CONFIG
