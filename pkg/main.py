"""
CLI Entry Point - nonlocal Hölder-space experiments
run(argv) -> exit code; 0 ok, 1 config error, 2 numerical guard, 3 acceptance failure
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

from api.commands import COMMANDS, run_verify_all
from api.models import ExperimentConfig
from middleware.error_handling import EXIT_CONFIG, run_guarded
from middleware.logging_setup import configure_logging
from utils.overrides import load_config
from utils.report_writer import ReportWriter

logger = logging.getLogger(__name__)

DEFAULT_CONFIG_DIR = Path(__file__).resolve().parent / "configs"
DEFAULT_OUTPUT_ROOT = Path("out")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nonlocal-holder", description="Hölder-space estimates for nonlocal operators")
    parser.add_argument("--log-level", default=None, help="overrides NONLOCAL_LOG_LEVEL")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")
    for name in COMMANDS:
        cmd = sub.add_parser(name, help=f"run the {name} experiment")
        cmd.add_argument("--config", required=True, help="experiment config (JSON)")
        cmd.add_argument("--output-dir", default=None, help="defaults to the config's output_dir, then out/<command>")
        cmd.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY.PATH=VALUE")
    verify = sub.add_parser("verify-all", help="run every acceptance check")
    verify.add_argument("--config-dir", default=str(DEFAULT_CONFIG_DIR))
    verify.add_argument("--output-dir", default=None)
    sub.add_parser("schema", help="print the config JSON schema")
    return parser


def _output_dir(args: argparse.Namespace, cfg: Optional[ExperimentConfig] = None) -> Path:
    if args.output_dir:
        return Path(args.output_dir)
    if cfg is not None and cfg.output_dir:
        return Path(cfg.output_dir)
    return DEFAULT_OUTPUT_ROOT / args.command


def dispatch(args: argparse.Namespace) -> int:
    if args.command == "schema":
        print(json.dumps(ExperimentConfig.model_json_schema(), indent=2, sort_keys=True))
        return 0
    if args.command == "verify-all":
        writer = ReportWriter(_output_dir(args))
        try:
            return run_verify_all(Path(args.config_dir), writer)
        finally:
            writer.write_manifest("verify-all", "", [], {"config_dir": str(args.config_dir)})
    cfg = load_config(args.config, args.overrides)
    writer = ReportWriter(_output_dir(args, cfg))
    logger.info("command started", extra={"command": args.command, "config_hash": cfg.config_hash()})
    code = COMMANDS[args.command](cfg, writer)
    writer.write_manifest(args.command, cfg.config_hash(), cfg.seeds, {"config": cfg.model_dump(mode="json")})
    return code


def run(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # --help exits 0; usage errors map to the config-error code
        return 0 if exc.code == 0 else EXIT_CONFIG
    configure_logging(args.log_level)
    return run_guarded(lambda: dispatch(args))


if __name__ == "__main__":
    sys.exit(run())
