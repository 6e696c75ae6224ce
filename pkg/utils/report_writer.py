"""
Report Writer - JSON reports, CSV plot data, manifest.json
Everything an experiment emits goes through here
"""

import csv
import hashlib
import json
import logging
import platform
from datetime import datetime, timezone
from importlib import metadata
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence

import numpy as np
from pydantic import BaseModel

from api.models import RatioReport
from config import CSV_FLOAT_FORMAT, MANIFEST_NAME, REPORT_NAME
from utils.grid_io import GridObject, save_grid

logger = logging.getLogger(__name__)

_PACKAGES = ("numpy", "scipy", "mpmath", "pydantic", "python-json-logger", "python-dotenv")


def format_value(value: Any) -> str:
    """CSV cell text; floats are written with 17 significant digits"""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return CSV_FLOAT_FORMAT % float(value)
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if value is None:
        return ""
    return str(value)


def _jsonable(value: Any) -> Any:
    if isinstance(value, BaseModel):
        return value.model_dump(mode="json")
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"not JSON serializable: {type(value).__name__}")


def package_versions() -> Dict[str, str]:
    versions = {"python": platform.python_version()}
    for name in _PACKAGES:
        try:
            versions[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            versions[name] = "unknown"
    return versions


def file_digest(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


class ReportWriter:
    """Writes the files of one run under output_dir and records them for the manifest"""

    def __init__(self, output_dir: Path):
        self.output_dir = Path(output_dir)
        self.output_dir.mkdir(parents=True, exist_ok=True)
        self.written: List[Path] = []

    def _path(self, name: str) -> Path:
        path = self.output_dir / name
        path.parent.mkdir(parents=True, exist_ok=True)
        self.written.append(path)
        return path

    def write_json(self, name: str, payload: Any) -> Path:
        """
        Write a JSON document with sorted keys

        Args:
            name: File name relative to output_dir
            payload: dict, list or pydantic model

        Returns:
            Path of the written file
        """
        path = self._path(name)
        text = json.dumps(payload, default=_jsonable, indent=2, sort_keys=True)
        path.write_text(text + "\n", encoding="utf-8")
        logger.debug("json written", extra={"path": str(path)})
        return path

    def write_report(self, payload: Any) -> Path:
        return self.write_json(REPORT_NAME, payload)

    def write_csv(self, name: str, rows: Sequence[Dict[str, Any]], columns: Optional[Iterable[str]] = None) -> Path:
        """
        Write plot data, one dict per row

        Args:
            name: File name relative to output_dir
            rows: Rows sharing the same keys
            columns: Column order; defaults to the keys of the first row

        Returns:
            Path of the written file
        """
        path = self._path(name)
        header = list(columns) if columns is not None else (list(rows[0].keys()) if rows else [])
        with path.open("w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow([format_value(row.get(column)) for column in header])
        logger.debug("csv written", extra={"path": str(path), "rows": len(rows)})
        return path

    def write_grid(self, stem: str, obj: GridObject) -> Path:
        """Grid dump <stem>.f64 plus its JSON sidecar"""
        data = save_grid(self.output_dir / stem, obj)
        self.written.extend([data, data.with_suffix(".json")])
        return data

    def write_ratio_report(self, report: RatioReport) -> List[Path]:
        """report.json, ratios.csv (ratio per seed) and resolution.csv (c_hat per n)"""
        return [
            self.write_report(report),
            self.write_csv("ratios.csv", report.rows(), ["seed", "ratio"]),
            self.write_csv("resolution.csv", [p.model_dump() for p in report.resolution_trace], ["n", "c_hat"]),
        ]

    def write_manifest(
        self,
        command: str,
        config_hash: str,
        seeds: Sequence[int],
        extra: Optional[Dict[str, Any]] = None,
    ) -> Path:
        """manifest.json: config hash, seeds, versions and a digest per written file"""
        files = {str(p.relative_to(self.output_dir)): file_digest(p) for p in self.written if p.exists()}
        manifest = {
            "command": command,
            "config_hash": config_hash,
            "seeds": list(seeds),
            "versions": package_versions(),
            "created": datetime.now(timezone.utc).isoformat(),
            "files": files,
        }
        if extra:
            manifest.update(extra)
        path = self.output_dir / MANIFEST_NAME
        path.write_text(json.dumps(manifest, default=_jsonable, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        logger.info("manifest written", extra={"path": str(path), "files": len(files)})
        return path
