"""
Grid I/O - raw little-endian float64 dumps with JSON sidecars
Round-trips GridFunction, HeatKernelGrid and SymbolTable
"""

import json
import logging
from pathlib import Path
from typing import Union

import numpy as np

from api.errors import ConfigError
from services.funcspace import GridFunction, GridSpec
from services.heatkernel import HeatKernelGrid, SymbolTable

logger = logging.getLogger(__name__)

GridObject = Union[GridFunction, HeatKernelGrid, SymbolTable]
DTYPE = "<f8"


def save_grid(stem: Union[str, Path], obj: GridObject) -> Path:
    """
    Write <stem>.f64 and <stem>.json

    Args:
        stem: Output path without suffix
        obj: Grid object to dump

    Returns:
        Path of the .f64 file
    """
    stem = Path(stem)
    stem.parent.mkdir(parents=True, exist_ok=True)
    sidecar = {"dtype": DTYPE}
    if isinstance(obj, HeatKernelGrid):
        values, period, n, dim = obj.grid.values, obj.grid.period, obj.grid.n, obj.grid.dim
        sidecar.update(kind="heat_kernel", t=obj.t, label=obj.label, spectral_cutoff=obj.spectral_cutoff)
    elif isinstance(obj, SymbolTable):
        values, period, n, dim = obj.values, obj.grid.period, obj.grid.n, obj.grid.dim
        sidecar.update(kind="symbol", label=obj.label)
    elif isinstance(obj, GridFunction):
        values, period, n, dim = obj.values, obj.period, obj.n, obj.dim
        sidecar.update(kind="grid_function")
    else:
        raise TypeError(f"cannot dump {type(obj).__name__}")
    sidecar.update(n=n, dim=dim, period=period, shape=list(values.shape))
    data_path = stem.with_suffix(".f64")
    np.ascontiguousarray(values, dtype=DTYPE).tofile(data_path)
    stem.with_suffix(".json").write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    logger.debug("grid dumped", extra={"path": str(data_path), "kind": sidecar["kind"]})
    return data_path


def load_grid(stem: Union[str, Path]) -> GridObject:
    """Inverse of save_grid"""
    stem = Path(stem)
    if stem.suffix in (".f64", ".json"):
        stem = stem.with_suffix("")
    try:
        sidecar = json.loads(stem.with_suffix(".json").read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"unreadable sidecar for {stem}: {exc}") from exc
    values = np.fromfile(stem.with_suffix(".f64"), dtype=sidecar.get("dtype", DTYPE))
    shape = tuple(sidecar["shape"])
    if values.size != int(np.prod(shape)):
        raise ConfigError(f"{stem}.f64 holds {values.size} values, sidecar says {shape}")
    values = values.reshape(shape)
    kind = sidecar["kind"]
    if kind == "grid_function":
        return GridFunction(values, sidecar["period"])
    if kind == "symbol":
        grid = GridSpec(sidecar["n"], sidecar["dim"], sidecar["period"])
        return SymbolTable(grid, values.copy(), sidecar.get("label", ""))
    if kind == "heat_kernel":
        return HeatKernelGrid(
            t=sidecar["t"],
            grid=GridFunction(values, sidecar["period"]),
            spectral_cutoff=sidecar["spectral_cutoff"],
            label=sidecar.get("label", ""),
        )
    raise ConfigError(f"unknown grid kind '{kind}' in {stem}.json")
