import json

import numpy as np
import pytest
from numpy.testing import assert_array_equal

from api.errors import ConfigError
from services.funcspace import GridFunction, GridSpec
from services.heatkernel import HeatKernelGrid, SymbolTable
from utils.grid_io import load_grid, save_grid


def test_grid_function_dump(tmp_path, cos_2d):
    path = save_grid(tmp_path / "f", cos_2d)
    assert path.stat().st_size == 64 * 64 * 8
    back = load_grid(path)
    assert isinstance(back, GridFunction)
    assert back.period == cos_2d.period
    assert_array_equal(back.values, cos_2d.values)


def test_symbol_and_density_keep_metadata(tmp_path):
    grid = GridSpec(32)
    symbol = SymbolTable.fractional(0.8, grid, 2.0)
    back = load_grid(save_grid(tmp_path / "s", symbol))
    assert isinstance(back, SymbolTable) and back.label == symbol.label
    assert_array_equal(back.values, symbol.values)

    kernel = HeatKernelGrid(t=0.5, grid=GridFunction.constant(1.0 / (2 * np.pi), 32), spectral_cutoff=1e-12, label="phi")
    sidecar = json.loads(save_grid(tmp_path / "q", kernel).with_suffix(".json").read_text())
    assert sidecar["kind"] == "heat_kernel" and sidecar["t"] == 0.5
    assert load_grid(tmp_path / "q").mass() == pytest.approx(1.0)


def test_truncated_data_is_rejected(tmp_path, cos_1024):
    path = save_grid(tmp_path / "f", cos_1024)
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(ConfigError, match="holds"):
        load_grid(path)


def test_missing_sidecar(tmp_path):
    with pytest.raises(ConfigError, match="unreadable sidecar"):
        load_grid(tmp_path / "nothing")
