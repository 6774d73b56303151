# tests/test_utils.py
import json
import os
from unittest.mock import patch

import numpy as np
import pytest

from fga_sh.errors import ContractError
from fga_sh.utils import (
    CACHE_DIR_ENV,
    WORKERS_ENV,
    WaveFunctionGrid,
    format_duration,
    get_cache_dir,
    get_worker_count,
    grid_points_for,
    is_power_of_two,
    read_wavefunction_csv,
    write_summary,
    write_wavefunction_csv,
)


def test_grid_layout():
    grid = WaveFunctionGrid(lower=-2.0, upper=2.0, n=8)
    assert grid.spacing == 0.5, "Wrong spacing"
    assert grid.axis[0] == -2.0 and grid.axis[-1] == 1.5, "Grid should exclude the upper end"
    assert grid.u0.shape == (8,) and grid.u0.dtype == complex, "Components should default to complex zeros"

    plane = WaveFunctionGrid(lower=0.0, upper=1.0, n=4, dimension=2)
    assert plane.points().shape == (4, 4, 2), "Wrong point array shape"
    assert plane.cell_volume == pytest.approx(1 / 16), "Wrong cell volume"
    assert plane.same_layout(plane.empty_like()), "empty_like should keep the layout"


def test_grid_errors():
    with pytest.raises(ContractError):
        WaveFunctionGrid(lower=1.0, upper=1.0, n=8)
    with pytest.raises(ContractError):
        WaveFunctionGrid(lower=0.0, upper=1.0, n=1)
    with pytest.raises(ContractError):
        WaveFunctionGrid(lower=0.0, upper=1.0, n=8, u0=np.zeros(7))
    with pytest.raises(ContractError):
        WaveFunctionGrid(lower=0.0, upper=1.0, n=8).component(2)


def test_copy_is_independent():
    grid = WaveFunctionGrid(lower=0.0, upper=1.0, n=4, u0=np.ones(4))
    clone = grid.copy()
    clone.u0[0] = 5.0
    assert grid.u0[0] == 1.0, "copy should not share storage"


def test_wavefunction_csv(temp_dir):
    grid = WaveFunctionGrid(lower=-1.0, upper=1.0, n=16, t=0.5)
    rng = np.random.default_rng(3)
    grid.u0 = rng.normal(size=16) + 1j * rng.normal(size=16)
    grid.u1 = rng.normal(size=16) + 1j * rng.normal(size=16)
    grid.stderr0 = np.abs(rng.normal(size=16))
    path = os.path.join(temp_dir, "psi.csv")
    write_wavefunction_csv(grid, path)

    with open(path) as f:
        assert f.readline().strip() == "x,re_u0,im_u0,re_u1,im_u1,stderr0,stderr1", "Wrong header"
    loaded = read_wavefunction_csv(path)
    assert loaded.same_layout(grid), "Layout not recovered"
    assert np.array_equal(loaded.u0, grid.u0) and np.array_equal(loaded.u1, grid.u1), "Values not exact"
    assert np.all(loaded.stderr1 == 0), "Missing errors should be written as zeros"

    again = os.path.join(temp_dir, "again.csv")
    write_wavefunction_csv(loaded, again)
    with open(path, "rb") as f_a, open(again, "rb") as f_b:
        assert f_a.read() == f_b.read(), "Rewriting should be byte-identical"


def test_csv_errors(temp_dir):
    path = os.path.join(temp_dir, "bad.csv")
    with open(path, "w") as f:
        f.write("a,b\n1,2\n3,4\n")
    with pytest.raises(ContractError):
        read_wavefunction_csv(path)
    with pytest.raises(ContractError):
        read_wavefunction_csv(os.path.join(temp_dir, "missing.csv"))
    with pytest.raises(ContractError):
        write_wavefunction_csv(WaveFunctionGrid(lower=0.0, upper=1.0, n=4, dimension=2), path)


def test_write_summary_numpy_values(temp_dir):
    path = os.path.join(temp_dir, "nested", "summary.json")
    write_summary({"count": np.int64(3), "rate": np.float64(0.25), "values": np.arange(2), "z": 1 + 2j}, path)
    with open(path) as f:
        data = json.load(f)
    assert data == {"count": 3, "rate": 0.25, "values": [0, 1], "z": {"re": 1.0, "im": 2.0}}, "Wrong JSON"


def test_get_worker_count():
    with patch.dict(os.environ, {WORKERS_ENV: "3"}):
        assert get_worker_count() == 3, "Environment override ignored"
    with patch.dict(os.environ, {WORKERS_ENV: "zero"}):
        assert get_worker_count(default=2) == 2, "Invalid value should fall back"
    with patch.dict(os.environ, {WORKERS_ENV: "0"}):
        assert get_worker_count(default=2) == 2, "Non-positive value should fall back"
    with patch.dict(os.environ, {WORKERS_ENV: ""}), patch("os.cpu_count", return_value=6):
        assert get_worker_count() == 6, "Should default to the CPU count"


def test_get_cache_dir(temp_dir):
    with patch.dict(os.environ, {CACHE_DIR_ENV: temp_dir}):
        assert get_cache_dir() == temp_dir, "Environment override ignored"
    with patch.dict(os.environ, {CACHE_DIR_ENV: ""}):
        assert get_cache_dir().endswith(os.path.join(".cache", "fga-sh")), "Wrong default cache dir"


def test_format_duration():
    assert format_duration(0.25) == "250 ms", "Wrong ms format"
    assert format_duration(12.34) == "12.3 s", "Wrong s format"
    assert format_duration(90) == "1.5 min", "Wrong min format"
    assert format_duration(5400) == "1.50 h", "Wrong h format"


def test_grid_point_helpers():
    assert is_power_of_two(1024) and not is_power_of_two(1000), "Wrong power-of-two test"
    assert not is_power_of_two(0), "0 is not a power of two"
    assert grid_points_for(-3.0, 3.0, 0.0625) == 192, "Wrong point count"
    assert grid_points_for(-3.0, 3.0, 0.0625, power_of_two=True) == 256, "Should round up to a power of two"
