import json
import math

import numpy as np
import pandas as pd
import pytest

from talenti_lab.artifacts import (
    atomic_write_json,
    profile_table,
    read_grid_function_binary,
    read_grid_function_csv,
    read_step_csv,
    report_stem,
    write_grid_function_binary,
    write_grid_function_csv,
    write_profile_table,
    write_report,
    write_step_csv,
)
from talenti_lab.harness import verify_isoperimetry
from talenti_lab.measure_core import DomainSpec, GridFunction, build_grid, zero_potential
from talenti_lab.profiles import gaussian_halfspace_profile
from talenti_lab.rearrangement import MonotoneStep


@pytest.fixture(scope="module")
def square():
    return build_grid(DomainSpec.box([(0, 1), (-1, 1)]), zero_potential(), 8)


def test_json_replaces_non_finite_numbers(tmp_path):
    path = tmp_path / "nested" / "record.json"

    atomic_write_json(path, {"tail": math.inf, "gap": np.float64(0.5), "n": np.int64(3), "ok": np.bool_(True)})

    data = json.loads(path.read_text(encoding="utf-8"))
    assert data == {"tail": None, "gap": 0.5, "n": 3, "ok": True}
    assert not (tmp_path / "nested" / "record.json.tmp").exists()


def test_grid_function_csv(square, tmp_path):
    u = GridFunction.from_callable(square, lambda x: x[:, 0] - 2 * x[:, 1])
    path = tmp_path / "u.csv"

    write_grid_function_csv(u, path)

    frame = pd.read_csv(path)
    assert list(frame.columns) == ["index", "x1", "x2", "value"]
    assert len(frame) == 64
    np.testing.assert_array_equal(read_grid_function_csv(path, square).values, u.values)


def test_grid_function_csv_row_count_is_checked(square, tmp_path):
    path = tmp_path / "u.csv"
    write_grid_function_csv(GridFunction(square, np.zeros(square.n_cells)), path)
    other = build_grid(DomainSpec.box([(0, 1), (-1, 1)]), zero_potential(), 4)

    with pytest.raises(ValueError, match="rows"):
        read_grid_function_csv(path, other)


def test_grid_function_binary_header(square, tmp_path):
    u = GridFunction(square, np.arange(square.n_cells, dtype=float))
    path = tmp_path / "u.bin"

    write_grid_function_binary(u, path)

    raw = path.read_bytes()
    assert raw[:4] == b"TLGF"
    assert len(raw) == 4 + 2 * 4 + 4 * 8 + 64 * 8
    dim, resolution, box, values = read_grid_function_binary(path)
    assert (dim, resolution) == (2, 8)
    assert box.tolist() == [[0.0, 1.0], [-1.0, 1.0]]
    np.testing.assert_array_equal(values, u.values)


def test_binary_reader_rejects_other_files(tmp_path):
    path = tmp_path / "other.bin"
    path.write_bytes(b"PK\x03\x04")

    with pytest.raises(ValueError, match="not a grid function"):
        read_grid_function_binary(path)


def test_step_csv(tmp_path):
    step = MonotoneStep(np.array([0.0, 0.5, 2.0]), np.array([3.0, 1.0]), 0.0)
    path = tmp_path / "step.csv"

    write_step_csv(step, path)

    frame = pd.read_csv(path)
    assert frame["end"].tolist() == [0.5, 2.0, math.inf]
    restored = read_step_csv(path)
    assert restored.breakpoints.tolist() == [0.0, 0.5, 2.0]
    assert restored.values.tolist() == [3.0, 1.0]
    assert restored(1.0) == 1.0


def test_profile_table(tmp_path):
    profile = gaussian_halfspace_profile([1.0], 1)
    grid = build_grid(profile.domain, profile.potential, 64)

    table = profile_table(profile, grid, rows=16)

    assert len(table) == 16
    assert np.all(np.diff(table["M"]) < 0)
    path = tmp_path / "profile.csv"
    write_profile_table(profile, grid, path, rows=16)
    assert pd.read_csv(path)["t"].iloc[0] == pytest.approx(table["t"].iloc[0])


def test_write_report(tmp_path):
    profile = gaussian_halfspace_profile([1.0], 1)
    grid = build_grid(profile.domain, profile.potential, 128)
    report = verify_isoperimetry(profile, grid, n_sets=2, seed=5)
    stem = report_stem("verify-iso", "gaussian", 128, 5)

    json_path, csv_path = write_report(report, tmp_path / "reports", stem, config={"seed": 5})

    assert stem == "verify-iso_gaussian_128_5"
    data = json.loads(json_path.read_text(encoding="utf-8"))
    assert data["config"] == {"seed": 5}
    assert data["summary"]["cases"] == 2
    assert len(pd.read_csv(csv_path)) == 2
