"""Serialization of grid functions, step maps, profile tables and reports."""

from __future__ import annotations

import json
import math
import os
from pathlib import Path
from typing import Any, Optional, Union

import numpy as np
import pandas as pd

from .harness import ExperimentReport
from .measure_core import GridFunction, WeightedGrid
from .profiles import IsoperimetricProfile
from .rearrangement import MonotoneStep

PathLike = Union[str, Path]

FIELD_MAGIC = b"TLGF"
_HEADER_INT = np.dtype("<i4")
_PAYLOAD = np.dtype("<f8")
PROFILE_TABLE_ROWS = 512


def _to_jsonable(obj: Any) -> Any:
    """Replace numpy scalars/arrays and non-finite floats (-> None) recursively."""

    if isinstance(obj, dict):
        return {str(k): _to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        value = float(obj)
        return value if math.isfinite(value) else None
    return obj


def atomic_write_json(path: PathLike, obj: Any) -> None:
    """Write JSON atomically so an interrupted run never leaves a truncated file."""

    path = str(path)
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    tmp_path = path + ".tmp"
    with open(tmp_path, "w", encoding="utf-8") as f:
        json.dump(_to_jsonable(obj), f, ensure_ascii=False, indent=2)
        f.flush()
        os.fsync(f.fileno())
    os.replace(tmp_path, path)


def write_grid_function_csv(u: GridFunction, path: PathLike) -> None:
    """One row per cell: index, x1..xN, value."""

    grid = u.grid
    frame = pd.DataFrame({"index": np.arange(grid.n_cells)})
    for k in range(grid.dim):
        frame[f"x{k + 1}"] = grid.centers[:, k]
    frame["value"] = u.values
    frame.to_csv(path, index=False, float_format="%.17g")


def read_grid_function_csv(path: PathLike, grid: WeightedGrid) -> GridFunction:
    frame = pd.read_csv(path)
    if len(frame) != grid.n_cells:
        raise ValueError(f"{path}: expected {grid.n_cells} rows, found {len(frame)}")
    frame = frame.sort_values("index", kind="mergesort")
    return GridFunction(grid, frame["value"].to_numpy(dtype=float))


def write_grid_function_binary(u: GridFunction, path: PathLike) -> None:
    """Magic, int32 dim, int32 resolution, float64 (lo, hi) per axis, float64 values in row-major order."""

    grid = u.grid
    box = np.array([[lo, hi] for lo, hi in zip(grid.lower, grid.upper)], dtype=_PAYLOAD)
    with open(path, "wb") as f:
        f.write(FIELD_MAGIC)
        f.write(np.array([grid.dim, grid.resolution], dtype=_HEADER_INT).tobytes())
        f.write(box.tobytes())
        f.write(np.ascontiguousarray(u.values, dtype=_PAYLOAD).tobytes())


def read_grid_function_binary(path: PathLike) -> tuple[int, int, np.ndarray, np.ndarray]:
    """Return (dim, resolution, box of shape (dim, 2), values of shape resolution^dim)."""

    raw = Path(path).read_bytes()
    if raw[: len(FIELD_MAGIC)] != FIELD_MAGIC:
        raise ValueError(f"{path}: not a grid function file")
    offset = len(FIELD_MAGIC)
    dim, resolution = np.frombuffer(raw, dtype=_HEADER_INT, count=2, offset=offset).tolist()
    offset += 2 * _HEADER_INT.itemsize
    box = np.frombuffer(raw, dtype=_PAYLOAD, count=2 * dim, offset=offset).reshape(dim, 2)
    offset += 2 * dim * _PAYLOAD.itemsize
    count = resolution**dim
    values = np.frombuffer(raw, dtype=_PAYLOAD, offset=offset)
    if values.size != count:
        raise ValueError(f"{path}: expected {count} values, found {values.size}")
    return dim, resolution, box.copy(), values.copy()


def write_step_csv(step: MonotoneStep, path: PathLike) -> None:
    """Rows (start, end, value), ending with (last breakpoint, inf, value at infinity)."""

    starts = step.breakpoints[:-1]
    ends = step.breakpoints[1:]
    frame = pd.DataFrame({"start": starts, "end": ends, "value": step.values})
    terminal = pd.DataFrame({"start": [step.breakpoints[-1]], "end": [math.inf], "value": [step.value_at_infinity]})
    pd.concat([frame, terminal], ignore_index=True).to_csv(path, index=False, float_format="%.17g")


def read_step_csv(path: PathLike) -> MonotoneStep:
    frame = pd.read_csv(path)
    breakpoints = frame["start"].to_numpy(dtype=float)
    return MonotoneStep(breakpoints, frame["value"].to_numpy(dtype=float)[:-1], float(frame["value"].iloc[-1]))


def profile_table(profile: IsoperimetricProfile, grid: WeightedGrid, rows: int = PROFILE_TABLE_ROWS) -> pd.DataFrame:
    """M(t) sampled over the family parameters that occur on the grid."""

    params = profile.param(grid.centers[grid.inside])
    t = np.linspace(float(np.min(params)), float(np.max(params)), rows)
    return pd.DataFrame({"t": t, "M": profile.tabulate(t)})


def write_profile_table(
    profile: IsoperimetricProfile, grid: WeightedGrid, path: PathLike, rows: int = PROFILE_TABLE_ROWS
) -> None:
    profile_table(profile, grid, rows).to_csv(path, index=False, float_format="%.17g")


def report_stem(experiment: str, profile: str, resolution: int, seed: int) -> str:
    return f"{experiment}_{profile}_{resolution}_{seed}"


def write_report(
    report: ExperimentReport,
    out_dir: PathLike,
    stem: str,
    config: Optional[dict] = None,
) -> tuple[Path, Path]:
    """Write ``<stem>.json`` (full report) and ``<stem>.csv`` (one row per case)."""

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = report.to_dict()
    if config is not None:
        payload["config"] = config
    json_path = out_dir / f"{stem}.json"
    csv_path = out_dir / f"{stem}.csv"
    atomic_write_json(json_path, payload)
    report.to_frame().to_csv(csv_path, index=False)
    return json_path, csv_path
