"""Delimited text formats: matrix files, spectrum tables, run manifests.

A matrix file is two header lines followed by one line per row of
space-separated decimals at 17 significant digits (lossless float
round-trip):

    <rows> <cols>
    origin=<x0>[,<y0>] spacing=<delta> mask=<0|1>
    v v v ...

1D fields are written as a single row.  On masked grids, excluded cells
are written as nan; readers recover the mask from the nan pattern.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .core import DomainGrid, DwellGrid, FieldMap
from .errors import InvalidInput


def _fmt(v: float) -> str:
    return f"{v:.17g}"


def _grid_header(grid: DwellGrid | DomainGrid) -> str:
    origin = ",".join(_fmt(ax[0]) for ax in grid.axes)
    masked = int(isinstance(grid, DomainGrid) and grid.mask is not None)
    return f"origin={origin} spacing={_fmt(grid.spacing)} mask={masked}"


def write_matrix(path, matrix: np.ndarray, header: str) -> None:
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    lines = [f"{matrix.shape[0]} {matrix.shape[1]}", header]
    lines.extend(" ".join(_fmt(v) for v in row) for row in matrix)
    Path(path).write_text("\n".join(lines) + "\n")


def read_matrix(path) -> tuple[np.ndarray, dict]:
    lines = Path(path).read_text().splitlines()
    if len(lines) < 2:
        raise InvalidInput(f"{path}: truncated matrix file")
    try:
        rows, cols = (int(tok) for tok in lines[0].split())
    except ValueError as exc:
        raise InvalidInput(f"{path}: bad shape line {lines[0]!r}") from exc
    header = _parse_header(lines[1], path)
    if len(lines) < 2 + rows:
        raise InvalidInput(f"{path}: expected {rows} data rows")
    data = np.empty((rows, cols))
    for i in range(rows):
        vals = np.fromstring(lines[2 + i], sep=" ")
        if vals.size != cols:
            raise InvalidInput(f"{path}: row {i} has {vals.size} values, "
                               f"expected {cols}")
        data[i] = vals
    return data, header


def _parse_header(line: str, path) -> dict:
    out = {}
    for tok in line.split():
        if "=" not in tok:
            raise InvalidInput(f"{path}: bad grid descriptor token {tok!r}")
        key, val = tok.split("=", 1)
        if key == "origin":
            out["origin"] = tuple(float(v) for v in val.split(","))
        elif key == "spacing":
            out["spacing"] = float(val)
        elif key == "mask":
            out["mask"] = bool(int(val))
        else:
            raise InvalidInput(f"{path}: unknown grid descriptor key {key!r}")
    for key in ("origin", "spacing", "mask"):
        if key not in out:
            raise InvalidInput(f"{path}: grid descriptor misses {key!r}")
    return out


def write_field(path, field: FieldMap) -> None:
    """Dump a field map; 1D fields become a single row, masked cells nan."""
    vals = np.array(field.values, dtype=float)
    grid = field.grid
    if isinstance(grid, DomainGrid) and grid.mask is not None:
        vals = np.where(grid.mask, vals, np.nan)
    if vals.ndim == 1:
        vals = vals[None, :]
    write_matrix(path, vals, _grid_header(grid))


def read_field(path, grid: DwellGrid | DomainGrid) -> FieldMap:
    """Read a field map and bind it to the given grid, validating the
    descriptor (origin, spacing, shape, mask pattern)."""
    data, header = read_matrix(path)
    expect_origin = tuple(float(ax[0]) for ax in grid.axes)
    tol = 1e-9 * grid.spacing
    if len(header["origin"]) != grid.ndim \
            or any(abs(a - b) > tol for a, b in zip(header["origin"], expect_origin)) \
            or abs(header["spacing"] - grid.spacing) > tol:
        raise InvalidInput(f"{path}: grid descriptor does not match the "
                           "configured geometry")
    vals = data[0] if grid.ndim == 1 else data
    if vals.shape != grid.shape:
        raise InvalidInput(f"{path}: data shape {vals.shape} does not match "
                           f"grid shape {grid.shape}")
    has_mask = isinstance(grid, DomainGrid) and grid.mask is not None
    if header["mask"] != has_mask:
        raise InvalidInput(f"{path}: mask flag does not match the geometry")
    if has_mask:
        file_mask = ~np.isnan(vals)
        if not np.array_equal(file_mask, grid.mask):
            raise InvalidInput(f"{path}: nan pattern does not match the "
                               "domain mask")
        vals = np.where(grid.mask, vals, 0.0)
    elif np.any(np.isnan(vals)):
        raise InvalidInput(f"{path}: nan values on an unmasked grid")
    return FieldMap(grid, vals)


def write_spectrum_table(path, rows) -> None:
    """Table of (index, eigenvalue, fitted wavenumber, parity) per mode."""
    lines = ["# n lambda k_fit parity"]
    for n, lam, k, parity in rows:
        k_str = _fmt(k) if np.isfinite(k) else "nan"
        lines.append(f"{n} {_fmt(lam)} {k_str} {parity}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_spectrum_table(path) -> list[tuple[int, float, float, str]]:
    rows = []
    for line in Path(path).read_text().splitlines():
        if not line or line.startswith("#"):
            continue
        n, lam, k, parity = line.split()
        rows.append((int(n), float(lam), float(k), parity))
    return rows


def write_manifest(path, entries: dict, coefficients: np.ndarray | None = None
                   ) -> None:
    """Run manifest: key = value lines plus an optional coefficient table."""
    lines = [f"{key} = {_fmt(val) if isinstance(val, float) else val}"
             for key, val in entries.items()]
    if coefficients is not None:
        lines.append("coefficients:")
        lines.extend(f"  {i} {_fmt(c)}" for i, c in enumerate(coefficients))
    Path(path).write_text("\n".join(lines) + "\n")


def read_manifest(path) -> dict:
    out = {}
    lines = Path(path).read_text().splitlines()
    for i, line in enumerate(lines):
        if line == "coefficients:":
            out["coefficients"] = np.array(
                [float(l.split()[1]) for l in lines[i + 1:] if l.strip()])
            break
        if " = " in line:
            key, val = line.split(" = ", 1)
            try:
                out[key] = float(val)
            except ValueError:
                out[key] = val
    return out
