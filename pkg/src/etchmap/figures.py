"""Figure rendering for the report path.

Figures are produced downstream from the dumped delimited files, never
from in-memory state, so a rendered plot always reflects exactly what was
written next to it.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib
import numpy as np

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .matrixio import read_matrix, read_spectrum_table  # noqa: E402


def _load_field(path):
    data, header = read_matrix(path)
    if data.shape[0] == 1:
        x = header["origin"][0] + header["spacing"] * np.arange(data.shape[1])
        return ("1d", x, data[0])
    ox, oy = header["origin"]
    extent = (oy - header["spacing"] / 2,
              oy + header["spacing"] * (data.shape[1] - 0.5),
              ox - header["spacing"] / 2,
              ox + header["spacing"] * (data.shape[0] - 0.5))
    return ("2d", extent, data)


def _draw_field(ax, path, title):
    kind, coords, vals = _load_field(path)
    if kind == "1d":
        ax.plot(coords, vals, lw=1.0)
        ax.set_xlabel("x")
    else:
        img = ax.imshow(vals, origin="lower", extent=coords, aspect="equal",
                        cmap="RdBu_r")
        plt.colorbar(img, ax=ax, shrink=0.8)
        ax.set_xlabel("y")
        ax.set_ylabel("x")
    ax.set_title(title, fontsize=9)


def render_field(path, png_path, title: str | None = None) -> Path:
    fig, ax = plt.subplots(figsize=(6, 3.2))
    _draw_field(ax, path, title or Path(path).stem)
    fig.tight_layout()
    fig.savefig(png_path, dpi=140)
    plt.close(fig)
    return Path(png_path)


def render_fields(paths, titles, png_path) -> Path:
    n = len(paths)
    fig, axes = plt.subplots(n, 1, figsize=(6.4, 2.6 * n), squeeze=False)
    for ax, path, title in zip(axes[:, 0], paths, titles):
        _draw_field(ax, path, title)
    fig.tight_layout()
    fig.savefig(png_path, dpi=140)
    plt.close(fig)
    return Path(png_path)


def render_spectrum(table_path, mode_paths, png_path) -> Path:
    rows = read_spectrum_table(table_path)
    n = [r[0] for r in rows]
    lam = [r[1] for r in rows]
    ncols = 1 + (1 if mode_paths else 0)
    fig = plt.figure(figsize=(6.4 * ncols, 4.2))
    ax = fig.add_subplot(1, ncols, 1)
    ax.semilogy(n, np.maximum(lam, 1e-300), ".", ms=3)
    ax.set_xlabel("mode index")
    ax.set_ylabel("eigenvalue")
    ax.set_title("spectrum", fontsize=9)
    if mode_paths:
        sub = fig.add_subplot(1, ncols, 2)
        kind, coords, vals = _load_field(mode_paths[0])
        if kind == "1d":
            for path in mode_paths[:3]:
                _, x, v = _load_field(path)
                sub.plot(x, v, lw=1.0, label=Path(path).stem)
            sub.legend(fontsize=7)
            sub.set_xlabel("x")
        else:
            img = sub.imshow(vals, origin="lower", extent=coords,
                             aspect="equal", cmap="RdBu_r")
            plt.colorbar(img, ax=sub, shrink=0.8)
        sub.set_title("leading modes", fontsize=9)
    fig.tight_layout()
    fig.savefig(png_path, dpi=140)
    plt.close(fig)
    return Path(png_path)


def render_matrix(path, png_path, title: str = "kernel") -> Path:
    data, _ = read_matrix(path)
    fig, ax = plt.subplots(figsize=(5.2, 4.4))
    img = ax.imshow(data, origin="lower", cmap="viridis")
    plt.colorbar(img, ax=ax, shrink=0.85)
    ax.set_title(title, fontsize=9)
    fig.tight_layout()
    fig.savefig(png_path, dpi=140)
    plt.close(fig)
    return Path(png_path)
