"""Grids, measurement domains and scalar field maps.

Two lattice conventions are used throughout:

* the *dwell grid* carries the etch map (exposure time); its nodes include
  the interval endpoints and it extends beyond the measurement domain by a
  margin of five beam widths on every axis;
* the *domain grid* carries the measurement; its nodes are cell centers, so
  that the plain Riemann sum with weight spacing**ndim integrates exactly
  over the covered region (no half-cell overshoot at the boundary).

Both are immutable after construction and safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgument

# Dwell margin in beam widths.  Beyond 5 sigma a Gaussian tool contributes
# less than 1.5e-6 of its mass; other families reuse the margin with their
# scale parameter in place of sigma (see beams.BeamSpec.scale).
MARGIN_SIGMAS = 5.0


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class DwellGrid:
    """Uniform node lattice for etch maps (1D or 2D tensor lattice)."""

    axes: tuple[np.ndarray, ...]
    spacing: float

    def __post_init__(self):
        if self.spacing <= 0:
            raise InvalidArgument("grid spacing must be positive")
        object.__setattr__(self, "axes", tuple(_readonly(ax) for ax in self.axes))
        for ax in self.axes:
            if ax.size == 0:
                raise InvalidArgument("grid axis is empty")
            if ax.size > 1 and not np.allclose(np.diff(ax), self.spacing, rtol=0, atol=1e-9 * self.spacing):
                raise InvalidArgument("grid nodes must be uniformly spaced")

    @property
    def ndim(self) -> int:
        return len(self.axes)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(ax.size for ax in self.axes)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def lower(self) -> np.ndarray:
        return np.array([ax[0] for ax in self.axes])

    @property
    def upper(self) -> np.ndarray:
        return np.array([ax[-1] for ax in self.axes])

    def points(self) -> np.ndarray:
        """All lattice nodes as an (size, ndim) array in C order."""
        if self.ndim == 1:
            return self.axes[0][:, None]
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def matches(self, other) -> bool:
        return (
            self.ndim == other.ndim
            and self.shape == other.shape
            and abs(self.spacing - other.spacing) <= 1e-12 * self.spacing
            and all(np.allclose(a, b, rtol=0, atol=1e-9 * self.spacing)
                    for a, b in zip(self.axes, other.axes))
        )


@dataclass(frozen=True, eq=False)
class DomainGrid:
    """Cell-centered lattice covering the measurement domain.

    ``mask`` (optional, shape == grid shape) marks which cells belong to the
    domain; the covered area is exactly ``mask.sum() * spacing**ndim``.
    """

    axes: tuple[np.ndarray, ...]
    spacing: float
    mask: np.ndarray | None = None

    def __post_init__(self):
        if self.spacing <= 0:
            raise InvalidArgument("grid spacing must be positive")
        object.__setattr__(self, "axes", tuple(_readonly(ax) for ax in self.axes))
        for ax in self.axes:
            if ax.size == 0:
                raise InvalidArgument("grid axis is empty")
        if self.mask is not None:
            m = np.asarray(self.mask, dtype=bool).copy()
            if m.shape != self.shape:
                raise InvalidArgument("mask shape does not match grid shape")
            m.setflags(write=False)
            object.__setattr__(self, "mask", m)

    @property
    def ndim(self) -> int:
        return len(self.axes)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(ax.size for ax in self.axes)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def cell_count(self) -> int:
        """Number of cells inside the domain."""
        return int(self.mask.sum()) if self.mask is not None else self.size

    @property
    def area(self) -> float:
        """Measure of the covered region: cell count times spacing**ndim."""
        return self.cell_count * self.spacing ** self.ndim

    @property
    def lower(self) -> np.ndarray:
        """Lower edge of the covered box (cell edge, not node)."""
        return np.array([ax[0] - self.spacing / 2 for ax in self.axes])

    @property
    def upper(self) -> np.ndarray:
        return np.array([ax[-1] + self.spacing / 2 for ax in self.axes])

    def points(self, masked: bool = True) -> np.ndarray:
        """Cell centers as (count, ndim); only included cells if masked."""
        if self.ndim == 1:
            pts = self.axes[0][:, None]
        else:
            mesh = np.meshgrid(*self.axes, indexing="ij")
            pts = np.stack([m.ravel() for m in mesh], axis=-1)
        if masked and self.mask is not None:
            return pts[self.mask.ravel()]
        return pts

    def flat_mask(self) -> np.ndarray:
        if self.mask is None:
            return np.ones(self.size, dtype=bool)
        return self.mask.ravel()

    def matches(self, other) -> bool:
        if not (self.ndim == other.ndim and self.shape == other.shape
                and abs(self.spacing - other.spacing) <= 1e-12 * self.spacing):
            return False
        if not all(np.allclose(a, b, rtol=0, atol=1e-9 * self.spacing)
                   for a, b in zip(self.axes, other.axes)):
            return False
        if (self.mask is None) != (other.mask is None):
            return False
        return self.mask is None or bool(np.array_equal(self.mask, other.mask))


@dataclass(frozen=True, eq=False)
class FieldMap:
    """Scalar field sampled on a grid (heights, dwell times, mode shapes)."""

    grid: DwellGrid | DomainGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != self.grid.shape:
            if v.size == self.grid.size:
                v = v.reshape(self.grid.shape)
            else:
                raise InvalidArgument(
                    f"value count {v.size} does not match grid size {self.grid.size}")
        if not np.all(np.isfinite(v)):
            raise InvalidArgument("field values must be finite")
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def flat(self) -> np.ndarray:
        return self.values.ravel()


@dataclass(frozen=True, eq=False)
class DiskSectorField:
    """Radial profile of one angular harmonic on a disk.

    ``harmonic`` is the angular index m >= 0, ``parity`` selects the cosine
    or sine sector (sine requires m >= 1).
    """

    harmonic: int
    parity: str
    radii: np.ndarray
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.harmonic < 0:
            raise InvalidArgument("angular harmonic must be nonnegative")
        if self.parity not in ("cos", "sin"):
            raise InvalidArgument("parity must be 'cos' or 'sin'")
        if self.parity == "sin" and self.harmonic < 1:
            raise InvalidArgument("sine parity requires harmonic >= 1")
        r = _readonly(self.radii)
        v = _readonly(self.values)
        if r.ndim != 1 or v.shape != r.shape:
            raise InvalidArgument("radii and values must be matching 1D arrays")
        if np.any(r < 0):
            raise InvalidArgument("radii must be nonnegative")
        if not np.all(np.isfinite(v)):
            raise InvalidArgument("radial samples must be finite")
        object.__setattr__(self, "radii", r)
        object.__setattr__(self, "values", v)


def _cell_centers(lower: float, upper: float, spacing: float) -> np.ndarray:
    """Cell-center nodes tiling [lower, upper] with the given spacing."""
    n = (upper - lower) / spacing
    n_cells = int(round(n))
    if n_cells < 1 or abs(n - n_cells) > 1e-9:
        raise InvalidArgument(
            f"interval [{lower}, {upper}] is not tiled by spacing {spacing}")
    return lower + spacing * (np.arange(n_cells) + 0.5)


def _node_axis(lower: float, upper: float, spacing: float) -> np.ndarray:
    n = int(round((upper - lower) / spacing))
    return lower + spacing * np.arange(n + 1)


def make_interval_grids(half_width: float, sigma_max: float, spacing: float
                        ) -> tuple[DwellGrid, DomainGrid]:
    """Build the dwell/domain grid pair for an interval domain [-L, L].

    The dwell grid spans ``[-L - 5*sigma_max, L + 5*sigma_max]`` (margin
    rounded up to whole cells); both grids share the spacing.
    """
    if half_width <= 0 or sigma_max <= 0 or spacing <= 0:
        raise InvalidArgument("half_width, sigma_max and spacing must be positive")
    if spacing > sigma_max:
        raise InvalidArgument("spacing must not exceed the beam scale")
    margin = spacing * int(np.ceil(MARGIN_SIGMAS * sigma_max / spacing - 1e-9))
    dwell = DwellGrid(
        axes=(_node_axis(-half_width - margin, half_width + margin, spacing),),
        spacing=spacing)
    domain = DomainGrid(
        axes=(_cell_centers(-half_width, half_width, spacing),),
        spacing=spacing)
    return dwell, domain


def make_rect_grids(half_widths: tuple[float, float], sigma_max: float,
                    spacing: float) -> tuple[DwellGrid, DomainGrid]:
    """2D tensor analogue of :func:`make_interval_grids`."""
    lx, ly = half_widths
    if lx <= 0 or ly <= 0 or sigma_max <= 0 or spacing <= 0:
        raise InvalidArgument("half widths, sigma_max and spacing must be positive")
    if spacing > sigma_max:
        raise InvalidArgument("spacing must not exceed the beam scale")
    margin = spacing * int(np.ceil(MARGIN_SIGMAS * sigma_max / spacing - 1e-9))
    dwell = DwellGrid(
        axes=(_node_axis(-lx - margin, lx + margin, spacing),
              _node_axis(-ly - margin, ly + margin, spacing)),
        spacing=spacing)
    domain = DomainGrid(
        axes=(_cell_centers(-lx, lx, spacing), _cell_centers(-ly, ly, spacing)),
        spacing=spacing)
    return dwell, domain


def make_dwell_for_domain(domain: DomainGrid, scale: float, spacing: float,
                          margin: float | None = None) -> DwellGrid:
    """Dwell grid covering the domain's bounding box plus a margin.

    The default margin is 5 * scale (rounded up to whole cells), matching
    :func:`make_interval_grids`.
    """
    if margin is None:
        margin = MARGIN_SIGMAS * scale
    if margin < 0:
        raise InvalidArgument("margin must be nonnegative")
    m = spacing * int(np.ceil(margin / spacing - 1e-9))
    axes = tuple(_node_axis(lo - m, hi + m, spacing)
                 for lo, hi in zip(domain.lower, domain.upper))
    return DwellGrid(axes=axes, spacing=spacing)


def stadium_contains(x: np.ndarray, y: np.ndarray, width: float) -> np.ndarray:
    """Membership test for the stadium: a 2w x w rectangle capped by two
    half disks of radius w/2 (total length 3w)."""
    half = width / 2.0
    in_rect = (np.abs(x) <= width) & (np.abs(y) <= half)
    in_caps = (np.abs(x) - width) ** 2 + y ** 2 <= half ** 2
    return in_rect | in_caps


def make_stadium_mask(width: float, spacing: float) -> DomainGrid:
    """Rasterize a stadium of the given width onto a cell-centered grid.

    A cell belongs to the domain iff its center lies inside the stadium.
    """
    if width <= 0 or spacing <= 0:
        raise InvalidArgument("width and spacing must be positive")
    nx = max(1, int(np.ceil(3.0 * width / spacing - 1e-9)))
    ny = max(1, int(np.ceil(width / spacing - 1e-9)))
    # Symmetric about the origin regardless of parity of the cell counts.
    ax = spacing * (np.arange(nx) - (nx - 1) / 2.0)
    ay = spacing * (np.arange(ny) - (ny - 1) / 2.0)
    gx, gy = np.meshgrid(ax, ay, indexing="ij")
    mask = stadium_contains(gx, gy, width)
    return DomainGrid(axes=(ax, ay), spacing=spacing, mask=mask)


def weighted_inner(u: FieldMap, v: FieldMap) -> float:
    """Discrete L2 inner product: spacing**ndim times the sum over cells.

    On masked grids only included cells contribute.  Symmetric and bilinear.
    """
    if u.grid is not v.grid and not u.grid.matches(v.grid):
        raise InvalidArgument("fields live on different grids")
    w = u.grid.spacing ** u.grid.ndim
    if isinstance(u.grid, DomainGrid) and u.grid.mask is not None:
        sel = u.grid.mask
        return w * float(np.sum(u.values[sel] * v.values[sel]))
    return w * float(np.sum(u.values * v.values))


def norm(u: FieldMap) -> float:
    return float(np.sqrt(weighted_inner(u, u)))
