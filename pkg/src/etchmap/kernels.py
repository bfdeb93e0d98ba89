"""Kernels of the bounded-domain removal operator.

The forward model convolves an etch map with the beam footprint f and
restricts the result to the measurement domain.  The associated normal
operator on etch maps has the overlap kernel

    k(x1, x2) = int_domain f(x1 - y) f(y - x2) dy,

which this module evaluates by quadrature for any family (with an erf
closed form for the 1D Gaussian), assembles into discrete matrices, and
complements with the data-space autocorrelation kernel (f * f)(x1 - x2),
its lattice-sampled variant, per-harmonic radial kernels on a disk, and
the two-beam cross kernels.

Discrete assembly uses the domain grid's own Riemann measure, so the
assembled matrix is exactly the Gram matrix of the discrete forward map
(symmetric positive semidefinite by construction) and the resulting
singular triplets are mutually consistent to round-off.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .beams import BeamSpec, autocorrelation, pairwise
from .core import DomainGrid, DwellGrid
from .errors import InvalidArgument, NumericFailure, ResourceLimit
from .quadrature import panel_nodes, panels_for_scale

MAX_MATRIX_SIDE = 4000


@dataclass(frozen=True, eq=False)
class KernelMatrix:
    """A discretized kernel with its row/column grids."""

    row_grid: DwellGrid | DomainGrid
    col_grid: DwellGrid | DomainGrid
    matrix: np.ndarray = field(repr=False)
    symmetric: bool = False

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def shape(self):
        return self.matrix.shape


# Continuum overlap kernel ---------------------------------------------------

def _domain_quad_rule(beam: BeamSpec, domain: DomainGrid, rule: str):
    """Quadrature nodes/weights covering the measurement domain."""
    if rule == "grid" or domain.mask is not None:
        pts = domain.points(masked=True)
        w = np.full(pts.shape[0], domain.spacing ** domain.ndim)
        return pts, w
    if domain.ndim == 1:
        nodes, w = panels_for_scale(domain.lower[0], domain.upper[0], beam.scale)
        return nodes[:, None], w
    axes = []
    wts = []
    for lo, hi in zip(domain.lower, domain.upper):
        n, w = panels_for_scale(lo, hi, beam.scale)
        axes.append(n)
        wts.append(w)
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=-1)
    w = np.prod(np.stack(np.meshgrid(*wts, indexing="ij"), axis=-1), axis=-1).ravel()
    return pts, w


def overlap_quadrature(beam: BeamSpec, domain: DomainGrid, x1, x2,
                       rule: str = "gl") -> np.ndarray | float:
    """Overlap kernel int_domain f(x1 - y) f(y - x2) dy.

    ``rule='gl'`` integrates with composite Gauss-Legendre panels (order 16,
    panel width tied to the beam scale); masked domains always use their own
    cell measure, as does ``rule='grid'``.
    """
    if rule not in ("gl", "grid"):
        raise InvalidArgument(f"unknown quadrature rule '{rule}'")
    if domain.ndim != beam.dim:
        raise InvalidArgument("domain dimension does not match beam dimension")
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    scalar_in = x1.ndim == 0 if beam.dim == 1 else x1.ndim == 1
    p1 = np.atleast_1d(x1).reshape(-1, beam.dim)
    p2 = np.atleast_1d(x2).reshape(-1, beam.dim)
    if p1.shape != p2.shape:
        raise InvalidArgument("x1 and x2 must have matching shapes")
    nodes, w = _domain_quad_rule(beam, domain, rule)
    f1 = pairwise(beam, p1, nodes)
    f2 = pairwise(beam, p2, nodes)
    out = np.einsum("iq,iq,q->i", f1, f2, w)
    return float(out[0]) if scalar_in else out


def overlap_gaussian_closed(x1, x2, sigma: float, half_width: float
                            ) -> np.ndarray | float:
    """Closed-form 1D Gaussian overlap kernel on [-L, L].

    (1/2) (4 pi s^2)^(-1/2) exp(-(x1-x2)^2/(4 s^2))
        * [erf((x1+x2+2L)/(2s)) - erf((x1+x2-2L)/(2s))]
    """
    if sigma <= 0 or half_width <= 0:
        raise InvalidArgument("sigma and half_width must be positive")
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    s = (special.erf((x1 + x2 + 2 * half_width) / (2 * sigma))
         - special.erf((x1 + x2 - 2 * half_width) / (2 * sigma)))
    val = 0.5 / math.sqrt(4 * math.pi * sigma ** 2) * np.exp(
        -(x1 - x2) ** 2 / (4 * sigma ** 2)) * s
    return float(val) if val.ndim == 0 else val


def crossbeam_overlap(x1, x2, sigma_i: float, sigma_j: float,
                      half_width: float) -> np.ndarray | float:
    """Cross kernel of two Gaussian beams of widths sigma_i, sigma_j:
    int_{-L}^{L} f_i(y - x1) f_j(y - x2) dy in closed form."""
    if sigma_i <= 0 or sigma_j <= 0 or half_width <= 0:
        raise InvalidArgument("sigma_i, sigma_j and half_width must be positive")
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    si2, sj2 = sigma_i ** 2, sigma_j ** 2
    ssum = si2 + sj2
    den = sigma_i * sigma_j * math.sqrt(2 * ssum)
    L = half_width
    bracket = (special.erf(((x1 + L) * sj2 + (x2 + L) * si2) / den)
               - special.erf(((x1 - L) * sj2 + (x2 - L) * si2) / den))
    val = (np.exp(-(x1 - x2) ** 2 / (2 * ssum)) / math.sqrt(2 * math.pi * ssum)
           * 0.5 * bracket)
    return float(val) if val.ndim == 0 else val


def autocorr_kernel(beam: BeamSpec, x1, x2) -> np.ndarray | float:
    """Data-space kernel (f * f)(x1 - x2); translation invariant."""
    d = np.asarray(x1, dtype=float) - np.asarray(x2, dtype=float)
    return autocorrelation(beam, d)


def lattice_autocorr(x1, x2, sigma: float, spacing: float,
                     truncation_tol: float = 1e-15) -> float:
    """Gaussian autocorrelation sampled on the dwell lattice:

        sum_m (2 pi s^2)^(-1) exp(-(x1 - D m)^2/(2 s^2))
                              exp(-(D m - x2)^2/(2 s^2)),

    truncated once the Gaussian tail bound falls below truncation_tol.
    Equals a Jacobi theta function of the midpoint coordinate.
    """
    if sigma <= 0 or spacing <= 0:
        raise InvalidArgument("sigma and spacing must be positive")
    peak = math.exp(-(x1 - x2) ** 2 / (4 * sigma ** 2)) / (2 * math.pi * sigma ** 2)
    tol = max(truncation_tol, 1e-300)
    # Terms decay like exp(-(D m - c)^2 / s^2) around the midpoint c.
    c = 0.5 * (x1 + x2)
    tail = max(peak * (1 + sigma / spacing), tol)
    reach = sigma * math.sqrt(max(math.log(tail / tol), 1.0)) + 2 * spacing
    m = np.arange(math.floor((c - reach) / spacing),
                  math.ceil((c + reach) / spacing) + 1)
    y = spacing * m
    terms = np.exp(-((x1 - y) ** 2 + (y - x2) ** 2) / (2 * sigma ** 2))
    return float(terms.sum() / (2 * math.pi * sigma ** 2))


# Disk sector kernels --------------------------------------------------------

def disk_sector_kernel(m: int, r1, r2, sigma: float, radius: float
                       ) -> np.ndarray | float:
    """Radial kernel of the m-th angular harmonic on a disk of the given
    radius:

        (pi s^4)^(-1) exp(-r1^2/2s^2) exp(-r2^2/2s^2)
            * int_0^R exp(-r^2/s^2) I_m(r r1/s^2) I_m(r r2/s^2) r dr.

    Scaled Bessel evaluation keeps every factor bounded; the full kernel is
    reconstructed as k = k0/2 + sum_{m>=1} k_m cos(m phi) (half weight on
    the m = 0 term).
    """
    if m < 0:
        raise InvalidArgument("harmonic index must be nonnegative")
    if sigma <= 0 or radius <= 0:
        raise InvalidArgument("sigma and radius must be positive")
    r1 = np.asarray(r1, dtype=float)
    r2 = np.asarray(r2, dtype=float)
    if np.any(r1 < 0) or np.any(r2 < 0):
        raise InvalidArgument("radii must be nonnegative")
    shape = np.broadcast_shapes(r1.shape, r2.shape)
    a = np.broadcast_to(r1, shape).ravel()
    b = np.broadcast_to(r2, shape).ravel()
    s2 = sigma ** 2
    prev = None
    panels = max(4, int(np.ceil(radius / (sigma / 2.0))))
    for _ in range(5):
        r, w = panel_nodes(0.0, radius, panels)
        # exp(-r^2/s^2) I_m(r a) I_m(r b) with the exponentials recombined so
        # no factor can overflow: residual exponent -(r-(a+b)/2)^2/s^2.
        za = np.outer(a, r) / s2
        zb = np.outer(b, r) / s2
        expo = -((r[None, :] - 0.5 * (a + b)[:, None]) ** 2
                 + 0.25 * (a - b)[:, None] ** 2) / s2
        integ = special.ive(m, za) * special.ive(m, zb) * np.exp(expo)
        vals = integ @ (w * r)
        if prev is not None and np.allclose(vals, prev, rtol=1e-11, atol=1e-300):
            break
        prev = vals
        panels *= 2
    out = vals / (math.pi * sigma ** 4)
    if not np.all(np.isfinite(out)):
        raise NumericFailure("disk sector kernel evaluation overflowed",
                             harmonic=m)
    out = out.reshape(shape)
    return float(out[()]) if out.ndim == 0 else out


def disk_sector_matrix(m: int, radii: np.ndarray, spacing: float,
                       sigma: float, radius: float) -> np.ndarray:
    """Symmetrized Nystrom matrix of the m-th radial sector operator.

    The operator acts as pi * int k_m(r1, r2) t(r2) r2 dr2; conjugating by
    sqrt(r dr) makes the discrete matrix symmetric, so its eigenvalues are
    those of the sector operator.
    """
    radii = np.asarray(radii, dtype=float)
    k = disk_sector_kernel(m, radii[:, None], radii[None, :], sigma, radius)
    w = np.sqrt(radii * spacing)
    return math.pi * w[:, None] * k * w[None, :]


# Discrete assembly ----------------------------------------------------------

def forward_matrix(beam: BeamSpec, points: np.ndarray, dwell: DwellGrid
                   ) -> np.ndarray:
    """Footprint samples f(p - x_j) for evaluation points p and dwell nodes."""
    return pairwise(beam, np.asarray(points, dtype=float), dwell.points())


def assemble_normal_matrix(beam: BeamSpec, dwell: DwellGrid,
                           domain: DomainGrid,
                           max_side: int = MAX_MATRIX_SIDE) -> KernelMatrix:
    """Discrete normal operator on the dwell grid.

    Entry (a, b) is the overlap kernel at the dwell nodes (x_a, x_b) under
    the domain's cell measure, scaled by the dwell measure weight, i.e.

        M[a, b] = spacing^n * sum_cells spacing^n f(y - x_a) f(y - x_b),

    the Gram matrix of the discrete forward map.  Symmetric PSD by
    construction; its eigenvalues approximate the continuum spectrum.
    """
    if dwell.ndim != beam.dim or domain.ndim != beam.dim:
        raise InvalidArgument("grid dimensions do not match beam dimension")
    if dwell.size > max_side:
        raise ResourceLimit(
            f"dwell grid has {dwell.size} nodes, exceeding the cap {max_side}")
    pts = domain.points(masked=True)
    n = beam.dim
    weight = dwell.spacing ** n * domain.spacing ** n
    if pts.shape[0] == 0:
        mat = np.zeros((dwell.size, dwell.size))
    else:
        f = pairwise(beam, dwell.points(), pts)
        mat = weight * (f @ f.T)
        mat = 0.5 * (mat + mat.T)
    return KernelMatrix(row_grid=dwell, col_grid=dwell, matrix=mat,
                        symmetric=True)


def assemble_cross_matrix(beam_i: BeamSpec, beam_j: BeamSpec,
                          dwell: DwellGrid, domain: DomainGrid) -> np.ndarray:
    """Discrete cross operator block for two beams sharing the domain."""
    pts = domain.points(masked=True)
    weight = dwell.spacing ** beam_i.dim * domain.spacing ** domain.ndim
    fi = pairwise(beam_i, dwell.points(), pts)
    fj = pairwise(beam_j, dwell.points(), pts)
    return weight * (fi @ fj.T)
