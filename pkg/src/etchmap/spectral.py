"""Singular system of the discrete forward map and spectral diagnostics.

The normal matrix assembled in :mod:`etchmap.kernels` is the Gram matrix of
the discrete forward map, so its eigenvectors (right singular vectors, unit
discrete-L2 norm on the dwell grid) and the forward images divided by the
singular values (left singular vectors on the measurement domain) form an
exactly consistent singular system: the left vectors are orthonormal to
round-off, not merely to quadrature accuracy.

Diagnostics cover the interior wave structure of the modes: fitted
wavenumbers, the Gaussian dispersion relation lambda = exp(-k^2 sigma^2),
plane-wave response of the kernel deep inside the domain, trace and
Hilbert-Schmidt sums, and the large-domain asymptote of the spectrum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import linalg, optimize

from .beams import BeamSpec, autocorrelation, fourier_magnitude_sq, l2sq_norm, pairwise
from .core import DiskSectorField, DomainGrid, DwellGrid, FieldMap, weighted_inner
from .errors import AssemblyInconsistency, InvalidArgument, NumericFailure
from .kernels import KernelMatrix, overlap_gaussian_closed
from .quadrature import panel_nodes, panels_for_scale

CLAMP_RELATIVE = 1e-12


@dataclass(frozen=True, eq=False)
class SpectralSystem:
    """Eigenpairs of the normal operator plus the derived singular system."""

    eigenvalues: np.ndarray
    right: np.ndarray = field(repr=False)       # (dwell size, modes)
    dwell: DwellGrid = None
    beam: BeamSpec | None = None
    domain: DomainGrid | None = None
    left: np.ndarray | None = field(default=None, repr=False)  # (domain size, m)
    clamp: float = 0.0

    @property
    def n_modes(self) -> int:
        return self.eigenvalues.size

    @property
    def n_above_clamp(self) -> int:
        return int(np.count_nonzero(self.eigenvalues > 0))

    @property
    def n_left(self) -> int:
        return 0 if self.left is None else self.left.shape[1]

    def t_vec(self, n: int) -> FieldMap:
        """Right singular vector (0-based) as a field on the dwell grid."""
        return FieldMap(self.dwell, self.right[:, n])

    def h_vec(self, n: int) -> FieldMap:
        """Left singular vector (0-based) as a field on the domain grid."""
        if self.left is None or n >= self.left.shape[1]:
            raise InvalidArgument("left singular vectors not built for this mode")
        return FieldMap(self.domain, self.left[:, n])


def decompose(kernel: KernelMatrix) -> SpectralSystem:
    """Full symmetric eigendecomposition of an assembled normal matrix.

    Eigenvalues are sorted descending and clamped to zero below
    1e-12 * lambda_1; eigenvectors are renormalized to unit discrete L2
    norm and sign-fixed so the entry of largest magnitude is positive
    (ties broken by lowest index).
    """
    if not kernel.symmetric:
        raise InvalidArgument("decompose requires a symmetric same-grid kernel")
    m = kernel.matrix
    if m.shape[0] != m.shape[1]:
        raise InvalidArgument("kernel matrix is not square")
    try:
        vals, vecs = linalg.eigh(m)
    except linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise NumericFailure(f"eigendecomposition failed: {exc}") from exc
    vals = vals[::-1]
    vecs = vecs[:, ::-1]
    top = vals[0] if vals.size else 0.0
    if top > 0 and vals[-1] < -1e-8 * top:
        raise AssemblyInconsistency(
            f"normal matrix has negative eigenvalue {vals[-1]:.3e} "
            f"(top {top:.3e})")
    clamp = CLAMP_RELATIVE * max(top, 0.0)
    vals = np.where(vals > clamp, vals, 0.0)

    grid = kernel.row_grid
    vecs = vecs / grid.spacing ** (grid.ndim / 2)
    # Deterministic sign: largest-magnitude entry positive, lowest index wins.
    idx = np.argmax(np.abs(vecs), axis=0)
    signs = np.sign(vecs[idx, np.arange(vecs.shape[1])])
    signs[signs == 0] = 1.0
    vecs = vecs * signs[None, :]
    return SpectralSystem(eigenvalues=vals, right=vecs, dwell=grid, clamp=clamp)


def apply_forward(t: FieldMap, beam: BeamSpec, where) -> FieldMap | np.ndarray:
    """Discrete forward map: (A t)(x) = spacing^n * sum_j t_j f(x - x_j).

    ``where`` is a DomainGrid (returns a FieldMap on it) or an (m, n) array
    of evaluation points (returns the values).
    """
    dwell = t.grid
    if not isinstance(dwell, DwellGrid):
        raise InvalidArgument("apply_forward expects a field on the dwell grid")
    w = dwell.spacing ** dwell.ndim
    if isinstance(where, DomainGrid):
        if beam.separable and dwell.ndim == 2 and where.ndim == 2:
            fx = _axis_footprint(beam, 0, where.axes[0], dwell.axes[0])
            fy = _axis_footprint(beam, 1, where.axes[1], dwell.axes[1])
            vals = w * fx @ t.values @ fy.T
            return FieldMap(where, vals)
        f = pairwise(beam, where.points(masked=False), dwell.points())
        return FieldMap(where, w * (f @ t.flat))
    pts = np.asarray(where, dtype=float)
    f = pairwise(beam, pts.reshape(-1, dwell.ndim), dwell.points())
    return w * (f @ t.flat)


def _axis_footprint(beam: BeamSpec, axis: int, targets: np.ndarray,
                    sources: np.ndarray) -> np.ndarray:
    """Per-axis factor of a separable footprint."""
    if beam.family == "gaussian":
        axis_beam = BeamSpec.gaussian(beam.sigma)
    elif beam.family == "gaussian_aniso":
        axis_beam = BeamSpec.gaussian(math.sqrt(beam.cov[axis, axis]))
    elif beam.family == "moving_average_cube":
        axis_beam = BeamSpec.cube(beam.sigma)
    elif beam.family == "sinc_truncation":
        axis_beam = BeamSpec.sinc(beam.cutoff)
    else:
        raise InvalidArgument(f"{beam.family} does not factorize over axes")
    return pairwise(axis_beam, targets[:, None], sources[:, None])


def left_vectors(system: SpectralSystem, beam: BeamSpec, domain: DomainGrid,
                 count: int | None = None) -> SpectralSystem:
    """Complete the singular system: h_n = (A t_n) / sqrt(lambda_n).

    Only modes with eigenvalues above the clamp admit left vectors;
    requesting more raises invalid-argument.
    """
    avail = system.n_above_clamp
    if count is None:
        count = avail
    if count > avail:
        raise InvalidArgument(
            f"requested {count} left vectors but only {avail} eigenvalues "
            "are above the clamp threshold")
    dwell = system.dwell
    w = dwell.spacing ** dwell.ndim
    f = pairwise(beam, domain.points(masked=False), dwell.points())
    h = w * (f @ system.right[:, :count])
    h /= np.sqrt(system.eigenvalues[:count])[None, :]
    return replace(system, beam=beam, domain=domain, left=h)


# Wave structure -------------------------------------------------------------

def mode_parity(t: FieldMap) -> str:
    """'even' or 'odd' under x -> -x on a reflection-symmetric grid."""
    v = t.values
    rev = v[::-1] if v.ndim == 1 else v[::-1, ::-1]
    n = np.linalg.norm(v)
    if n == 0:
        return "even"
    return "even" if np.linalg.norm(v - rev) <= np.linalg.norm(v + rev) else "odd"


def _projection_gap(x: np.ndarray, t: np.ndarray, k: float, parity: str) -> float:
    m = np.cos(k * x) if parity == "even" else np.sin(k * x)
    mm = float(m @ m)
    if mm == 0:
        return float(t @ t)
    return float(t @ t - (t @ m) ** 2 / mm)


def fit_wavenumber(t: FieldMap, parity: str, q: float, half_width: float
                   ) -> tuple[float, float]:
    """Least-squares wavenumber of a * cos(kx) (even) or a * sin(kx) (odd)
    over the interior window [-q L, q L].

    Returns (k, relative residual).  The wavenumber is seeded from the zero
    crossing count and polished to a stationary point of the projection
    objective; non-oscillatory input falls back to k = 0.
    """
    if not 0 < q < 1:
        raise InvalidArgument("interior fraction q must lie in (0, 1)")
    if parity not in ("even", "odd"):
        raise InvalidArgument("parity must be 'even' or 'odd'")
    x = t.grid.axes[0]
    sel = np.abs(x) <= q * half_width
    xs, ts = x[sel], t.flat[sel]
    tt = float(ts @ ts)
    if tt == 0:
        return 0.0, 0.0
    crossings = int(np.count_nonzero(np.diff(np.signbit(ts))))
    span = 2 * q * half_width
    scale = np.max(np.abs(ts))
    if crossings == 0 and np.max(np.abs(ts - ts.mean())) <= 1e-9 * scale:
        # Constant input: the k = 0 cosine is the exact model.
        gap = _projection_gap(xs, ts, 0.0, parity)
        return 0.0, math.sqrt(max(gap, 0.0) / tt)
    # c crossings of cos/sin over the window pin k within pi/span either way.
    lo = max(math.pi * (crossings - 1) / span, 1e-9 / span)
    hi = math.pi * (crossings + 2) / span
    res = optimize.minimize_scalar(
        lambda k: _projection_gap(xs, ts, k, parity),
        bounds=(lo, hi), method="bounded",
        options={"xatol": 1e-12 * max(hi, 1.0)})
    k = float(res.x)
    k = _polish_wavenumber(xs, ts, k, parity)
    gap = _projection_gap(xs, ts, k, parity)
    return k, math.sqrt(max(gap, 0.0) / tt)


def _polish_wavenumber(x, t, k, parity, iters: int = 12) -> float:
    """Secant iteration on the stationarity condition of the projection.

    Drives g'(k) of the projection objective g(k) = <t, m_k>^2 / |m_k|^2 to
    a machine-precision zero; the bounded line search only gets within its
    tolerance, which is not enough for exact-model inputs.
    """
    h = 1e-7 * max(abs(k), 1.0)
    k_prev, g_prev = k + h, _proj_deriv(x, t, k + h, parity)
    g = _proj_deriv(x, t, k, parity)
    for _ in range(iters):
        denom = g - g_prev
        if denom == 0 or not np.isfinite(denom):
            break
        k_new = k - g * (k - k_prev) / denom
        if not np.isfinite(k_new) or k_new <= 0:
            break
        k_prev, g_prev = k, g
        k, g = k_new, _proj_deriv(x, t, k_new, parity)
        if abs(k - k_prev) <= 1e-15 * max(abs(k), 1.0):
            break
    return k


def _proj_deriv(x, t, k, parity) -> float:
    if parity == "even":
        m, dm = np.cos(k * x), -x * np.sin(k * x)
    else:
        m, dm = np.sin(k * x), x * np.cos(k * x)
    u, v = float(t @ m), float(m @ m)
    du, dv = float(t @ dm), 2 * float(m @ dm)
    return (2 * u * du * v - u * u * dv) / v ** 2


def dispersion_table(system: SpectralSystem, sigma: float, q: float,
                     half_width: float, floor: float = 1e-6) -> np.ndarray:
    """Rows (n, k_n, lambda_n, exp(-k_n^2 sigma^2), relative gap) for every
    mode with lambda_n >= floor.  Mode indices are 0-based."""
    rows = []
    for n in range(system.n_above_clamp):
        lam = system.eigenvalues[n]
        if lam < floor:
            break
        t = system.t_vec(n)
        k, _ = fit_wavenumber(t, mode_parity(t), q, half_width)
        pred = math.exp(-k * k * sigma * sigma)
        rows.append((n, k, lam, pred, abs(lam - pred) / lam))
    return np.array(rows)


def plane_wave_response(sigma: float, half_width: float, b: float, x1: float,
                        q: float = 0.9) -> tuple[complex, complex]:
    """Response of the Gaussian overlap kernel to a plane wave of wavenumber
    b supported on the domain, evaluated at an interior point x1.

    Returns (numeric, predicted) where predicted = exp(-b^2 s^2) exp(i b x1);
    deep inside the domain the two agree up to an exponentially small
    boundary term.
    """
    if q > 0.9:
        raise InvalidArgument("interior fraction q must not exceed 0.9")
    if abs(x1) > q * half_width:
        raise InvalidArgument("x1 must lie in the interior window [-qL, qL]")
    nodes, w = panels_for_scale(-half_width, half_width, sigma)
    kv = overlap_gaussian_closed(np.full(nodes.shape, x1), nodes, sigma, half_width)
    numeric = complex(np.sum(w * kv * np.cos(b * nodes)),
                      np.sum(w * kv * np.sin(b * nodes)))
    predicted = np.exp(-b * b * sigma * sigma) * np.exp(1j * b * x1)
    return numeric, complex(predicted)


# Global spectral identities ---------------------------------------------------

@dataclass(frozen=True)
class TraceDiagnostics:
    trace_sum: float
    trace_predicted: float
    hs_sum: float
    hs_predicted: float


def trace_diagnostics(kernel: KernelMatrix, beam: BeamSpec,
                      domain: DomainGrid) -> TraceDiagnostics:
    """Trace and Hilbert-Schmidt sums of the assembled operator against
    their continuum predictions:

        sum lambda_n   = vol(domain) * int f^2,
        sum lambda_n^2 = int_domain int_domain (f * f)(x - y)^2 dx dy.
    """
    m = kernel.matrix
    trace_sum = float(np.trace(m))
    hs_sum = float(np.sum(m * m))
    if domain.cell_count == 0:
        return TraceDiagnostics(0.0 if m.size == 0 else trace_sum, 0.0,
                                0.0 if m.size == 0 else hs_sum, 0.0)
    trace_pred = domain.area * l2sq_norm(beam)
    hs_pred = _hs_double_integral(beam, domain)
    return TraceDiagnostics(trace_sum, trace_pred, hs_sum, hs_pred)


def _hs_double_integral(beam: BeamSpec, domain: DomainGrid) -> float:
    if domain.mask is not None:
        pts = domain.points(masked=True)
        w = domain.spacing ** domain.ndim
        d = pts[:, None, :] - pts[None, :, :]
        g = autocorrelation(beam, d.reshape(-1, domain.ndim).squeeze(-1)
                            if domain.ndim == 1 else d.reshape(-1, domain.ndim))
        return w * w * float(np.sum(np.asarray(g) ** 2))
    if beam.separable or domain.ndim == 1:
        total = 1.0
        for ax in range(domain.ndim):
            lo, hi = domain.lower[ax], domain.upper[ax]
            span = hi - lo
            nodes, w = panels_for_scale(-span, span, beam.scale)
            if domain.ndim == 1:
                g = np.asarray(autocorrelation(beam, nodes))
            else:
                g = _axis_autocorr(beam, ax, nodes)
            total *= float(np.sum(w * g * g * (span - np.abs(nodes))))
        return total
    raise InvalidArgument("Hilbert-Schmidt prediction needs a separable beam "
                          "or a masked domain")


def _axis_autocorr(beam: BeamSpec, axis: int, u: np.ndarray) -> np.ndarray:
    if beam.family == "gaussian":
        return np.asarray(autocorrelation(BeamSpec.gaussian(beam.sigma), u))
    if beam.family == "gaussian_aniso":
        s = math.sqrt(beam.cov[axis, axis])
        return np.asarray(autocorrelation(BeamSpec.gaussian(s), u))
    if beam.family == "moving_average_cube":
        return np.asarray(autocorrelation(BeamSpec.cube(beam.sigma), u))
    if beam.family == "sinc_truncation":
        return np.asarray(autocorrelation(BeamSpec.sinc(beam.cutoff), u))
    raise InvalidArgument(f"{beam.family} does not factorize over axes")


def asymptotic_eigenvalue(beam: BeamSpec, k) -> np.ndarray | float:
    """Large-domain eigenvalue asymptote (2 pi)^n |F f(k)|^2."""
    return (2 * math.pi) ** beam.dim * fourier_magnitude_sq(beam, k)


def disk_sector_modes(m: int, parity: str, sigma: float, radius: float,
                      spacing: float, count: int | None = None
                      ) -> tuple[np.ndarray, list[DiskSectorField]]:
    """Eigenpairs of the m-th angular sector of the disk operator.

    The radial operator acts with measure r dr on [0, radius + 5 sigma];
    cosine and sine sectors share the same radial spectrum, so the full
    disk spectrum is the union over harmonics with m >= 1 counted twice.
    Radial profiles are normalized to pi * int t^2 r dr = 1.
    """
    from .core import MARGIN_SIGMAS
    from .kernels import disk_sector_matrix

    outer = radius + MARGIN_SIGMAS * sigma
    n_cells = int(np.ceil(outer / spacing - 1e-9))
    radii = spacing * (np.arange(n_cells) + 0.5)
    mat = disk_sector_matrix(m, radii, spacing, sigma, radius)
    vals, vecs = linalg.eigh(mat)
    vals, vecs = vals[::-1], vecs[:, ::-1]
    vals = np.where(vals > CLAMP_RELATIVE * max(vals[0], 0.0), vals, 0.0)
    if count is None:
        count = int(np.count_nonzero(vals > 0))
    fields = []
    weight = np.sqrt(math.pi) * np.sqrt(radii * spacing)
    for n in range(count):
        profile = vecs[:, n] / weight
        i = np.argmax(np.abs(profile))
        if profile[i] < 0:
            profile = -profile
        fields.append(DiskSectorField(harmonic=m, parity=parity,
                                      radii=radii, values=profile))
    return vals[:count], fields


def tail_decay_table(system: SpectralSystem, sigma: float, half_width: float,
                     n: int) -> np.ndarray:
    """Diagnostic ratios of mode n against the conjectured tail shape
    (x - L)^(-1) exp(-(x - L)^2 / (2 sigma^2)) beyond the domain edge.

    Purely informational: the true decay law is an open question, so the
    ratios are reported, never asserted.  Rows are (x, t_n(x), ratio).
    """
    x = system.dwell.axes[0]
    t = system.right[:, n]
    sel = x > half_width + sigma
    xs, ts = x[sel], t[sel]
    shape = np.exp(-(xs - half_width) ** 2 / (2 * sigma ** 2)) \
        / (xs - half_width)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(shape > 0, ts / shape, np.nan)
    return np.column_stack([xs, ts, ratio])


# 2D tensor systems -----------------------------------------------------------

def tensor_mode_order(sys_x: SpectralSystem, sys_y: SpectralSystem,
                      count: int) -> list[tuple[int, int, float]]:
    """Top modes of a 2D tensor system ordered by the eigenvalue product.

    Returns 0-based (k, l, lambda_k * lambda_l) triples, descending in the
    product with deterministic tie-break by (k + l, then k).
    """
    nx, ny = sys_x.n_modes, sys_y.n_modes
    if count > nx * ny:
        raise InvalidArgument("count exceeds the number of available modes")
    prod = np.outer(sys_x.eigenvalues, sys_y.eigenvalues).ravel()
    kk, ll = np.divmod(np.arange(prod.size), ny)
    order = np.lexsort((kk, kk + ll, -prod))[:count]
    return [(int(kk[i]), int(ll[i]), float(prod[i])) for i in order]


@dataclass(frozen=True, eq=False)
class TensorSystem:
    """Tensor-product singular system on a 2D rectangle."""

    sys_x: SpectralSystem
    sys_y: SpectralSystem
    dwell: DwellGrid
    domain: DomainGrid
    beam: BeamSpec
    order: list[tuple[int, int, float]]

    @classmethod
    def build(cls, beam: BeamSpec, dwell: DwellGrid, domain: DomainGrid,
              count: int) -> "TensorSystem":
        from .kernels import assemble_normal_matrix

        if beam.dim != 2 or not beam.separable:
            raise InvalidArgument("tensor systems need a separable 2D beam")
        if domain.mask is not None:
            raise InvalidArgument("tensor systems need an unmasked rectangle")
        systems = []
        for ax in range(2):
            ax_beam = _axis_beam(beam, ax)
            ax_dwell = DwellGrid(axes=(dwell.axes[ax],), spacing=dwell.spacing)
            ax_domain = DomainGrid(axes=(domain.axes[ax],), spacing=domain.spacing)
            kern = assemble_normal_matrix(ax_beam, ax_dwell, ax_domain)
            sys_ax = decompose(kern)
            max_left = sys_ax.n_above_clamp
            systems.append(left_vectors(sys_ax, ax_beam, ax_domain, max_left))
        order = tensor_mode_order(systems[0], systems[1], count)
        order = [(k, l, p) for (k, l, p) in order if p > 0]
        return cls(sys_x=systems[0], sys_y=systems[1], dwell=dwell,
                   domain=domain, beam=beam, order=order)

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.array([p for (_, _, p) in self.order])

    def left_columns(self, count: int) -> np.ndarray:
        """Left singular vectors h_n on the domain, one flattened column per
        tensor mode."""
        cols = [np.outer(self.sys_x.left[:, k], self.sys_y.left[:, l]).ravel()
                for (k, l, _) in self.order[:count]]
        return np.stack(cols, axis=1)

    def dwell_map(self, coeffs: np.ndarray) -> FieldMap:
        """Etch map sum_n coeffs_n / sqrt(lambda_n) * t_n on the dwell grid."""
        out = np.zeros(self.dwell.shape)
        for c, (k, l, p) in zip(coeffs, self.order):
            if c == 0:
                continue
            out += (c / math.sqrt(p)) * np.outer(self.sys_x.right[:, k],
                                                 self.sys_y.right[:, l])
        return FieldMap(self.dwell, out)

    def reconstruction(self, coeffs: np.ndarray) -> FieldMap:
        out = np.zeros(self.domain.shape)
        for c, (k, l, _) in zip(coeffs, self.order):
            if c == 0:
                continue
            out += c * np.outer(self.sys_x.left[:, k], self.sys_y.left[:, l])
        return FieldMap(self.domain, out)


def _axis_beam(beam: BeamSpec, axis: int) -> BeamSpec:
    if beam.family == "gaussian":
        return BeamSpec.gaussian(beam.sigma)
    if beam.family == "gaussian_aniso":
        return BeamSpec.gaussian(math.sqrt(beam.cov[axis, axis]))
    if beam.family == "moving_average_cube":
        return BeamSpec.cube(beam.sigma)
    if beam.family == "sinc_truncation":
        return BeamSpec.sinc(beam.cutoff)
    raise InvalidArgument(f"{beam.family} does not factorize over axes")
