"""Etch-map solvers.

Every route ends in a dwell-time map:

* truncated pseudoinverse of the singular system;
* pointwise least-squares fit of the measurement onto the leading left
  singular vectors with a Tikhonov term weighted by 1/lambda_n (the
  reproducing-kernel norm of the expansion), then division by the singular
  values to lift coefficients into dwell space;
* kernel (representer) regression directly against the beam
  autocorrelation kernel, whose minimizer maps to a dwell evaluator built
  from shifted beam footprints;
* nonnegative radial-basis fitting with footprints as basis functions,
  certified by its KKT conditions;
* the multi-beam block normal equations, optionally under positivity.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, optimize

from .beams import BeamSpec, autocorrelation, evaluate, pairwise
from .core import DomainGrid, DwellGrid, FieldMap, weighted_inner
from .errors import (
    ConditionNumberWarning,
    ConvergenceFailure,
    InvalidArgument,
    RankDeficiencyWarning,
    TruncationWarning,
)
from .kernels import assemble_cross_matrix, assemble_normal_matrix
from .spectral import SpectralSystem, TensorSystem, apply_forward

KKT_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class SampleSet:
    """Measurement samples: points inside the domain and their values."""

    points: np.ndarray
    values: np.ndarray
    grid: DomainGrid | None = None     # set when samples are grid cells

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        vals = np.asarray(self.values, dtype=float).ravel()
        if pts.shape[0] != vals.size:
            raise InvalidArgument("points and values must have equal counts")
        if not (np.all(np.isfinite(pts)) and np.all(np.isfinite(vals))):
            raise InvalidArgument("sample points and values must be finite")
        pts.setflags(write=False)
        vals.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_field(cls, measurement: FieldMap) -> "SampleSet":
        grid = measurement.grid
        if not isinstance(grid, DomainGrid):
            raise InvalidArgument("samples must come from a measurement grid")
        return cls(points=grid.points(masked=True),
                   values=measurement.flat[grid.flat_mask()],
                   grid=grid)

    @property
    def count(self) -> int:
        return self.values.size


@dataclass(frozen=True, eq=False)
class FitResult:
    """Coefficients of a fit plus the bookkeeping needed downstream."""

    coefficients: np.ndarray
    gamma: float
    n_tr: int
    empirical_error: float
    residuals: np.ndarray = field(repr=False)
    kind: str = "truncated"

    @property
    def residual_rms(self) -> float:
        if self.residuals.size == 0:
            return 0.0
        return float(np.sqrt(np.mean(self.residuals ** 2)))


# Truncated singular expansion -------------------------------------------------

def _left_matrix(system: SpectralSystem, n_tr: int) -> np.ndarray:
    """Left singular vectors restricted to included domain cells."""
    if system.left is None:
        raise InvalidArgument("system has no left singular vectors; "
                              "call left_vectors first")
    if n_tr > system.n_left:
        raise InvalidArgument(
            f"truncation order {n_tr} exceeds the {system.n_left} "
            "available left vectors")
    sel = system.domain.flat_mask()
    return system.left[sel, :n_tr]


def pseudoinverse_apply(system: SpectralSystem, measurement: FieldMap,
                        n_tr: int) -> FieldMap:
    """Truncated pseudoinverse: sum_n lambda_n^(-1/2) <h_n, h> t_n."""
    if n_tr < 0 or n_tr > system.n_above_clamp:
        raise InvalidArgument(
            f"truncation order {n_tr} exceeds the spectrum above the clamp")
    h = _left_matrix(system, n_tr)
    w = system.domain.spacing ** system.domain.ndim
    sel = system.domain.flat_mask()
    proj = w * (h.T @ measurement.flat[sel])
    coeffs = proj / np.sqrt(system.eigenvalues[:n_tr])
    return FieldMap(system.dwell, system.right[:, :n_tr] @ coeffs)


def mode_matrix_at(system: SpectralSystem | TensorSystem, samples: SampleSet,
                   n_tr: int) -> np.ndarray:
    """Values of the first n_tr left singular vectors at the sample points."""
    if isinstance(system, TensorSystem):
        if samples.grid is None or not samples.grid.matches(system.domain):
            raise InvalidArgument(
                "tensor-system fits need samples on the system's own grid")
        return system.left_columns(n_tr)
    if samples.grid is not None and system.domain is not None \
            and samples.grid.matches(system.domain):
        return _left_matrix(system, n_tr)
    # Arbitrary points: h_n(x) = (A t_n)(x) / sqrt(lambda_n).
    if n_tr > system.n_above_clamp:
        raise InvalidArgument("truncation order exceeds the usable spectrum")
    w = system.dwell.spacing ** system.dwell.ndim
    f = pairwise(system.beam, samples.points, system.dwell.points())
    return (w * (f @ system.right[:, :n_tr])
            / np.sqrt(system.eigenvalues[:n_tr])[None, :])


def _mode_eigenvalues(system: SpectralSystem | TensorSystem, n_tr: int
                      ) -> np.ndarray:
    lam = system.eigenvalues[:n_tr]
    if lam.size < n_tr or np.any(lam <= 0):
        raise InvalidArgument("truncation order reaches clamped eigenvalues")
    return lam


def fit_truncated(samples: SampleSet, system: SpectralSystem | TensorSystem,
                  n_tr: int, gamma: float = 0.0) -> FitResult:
    """Pointwise least squares on the leading left singular vectors.

    Minimizes (1/2) sum_i (eta_i - sum_n c_n h_n(x_i))^2
              + gamma * sum_n c_n^2 / lambda_n,
    the penalty being the reproducing-kernel norm of the expansion.  Solved
    as a stacked least-squares system (rank revealing); rank deficiency at
    gamma = 0 falls back to the least-norm solution with a warning.
    """
    if n_tr < 1:
        raise InvalidArgument("truncation order must be at least 1")
    if gamma < 0:
        raise InvalidArgument("regularization weight must be nonnegative")
    h = mode_matrix_at(system, samples, n_tr)
    lam = _mode_eigenvalues(system, n_tr)
    eta = samples.values
    if gamma > 0:
        a = np.vstack([h, np.diag(np.sqrt(2 * gamma / lam))])
        b = np.concatenate([eta, np.zeros(n_tr)])
    else:
        a, b = h, eta
    coeffs, _, rank, _ = np.linalg.lstsq(a, b, rcond=None)
    if rank < n_tr:
        warnings.warn("normal system is rank deficient; returning the "
                      "least-norm solution", RankDeficiencyWarning)
    resid = eta - h @ coeffs
    err = 0.5 * float(resid @ resid) + gamma * float(np.sum(coeffs ** 2 / lam))
    return FitResult(coefficients=coeffs, gamma=gamma, n_tr=n_tr,
                     empirical_error=err, residuals=resid, kind="truncated")


def reconstruct_filtered(fit: FitResult, system: SpectralSystem | TensorSystem
                         ) -> FieldMap:
    """Filtered measurement sum_n c_n h_n sampled on the domain grid."""
    c = fit.coefficients
    if isinstance(system, TensorSystem):
        return system.reconstruction(c)
    vals = system.left[:, :c.size] @ c
    return FieldMap(system.domain, vals)


def dwell_from_coeffs(fit: FitResult, system: SpectralSystem | TensorSystem
                      ) -> FieldMap:
    """Etch map sum_n c_n lambda_n^(-1/2) t_n on the dwell grid."""
    c = fit.coefficients
    lam = _mode_eigenvalues(system, c.size)
    if isinstance(system, TensorSystem):
        return system.dwell_map(c)
    return FieldMap(system.dwell, system.right[:, :c.size] @ (c / np.sqrt(lam)))


def truncation_threshold(l_noise: float, sigma: float) -> float:
    """Eigenvalue cutoff exp(-(2 pi sigma / l_noise)^2) for a noise scale."""
    if l_noise <= 0 or sigma <= 0:
        raise InvalidArgument("l_noise and sigma must be positive")
    return math.exp(-((2 * math.pi / l_noise) ** 2) * sigma ** 2)


def choose_truncation(l_noise: float, sigma: float,
                      eigenvalues: np.ndarray) -> int:
    """Largest mode count whose eigenvalues stay above the noise cutoff.

    Modes oscillating faster than the noise scale l_noise are dropped; for
    a Gaussian tool the cutoff eigenvalue is exp(-(2 pi sigma/l_noise)^2).
    Returns 0 with a warning if the cutoff exceeds the whole spectrum.
    """
    thr = truncation_threshold(l_noise, sigma)
    lam = np.asarray(eigenvalues, dtype=float)
    n_tr = int(np.count_nonzero(lam >= thr))
    if n_tr == 0:
        warnings.warn("truncation threshold lies above the largest "
                      "eigenvalue; no modes retained", TruncationWarning)
    return n_tr


# Kernel (representer) regression ----------------------------------------------

def _autocorr_matrix(beam: BeamSpec, pts_a: np.ndarray, pts_b: np.ndarray
                     ) -> np.ndarray:
    d = pts_a[:, None, :] - pts_b[None, :, :]
    if beam.dim == 1:
        return np.asarray(autocorrelation(beam, d[..., 0]))
    return np.asarray(autocorrelation(beam, d))


def rkhs_fit(samples: SampleSet, beam: BeamSpec, gamma: float = 0.0
             ) -> FitResult:
    """Representer fit of the samples in the autocorrelation kernel space.

    Solves (K + 2 gamma I) alpha = eta with K_ij = (f * f)(x_i - x_j); the
    predictor is h(x) = sum_i alpha_i (f * f)(x - x_i), which interpolates
    at gamma = 0.  Ill conditioning triggers a warning and, if the
    factorization fails, a tiny diagonal shift.
    """
    if gamma < 0:
        raise InvalidArgument("regularization weight must be nonnegative")
    k = _autocorr_matrix(beam, samples.points, samples.points)
    n = samples.count
    eta = samples.values
    sys_matrix = k + 2 * gamma * np.eye(n)
    if gamma == 0:
        cond = np.linalg.cond(sys_matrix)
        if not np.isfinite(cond) or cond > 1e12:
            warnings.warn(f"kernel matrix condition number {cond:.2e}; "
                          "solution may be noisy", ConditionNumberWarning)
    try:
        alpha = linalg.solve(sys_matrix, eta, assume_a="pos")
    except linalg.LinAlgError:
        shift = 1e-12 * np.trace(k) / n
        alpha = linalg.solve(sys_matrix + shift * np.eye(n), eta,
                             assume_a="pos")
    resid = eta - k @ alpha
    err = 0.5 * float(resid @ resid) + gamma * float(alpha @ k @ alpha)
    return FitResult(coefficients=alpha, gamma=gamma, n_tr=n,
                     empirical_error=err, residuals=resid, kind="rkhs")


@dataclass(frozen=True, eq=False)
class DwellEvaluator:
    """Callable dwell map t(x) = sum_j alpha_j f(x - y_j)."""

    beam: BeamSpec
    centers: np.ndarray
    weights: np.ndarray

    def __call__(self, x) -> np.ndarray | float:
        pts = np.asarray(x, dtype=float)
        scalar = pts.ndim == 0 if self.beam.dim == 1 else pts.ndim == 1
        f = pairwise(self.beam, pts.reshape(-1, self.beam.dim), self.centers)
        out = f @ self.weights
        return float(out[0]) if scalar else out.reshape(
            pts.shape if self.beam.dim == 1 else pts.shape[:-1])

    def predicted_measurement(self, x) -> np.ndarray | float:
        """Forward map of the dwell evaluator: sum alpha_j (f*f)(x - y_j)."""
        pts = np.asarray(x, dtype=float)
        scalar = pts.ndim == 0 if self.beam.dim == 1 else pts.ndim == 1
        k = _autocorr_matrix(self.beam, pts.reshape(-1, self.beam.dim),
                             self.centers)
        out = k @ self.weights
        return float(out[0]) if scalar else out.reshape(
            pts.shape if self.beam.dim == 1 else pts.shape[:-1])

    def sample(self, dwell: DwellGrid) -> FieldMap:
        return FieldMap(dwell, self(dwell.points().reshape(
            dwell.shape + (dwell.ndim,)) if dwell.ndim > 1
            else dwell.axes[0]))


def rkhs_dwell(fit: FitResult, beam: BeamSpec, samples: SampleSet
               ) -> DwellEvaluator:
    """Dwell evaluator of a representer fit: t(x) = sum alpha_i f(x - x_i)."""
    if fit.kind != "rkhs":
        raise InvalidArgument("rkhs_dwell needs a fit produced by rkhs_fit")
    return DwellEvaluator(beam=beam, centers=samples.points,
                          weights=fit.coefficients)


# Nonnegative radial-basis fitting ----------------------------------------------

def rbf_fit_nonnegative(samples: SampleSet, centers: np.ndarray,
                        beam: BeamSpec, gamma: float = 0.0) -> FitResult:
    """Footprint-basis fit with nonnegative weights.

    Minimizes (1/2) |eta - F alpha|^2 + gamma |alpha|^2 subject to
    alpha >= 0 with F_ij = f(x_i - y_j).  The returned weights carry a KKT
    certificate at tolerance 1e-8 (relative to the data scale); failure to
    certify raises convergence-failure with the best iterate attached.
    """
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    if centers.size == 0:
        raise InvalidArgument("centers must be nonempty")
    if gamma < 0:
        raise InvalidArgument("regularization weight must be nonnegative")
    f = pairwise(beam, samples.points, centers)
    m = centers.shape[0]
    eta = samples.values
    if gamma > 0:
        a = np.vstack([f, math.sqrt(2 * gamma) * np.eye(m)])
        b = np.concatenate([eta, np.zeros(m)])
    else:
        a, b = f, eta
    alpha, _ = optimize.nnls(a, b)
    grad = f.T @ (f @ alpha - eta) + 2 * gamma * alpha
    scale = max(1.0, float(np.max(np.abs(f.T @ eta))))
    active = alpha > 0
    ok = (np.all(np.abs(grad[active]) <= KKT_TOL * scale)
          and np.all(grad[~active] >= -KKT_TOL * scale))
    if not ok:
        raise ConvergenceFailure(
            "nonnegative fit failed its KKT certificate",
            best=alpha, gradient=grad, scale=scale)
    resid = eta - f @ alpha
    err = 0.5 * float(resid @ resid) + gamma * float(alpha @ alpha)
    return FitResult(coefficients=alpha, gamma=gamma, n_tr=m,
                     empirical_error=err, residuals=resid, kind="rbf")


def rbf_dwell(fit: FitResult, beam: BeamSpec, centers: np.ndarray
              ) -> DwellEvaluator:
    if fit.kind != "rbf":
        raise InvalidArgument("rbf_dwell needs a fit from rbf_fit_nonnegative")
    return DwellEvaluator(beam=beam,
                          centers=np.atleast_2d(np.asarray(centers, float)),
                          weights=fit.coefficients)


# Multi-beam solve ---------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class MultiBeamSystem:
    """Block normal system for several beams over one measurement domain."""

    beams: tuple[BeamSpec, ...]
    dwell: DwellGrid
    domain: DomainGrid
    blocks: np.ndarray = field(repr=False)   # (N*m, N*m) assembled matrix

    @property
    def n_beams(self) -> int:
        return len(self.beams)

    def block(self, i: int, j: int) -> np.ndarray:
        m = self.dwell.size
        return self.blocks[i * m:(i + 1) * m, j * m:(j + 1) * m]


def assemble_multibeam(beams, dwell: DwellGrid, domain: DomainGrid
                       ) -> MultiBeamSystem:
    """Assemble the cross-beam Gram blocks A_i^T A_j on a shared domain."""
    beams = tuple(beams)
    if not beams:
        raise InvalidArgument("at least one beam is required")
    dims = {b.dim for b in beams}
    if dims != {dwell.ndim} or domain.ndim != dwell.ndim:
        raise InvalidArgument("beam and grid dimensions must all agree")
    m = dwell.size
    n = len(beams)
    big = np.empty((n * m, n * m))
    for i in range(n):
        for j in range(i, n):
            if i == j:
                # Same code path as the single-beam assembly so a one-beam
                # system reduces to it exactly.
                blk = assemble_normal_matrix(beams[i], dwell, domain,
                                             max_side=dwell.size).matrix
            else:
                blk = assemble_cross_matrix(beams[i], beams[j], dwell, domain)
                big[j * m:(j + 1) * m, i * m:(i + 1) * m] = blk.T
            big[i * m:(i + 1) * m, j * m:(j + 1) * m] = blk
    return MultiBeamSystem(beams=beams, dwell=dwell, domain=domain, blocks=big)


def multibeam_solve(mb: MultiBeamSystem, measurement: FieldMap,
                    gamma: float = 0.0, nonneg: bool = False
                    ) -> list[FieldMap]:
    """Solve the block normal equations (B + 2 gamma I) T = rhs.

    The objective is (1/2)|sum_i A_i t_i - h|^2 + gamma sum_i |t_i|^2 in
    the discrete domain/dwell norms; with ``nonneg`` the same objective is
    minimized under elementwise t_i >= 0.
    """
    if not measurement.grid.matches(mb.domain):
        raise InvalidArgument("measurement grid does not match the system")
    if gamma < 0:
        raise InvalidArgument("regularization weight must be nonnegative")
    m = mb.dwell.size
    n = mb.n_beams
    pts = mb.domain.points(masked=True)
    h = measurement.flat[mb.domain.flat_mask()]
    wy = mb.domain.spacing ** mb.domain.ndim
    wx = mb.dwell.spacing ** mb.dwell.ndim
    foot = [pairwise(b, pts, mb.dwell.points()) for b in mb.beams]
    rhs = np.concatenate([wy * (fi.T @ h) for fi in foot])
    if nonneg:
        design = np.hstack([math.sqrt(wy) * wx * fi for fi in foot])
        target = math.sqrt(wy) * h
        if gamma > 0:
            design = np.vstack([design,
                                math.sqrt(2 * gamma * wx) * np.eye(n * m)])
            target = np.concatenate([target, np.zeros(n * m)])
        sol, _ = optimize.nnls(design, target, maxiter=10 * n * m)
    else:
        sys_matrix = mb.blocks + 2 * gamma * np.eye(n * m)
        if gamma > 0:
            sol = linalg.solve(sys_matrix, rhs, assume_a="pos")
        else:
            sol, _, rank, _ = np.linalg.lstsq(sys_matrix, rhs, rcond=None)
            if rank < n * m:
                warnings.warn("multibeam system is rank deficient; returning "
                              "the least-norm solution", RankDeficiencyWarning)
    return [FieldMap(mb.dwell, sol[i * m:(i + 1) * m]) for i in range(n)]


def multibeam_forward(mb: MultiBeamSystem, dwell_maps) -> FieldMap:
    """Combined forward map sum_i A_i t_i on the measurement domain."""
    total = np.zeros(mb.domain.shape)
    for beam, t in zip(mb.beams, dwell_maps):
        total = total + apply_forward(t, beam, mb.domain).values
    return FieldMap(mb.domain, total)
