"""Tool influence function families.

A beam spec describes the per-unit-time removal footprint f(x) of the tool.
Supported families (n is the spatial dimension):

=================== ======================================================
family              f(x)
=================== ======================================================
gaussian            (2 pi s^2)^(-n/2) exp(-|x|^2 / (2 s^2))
gaussian_aniso      (2 pi)^(-n/2) |det B|^(-1/2) exp(-<B^-1 x, x>/2)
cauchy_poisson      c_n s / (s^2 + |x|^2)^((n+1)/2),  c_n = G((n+1)/2)/pi^((n+1)/2)
moving_average_ball indicator(|x| <= s) / vol(ball_s)
moving_average_cube indicator(max|x_i| <= s) / (2 s)^n
sinc_truncation     (2 K / pi)^n prod_i sinc(K x_i)          (removes |k|>K)
tube_poisson        (1/2pi) int I0(k r)/I0(k R) e^(i k x) dk (axial, r < R)
=================== ======================================================

All families except sinc_truncation integrate to one.  Evaluations are pure
and vectorized; a BeamSpec is immutable and safe for concurrent use.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import InvalidArgument, NumericFailure, UnsupportedForFamily
from .quadrature import panel_nodes

FAMILIES = (
    "gaussian",
    "gaussian_aniso",
    "cauchy_poisson",
    "moving_average_ball",
    "moving_average_cube",
    "sinc_truncation",
    "tube_poisson",
)

_NORMALIZED = ("gaussian", "gaussian_aniso", "cauchy_poisson",
               "moving_average_ball", "moving_average_cube")


def _ball_volume(n: int, radius: float) -> float:
    return math.pi ** (n / 2) * radius ** n / math.gamma(n / 2 + 1)


def _cauchy_const(n: int) -> float:
    return math.gamma((n + 1) / 2) / math.pi ** ((n + 1) / 2)


@dataclass(frozen=True)
class BeamSpec:
    """A tool influence function family with its scale parameters."""

    family: str
    dim: int = 1
    sigma: float | None = None
    cov: np.ndarray | None = None      # gaussian_aniso covariance
    cutoff: float | None = None        # sinc_truncation wavenumber K
    r: float | None = None             # tube_poisson observation radius
    R: float | None = None             # tube_poisson boundary radius

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InvalidArgument(f"unknown beam family '{self.family}'")
        if self.dim < 1:
            raise InvalidArgument("beam dimension must be a positive integer")
        if self.family in ("gaussian", "cauchy_poisson", "moving_average_ball",
                           "moving_average_cube"):
            if self.sigma is None or self.sigma <= 0:
                raise InvalidArgument("scale parameter sigma must be positive")
        elif self.family == "gaussian_aniso":
            if self.cov is None:
                raise InvalidArgument("gaussian_aniso requires a covariance matrix")
            b = np.asarray(self.cov, dtype=float)
            if b.shape != (self.dim, self.dim) or not np.allclose(b, b.T):
                raise InvalidArgument("covariance must be a symmetric (n, n) matrix")
            if np.any(np.linalg.eigvalsh(b) <= 0):
                raise InvalidArgument("covariance must be positive definite")
            b.setflags(write=False)
            object.__setattr__(self, "cov", b)
        elif self.family == "sinc_truncation":
            if self.cutoff is None or self.cutoff <= 0:
                raise InvalidArgument("cutoff wavenumber must be positive")
        elif self.family == "tube_poisson":
            if self.dim != 1:
                raise InvalidArgument("tube_poisson is an axial (1D) family")
            if self.R is None or self.R <= 0 or self.r is None or self.r < 0:
                raise InvalidArgument("tube radii must satisfy 0 <= r < R")
            if self.r >= self.R:
                raise InvalidArgument("tube radii must satisfy r < R")

    # Constructors ---------------------------------------------------------

    @classmethod
    def gaussian(cls, sigma: float, dim: int = 1) -> "BeamSpec":
        return cls("gaussian", dim=dim, sigma=sigma)

    @classmethod
    def gaussian_aniso(cls, cov) -> "BeamSpec":
        cov = np.asarray(cov, dtype=float)
        return cls("gaussian_aniso", dim=cov.shape[0], cov=cov)

    @classmethod
    def cauchy(cls, sigma: float, dim: int = 1) -> "BeamSpec":
        return cls("cauchy_poisson", dim=dim, sigma=sigma)

    @classmethod
    def ball(cls, sigma: float, dim: int = 1) -> "BeamSpec":
        return cls("moving_average_ball", dim=dim, sigma=sigma)

    @classmethod
    def cube(cls, sigma: float, dim: int = 1) -> "BeamSpec":
        return cls("moving_average_cube", dim=dim, sigma=sigma)

    @classmethod
    def sinc(cls, cutoff: float, dim: int = 1) -> "BeamSpec":
        return cls("sinc_truncation", dim=dim, cutoff=cutoff)

    @classmethod
    def tube(cls, r: float, R: float) -> "BeamSpec":
        return cls("tube_poisson", dim=1, r=r, R=R)

    # Properties -----------------------------------------------------------

    @property
    def scale(self) -> float:
        """Length scale used for dwell-grid margins (5 * scale).

        gaussian-like and moving-average families: sigma; anisotropic
        Gaussian: the largest covariance standard deviation; spectral
        truncation: 1/K; tube: the boundary radius R.
        """
        if self.family == "gaussian_aniso":
            return float(np.sqrt(np.max(np.linalg.eigvalsh(self.cov))))
        if self.family == "sinc_truncation":
            return 1.0 / self.cutoff
        if self.family == "tube_poisson":
            return self.R
        return self.sigma

    @property
    def separable(self) -> bool:
        """True when f factorizes as a product over coordinate axes."""
        if self.family in ("gaussian", "moving_average_cube", "sinc_truncation"):
            return True
        if self.family == "gaussian_aniso":
            return bool(np.allclose(self.cov, np.diag(np.diag(self.cov))))
        return self.dim == 1


# Pointwise evaluation ------------------------------------------------------

def _prep_points(beam: BeamSpec, x) -> tuple[np.ndarray, tuple, bool]:
    """Normalize to an (..., dim) point array; report output shape."""
    x = np.asarray(x, dtype=float)
    if beam.dim == 1:
        return np.atleast_1d(x)[..., None], np.shape(x), x.ndim == 0
    if x.ndim == 0 or x.shape[-1] != beam.dim:
        raise InvalidArgument(
            f"point dimension does not match beam dimension {beam.dim}")
    return x, x.shape[:-1], x.ndim == 1


def evaluate(beam: BeamSpec, x) -> np.ndarray | float:
    """Evaluate f at one or many points.

    For 1D beams ``x`` is interpreted elementwise; for nD beams the last
    axis of ``x`` must have length n.  Returns a scalar for scalar input.
    """
    pts, shape, scalar_in = _prep_points(beam, x)
    out = _evaluate_points(beam, pts).reshape(shape)
    return float(out[()]) if scalar_in else out


def _evaluate_points(beam: BeamSpec, pts: np.ndarray) -> np.ndarray:
    n = beam.dim
    fam = beam.family
    if fam == "gaussian":
        s2 = beam.sigma ** 2
        q = np.sum(pts ** 2, axis=-1)
        return (2 * math.pi * s2) ** (-n / 2) * np.exp(-q / (2 * s2))
    if fam == "gaussian_aniso":
        binv = np.linalg.inv(beam.cov)
        q = np.einsum("...i,ij,...j->...", pts, binv, pts)
        det = np.linalg.det(beam.cov)
        return (2 * math.pi) ** (-n / 2) * det ** -0.5 * np.exp(-q / 2)
    if fam == "cauchy_poisson":
        q = np.sum(pts ** 2, axis=-1)
        return _cauchy_const(n) * beam.sigma / (beam.sigma ** 2 + q) ** ((n + 1) / 2)
    if fam == "moving_average_ball":
        q = np.sum(pts ** 2, axis=-1)
        return np.where(q <= beam.sigma ** 2, 1.0 / _ball_volume(n, beam.sigma), 0.0)
    if fam == "moving_average_cube":
        inside = np.all(np.abs(pts) <= beam.sigma, axis=-1)
        return np.where(inside, (2.0 * beam.sigma) ** -n, 0.0)
    if fam == "sinc_truncation":
        z = beam.cutoff * pts
        return (2 * beam.cutoff / math.pi) ** n * np.prod(np.sinc(z / math.pi), axis=-1)
    if fam == "tube_poisson":
        return _tube_kernel(beam, pts[..., 0])
    raise InvalidArgument(fam)


# Tube Poisson kernel --------------------------------------------------------

def _tube_ratio(beam: BeamSpec, k: np.ndarray) -> np.ndarray:
    # I0(k r) / I0(k R) computed with scaled Bessels to avoid overflow.
    k = np.asarray(k, dtype=float)
    return (special.ive(0, k * beam.r) / special.ive(0, k * beam.R)
            * np.exp(-k * (beam.R - beam.r)))


def _tube_kmax(beam: BeamSpec, tol: float = 1e-12) -> float:
    k = 1.0 / beam.R
    while _tube_ratio(beam, np.array([k]))[0] > tol:
        k *= 2.0
        if k > 1e8 / beam.R:
            raise NumericFailure("tube kernel band limit search diverged",
                                 kmax=k, tol=tol)
    return k


def _tube_fourier_integral(beam: BeamSpec, xi: np.ndarray, power: int) -> np.ndarray:
    """(1/pi) * int_0^kmax ratio(k)**power * cos(k xi) dk, adaptively refined."""
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    kmax = _tube_kmax(beam)
    # Panels resolve both the kernel decay scale and the cosine oscillation.
    osc = np.max(np.abs(xi)) if xi.size else 0.0
    width = min(beam.R, kmax / 8.0)
    if osc > 0:
        width = min(width, math.pi / osc)
    panels = max(8, int(np.ceil(kmax / width)))
    prev = None
    peak = None
    for _ in range(6):
        k, w = panel_nodes(0.0, kmax, panels)
        vals = _tube_ratio(beam, k) ** power
        out = (np.cos(np.outer(xi, k)) * (vals * w)).sum(axis=1) / math.pi
        if peak is None:
            # Kernel value at the origin bounds |out|; far-tail values are
            # exponentially below it and only meaningful to absolute accuracy.
            peak = float(np.sum(vals * w)) / math.pi
        if prev is not None:
            if np.max(np.abs(out - prev)) <= 1e-11 * max(peak, 1e-300):
                return out
        prev = out
        panels *= 2
    raise NumericFailure("tube kernel quadrature did not converge",
                         panels=panels, last=prev)


def _tube_kernel(beam: BeamSpec, xi: np.ndarray) -> np.ndarray:
    shape = np.shape(xi)
    out = _tube_fourier_integral(beam, np.ravel(xi), power=1)
    return out.reshape(shape)


# Norms ----------------------------------------------------------------------

def l1_norm(beam: BeamSpec) -> float:
    """Integral of |f|; exactly one for the normalized families."""
    if beam.family in _NORMALIZED:
        return 1.0
    if beam.family == "tube_poisson":
        # Kernel decays like exp(-j01 |x| / R); integrate |f| far past that.
        span = 16.0 * beam.R * math.log(10.0) / 2.404826
        x, w = panel_nodes(0.0, span, panels=max(16, int(span / (beam.R / 2))))
        vals = np.abs(_tube_kernel(beam, x))
        return 2.0 * float(np.sum(vals * w))
    raise UnsupportedForFamily(
        "sinc_truncation has no finite L1 norm")


def l2sq_norm(beam: BeamSpec) -> float:
    """Integral of f**2."""
    n, fam = beam.dim, beam.family
    if fam == "gaussian":
        return (2 * beam.sigma * math.sqrt(math.pi)) ** -n
    if fam == "gaussian_aniso":
        return (4 * math.pi) ** (-n / 2) / math.sqrt(np.linalg.det(beam.cov))
    if fam == "cauchy_poisson":
        return _cauchy_const(n) / (2 * beam.sigma) ** n
    if fam == "moving_average_ball":
        return 1.0 / _ball_volume(n, beam.sigma)
    if fam == "moving_average_cube":
        return (2.0 * beam.sigma) ** -n
    if fam == "sinc_truncation":
        return (4 * beam.cutoff / math.pi) ** n
    if fam == "tube_poisson":
        return float(_tube_fourier_integral(beam, np.zeros(1), power=2)[0])
    raise InvalidArgument(fam)


# Autocorrelation ------------------------------------------------------------

def autocorrelation(beam: BeamSpec, x) -> np.ndarray | float:
    """(f * f)(x): closed forms where the family admits one.

    Gaussians autocorrelate to Gaussians of doubled covariance, the Cauchy
    family is a convolution semigroup in sigma, moving averages give tent /
    lens overlaps, and the spectral truncation reproduces itself; the tube
    kernel falls back to quadrature of the squared Fourier ratio.
    """
    pts, shape, scalar_in = _prep_points(beam, x)
    out = _autocorr_points(beam, pts).reshape(shape)
    return float(out[()]) if scalar_in else out


def _autocorr_points(beam: BeamSpec, pts: np.ndarray) -> np.ndarray:
    n, fam = beam.dim, beam.family
    if fam == "gaussian":
        wide = BeamSpec.gaussian(beam.sigma * math.sqrt(2.0), dim=n)
        return _evaluate_points(wide, pts)
    if fam == "gaussian_aniso":
        wide = BeamSpec("gaussian_aniso", dim=n, cov=2.0 * np.asarray(beam.cov))
        return _evaluate_points(wide, pts)
    if fam == "cauchy_poisson":
        wide = BeamSpec.cauchy(2.0 * beam.sigma, dim=n)
        return _evaluate_points(wide, pts)
    if fam == "moving_average_cube":
        s = beam.sigma
        tent = np.clip(2 * s - np.abs(pts), 0.0, None) / (4 * s * s)
        return np.prod(tent, axis=-1)
    if fam == "moving_average_ball":
        # Overlap volume of two balls at distance d, via the spherical cap
        # formula: vol = V_n s^n I_x((n+1)/2, 1/2) with x = 1 - (d/2s)^2.
        s = beam.sigma
        d = np.sqrt(np.sum(pts ** 2, axis=-1))
        x = np.clip(1.0 - (d / (2 * s)) ** 2, 0.0, 1.0)
        return special.betainc((n + 1) / 2, 0.5, x) / _ball_volume(n, s)
    if fam == "sinc_truncation":
        z = beam.cutoff * pts
        return (4 * beam.cutoff / math.pi) ** n * np.prod(np.sinc(z / math.pi), axis=-1)
    if fam == "tube_poisson":
        return _tube_fourier_integral(beam, pts[..., 0].ravel(), power=2).reshape(
            pts.shape[:-1])
    raise InvalidArgument(fam)


# Fourier magnitude ----------------------------------------------------------

def fourier_magnitude_sq(beam: BeamSpec, k) -> np.ndarray | float:
    """|F f(k)|^2 with F f(k) = (2 pi)^(-n/2) * int f(x) exp(-i k x) dx."""
    pts, shape, scalar_in = _prep_points(beam, k)
    out = _fourier_points(beam, pts).reshape(shape)
    return float(out[()]) if scalar_in else out


def _fourier_points(beam: BeamSpec, kk: np.ndarray) -> np.ndarray:
    n, fam = beam.dim, beam.family
    pref = (2 * math.pi) ** -n
    if fam == "gaussian":
        q = np.sum(kk ** 2, axis=-1)
        return pref * np.exp(-beam.sigma ** 2 * q)
    if fam == "gaussian_aniso":
        q = np.einsum("...i,ij,...j->...", kk, np.asarray(beam.cov), kk)
        return pref * np.exp(-q)
    if fam == "cauchy_poisson":
        q = np.sqrt(np.sum(kk ** 2, axis=-1))
        return pref * np.exp(-2 * beam.sigma * q)
    if fam == "moving_average_ball":
        z = beam.sigma * np.sqrt(np.sum(kk ** 2, axis=-1))
        if n == 1:
            return pref * np.sinc(z / math.pi) ** 2
        if n == 2:
            zz = np.where(z == 0, 1.0, z)
            airy = np.where(z == 0, 1.0, 2 * special.j1(zz) / zz)
            return pref * airy ** 2
        raise UnsupportedForFamily("ball Fourier transform implemented for n <= 2")
    if fam == "moving_average_cube":
        return pref * np.prod(np.sinc(beam.sigma * kk / math.pi), axis=-1) ** 2
    if fam == "sinc_truncation":
        inside = np.all(np.abs(kk) <= beam.cutoff, axis=-1)
        return np.where(inside, pref * 4.0 ** n, 0.0)
    if fam == "tube_poisson":
        return pref * _tube_ratio(beam, np.abs(kk[..., 0])) ** 2
    raise InvalidArgument(fam)


# Pairwise evaluation (kernel assembly back end) ------------------------------

def pairwise(beam: BeamSpec, targets: np.ndarray, sources: np.ndarray) -> np.ndarray:
    """Matrix f(targets[i] - sources[j]) without forming the full
    (M, N, n) displacement tensor for isotropic families."""
    t = np.atleast_2d(np.asarray(targets, dtype=float))
    s = np.atleast_2d(np.asarray(sources, dtype=float))
    if t.shape[1] != beam.dim or s.shape[1] != beam.dim:
        raise InvalidArgument("point dimension does not match beam dimension")
    fam = beam.family
    if fam in ("gaussian", "cauchy_poisson", "moving_average_ball"):
        q = (np.sum(t ** 2, axis=1)[:, None] + np.sum(s ** 2, axis=1)[None, :]
             - 2.0 * t @ s.T)
        np.clip(q, 0.0, None, out=q)
        n, sg = beam.dim, beam.sigma
        if fam == "gaussian":
            return (2 * math.pi * sg ** 2) ** (-n / 2) * np.exp(-q / (2 * sg ** 2))
        if fam == "cauchy_poisson":
            return _cauchy_const(n) * sg / (sg ** 2 + q) ** ((n + 1) / 2)
        return np.where(q <= sg ** 2, 1.0 / _ball_volume(n, sg), 0.0)
    if fam in ("moving_average_cube", "sinc_truncation") or (
            fam == "gaussian_aniso" and beam.separable):
        out = np.ones((t.shape[0], s.shape[0]))
        for ax in range(beam.dim):
            d = t[:, ax][:, None] - s[:, ax][None, :]
            if fam == "moving_average_cube":
                out *= np.where(np.abs(d) <= beam.sigma, 1.0 / (2 * beam.sigma), 0.0)
            elif fam == "sinc_truncation":
                out *= (2 * beam.cutoff / math.pi) * np.sinc(beam.cutoff * d / math.pi)
            else:
                sg = math.sqrt(beam.cov[ax, ax])
                out *= (2 * math.pi * sg ** 2) ** -0.5 * np.exp(-d ** 2 / (2 * sg ** 2))
        return out
    diff = t[:, None, :] - s[None, :, :]
    return _evaluate_points(beam, diff)
