"""Radially non-increasing height functions and their overlap geometry.

A site s is attached to the region under a normalized height function H
(its hypograph, living in one dimension more than the index space), and the
field value at s is the basis measure of that region. Dependence between two
sites at distance u is then governed by the overlap volume of two shifted
hypographs, which for normalized radially non-increasing H equals

    C(u) = 2 * Gbar(u / 2),

where Gbar is the survival function of the one-dimensional marginal
(projection onto a coordinate axis) of the probability density H. Every
continuous variant below implements that projection survival in closed form,
so correlations are exact; the classical closed forms (disc lens area, ball
cap volumes, exponential correlation, ...) are recovered as special cases
and checked in the tests.

Variants (d = 1 or 2; scale parameter rho > 0):

- CylinderHeight: uniform on the ball of radius rho; correlation is the
  normalized lens overlap, vanishing beyond 2 rho.
- HalfBallHeight: sqrt(rho^2 - r^2) profile; cubic polynomial correlation
  vanishing beyond 2 rho.
- GaussianHeight: spherical normal, correlation 2 * Phi_bar(u / (2 rho)).
- StudentTHeight: spherical t with df nu, correlation 2 * Tbar_nu(u/(2 rho));
  heavy power tails (nu = 1 gives the spherical Cauchy).
- LaplaceHeight: spherical Laplace scaled so the correlation is the classical
  exponential exp(-u / rho); marginal scale is rho / 2, and the d = 2 profile
  K0-diverges at the origin.
- SlashHeight: spherical slash (normal divided by uniform), power tails.
- NuggetHeight: point-mass limit rho -> 0; pure white-noise component.
- MixtureHeight: convex combination of the above.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import optimize as _optimize
from scipy import special as _special

from .numerics import std_normal_cdf, std_normal_pdf, student_t_cdf

__all__ = [
    "HeightFunction",
    "CylinderHeight",
    "HalfBallHeight",
    "GaussianHeight",
    "StudentTHeight",
    "LaplaceHeight",
    "SlashHeight",
    "NuggetHeight",
    "MixtureHeight",
    "Anisotropy",
    "PairGeometry",
    "correlation",
    "correlation_linear_approx",
    "radial_survival",
    "pair_geometry",
    "transform_coordinates",
]


def _validate_dimension(d):
    if d not in (1, 2):
        raise ValueError("only dimensions 1 and 2 are implemented")


class HeightFunction:
    """Normalized, radially non-increasing height function on R^d."""

    #: True for the degenerate point-mass variant.
    is_nugget = False

    def height_at(self, r):
        """Height at radius r (vectorized)."""
        raise NotImplementedError

    def max_height(self):
        """Supremum of the height; may be inf (singular profile)."""
        raise NotImplementedError

    def support_radius(self):
        """Radius beyond which the height vanishes; inf for full support."""
        return np.inf

    def radial_survival(self, r):
        """Survival function of the one-dimensional projection marginal."""
        raise NotImplementedError

    def radial_mass(self, r):
        """Probability mass of the density within radius r of the origin."""
        raise NotImplementedError

    def reference_scale(self):
        """Length scale used for default discretization choices."""
        raise NotImplementedError

    def correlation(self, u):
        """Overlap correlation 2 * Gbar(u/2) at site distance u >= 0."""
        u = np.asarray(u, dtype=float)
        if np.any(u < 0):
            raise ValueError("distances must be nonnegative")
        out = 2.0 * np.asarray(self.radial_survival(u / 2.0))
        return float(out) if out.ndim == 0 else out

    def radial_mass_inverse(self, q):
        """Radius containing probability mass q of the density."""
        if not 0.0 <= q < 1.0:
            raise ValueError("mass level must lie in [0, 1)")
        if q == 0.0:
            return 0.0
        hi = self.reference_scale()
        while self.radial_mass(hi) < q:
            hi *= 2.0
            if hi > 1e12 * self.reference_scale():
                raise ValueError("radial mass level unreachable")
        return _optimize.brentq(
            lambda r: self.radial_mass(r) - q, 0.0, hi, xtol=1e-12, rtol=1e-14
        )

    def truncation_radius(self, eps):
        """Padding radius for simulation.

        Largest of: the radius with projection survival <= eps and the radius
        with radial mass deficit <= eps. Exact support radius when compact.
        """
        sr = self.support_radius()
        if np.isfinite(sr):
            return sr
        r_mass = self.radial_mass_inverse(1.0 - eps)
        hi = max(r_mass, self.reference_scale())
        while self.radial_survival(hi) > eps:
            hi *= 2.0
        if self.radial_survival(hi / 2.0) <= eps:
            return max(r_mass, hi / 2.0)
        r_surv = _optimize.brentq(
            lambda r: self.radial_survival(r) - eps, hi / 2.0, hi, xtol=1e-10
        )
        return max(r_mass, r_surv)


@dataclass(frozen=True)
class CylinderHeight(HeightFunction):
    """Uniform height over the ball of radius rho."""

    rho: float = 1.0
    dimension: int = 2

    def __post_init__(self):
        if self.rho <= 0:
            raise ValueError("rho must be positive")
        _validate_dimension(self.dimension)

    def height_at(self, r):
        r = np.asarray(r, dtype=float)
        h = 1.0 / (np.pi * self.rho**2) if self.dimension == 2 else 1.0 / (2 * self.rho)
        out = np.where(r <= self.rho, h, 0.0)
        return float(out) if out.ndim == 0 else out

    def max_height(self):
        if self.dimension == 2:
            return 1.0 / (np.pi * self.rho**2)
        return 1.0 / (2.0 * self.rho)

    def support_radius(self):
        return self.rho

    def reference_scale(self):
        return self.rho

    def radial_survival(self, r):
        t = np.clip(np.asarray(r, dtype=float) / self.rho, 0.0, 1.0)
        if self.dimension == 2:
            out = (np.arccos(t) - t * np.sqrt(1.0 - t * t)) / np.pi
        else:
            out = 0.5 * (1.0 - t)
        return float(out) if out.ndim == 0 else out

    def radial_mass(self, r):
        t = np.clip(np.asarray(r, dtype=float) / self.rho, 0.0, 1.0)
        out = t**2 if self.dimension == 2 else t
        return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class HalfBallHeight(HeightFunction):
    """Spherical-cap profile sqrt(rho^2 - r^2), normalized."""

    rho: float = 1.0
    dimension: int = 2

    def __post_init__(self):
        if self.rho <= 0:
            raise ValueError("rho must be positive")
        _validate_dimension(self.dimension)

    def _volume(self):
        if self.dimension == 2:
            return 2.0 * np.pi * self.rho**3 / 3.0
        return np.pi * self.rho**2 / 2.0

    def height_at(self, r):
        r = np.asarray(r, dtype=float)
        out = np.sqrt(np.clip(self.rho**2 - r * r, 0.0, None)) / self._volume()
        return float(out) if out.ndim == 0 else out

    def max_height(self):
        return self.rho / self._volume()

    def support_radius(self):
        return self.rho

    def reference_scale(self):
        return self.rho

    def radial_survival(self, r):
        t = np.clip(np.asarray(r, dtype=float) / self.rho, 0.0, 1.0)
        if self.dimension == 2:
            out = (2.0 - 3.0 * t + t**3) / 4.0
        else:
            out = (np.arccos(t) - t * np.sqrt(1.0 - t * t)) / np.pi
        return float(out) if out.ndim == 0 else out

    def radial_mass(self, r):
        t = np.clip(np.asarray(r, dtype=float) / self.rho, 0.0, 1.0)
        if self.dimension == 2:
            out = 1.0 - (1.0 - t * t) ** 1.5
        else:
            out = (np.arcsin(t) + t * np.sqrt(1.0 - t * t)) * 2.0 / np.pi
        return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class GaussianHeight(HeightFunction):
    """Spherical normal density with marginal standard deviation rho."""

    rho: float = 1.0
    dimension: int = 2

    def __post_init__(self):
        if self.rho <= 0:
            raise ValueError("rho must be positive")
        _validate_dimension(self.dimension)

    def height_at(self, r):
        t = np.asarray(r, dtype=float) / self.rho
        if self.dimension == 2:
            out = np.exp(-0.5 * t * t) / (2.0 * np.pi * self.rho**2)
        else:
            out = std_normal_pdf(t) / self.rho
        return float(out) if np.ndim(out) == 0 else out

    def max_height(self):
        if self.dimension == 2:
            return 1.0 / (2.0 * np.pi * self.rho**2)
        return 1.0 / (np.sqrt(2.0 * np.pi) * self.rho)

    def reference_scale(self):
        return self.rho

    def radial_survival(self, r):
        out = std_normal_cdf(-np.asarray(r, dtype=float) / self.rho)
        return float(out) if np.ndim(out) == 0 else out

    def radial_mass(self, r):
        t = np.asarray(r, dtype=float) / self.rho
        if self.dimension == 2:
            out = -np.expm1(-0.5 * t * t)
        else:
            out = 2.0 * std_normal_cdf(t) - 1.0
        return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class StudentTHeight(HeightFunction):
    """Spherical Student t density, dispersion rho, df nu (nu = 1: Cauchy)."""

    rho: float = 1.0
    nu: float = 1.0
    dimension: int = 2

    def __post_init__(self):
        if self.rho <= 0 or self.nu <= 0:
            raise ValueError("rho and nu must be positive")
        _validate_dimension(self.dimension)

    def height_at(self, r):
        t = np.asarray(r, dtype=float) / self.rho
        if self.dimension == 2:
            out = (1.0 + t * t / self.nu) ** (-(self.nu + 2.0) / 2.0) / (
                2.0 * np.pi * self.rho**2
            )
        else:
            c = np.exp(
                _special.gammaln((self.nu + 1.0) / 2.0)
                - _special.gammaln(self.nu / 2.0)
            ) / np.sqrt(self.nu * np.pi)
            out = c * (1.0 + t * t / self.nu) ** (-(self.nu + 1.0) / 2.0) / self.rho
        return float(out) if np.ndim(out) == 0 else out

    def max_height(self):
        return float(self.height_at(0.0))

    def reference_scale(self):
        return self.rho

    def radial_survival(self, r):
        out = 1.0 - student_t_cdf(np.asarray(r, dtype=float) / self.rho, self.nu)
        return float(out) if np.ndim(out) == 0 else out

    def radial_mass(self, r):
        t = np.asarray(r, dtype=float) / self.rho
        if self.dimension == 2:
            out = 1.0 - (1.0 + t * t / self.nu) ** (-self.nu / 2.0)
        else:
            out = 2.0 * student_t_cdf(t, self.nu) - 1.0
        return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class LaplaceHeight(HeightFunction):
    """Spherical Laplace scaled so that correlation(u) = exp(-u / rho).

    That convention puts the projection marginal scale at rho / 2. In two
    dimensions the profile is (2/pi rho^2) K0(2 r / rho), which diverges
    logarithmically at the origin; simulation handles the unbounded peak by
    capping the hypograph height and compensating the removed mass.
    """

    rho: float = 1.0
    dimension: int = 2

    def __post_init__(self):
        if self.rho <= 0:
            raise ValueError("rho must be positive")
        _validate_dimension(self.dimension)

    @property
    def _marginal_scale(self):
        return self.rho / 2.0

    def height_at(self, r):
        s = self._marginal_scale
        t = np.asarray(r, dtype=float) / s
        if self.dimension == 2:
            with np.errstate(divide="ignore"):
                out = _special.k0(t) / (2.0 * np.pi * s * s)
        else:
            out = np.exp(-t) / (2.0 * s)
        return float(out) if np.ndim(out) == 0 else out

    def max_height(self):
        if self.dimension == 2:
            return np.inf
        return 1.0 / (2.0 * self._marginal_scale)

    def reference_scale(self):
        return self.rho

    def radial_survival(self, r):
        out = 0.5 * np.exp(-np.asarray(r, dtype=float) / self._marginal_scale)
        return float(out) if np.ndim(out) == 0 else out

    def radial_mass(self, r):
        t = np.asarray(r, dtype=float) / self._marginal_scale
        if self.dimension == 2:
            out = np.where(t > 0.0, 1.0 - t * _special.k1(np.maximum(t, 1e-300)), 0.0)
        else:
            out = -np.expm1(-t)
        return float(out) if np.ndim(out) == 0 else out


def _slash_profile_integral(q):
    """I(q) = int_0^1 u^2 exp(-q^2 u^2 / 2) du, stable near q = 0."""
    q = np.asarray(q, dtype=float)
    small = q < 0.1
    qs = np.where(small, 1.0, q)
    closed = np.sqrt(2.0 * np.pi) / 2.0 * (
        2.0 * std_normal_cdf(qs) - 1.0
    ) / qs**3 - np.exp(-0.5 * qs * qs) / (qs * qs)
    q2 = q * q
    series = 1.0 / 3.0 - q2 / 10.0 + q2 * q2 / 56.0 - q2 * q2 * q2 / 432.0
    return np.where(small, series, closed)


@dataclass(frozen=True)
class SlashHeight(HeightFunction):
    """Spherical slash density (normal over an independent uniform), scale rho."""

    rho: float = 1.0
    dimension: int = 2

    def __post_init__(self):
        if self.rho <= 0:
            raise ValueError("rho must be positive")
        _validate_dimension(self.dimension)

    def height_at(self, r):
        q = np.asarray(r, dtype=float) / self.rho
        if self.dimension == 2:
            out = _slash_profile_integral(q) / (2.0 * np.pi * self.rho**2)
        else:
            small = q < 1e-4
            qs = np.where(small, 1.0, q)
            phi0 = 1.0 / np.sqrt(2.0 * np.pi)
            val = -phi0 * np.expm1(-0.5 * qs * qs) / (qs * qs)
            out = np.where(small, 0.5 * phi0 * (1.0 - 0.25 * q * q), val) / self.rho
        return float(out) if np.ndim(out) == 0 else out

    def max_height(self):
        if self.dimension == 2:
            return 1.0 / (6.0 * np.pi * self.rho**2)
        return 1.0 / (2.0 * np.sqrt(2.0 * np.pi) * self.rho)

    def reference_scale(self):
        return self.rho

    def radial_survival(self, r):
        q = np.asarray(r, dtype=float) / self.rho
        phi0 = 1.0 / np.sqrt(2.0 * np.pi)
        qs = np.where(q > 0.0, q, 1.0)
        # (phi(0) - phi(q))/q via expm1: no cancellation for small q
        corr = -phi0 * np.expm1(-0.5 * qs * qs) / qs
        out = np.where(q > 0.0, std_normal_cdf(-q) + corr, 0.5)
        return float(out) if np.ndim(out) == 0 else out

    def radial_mass(self, r):
        q = np.asarray(r, dtype=float) / self.rho
        if self.dimension == 2:
            qs = np.where(q > 0.0, q, 1.0)
            val = 1.0 - np.sqrt(2.0 * np.pi) * (std_normal_cdf(qs) - 0.5) / qs
            out = np.where(q > 0.0, val, 0.0)
        else:
            out = 1.0 - 2.0 * self.radial_survival(r)
        return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class NuggetHeight(HeightFunction):
    """Point-mass limit: perfectly correlated at distance 0, independent else."""

    dimension: int = 2
    is_nugget = True

    def __post_init__(self):
        _validate_dimension(self.dimension)

    def correlation(self, u):
        u = np.asarray(u, dtype=float)
        if np.any(u < 0):
            raise ValueError("distances must be nonnegative")
        out = np.where(u == 0.0, 1.0, 0.0)
        return float(out) if out.ndim == 0 else out

    def radial_survival(self, r):
        raise ValueError(
            "nugget has a degenerate projection; use correlation directly"
        )

    def height_at(self, r):
        raise ValueError("nugget has no pointwise height profile")

    def max_height(self):
        return np.inf

    def support_radius(self):
        return 0.0

    def reference_scale(self):
        raise ValueError("nugget has no length scale")

    def radial_mass(self, r):
        raise ValueError("nugget has a degenerate radial distribution")


class MixtureHeight(HeightFunction):
    """Convex combination of height functions (weights sum to 1).

    At most the nugget parts are degenerate; all continuous parts must share
    the dimension. The mixture height is the weighted sum of part heights,
    and the projection survival/radial mass are the weighted mixtures, so the
    correlation is the weighted sum of part correlations.
    """

    def __init__(self, parts):
        parts = list(parts)
        if not parts:
            raise ValueError("mixture needs at least one part")
        weights = np.array([w for w, _ in parts], dtype=float)
        if np.any(weights <= 0):
            raise ValueError("mixture weights must be positive")
        if abs(weights.sum() - 1.0) > 1e-9:
            raise ValueError("mixture weights must sum to 1")
        dims = {h.dimension for _, h in parts}
        if len(dims) != 1:
            raise ValueError("mixture parts must share the dimension")
        self.dimension = dims.pop()
        self.parts = [(float(w), h) for w, h in parts]
        self._continuous = [(w, h) for w, h in self.parts if not h.is_nugget]
        if not self._continuous:
            raise ValueError("mixture must contain a continuous part")

    @property
    def nugget_weight(self):
        return sum(w for w, h in self.parts if h.is_nugget)

    @property
    def continuous_parts(self):
        return list(self._continuous)

    def correlation(self, u):
        u = np.asarray(u, dtype=float)
        if np.any(u < 0):
            raise ValueError("distances must be nonnegative")
        out = sum(w * h.correlation(u) for w, h in self.parts)
        return float(out) if np.ndim(out) == 0 else out

    def height_at(self, r):
        out = sum(w * h.height_at(r) for w, h in self._continuous)
        return float(out) if np.ndim(out) == 0 else out

    def max_height(self):
        return sum(w * h.max_height() for w, h in self._continuous)

    def support_radius(self):
        return max(h.support_radius() for _, h in self._continuous)

    def reference_scale(self):
        return min(h.reference_scale() for _, h in self._continuous)

    def radial_survival(self, r):
        if self.nugget_weight > 0:
            raise ValueError(
                "mixture with a nugget part has a degenerate projection; "
                "use correlation directly"
            )
        out = sum(w * h.radial_survival(r) for w, h in self._continuous)
        return float(out) if np.ndim(out) == 0 else out

    def radial_mass(self, r):
        total = sum(w for w, _ in self._continuous)
        out = sum(w * h.radial_mass(r) for w, h in self._continuous) / total
        return float(out) if np.ndim(out) == 0 else out

    def truncation_radius(self, eps):
        # the degenerate projection of a nugget part breaks the generic
        # survival-based bound; pad far enough for every continuous part
        return max(h.truncation_radius(eps) for _, h in self._continuous)


@dataclass(frozen=True)
class Anisotropy:
    """Geometric anisotropy: rotate by ``angle`` then stretch the first axis.

    Applied as a coordinate pre-transform s = diag(stretch, 1) R(angle) s_raw
    with angle in [0, pi) and stretch >= 1; the isotropic machinery then runs
    on the transformed coordinates.
    """

    angle: float = 0.0
    stretch: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.angle < np.pi:
            raise ValueError("angle must lie in [0, pi)")
        if self.stretch < 1.0:
            raise ValueError("stretch must be >= 1")

    def matrix(self):
        c, s = np.cos(self.angle), np.sin(self.angle)
        rot = np.array([[c, -s], [s, c]])
        return np.diag([self.stretch, 1.0]) @ rot


def transform_coordinates(aniso: Anisotropy, coords):
    """Apply the anisotropy transform to an (n, 2) coordinate array."""
    coords = np.asarray(coords, dtype=float)
    if coords.ndim == 1:
        return aniso.matrix() @ coords
    if coords.shape[-1] != 2:
        raise ValueError("anisotropy is defined for planar coordinates")
    return coords @ aniso.matrix().T


@dataclass(frozen=True)
class PairGeometry:
    """Hypograph volumes for a pair of sites at some distance.

    total is the volume of one hypograph (1 for normalized heights), shared
    the overlap volume of the two, and residual = total - shared the volume
    seen by exactly one site. The field values decompose as X_i = common +
    residual_i with independent pieces of those volumes.
    """

    total: float
    shared: float
    residual: float


def correlation(height: HeightFunction, u):
    """Correlation of the field at site distance u for the given kernel."""
    return height.correlation(u)


def correlation_linear_approx(height: HeightFunction, u):
    """First-order small-distance approximation max(0, 1 - u / (2 rho))."""
    rho = height.reference_scale()
    u = np.asarray(u, dtype=float)
    out = np.clip(1.0 - u / (2.0 * rho), 0.0, None)
    return float(out) if out.ndim == 0 else out


def radial_survival(height: HeightFunction, r):
    """Projection-marginal survival Gbar(r); Gbar(0) = 1/2."""
    return height.radial_survival(r)


def pair_geometry(height: HeightFunction, u: float) -> PairGeometry:
    """Volume decomposition for two sites at distance u >= 0."""
    if u < 0:
        raise ValueError("distance must be nonnegative")
    shared = float(height.correlation(u))
    return PairGeometry(total=1.0, shared=shared, residual=1.0 - shared)
