"""Extremal dependence of basis-convolution fields.

The right tail of the seed family decides the joint tail of a site pair:

- subexponential seeds give asymptotic dependence with tail correlation
  equal to the shared-volume fraction;
- gamma-tailed seeds (gamma family) give asymptotic independence, but with
  joint tail decay only polynomially faster than the margin;
- lighter convolution-equivalent seeds (inverse Gaussian family) give
  asymptotic dependence again, damped by an exponential tilt of the
  residual volumes.

Alongside the theoretical laws, empirical rank-based estimators of the tail
correlation and its companion coefficient are provided for samples.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln
from scipy.stats import rankdata

from .basis import (
    GammaSeed,
    InverseGaussianSeed,
    LevySeed,
    set_distribution,
)
from .errors import DegenerateTail, DivergentMoment, NonConvergence
from .kernels import PairGeometry
from .numerics import integrate, make_stream, QuadratureSpec

__all__ = [
    "TailClass",
    "Subexponential",
    "GammaTailed",
    "ConvolutionEquivalent",
    "TailSummary",
    "tail_class",
    "theoretical_chi",
    "min_exponential_moment",
    "gamma_conditional_asymptote",
    "GammaTailSpec",
    "convolution_tail_asymptote",
    "empirical_chi",
]

_MOMENT_QUAD = QuadratureSpec(abs_tol=1e-11, rel_tol=1e-9, max_subdivisions=200)
_MC_FALLBACK_DRAWS = 1_000_000
_MC_FALLBACK_SEED = 0x7A11


@dataclass(frozen=True)
class TailSummary:
    """Tail correlation chi, companion coefficient chibar, decay index eta.

    chibar and eta are locked together by chibar = 2 eta - 1.
    """

    chi: float
    chibar: float
    eta: float

    def __post_init__(self):
        if not -1e-9 <= self.chi <= 1 + 1e-9:
            raise ValueError("chi must lie in [0, 1]")
        if not -1 - 1e-9 <= self.chibar <= 1 + 1e-9:
            raise ValueError("chibar must lie in [-1, 1]")
        if not 0 < self.eta <= 1 + 1e-9:
            raise ValueError("eta must lie in (0, 1]")
        if abs(self.chibar - (2.0 * self.eta - 1.0)) > 1e-9:
            raise ValueError("chibar and eta must satisfy chibar = 2 eta - 1")


class TailClass:
    """Declared tail behavior of a seed family."""


@dataclass(frozen=True)
class Subexponential(TailClass):
    """Heavy-tailed declaration; carries no distribution.

    The tail correlation under this class depends on the pair geometry only,
    so nothing beyond the declaration is needed.
    """


@dataclass(frozen=True)
class GammaTailed(TailClass):
    """Survival ~ ell * x^(shape*volume - 1) * exp(-rate * x)."""

    rate: float
    shape_per_volume: float

    def __post_init__(self):
        if self.rate <= 0 or self.shape_per_volume <= 0:
            raise ValueError("rate and shape_per_volume must be positive")

    def ell_constant(self, volume: float) -> float:
        """Slowly-varying constant of the volume-v member, here exact."""
        a = self.shape_per_volume * volume
        return float(np.exp((a - 1.0) * np.log(self.rate) - gammaln(a)))


@dataclass(frozen=True)
class ConvolutionEquivalent(TailClass):
    """Light exponential-type tail with finite tilted moment at the rate.

    seed_moment is the unit-volume exponentiated moment at the rate; the
    seed itself is kept so residual-minimum moments can be integrated.
    """

    rate: float
    seed_moment: float
    seed: LevySeed | None = None

    def __post_init__(self):
        if self.rate <= 0 or self.seed_moment < 1.0:
            raise ValueError("rate must be positive and seed_moment >= 1")


def tail_class(seed: LevySeed) -> TailClass:
    """Declared tail class of a seed family.

    Gamma seeds are gamma-tailed at their rate; inverse Gaussian seeds are
    convolution-equivalent with rate shape/(2 mean^2) and unit moment
    exp(shape/mean). Other families carry no declared class here: Gaussian
    and Poisson tails are lighter than any exponential, and the discrete
    negative binomial sits outside the continuous tail algebra. Declare
    Subexponential() by hand for heavy-tailed studies.
    """
    if isinstance(seed, GammaSeed):
        return GammaTailed(rate=seed.rate, shape_per_volume=seed.shape)
    if isinstance(seed, InverseGaussianSeed):
        lam, mu0 = seed.shape_coef, seed.mean_coef
        return ConvolutionEquivalent(
            rate=lam / (2.0 * mu0**2),
            seed_moment=float(np.exp(lam / mu0)),
            seed=seed,
        )
    raise ValueError(
        f"{type(seed).__name__} has no declared tail class; "
        "construct one explicitly if the asymptotics are known"
    )


def min_exponential_moment(seed: LevySeed, beta: float, volume: float) -> float:
    """Tilted moment E exp(beta * min(R1, R2)) of two iid volume-v residuals.

    Integrates exp(beta x) against the minimum density 2 f(x) S(x); the
    minimum has tail rate twice the member rate, which keeps the integral
    finite for exponential-type seeds. Falls back to plain Monte Carlo when
    the quadrature reports failure.
    """
    if beta <= 0:
        raise ValueError("beta must be positive")
    if volume < 0:
        raise ValueError("volume must be nonnegative")
    if volume == 0.0:
        return 1.0
    dist = set_distribution(seed, volume)

    if seed.discrete:
        total, k = 0.0, 0
        prev_sf = 1.0
        while True:
            sf = dist.survival(float(k))
            p_min = prev_sf**2 - sf**2
            term = float(np.exp(beta * k)) * p_min
            total += term
            if not np.isfinite(total):
                raise DivergentMoment(
                    "tilted moment of the residual minimum diverges"
                )
            if sf == 0.0 or (k > 10 and term < 1e-14 * max(total, 1.0)):
                return total
            prev_sf = sf
            k += 1
            if k > 10_000_000:
                raise DivergentMoment("tilted-moment series does not settle")

    def integrand(x):
        s = dist.survival(x)
        if s <= 0.0:
            return 0.0
        return float(np.exp(beta * x + dist.log_density(x)) * 2.0 * s)

    try:
        value, _ = integrate(integrand, 0.0, np.inf, _MOMENT_QUAD)
    except NonConvergence:
        rng = make_stream(_MC_FALLBACK_SEED)
        draws = dist.sample(rng, size=(2, _MC_FALLBACK_DRAWS))
        value = float(np.mean(np.exp(beta * np.minimum(draws[0], draws[1]))))
    if not np.isfinite(value) or value < 0:
        raise DivergentMoment("tilted moment of the residual minimum diverges")
    return value


def theoretical_chi(tc: TailClass, geom: PairGeometry) -> TailSummary:
    """Limiting tail dependence of a site pair under a declared tail class.

    At lag zero the shared volume is everything and chi = 1 regardless of
    class. Disjoint regions mean exact independence, reported as chi = 0,
    chibar = 0, eta = 1/2.
    """
    alpha, alpha0, alpha_res = geom.total, geom.shared, geom.residual
    if alpha0 > alpha + 1e-12:
        raise ValueError("shared volume cannot exceed the total volume")
    if alpha0 <= 0.0:
        return TailSummary(chi=0.0, chibar=0.0, eta=0.5)

    if isinstance(tc, Subexponential):
        return TailSummary(chi=alpha0 / alpha, chibar=1.0, eta=1.0)
    if isinstance(tc, GammaTailed):
        chi = 1.0 if alpha_res <= 0.0 else 0.0
        return TailSummary(chi=chi, chibar=1.0, eta=1.0)
    if isinstance(tc, ConvolutionEquivalent):
        if alpha_res <= 0.0:
            return TailSummary(chi=1.0, chibar=1.0, eta=1.0)
        if tc.seed is None:
            raise ValueError(
                "ConvolutionEquivalent needs its seed to integrate the "
                "residual-minimum moment"
            )
        m_tilde = min_exponential_moment(tc.seed, tc.rate, alpha_res)
        chi = (alpha0 / alpha) * m_tilde * tc.seed_moment ** (-alpha_res)
        return TailSummary(chi=float(np.clip(chi, 0.0, 1.0)), chibar=1.0, eta=1.0)
    raise TypeError(f"unknown tail class {type(tc).__name__}")


def gamma_conditional_asymptote(
    alpha_prime: float, beta: float, geom: PairGeometry, x
):
    """Large-x approximation of pr(X2 > x | X1 > x) for a gamma-driven pair.

    Equals m * Gamma(a) / Gamma(a0) * (beta x)^(-a_res) with shapes a scaled
    by alpha_prime and m the tilted moment of the residual minimum. The
    power decay in x is the asymptotic-independence signature: the shared
    gamma block must carry the whole exceedance.
    """
    if alpha_prime <= 0 or beta <= 0:
        raise ValueError("alpha_prime and beta must be positive")
    if geom.shared <= 0:
        raise ValueError("needs a positive shared volume")
    a = alpha_prime * geom.total
    a0 = alpha_prime * geom.shared
    a_res = alpha_prime * geom.residual
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise ValueError("x must be positive")
    if geom.residual <= 0.0:
        out = np.ones_like(x)
        return float(out) if out.ndim == 0 else out
    m_tilde = min_exponential_moment(GammaSeed(alpha_prime, beta), beta, geom.residual)
    log_val = (
        np.log(m_tilde) + gammaln(a) - gammaln(a0) - a_res * np.log(beta * x)
    )
    out = np.exp(log_val)
    if not np.all(np.isfinite(out)):
        raise DivergentMoment("asymptote overflows at the requested x")
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class GammaTailSpec:
    """One gamma-type tail: survival ~ ell * x^(shape-1) * exp(-rate x).

    ell defaults to the exact gamma constant rate^(shape-1)/Gamma(shape).
    """

    shape: float
    rate: float
    ell: float | None = None

    def __post_init__(self):
        if self.shape <= 0 or self.rate <= 0:
            raise ValueError("shape and rate must be positive")
        if self.ell is not None and self.ell <= 0:
            raise ValueError("ell must be positive")

    def ell_value(self) -> float:
        if self.ell is not None:
            return self.ell
        return float(np.exp((self.shape - 1.0) * np.log(self.rate) - gammaln(self.shape)))


def convolution_tail_asymptote(F1: GammaTailSpec, F2: GammaTailSpec, x):
    """Tail of the sum of two independent gamma-type variables, large x.

    beta * G(a1) G(a2) / G(a1 + a2) * ell1 ell2 * x^(a1 + a2 - 1) e^(-beta x),
    valid only when both summands share the rate beta.
    """
    if abs(F1.rate - F2.rate) > 1e-12 * max(F1.rate, F2.rate):
        raise ValueError("summands must share the same tail rate")
    beta = F1.rate
    a1, a2 = F1.shape, F2.shape
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise ValueError("x must be positive")
    log_val = (
        np.log(beta)
        + gammaln(a1)
        + gammaln(a2)
        - gammaln(a1 + a2)
        + np.log(F1.ell_value())
        + np.log(F2.ell_value())
        + (a1 + a2 - 1.0) * np.log(x)
        - beta * x
    )
    out = np.exp(log_val)
    return float(out) if out.ndim == 0 else out


def empirical_chi(pairs, q: float):
    """Rank-based estimates of the tail correlation at probability level q.

    pairs is an (n, 2) array of paired replicates. Each margin is rank
    transformed to (0, 1); chi_hat is the joint exceedance probability over
    1 - q, chibar_hat the log-ratio version. Returns
    (chi_hat, chibar_hat, (se_chi, se_chibar)) with binomial and
    delta-method standard errors.
    """
    pairs = np.asarray(pairs, dtype=float)
    if pairs.ndim != 2 or pairs.shape[1] != 2:
        raise ValueError("pairs must be an (n, 2) array")
    n = pairs.shape[0]
    if n < 2:
        raise ValueError("need at least two paired replicates")
    if n < 500:
        warnings.warn(
            f"only {n} paired replicates; tail estimates will be noisy",
            stacklevel=2,
        )
    if not 0.5 < q < 1.0:
        raise ValueError("q must lie in (0.5, 1)")
    u = rankdata(pairs, axis=0) / (n + 1.0)
    joint = np.count_nonzero((u[:, 0] > q) & (u[:, 1] > q))
    if joint == 0:
        raise DegenerateTail(f"no joint exceedances above level q={q}")
    p_hat = joint / n
    chi_hat = p_hat / (1.0 - q)
    se_p = np.sqrt(p_hat * (1.0 - p_hat) / n)
    se_chi = se_p / (1.0 - q)
    log_p = np.log(p_hat)
    chibar_hat = 2.0 * np.log(1.0 - q) / log_p - 1.0
    se_chibar = abs(2.0 * np.log(1.0 - q) / (p_hat * log_p**2)) * se_p
    return float(chi_hat), float(chibar_hat), (float(se_chi), float(se_chibar))
