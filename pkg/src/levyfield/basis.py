"""Independently scattered random measures with infinitely divisible seeds.

A basis assigns to every Borel set A of finite volume a random variable L(A)
whose law depends on A only through its volume, with independent values on
disjoint sets and additive aggregation. The five seed families implemented
here are closed under that volume scaling:

======================  =============================================
family                  law of L(A), |A| = v
======================  =============================================
GammaSeed               Gamma(shape * v, rate)
InverseGaussianSeed     IG(shape_coef * v^2, mean_coef * v)
NegativeBinomialSeed    NB(mean = mean * v, overdispersion = theta * v)
PoissonSeed             Poisson(intensity * v)
GaussianSeed            Normal(0, variance * v)
======================  =============================================

The inverse Gaussian family keeps shape/mean^2 invariant in v; the negative
binomial family keeps the success probability mean/(mean + theta) invariant,
which is what makes both convolution-closed in v.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats as _stats

from .errors import OutOfSupport

__all__ = [
    "LevySeed",
    "GammaSeed",
    "InverseGaussianSeed",
    "NegativeBinomialSeed",
    "PoissonSeed",
    "GaussianSeed",
    "SetDistribution",
    "set_distribution",
]


class LevySeed:
    """Unit-volume seed of an independently scattered random measure."""

    #: True when L(A) is integer-valued.
    discrete = False
    #: True when L(A) >= 0 almost surely.
    nonnegative = True

    def mean_coefficient(self):
        """E L(A) per unit volume."""
        raise NotImplementedError

    def variance_coefficient(self):
        """Var L(A) per unit volume."""
        raise NotImplementedError

    def log_cf(self, t, volume):
        """Continuous branch of log E exp(i t L(A)) at |A| = volume."""
        raise NotImplementedError

    def _frozen(self, volume):
        """Frozen scipy distribution of L(A) at |A| = volume > 0."""
        raise NotImplementedError

    def sample_volumes(self, volumes, rng):
        """Vectorized draw of independent L(A_k) for an array of volumes."""
        raise NotImplementedError

    def with_params(self, **updates):
        """Copy of the seed with named parameters replaced."""
        fields = {k: getattr(self, k) for k in self.param_names}
        fields.update(updates)
        return type(self)(**fields)


@dataclass(frozen=True)
class GammaSeed(LevySeed):
    """Gamma seed: L(A) ~ Gamma(shape * |A|, rate)."""

    shape: float = 1.0
    rate: float = 1.0

    param_names = ("shape", "rate")

    def __post_init__(self):
        if self.shape <= 0 or self.rate <= 0:
            raise ValueError("shape and rate must be positive")

    def mean_coefficient(self):
        return self.shape / self.rate

    def variance_coefficient(self):
        return self.shape / self.rate**2

    def log_cf(self, t, volume):
        t = np.asarray(t, dtype=complex)
        return -self.shape * volume * np.log(1.0 - 1j * t / self.rate)

    def _frozen(self, volume):
        return _stats.gamma(a=self.shape * volume, scale=1.0 / self.rate)

    def sample_volumes(self, volumes, rng):
        return rng.gamma(shape=self.shape * volumes, scale=1.0 / self.rate)


@dataclass(frozen=True)
class InverseGaussianSeed(LevySeed):
    """Inverse Gaussian seed: L(A) ~ IG(shape_coef |A|^2, mean_coef |A|).

    The shape grows quadratically and the mean linearly with volume, so
    shape/mean^2 = shape_coef/mean_coef^2 is volume-invariant and the family
    is convolution-closed.
    """

    shape_coef: float = 1.0
    mean_coef: float = 1.0

    param_names = ("shape_coef", "mean_coef")

    def __post_init__(self):
        if self.shape_coef <= 0 or self.mean_coef <= 0:
            raise ValueError("shape_coef and mean_coef must be positive")

    def mean_coefficient(self):
        return self.mean_coef

    def variance_coefficient(self):
        # Var IG(lam, m) = m^3 / lam with lam = shape_coef v^2, m = mean_coef v
        return self.mean_coef**3 / self.shape_coef

    def log_cf(self, t, volume):
        t = np.asarray(t, dtype=complex)
        lam, mu = self.shape_coef, self.mean_coef
        return (
            volume
            * (lam / mu)
            * (1.0 - np.sqrt(1.0 - 2.0 * mu**2 * 1j * t / lam))
        )

    def _frozen(self, volume):
        lam = self.shape_coef * volume**2
        m = self.mean_coef * volume
        return _stats.invgauss(mu=m / lam, scale=lam)

    def sample_volumes(self, volumes, rng):
        return rng.wald(
            mean=self.mean_coef * volumes, scale=self.shape_coef * volumes**2
        )


@dataclass(frozen=True)
class NegativeBinomialSeed(LevySeed):
    """Negative binomial seed: L(A) ~ NB(mean |A|, overdispersion |A|).

    Parametrized by the unit-volume mean and overdispersion theta, so that
    Var L(A) = mean |A| + (mean |A|)^2 / (theta |A|) = (mean + mean^2/theta)|A|.
    """

    mean: float = 1.0
    overdispersion: float = 1.0

    discrete = True
    param_names = ("mean", "overdispersion")

    def __post_init__(self):
        if self.mean <= 0 or self.overdispersion <= 0:
            raise ValueError("mean and overdispersion must be positive")

    @property
    def _p(self):
        # per-trial "success" probability; invariant in the volume
        return self.mean / (self.mean + self.overdispersion)

    def mean_coefficient(self):
        return self.mean

    def variance_coefficient(self):
        return self.mean + self.mean**2 / self.overdispersion

    def log_cf(self, t, volume):
        t = np.asarray(t, dtype=complex)
        p = self._p
        return (
            self.overdispersion
            * volume
            * (np.log1p(-p) - np.log(1.0 - p * np.exp(1j * t)))
        )

    def _frozen(self, volume):
        return _stats.nbinom(n=self.overdispersion * volume, p=1.0 - self._p)

    def sample_volumes(self, volumes, rng):
        return rng.negative_binomial(
            n=self.overdispersion * volumes, p=1.0 - self._p
        ).astype(float)


@dataclass(frozen=True)
class PoissonSeed(LevySeed):
    """Poisson seed: L(A) ~ Poisson(intensity * |A|)."""

    intensity: float = 1.0

    discrete = True
    param_names = ("intensity",)

    def __post_init__(self):
        if self.intensity <= 0:
            raise ValueError("intensity must be positive")

    def mean_coefficient(self):
        return self.intensity

    def variance_coefficient(self):
        return self.intensity

    def log_cf(self, t, volume):
        t = np.asarray(t, dtype=complex)
        return self.intensity * volume * (np.exp(1j * t) - 1.0)

    def _frozen(self, volume):
        return _stats.poisson(self.intensity * volume)

    def sample_volumes(self, volumes, rng):
        return rng.poisson(self.intensity * volumes).astype(float)


@dataclass(frozen=True)
class GaussianSeed(LevySeed):
    """Centered Gaussian seed: L(A) ~ Normal(0, variance * |A|)."""

    variance: float = 1.0

    nonnegative = False
    param_names = ("variance",)

    def __post_init__(self):
        if self.variance <= 0:
            raise ValueError("variance must be positive")

    def mean_coefficient(self):
        return 0.0

    def variance_coefficient(self):
        return self.variance

    def log_cf(self, t, volume):
        t = np.asarray(t, dtype=complex)
        return -0.5 * self.variance * volume * t * t

    def _frozen(self, volume):
        return _stats.norm(loc=0.0, scale=np.sqrt(self.variance * volume))

    def sample_volumes(self, volumes, rng):
        return rng.normal(0.0, np.sqrt(self.variance * volumes))


class SetDistribution:
    """Law of L(A) for a fixed seed and set volume.

    Volume zero is the degenerate point mass at 0 (the empty set gets the
    measure's almost-sure value), everything else delegates to the seed.
    """

    def __init__(self, seed: LevySeed, volume: float):
        if volume < 0:
            raise ValueError("volume must be nonnegative")
        self.seed = seed
        self.volume = float(volume)
        self._dist = seed._frozen(volume) if volume > 0 else None

    @property
    def discrete(self):
        return self.seed.discrete

    def mean(self):
        return self.seed.mean_coefficient() * self.volume

    def variance(self):
        return self.seed.variance_coefficient() * self.volume

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        if self._dist is None:
            return np.where(x >= 0.0, 1.0, 0.0)
        return self._dist.cdf(x)

    def survival(self, x):
        x = np.asarray(x, dtype=float)
        if self._dist is None:
            return np.where(x >= 0.0, 0.0, 1.0)
        return self._dist.sf(x)

    def quantile(self, q):
        q = np.asarray(q, dtype=float)
        if np.any((q < 0) | (q > 1)):
            raise ValueError("quantile levels must lie in [0, 1]")
        if self._dist is None:
            return np.zeros_like(q)
        return self._dist.ppf(q)

    def log_density(self, x):
        """log pdf (continuous) or log pmf (discrete) at x.

        Raises :class:`OutOfSupport` for points outside the support: negative
        values for nonnegative seeds, non-integers for discrete seeds, and
        anything nonzero at volume 0.
        """
        x = np.asarray(x, dtype=float)
        if self.discrete:
            if np.any(x != np.floor(x)):
                raise OutOfSupport("discrete support is the nonnegative integers")
        if self.seed.nonnegative and np.any(x < 0):
            raise OutOfSupport("support is the nonnegative half line")
        if self._dist is None:
            out = np.where(x == 0.0, 0.0, -np.inf)
            return float(out) if out.ndim == 0 else out
        with np.errstate(divide="ignore"):
            if self.discrete:
                out = self._dist.logpmf(x)
            else:
                out = self._dist.logpdf(x)
        return float(out) if np.ndim(out) == 0 else out

    def characteristic_function(self, t):
        """E exp(i t L(A)) on the branch continuous in t with cf(0) = 1."""
        t = np.asarray(t, dtype=float)
        if self.volume == 0.0:
            out = np.ones_like(t, dtype=complex)
            return complex(out) if out.ndim == 0 else out
        out = np.exp(self.seed.log_cf(t, self.volume))
        return complex(out) if np.ndim(out) == 0 else out

    def sample(self, rng, size):
        """``size`` independent draws using the given generator."""
        if self.volume == 0.0:
            return np.zeros(size)
        vols = np.full(size, self.volume)
        return self.seed.sample_volumes(vols, rng)


def set_distribution(seed: LevySeed, volume: float) -> SetDistribution:
    """Law of the basis evaluated on a set of the given volume."""
    return SetDistribution(seed, volume)
