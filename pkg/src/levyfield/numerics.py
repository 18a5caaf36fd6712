"""Shared numerical primitives: special functions, quadrature, RNG streams.

Everything here is a thin, contract-checked layer over scipy/numpy so the
rest of the package has one place to get numerically safe building blocks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import integrate as _integrate
from scipy import special as _special

from .errors import NonConvergence

__all__ = [
    "QuadratureSpec",
    "std_normal_cdf",
    "std_normal_pdf",
    "student_t_cdf",
    "bessel_k",
    "bessel_k_scaled",
    "log_bessel_k",
    "log_gamma",
    "integrate",
    "make_stream",
    "split_streams",
]


@dataclass(frozen=True)
class QuadratureSpec:
    """Accuracy/effort budget for adaptive quadrature.

    Parameters
    ----------
    abs_tol, rel_tol : float
        Absolute and relative target on the integral estimate.
    max_subdivisions : int
        Cap on interval subdivisions before giving up.
    """

    abs_tol: float = 1e-10
    rel_tol: float = 1e-10
    max_subdivisions: int = 200

    def __post_init__(self):
        if self.abs_tol <= 0 or self.rel_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_subdivisions < 1:
            raise ValueError("max_subdivisions must be >= 1")


DEFAULT_QUADRATURE = QuadratureSpec()


def std_normal_cdf(x):
    """Standard normal CDF, accurate in both tails."""
    return _special.ndtr(x)


def std_normal_pdf(x):
    x = np.asarray(x, dtype=float)
    return np.exp(-0.5 * x * x) / np.sqrt(2.0 * np.pi)


def student_t_cdf(x, df):
    """CDF of the Student t distribution with ``df`` degrees of freedom.

    ``df`` may be any positive real, not just an integer.
    """
    if df <= 0:
        raise ValueError("degrees of freedom must be positive")
    return _special.stdtr(df, x)


def bessel_k(order, x):
    """Modified Bessel function of the second kind K_order(x)."""
    return _special.kv(order, x)


def bessel_k_scaled(order, x):
    """Overflow-safe companion exp(x) * K_order(x)."""
    return _special.kve(order, x)


def log_bessel_k(order, x):
    """log K_order(x), stable for large x and for small x at positive order.

    Uses the scaled Bessel function where it is representable and falls back
    to the small-argument asymptote K_nu(x) ~ Gamma(nu)/2 * (2/x)^nu (nu > 0)
    or K_0(x) ~ -log(x/2) - gamma_E where kve overflows.
    """
    order = np.asarray(order, dtype=float)
    x = np.asarray(x, dtype=float)
    order_b, x_b = np.broadcast_arrays(order, x)
    with np.errstate(over="ignore", divide="ignore"):
        kve = _special.kve(order_b, x_b)
        out = np.log(kve) - x_b
    bad = ~np.isfinite(out)
    if np.any(bad):
        nu = np.abs(order_b[bad])
        xs = x_b[bad]
        with np.errstate(divide="ignore"):
            small = np.where(
                nu > 0,
                _special.gammaln(np.maximum(nu, 1e-300))
                - np.log(2.0)
                + nu * (np.log(2.0) - np.log(xs)),
                np.log(-np.log(xs / 2.0) - np.euler_gamma),
            )
        res = np.array(out)
        res[bad] = small
        out = res
    if out.ndim == 0:
        return float(out)
    return out


def log_gamma(x):
    """log |Gamma(x)| for positive real x."""
    return _special.gammaln(x)


def integrate(func, lower, upper, spec: QuadratureSpec = DEFAULT_QUADRATURE):
    """Adaptive quadrature of ``func`` over [lower, upper].

    Infinite endpoints are allowed. Raises :class:`NonConvergence` when the
    subdivision budget is exhausted without meeting the requested tolerance;
    the exception carries the best estimate and its error bound.

    Returns
    -------
    (value, error_bound) : tuple of float
    """
    res = _integrate.quad(
        func,
        lower,
        upper,
        epsabs=spec.abs_tol,
        epsrel=spec.rel_tol,
        limit=spec.max_subdivisions,
        full_output=1,
    )
    value, err = res[0], res[1]
    if len(res) > 3:
        # QUADPACK flagged a problem; accept only if the reported error
        # still meets the requested budget.
        if not np.isfinite(value) or err > max(
            spec.abs_tol, spec.rel_tol * abs(value)
        ):
            raise NonConvergence(
                f"quadrature did not converge: {res[3]}",
                estimate=value,
                error_bound=err,
            )
    return value, err


def make_stream(seed):
    """Seeded random generator. Accepts int seeds, SeedSequence, or Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def split_streams(seed, n):
    """``n`` statistically independent child generators from one seed.

    Splitting is deterministic: the same seed always yields the same child
    streams in the same order, regardless of how many are consumed.
    """
    if isinstance(seed, np.random.SeedSequence):
        seq = seed
    elif isinstance(seed, np.random.Generator):
        # spawn from the generator's internal seed sequence
        seq = seed.bit_generator.seed_seq
    else:
        seq = np.random.SeedSequence(seed)
    return [np.random.Generator(np.random.PCG64(s)) for s in seq.spawn(n)]
