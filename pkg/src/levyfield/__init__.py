"""Spatial random fields from smoothed infinitely divisible bases.

The field at a site is the mass a (d+1)-dimensional independently
scattered basis assigns to the hypograph of a kernel translated to that
site. Margins stay inside the basis family by construction; dependence is
governed purely by hypograph overlap. The package covers correlation and
tail-dependence formulas, exact-margin simulation, composite likelihood
fitting with bootstrap errors, and a config-driven command line.
"""

from ._version import __version__
from .basis import (
    GammaSeed,
    GaussianSeed,
    InverseGaussianSeed,
    LevySeed,
    NegativeBinomialSeed,
    PoissonSeed,
    SetDistribution,
    set_distribution,
)
from .errors import (
    AllStartsFailed,
    BudgetExceeded,
    ConfigError,
    DegenerateTail,
    DivergentMoment,
    EmptyBinWarning,
    InconsistentCoordinates,
    LevyFieldError,
    NonConvergence,
    NonFiniteLikelihood,
    OutOfSupport,
    ParseError,
    SchemaError,
    SingularHessian,
)
from .inference import (
    CovariogramTable,
    Dataset,
    FitOptions,
    FitResult,
    ModelSpec,
    WeibullMargin,
    block_bootstrap,
    empirical_covariogram,
    fit,
    independence_loglik,
    pair_loglik_continuous,
    pair_loglik_discrete,
    pair_loglik_gamma_difference,
)
from .kernels import (
    Anisotropy,
    CylinderHeight,
    GaussianHeight,
    HalfBallHeight,
    HeightFunction,
    LaplaceHeight,
    MixtureHeight,
    NuggetHeight,
    PairGeometry,
    SlashHeight,
    StudentTHeight,
    correlation,
    correlation_linear_approx,
    pair_geometry,
    radial_survival,
    transform_coordinates,
)
from .numerics import QuadratureSpec, integrate, make_stream, split_streams
from .simulate import (
    FieldSample,
    GeometricTimeKernel,
    PoissonPMFTimeKernel,
    SimulationConfig,
    SiteSet,
    TimeKernel,
    TruncatedCustomTimeKernel,
    ZipfTimeKernel,
    simulate_cavalieri,
    simulate_grid,
    simulate_latent,
    simulate_spacetime_separable,
    simulate_spacetime_transport,
)
from .tail import (
    ConvolutionEquivalent,
    GammaTailSpec,
    GammaTailed,
    Subexponential,
    TailClass,
    TailSummary,
    convolution_tail_asymptote,
    empirical_chi,
    gamma_conditional_asymptote,
    min_exponential_moment,
    tail_class,
    theoretical_chi,
)

__all__ = [
    "__version__",
    # basis
    "LevySeed",
    "GammaSeed",
    "InverseGaussianSeed",
    "NegativeBinomialSeed",
    "PoissonSeed",
    "GaussianSeed",
    "SetDistribution",
    "set_distribution",
    # kernels
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
    # simulation
    "SiteSet",
    "SimulationConfig",
    "FieldSample",
    "TimeKernel",
    "GeometricTimeKernel",
    "PoissonPMFTimeKernel",
    "ZipfTimeKernel",
    "TruncatedCustomTimeKernel",
    "simulate_grid",
    "simulate_cavalieri",
    "simulate_spacetime_transport",
    "simulate_spacetime_separable",
    "simulate_latent",
    # tail
    "TailClass",
    "Subexponential",
    "GammaTailed",
    "ConvolutionEquivalent",
    "TailSummary",
    "GammaTailSpec",
    "tail_class",
    "min_exponential_moment",
    "theoretical_chi",
    "gamma_conditional_asymptote",
    "convolution_tail_asymptote",
    "empirical_chi",
    # inference
    "Dataset",
    "ModelSpec",
    "WeibullMargin",
    "FitOptions",
    "FitResult",
    "CovariogramTable",
    "pair_loglik_continuous",
    "pair_loglik_discrete",
    "pair_loglik_gamma_difference",
    "independence_loglik",
    "empirical_covariogram",
    "fit",
    "block_bootstrap",
    # numerics
    "QuadratureSpec",
    "integrate",
    "make_stream",
    "split_streams",
    # errors
    "LevyFieldError",
    "NonConvergence",
    "OutOfSupport",
    "BudgetExceeded",
    "DegenerateTail",
    "DivergentMoment",
    "NonFiniteLikelihood",
    "AllStartsFailed",
    "SingularHessian",
    "SchemaError",
    "InconsistentCoordinates",
    "ParseError",
    "ConfigError",
    "EmptyBinWarning",
]
