"""Numerical engine for perpetual integral functionals of transient processes.

Exact trajectory sampling (Brownian, fractional Brownian, compound
Poisson), closed-form potential-theoretic moments with independent
quadrature oracles, and a seeded Monte Carlo harness that compares the
two and reports verdicts.
"""

from .cpp_green import (
    ExponentialJumps,
    GaussianJumps,
    GreenField,
    GridSpec,
    cpp_expectation,
    cpp_variance,
    g0_series,
    g0_series_field,
    g0_spectral,
    gaussian_g0_exact,
    validate_kernel,
)
from .funcs import (
    Bump,
    ClNorm,
    Gaussian,
    Mixture,
    TestFunction,
    cl_norm,
    eval_function,
    gaussian_density,
    radial_potential_integral,
    zero_function,
)
from .functional import (
    HorizonPolicy,
    OccupationHistogram,
    adaptive_horizon,
    cpp_adaptive_horizon,
    integrate_path,
    occupation_histogram,
    resolve_horizon,
)
from .kernels import (
    AnalyticMoments,
    PotentialConstant,
    bm_expectation,
    bm_kernel_constant,
    bm_variance,
    fbm_expectation,
    fbm_kernel_constant,
    time_kernel_quadrature,
)
from .mc import EstimateReport, compare, nondegeneracy_test, run_experiment
from .paths import (
    BmSpec,
    CppSpec,
    FbmSpec,
    PathSample,
    replicate_rng,
    sample_bm,
    sample_cpp,
    sample_fbm,
    sample_path,
    transience_diagnostic,
)

__version__ = "0.1.0"
