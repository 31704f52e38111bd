"""Simulation and explicit-bound toolkit for multivariate functional CLTs.

Modules
-------
paths       step paths on the grid {m/n}
kernels     finite-support measures, symmetric kernels, degeneracy, Hoeffding
uprocess    weighted degenerate U-processes, exchangeable pairs
gaussian    pre-limit Gaussian processes and Z = int phi dW
bounds      explicit Gaussian-approximation bounds and diagnostics
runs        the r-runs example
graph       Erdos-Renyi edge / two-star example
mc          Monte Carlo verification harness
experiments, cli   JSON-config batch front end
"""
from .errors import (
    ConfigError,
    DomainError,
    EnumerationTooLargeError,
    NotPSDError,
    NumericalError,
    ShapeMismatchError,
    SteinFCLTError,
    UnsupportedModeError,
    ValidationError,
)
from .paths import StepPath, batch_sup_norm, combine, eval_path, grid_index, sup_norm
from .kernels import (
    FiniteSupport,
    Kernel,
    centered_bernoulli,
    check_degenerate,
    cross_moment,
    hoeffding_decompose,
    lr_norm,
    product_kernel,
    rademacher,
    standardized_bernoulli,
    table_kernel,
)
from .uprocess import (
    UProcessSampler,
    UProcessSpec,
    WeightArray,
    complete_weights,
    exchangeable_pair,
    homsum_spec,
    lambda_weighted,
    simulate_Y,
    variance_sigma,
)
from .gaussian import (
    CovModel,
    StepMatrixFunction,
    StochasticIntegral,
    build_prelimit_ustat,
    index_bijection,
    psd_sqrt,
    sample_D,
    sample_Z_grid,
)
from .bounds import (
    BoundReport,
    bound_weighted_pre,
    cubic_weight_sum,
    gammas_con,
    homsum_diagnostics,
    phi_n,
    prop_m_criterion,
    sigma_n_m,
    triple_intersect_sum,
)
from .runs import (
    RunsSpec,
    runs_bound_con,
    runs_bound_pre,
    runs_decompose,
    runs_limit_sampler,
    runs_prelimit_sampler,
    runs_sigma_blocks,
    runs_weight,
    simulate_runs,
)
from .graph import (
    GraphSpec,
    graph_bounds,
    graph_lambda,
    graph_limit_sampler,
    graph_moments,
    graph_pair,
    graph_prelimit_sampler,
    graph_regression_residual,
    simulate_graph,
)
from .mc import (
    DistanceEstimate,
    TestFunctional,
    empirical_covariance,
    estimate_distance,
    make_test_functional,
    rate_fit,
)

__version__ = "0.1.0"
