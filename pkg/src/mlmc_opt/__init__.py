"""Multilevel MCMC gradient estimation with adaptive optimizers."""

from importlib.metadata import PackageNotFoundError, version as _version

from . import _backend
from .core import RngStream, RunRecord, as_param_vector, make_stream, standard_normal
from .diagnostics import (
    MomentReport,
    SlopeFit,
    amsgrad_constants,
    estimate_bias,
    estimate_moment,
    fit_linear,
    fit_loglog,
    moment_study,
    phi,
    psi,
    rate_reference,
)
from .iwae import (
    LatentModelSpec,
    LinearGaussianModel,
    WeightedParticleSet,
    exact_marginal_grad_linear_gaussian,
    iwae_bound,
    mlmc_iwae_batch,
    mlmc_iwae_gradient,
    sir_step,
    snis_gradient,
)
from .kernels import (
    GaussianTarget,
    MarkovKernelSpec,
    TargetDensity,
    Trajectory,
    mala_step,
    rwmh_step,
    simulate_chain,
    transition_matrix_oracle,
)
from .mlmc import (
    GEOMETRIC_HALF,
    GradFn,
    LevelDistribution,
    LevelDraw,
    expected_cost,
    max_level,
    mixture_mean,
    mlmc_estimate,
    partial_mean,
    sample_level,
    tau,
)
from .optim import (
    AdagradState,
    AmsgradState,
    IterateSelector,
    OptimizerConfig,
    ScheduleSpec,
    adagrad_lower_eps,
    adagrad_update,
    amsgrad_lower_eps,
    amsgrad_update,
    iterate_selector,
    run_optimizer,
    schedule_eval,
    select_random_iterate,
    validate_schedule,
)

try:
    __version__ = _version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.1.0"

BACKEND = _backend.NAME
