"""Velocity-jump movement models: simulation and exact Bayesian reconstruction.

The model moves a point at constant velocity between Poisson-timed turn
events; turning angles are von Mises, speeds Rayleigh with optional Markov
(Rice-kernel) dependence, and locations are observed at arbitrary times with
isotropic Gaussian error. Reconstruction samples the exact posterior over
turn times, velocities and parameters with a reversible-jump sampler whose
velocity proposals come from conditioning a Gaussian approximation on data.
"""
from .distributions import (
    BesselExponential,
    BetaPrior,
    PriorSet,
    RiceSpeedKernel,
    TruncatedNormal,
    VonMises,
    bivariate_rayleigh_logpdf,
    prior_logpdf,
    rayleigh_logpdf,
    rayleigh_sample,
    rice_logpdf,
    rice_sample,
    von_mises_logpdf,
    von_mises_sample,
)
from .model import (
    Dataset,
    ModelParams,
    Trajectory,
    interpolate,
    observation_loglik,
    observe,
    path_logdensity,
    simulate,
    velocity_transition_logpdf,
)
from .geometry import (
    CollinearRun,
    collinearity_threshold,
    count_minimal_turns,
    detect_collinear_runs,
    initial_trajectory,
    join_time,
    sample_minimal_tally,
)
from .proposals import (
    GaussianSpec,
    TallyProposalKind,
    Window,
    ar1_preproposal,
    build_joint,
    condition,
    conditioned_logpdf,
    propose_event_times,
    propose_tally,
    sample_conditioned,
    select_window,
)
from .sampler import (
    ChainState,
    RunConfig,
    RunResult,
    endpoint_update,
    fixed_velocity_update,
    initialize_chain,
    parameter_update,
    run,
    trajectory_update,
)
from .dataio import ScaledDataset, ingest, scale
from .diagnostics import ess, quantile_table

__version__ = "0.1.0"
