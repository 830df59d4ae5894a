"""Metropolis-Hastings engine: reversible-jump trajectory updates, fixed-times
velocity random walks, parameter updates and run orchestration.

Each iteration applies one trajectory update (a window of the path is
re-proposed through the Gaussian conditioning machinery, or randomly walked
with times held fixed) followed by one sweep of single-parameter random-walk
updates. All randomness flows through an explicit Generator per chain.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .distributions import PriorSet, prior_logpdf
from .geometry import (
    collinear_interval_mask,
    collinearity_threshold,
    count_minimal_turns,
    detect_collinear_runs,
    find_bridge_gaps,
    initial_trajectory,
    sample_minimal_tally,
)
from .model import (
    Dataset,
    ModelParams,
    Trajectory,
    interpolate,
    stationary_velocity_logpdf,
)
from .distributions import (
    LOG_2PI,
    RiceSpeedKernel,
    log_i0,
    rice_logpdf,
    von_mises_logpdf,
    wrap_angle,
)
from .proposals import (
    GaussianSpec,
    ProposalNumericalError,
    TallyProposalKind,
    TimeKernelConfig,
    Window,
    WindowJoint,
    ar1_preproposal,
    build_joint,
    condition,
    event_times_logpdf,
    extract_window,
    l_distribution_pmf,
    propose_event_times,
    propose_tally,
    window_selection_logprob,
    window_tally,
)

_L_CDFS: dict[TallyProposalKind, np.ndarray] = {}


def _sample_l(kind: TallyProposalKind, rng: np.random.Generator) -> int:
    cdf = _L_CDFS.get(kind)
    if cdf is None:
        cdf = np.cumsum(l_distribution_pmf(kind))
        _L_CDFS[kind] = cdf
    return int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))

__all__ = [
    "RunConfig",
    "ChainState",
    "ChainResult",
    "RunResult",
    "initialize_chain",
    "trajectory_update",
    "fixed_velocity_update",
    "endpoint_update",
    "parameter_update",
    "run_chain",
    "run",
    "log_posterior",
]

PARAM_NAMES = ("lam", "kappa", "sigma", "rho", "varsigma")


@dataclass(frozen=True)
class RunConfig:
    """Run settings. Unit-bearing fields are in the units of the dataset passed in."""

    iterations: int = 200_000
    burn_in: int = 50_000
    n_chains: int = 2
    seed: int = 0
    fixed_resample_prob: float = 0.5
    gamma: float = 0.0
    tau: float | None = None  # constructive half-width; None -> 0.05 x median interval
    constructive_prob: float = 0.5
    error_free: bool = False
    varsigma_fixed: float | None = None  # error SD held fixed in error-free mode
    varsigma_upper: float = 25.0  # upper bound used by the initialization sweep
    rw_scale_frac: float = 0.1  # parameter random-walk scale as a fraction of prior scale
    kappa_rw_scale: float = 0.25
    rho_rw_scale: float = 0.08
    velocity_rw_frac: float = 0.1  # fixed-times velocity walk scale as a fraction of sigma
    n_trajectory_samples: int = 100
    # optional proper prior on the start location: (mean_x, mean_y, sd); None = flat
    x0_prior: tuple[float, float, float] | None = None
    processes: int = 1

    def __post_init__(self):
        if not 0 <= self.burn_in < self.iterations:
            raise ValueError("need iterations > burn_in >= 0")

    def time_kernel(self, ds: Dataset) -> TimeKernelConfig:
        tau = self.tau if self.tau is not None else 0.05 * float(np.median(ds.interval_lengths()))
        return TimeKernelConfig(tau=tau, constructive_prob=self.constructive_prob)


@dataclass
class _Cache:
    """Per-state sufficient statistics for fast parameter updates."""

    span: float
    n_obs: int
    cos_dpsi_sum: float
    log_speed_tail_sum: float
    speeds: np.ndarray
    sq_sum: float


@dataclass
class ChainState:
    traj: Trajectory
    params: ModelParams
    iteration: int = 0
    proposals: dict = field(default_factory=dict)
    accepts: dict = field(default_factory=dict)
    numerical_rejects: int = 0
    cache: _Cache | None = None

    def count(self, label: str, accepted: bool) -> None:
        self.proposals[label] = self.proposals.get(label, 0) + 1
        if accepted:
            self.accepts[label] = self.accepts.get(label, 0) + 1


def refresh_cache(state: ChainState, ds: Dataset) -> None:
    traj = state.traj
    v = traj.velocities
    speeds = np.hypot(v[:, 0], v[:, 1])
    if v.shape[0] >= 2:
        psi = np.arctan2(v[:, 1], v[:, 0])
        cos_sum = float(np.sum(np.cos(wrap_angle(np.diff(psi)))))
        log_tail = float(np.sum(np.log(speeds[1:])))
    else:
        cos_sum = 0.0
        log_tail = 0.0
    resid = ds.locations - interpolate(traj, ds.times)
    state.cache = _Cache(
        span=traj.t_end - traj.t0,
        n_obs=ds.times.size,
        cos_dpsi_sum=cos_sum,
        log_speed_tail_sum=log_tail,
        speeds=speeds,
        sq_sum=float(np.sum(resid * resid)),
    )


def _speed_chain_logpdf(speeds: np.ndarray, sigma: float, rho: float) -> float:
    """Stationary density of the first speed's velocity plus Rice transitions."""
    out = -LOG_2PI - 2.0 * math.log(sigma) - speeds[0] ** 2 / (2.0 * sigma**2)
    if speeds.size >= 2:
        out += float(np.sum(rice_logpdf(speeds[1:], speeds[:-1], RiceSpeedKernel(sigma, rho))))
    return out


def log_posterior(state: ChainState, ds: Dataset, priors: PriorSet, config: RunConfig) -> float:
    """Joint log-density of (trajectory, parameters, data) up to a constant."""
    c = state.cache
    p = state.params
    n = state.traj.n_turns
    out = prior_logpdf(p, priors)
    out += n * math.log(p.lam) - p.lam * c.span
    out += _speed_chain_logpdf(c.speeds, p.sigma, p.rho)
    if n >= 1:
        out += p.kappa * c.cos_dpsi_sum - n * (LOG_2PI + float(log_i0(p.kappa)))
        out -= c.log_speed_tail_sum
    out += -c.n_obs * (LOG_2PI + 2.0 * math.log(p.varsigma)) - c.sq_sum / (2.0 * p.varsigma**2)
    if config.x0_prior is not None:
        mx, my, sd0 = config.x0_prior
        sq = float((state.traj.x0[0] - mx) ** 2 + (state.traj.x0[1] - my) ** 2)
        out += -LOG_2PI - 2.0 * math.log(sd0) - sq / (2.0 * sd0**2)
    return out


# ---------------------------------------------------------------------------
# Window bookkeeping shared by the forward and reverse sides of a move
# ---------------------------------------------------------------------------

@dataclass
class _WindowSide:
    """One configuration of a window: tally, interior times, velocities, start."""

    m: np.ndarray
    times: np.ndarray
    vels: np.ndarray  # (L+1, 2) segment velocities
    x_B: np.ndarray


def _window_path_logdensity(side: _WindowSide, window: Window, params: ModelParams) -> float:
    """Poisson factor and velocity-transition chain for one window configuration."""
    lam = params.lam
    out = side.times.size * math.log(lam) - lam * window.span
    chain = side.vels
    if window.v_B is not None:
        chain = np.vstack([window.v_B, chain])
    else:
        out += float(stationary_velocity_logpdf(side.vels[0], params.sigma))
    if window.v_E is not None:
        chain = np.vstack([chain, window.v_E])
    if chain.shape[0] >= 2:
        s = np.hypot(chain[:, 0], chain[:, 1])
        if np.any(s[1:] == 0.0):
            return -np.inf
        psi = np.arctan2(chain[:, 1], chain[:, 0])
        terms = (
            von_mises_logpdf(wrap_angle(np.diff(psi)), params.kappa)
            + rice_logpdf(s[1:], s[:-1], params.speed_kernel)
            - np.log(s[1:])
        )
        out += float(np.sum(terms))
    return out


def _full_velocity_vector(side: _WindowSide, window: Window) -> np.ndarray:
    if window.v_E is not None:
        return np.vstack([side.vels, window.v_E])
    return side.vels


def _joint_evidence(wj: WindowJoint) -> float:
    sub = GaussianSpec(wj.spec.mean[wj.z_idx], wj.spec.cov[np.ix_(wj.z_idx, wj.z_idx)])
    return sub.logpdf_floored(wj.z_values)


def _side_terms(
    side: _WindowSide,
    window: Window,
    ds: Dataset,
    params: ModelParams,
    config: RunConfig,
    tk: TimeKernelConfig,
    evidence: float | None = None,
) -> float:
    """The per-configuration part of the Hastings ratio.

    Returns  log q_T + log q~(V) [+ log g(x_B)] + (- log p(T) - log p(V|T)
    [- log p(x_B)]) - log p~(Z|T); selection and tally-kernel terms are added
    by the caller.
    """
    qt = event_times_logpdf(side.m, side.times, window, ds, params.varsigma, params.sigma, tk)
    pre = ar1_preproposal(side.times, window, params.sigma, config.gamma)
    qv = pre.logpdf_floored(_full_velocity_vector(side, window))
    if window.left_latent:
        sd = max(params.varsigma, 1e-12)
        qv += -LOG_2PI - 2.0 * math.log(sd) - float(np.sum((side.x_B - window.obs0_loc) ** 2)) / (2.0 * sd**2)
    if evidence is None:
        wj = build_joint(side.times, window, pre, params.varsigma)
        evidence = _joint_evidence(wj)
    target = _window_path_logdensity(side, window, params)
    if window.left_latent and config.x0_prior is not None:
        mx, my, sd0 = config.x0_prior
        sq = float((side.x_B[0] - mx) ** 2 + (side.x_B[1] - my) ** 2)
        target += -LOG_2PI - 2.0 * math.log(sd0) - sq / (2.0 * sd0**2)
    return qt + qv - target - evidence


def _move_log_ratio(
    old_side: _WindowSide,
    new_side: _WindowSide,
    window: Window,
    ds: Dataset,
    params: ModelParams,
    config: RunConfig,
    tk: TimeKernelConfig,
    kind: TallyProposalKind,
    n_old: int,
    n_new: int,
    qm_fwd: float,
    qm_rev: float,
    forced: bool = False,
    evidence_new: float | None = None,
) -> float:
    """Log Hastings ratio of the move old -> new on the given window.

    Computing it with the sides, kernel directions and event counts swapped
    yields exactly the negation (the reverse move's ratio).
    """
    l_old = old_side.times.size
    l_new = new_side.times.size
    if forced:
        sel_fwd = _forced_selection_logprob(kind, l_old, n_old)
        sel_rev = _forced_selection_logprob(kind, l_new, n_new)
    else:
        sel_fwd = window_selection_logprob(kind, l_old, n_old)
        sel_rev = window_selection_logprob(kind, l_new, n_new)
    f_old = qm_rev + sel_rev + _side_terms(old_side, window, ds, params, config, tk)
    f_new = qm_fwd + sel_fwd + _side_terms(new_side, window, ds, params, config, tk, evidence=evidence_new)
    return f_old - f_new


def _splice(
    traj: Trajectory,
    window: Window,
    times: np.ndarray,
    vels: np.ndarray,
    x_B: np.ndarray,
) -> Trajectory:
    """Replace the window interior of a trajectory, keeping the end anchored."""
    B, E = window.B, window.E
    vels = np.array(vels, dtype=float)
    if window.x_E is not None:
        durs = np.diff(np.concatenate([[window.t_B], times, [window.t_E]]))
        resid = window.x_E - (x_B + durs @ vels)
        vels[-1] += resid / durs[-1]
    new_times = np.concatenate([traj.turn_times[:B], times, traj.turn_times[E - 1 :]])
    new_vels = np.vstack([traj.velocities[:B], vels, traj.velocities[E:]])
    new_x0 = x_B if window.left_latent else traj.x0
    return Trajectory(traj.t0, new_x0, new_times, new_vels, traj.t_end)


def _draw_kind(config: RunConfig, rng: np.random.Generator) -> TallyProposalKind:
    u = rng.random()
    if u < 0.25:
        if rng.random() < config.fixed_resample_prob:
            return TallyProposalKind.FIXED_RESAMPLE
        return TallyProposalKind.FIXED_KEEP
    if u < 0.5:
        return TallyProposalKind.UNIFORM
    if u < 0.75:
        return TallyProposalKind.POISSON
    return TallyProposalKind.RANDOM_WALK


def _select_forced(traj: Trajectory, ds: Dataset, kind: TallyProposalKind, which: str, rng):
    """Window pinned to one dataset end (selection over L only; the pair is unique)."""
    n_ev = traj.n_turns
    L = min(_sample_l(kind, rng), n_ev)
    if which == "left":
        B, E = 0, L + 1
    else:
        B, E = n_ev - L, n_ev + 1
    return extract_window(traj, ds, B, E)


def _forced_selection_logprob(kind: TallyProposalKind, L: int, n_events: int) -> float:
    pmf = l_distribution_pmf(kind)
    if L < 0 or L > n_events:
        return -np.inf
    p = float(pmf[L]) if L < pmf.size else 0.0
    if L == n_events and n_events + 1 < pmf.size:
        p += float(pmf[n_events + 1 :].sum())
    return math.log(p) if p > 0 else -np.inf


def trajectory_update(
    state: ChainState,
    ds: Dataset,
    config: RunConfig,
    rng: np.random.Generator,
    kind: TallyProposalKind | None = None,
    force_end: str | None = None,
    tk: TimeKernelConfig | None = None,
) -> bool:
    """One window update of the latent path; returns True when accepted.

    Handles all window placements (interior, either dataset end, whole path)
    through one Gaussian-conditioning code path; the dimension-change
    Jacobian of these moves is 1.
    """
    params = state.params
    traj = state.traj
    if kind is None:
        kind = _draw_kind(config, rng)
    if tk is None:
        tk = config.time_kernel(ds)

    if force_end is None:
        n_ev = traj.n_turns
        L = min(_sample_l(kind, rng), n_ev)
        B = int(rng.integers(0, n_ev - L + 1))
        window = extract_window(traj, ds, B, B + L + 1)
    else:
        window = _select_forced(traj, ds, kind, force_end, rng)
    B, E = window.B, window.E
    L = E - B - 1

    old_times = traj.turn_times[B : E - 1].copy()
    old_vels = traj.velocities[B:E].copy()
    m_old = window_tally(window, old_times)
    old_side = _WindowSide(m_old, old_times, old_vels, window.x_B)

    if kind is TallyProposalKind.FIXED_KEEP:
        return fixed_velocity_update(state, ds, window, config, rng)

    label = kind.value
    try:
        m_new, qm_fwd, qm_rev = propose_tally(kind, m_old, window, params.lam, rng)
        new_times, _ = propose_event_times(m_new, window, ds, params.varsigma, params.sigma, tk, rng)
        pre_new = ar1_preproposal(new_times, window, params.sigma, config.gamma)
        joint_new = build_joint(new_times, window, pre_new, params.varsigma)
        cond_spec, evidence_new = condition(joint_new.spec, joint_new.z_idx, joint_new.z_values)
        draw = cond_spec.sample(rng)
        if joint_new.has_start:
            x_B_new = draw[0]
            new_vels = draw[1:]
        else:
            x_B_new = window.x_B
            new_vels = draw
        new_side = _WindowSide(m_new, new_times, new_vels, x_B_new)

        n_old = traj.n_turns
        n_new = n_old - L + new_times.size
        log_h = _move_log_ratio(
            old_side,
            new_side,
            window,
            ds,
            params,
            config,
            tk,
            kind,
            n_old,
            n_new,
            qm_fwd,
            qm_rev,
            forced=force_end is not None,
            evidence_new=evidence_new,
        )
    except ProposalNumericalError:
        state.numerical_rejects += 1
        state.count(label, False)
        return False
    if np.isnan(log_h):
        state.numerical_rejects += 1
        state.count(label, False)
        return False
    accepted = log_h >= 0 or rng.random() < math.exp(log_h)
    if accepted:
        state.traj = _splice(traj, window, new_side.times, new_side.vels, new_side.x_B)
        refresh_cache(state, ds)
    state.count(label, accepted)
    return accepted


def _window_obs_loglik(
    side: _WindowSide, window: Window, params: ModelParams
) -> float:
    """Observation terms that vary within a fixed-times velocity walk."""
    vs = params.varsigma
    total = 0.0
    seg_start = np.concatenate([[window.t_B], side.times])
    seg_end = np.concatenate([side.times, [window.t_E]])
    if window.obs_times.size:
        coeff = (
            np.clip(window.obs_times[:, None], seg_start[None, :], seg_end[None, :])
            - seg_start[None, :]
        )
        pred = side.x_B + coeff @ side.vels
        resid = window.obs_locs - pred
        total += -window.obs_times.size * (LOG_2PI + 2.0 * math.log(vs)) - float(
            np.sum(resid * resid)
        ) / (2.0 * vs**2)
    if window.right_open:
        durs = seg_end - seg_start
        pred_end = side.x_B + durs @ side.vels
        resid = window.obsn_loc - pred_end
        total += -(LOG_2PI + 2.0 * math.log(vs)) - float(np.sum(resid * resid)) / (2.0 * vs**2)
    return total


def fixed_velocity_update(
    state: ChainState,
    ds: Dataset,
    window: Window,
    config: RunConfig,
    rng: np.random.Generator,
) -> bool:
    """Random-walk refresh of the window's segment velocities, times kept.

    For interior-ended windows the perturbation is projected onto the
    subspace that leaves the end location unchanged, so no dimension or
    anchor changes occur; the move is then plain Metropolis.
    """
    params = state.params
    traj = state.traj
    B, E = window.B, window.E
    times = traj.turn_times[B : E - 1].copy()
    old_vels = traj.velocities[B:E].copy()
    old_side = _WindowSide(window_tally(window, times), times, old_vels, window.x_B)

    scale = config.velocity_rw_frac * params.sigma
    pert = scale * rng.standard_normal(old_vels.shape)
    if window.x_E is not None:
        durs = np.diff(np.concatenate([[window.t_B], times, [window.t_E]]))
        denom = float(durs @ durs)
        pert -= np.outer(durs, durs @ pert) / denom
    new_side = _WindowSide(old_side.m, times, old_vels + pert, window.x_B)

    delta = (
        _window_path_logdensity(new_side, window, params)
        - _window_path_logdensity(old_side, window, params)
        + _window_obs_loglik(new_side, window, params)
        - _window_obs_loglik(old_side, window, params)
    )
    accepted = delta >= 0 or (np.isfinite(delta) and rng.random() < math.exp(delta))
    if accepted:
        state.traj = _splice(traj, window, times, new_side.vels, window.x_B)
        refresh_cache(state, ds)
    state.count("fixed_keep_times", accepted)
    return accepted


def endpoint_update(
    state: ChainState,
    ds: Dataset,
    which: str,
    config: RunConfig,
    rng: np.random.Generator,
    kind: TallyProposalKind = TallyProposalKind.FIXED_RESAMPLE,
) -> bool:
    """Trajectory update with the window pinned to one dataset end."""
    if which not in ("left", "right"):
        raise ValueError("which must be 'left' or 'right'")
    return trajectory_update(state, ds, config, rng, kind=kind, force_end=which)


# ---------------------------------------------------------------------------
# Parameter updates
# ---------------------------------------------------------------------------

def _param_conditional(state: ChainState, name: str, value: float, priors: PriorSet) -> float:
    """Log conditional target of one parameter given the trajectory, up to constants."""
    c = state.cache
    p = state.params
    n = state.traj.n_turns
    if name == "lam":
        if value <= 0:
            return -np.inf
        return n * math.log(value) - value * c.span + float(priors.lambda_prior.logpdf(value))
    if name == "kappa":
        if value < 0:
            return -np.inf
        out = float(priors.kappa_prior.logpdf(value))
        if n >= 1:
            out += value * c.cos_dpsi_sum - n * float(log_i0(value))
        return out
    if name == "sigma":
        if value <= 0:
            return -np.inf
        return _speed_chain_logpdf(c.speeds, value, state.params.rho) + float(
            priors.sigma_prior.logpdf(value)
        )
    if name == "rho":
        if not 0.0 <= value < 1.0:
            return -np.inf
        return _speed_chain_logpdf(c.speeds, state.params.sigma, value) + float(
            priors.rho_prior.logpdf(value)
        )
    if name == "varsigma":
        if value <= 0:
            return -np.inf
        out = -c.n_obs * 2.0 * math.log(value) - c.sq_sum / (2.0 * value**2)
        if priors.varsigma_prior is not None:
            out += float(priors.varsigma_prior.logpdf(value))
        return out
    raise ValueError(name)


def _rw_scales(priors: PriorSet, config: RunConfig) -> dict[str, float]:
    scales = {
        "lam": config.rw_scale_frac * priors.lambda_prior.scale,
        "kappa": config.kappa_rw_scale,
        "sigma": config.rw_scale_frac * priors.sigma_prior.scale,
        "rho": config.rho_rw_scale,
    }
    if priors.varsigma_prior is not None:
        scales["varsigma"] = config.rw_scale_frac * priors.varsigma_prior.scale
    return scales


def parameter_update(
    state: ChainState,
    ds: Dataset,
    priors: PriorSet,
    config: RunConfig,
    rng: np.random.Generator,
) -> None:
    """One-at-a-time Gaussian random-walk sweep over the model parameters.

    Proposals landing outside a parameter's support are rejected outright.
    The error SD is skipped in error-free mode.
    """
    names = ["lam", "kappa", "sigma", "rho"]
    if not config.error_free:
        names.append("varsigma")
    scales = _rw_scales(priors, config)
    for name in names:
        current = getattr(state.params, name)
        proposal = current + scales[name] * rng.standard_normal()
        lo = _param_conditional(state, name, proposal, priors)
        accepted = False
        if lo > -np.inf:
            delta = lo - _param_conditional(state, name, current, priors)
            accepted = delta >= 0 or (np.isfinite(delta) and rng.random() < math.exp(delta))
        if accepted:
            state.params = state.params.replace(**{name: proposal})
        state.count(f"param_{name}", accepted)


# ---------------------------------------------------------------------------
# Initialization
# ---------------------------------------------------------------------------

def _rate_estimate(ds: Dataset, varsigma: float, base_threshold: float) -> float:
    """Approximate turn rate from minimal-turn counts at one assumed error level."""
    thr = max(base_threshold, 3.0 * varsigma, 1e-12)
    runs = detect_collinear_runs(ds, thr)
    mask = collinear_interval_mask(runs, ds.n_intervals)
    bridges = find_bridge_gaps(ds, runs, time_tol=max(1e-9, thr), pos_tol=max(1e-9, thr))
    turns = count_minimal_turns(ds.n_intervals, mask, bridges.keys())
    return turns / (ds.times[-1] - ds.times[0])


def initialize_chain(
    ds: Dataset,
    priors: PriorSet,
    config: RunConfig,
    chain_index: int,
    rng: np.random.Generator,
) -> ChainState:
    """Starting state: data-driven parameter guesses and a minimal-tally path.

    The turn rate comes from collinearity-based estimates swept over assumed
    error levels up to the configured upper bound; the first chain starts at
    the largest estimate, later chains at the smallest.
    """
    base_thr = collinearity_threshold(ds)
    grid = np.linspace(0.0, config.varsigma_upper, 16)
    rates = [_rate_estimate(ds, float(v), base_thr) for v in grid]
    span = float(ds.times[-1] - ds.times[0])
    floor = 0.5 / span
    lam0 = max(rates) if chain_index == 0 else min(rates)
    lam0 = max(lam0, floor)

    sigma0 = float(np.mean(ds.empirical_speeds()))
    if config.error_free:
        if config.varsigma_fixed is None:
            raise ValueError("error-free mode needs varsigma_fixed")
        vs0 = config.varsigma_fixed
    else:
        vs0 = 0.5 * config.varsigma_upper
    params = ModelParams(lam=lam0, kappa=2.0, sigma=sigma0, rho=priors.rho_prior.mean, varsigma=vs0)

    runs = detect_collinear_runs(ds, base_thr)
    mask = collinear_interval_mask(runs, ds.n_intervals)
    bridges = find_bridge_gaps(ds, runs, time_tol=max(1e-9, base_thr), pos_tol=max(1e-9, base_thr))
    tally = sample_minimal_tally(ds.n_intervals, mask, rng, bridges.keys())
    traj = initial_trajectory(ds, tally, vs0, rng)
    state = ChainState(traj=traj, params=params)
    refresh_cache(state, ds)
    return state


# ---------------------------------------------------------------------------
# Run orchestration
# ---------------------------------------------------------------------------

@dataclass
class ChainResult:
    chain_id: int
    samples: np.ndarray  # columns: lam, kappa, sigma, rho, varsigma, N, log_posterior
    trajectories: list[Trajectory]
    trajectory_iterations: np.ndarray
    accept_rates: dict[str, float]
    numerical_rejects: int


@dataclass
class RunResult:
    chains: list[ChainResult]
    burn_in: int

    def pooled(self, column: int) -> np.ndarray:
        return np.concatenate([c.samples[self.burn_in :, column] for c in self.chains])

    def pooled_named(self, name: str) -> np.ndarray:
        cols = {"lam": 0, "kappa": 1, "sigma": 2, "rho": 3, "varsigma": 4, "N": 5, "log_posterior": 6}
        return self.pooled(cols[name])

    @property
    def trajectories(self) -> list[Trajectory]:
        return [t for c in self.chains for t in c.trajectories]


def run_chain(
    ds: Dataset,
    priors: PriorSet,
    config: RunConfig,
    chain_index: int,
) -> ChainResult:
    """Run one chain to completion; fully deterministic given (config.seed, chain_index)."""
    rng = np.random.default_rng([config.seed, chain_index])
    state = initialize_chain(ds, priors, config, chain_index, rng)
    if config.error_free:
        state.params = state.params.replace(varsigma=config.varsigma_fixed)
        refresh_cache(state, ds)

    tk = config.time_kernel(ds)
    samples = np.empty((config.iterations, 7))
    keep = np.linspace(config.burn_in, config.iterations - 1, config.n_trajectory_samples).astype(int)
    keep_set = set(int(k) for k in keep)
    trajectories: list[Trajectory] = []
    traj_iters: list[int] = []
    for it in range(config.iterations):
        trajectory_update(state, ds, config, rng, tk=tk)
        parameter_update(state, ds, priors, config, rng)
        state.iteration = it
        p = state.params
        samples[it] = (
            p.lam,
            p.kappa,
            p.sigma,
            p.rho,
            p.varsigma,
            state.traj.n_turns,
            log_posterior(state, ds, priors, config),
        )
        if it in keep_set:
            trajectories.append(state.traj)
            traj_iters.append(it)
    rates = {
        k: state.accepts.get(k, 0) / v for k, v in sorted(state.proposals.items())
    }
    return ChainResult(
        chain_id=chain_index,
        samples=samples,
        trajectories=trajectories,
        trajectory_iterations=np.asarray(traj_iters),
        accept_rates=rates,
        numerical_rejects=state.numerical_rejects,
    )


def _chain_job(args) -> ChainResult:
    ds, priors, config, chain_index = args
    return run_chain(ds, priors, config, chain_index)


def run(ds: Dataset, priors: PriorSet, config: RunConfig) -> RunResult:
    """Run all chains (optionally in parallel processes) and bundle the results."""
    jobs = [(ds, priors, config, c) for c in range(config.n_chains)]
    if config.processes > 1 and config.n_chains > 1:
        with ProcessPoolExecutor(max_workers=min(config.processes, config.n_chains)) as pool:
            chains = list(pool.map(_chain_job, jobs))
    else:
        chains = [_chain_job(j) for j in jobs]
    return RunResult(chains=chains, burn_in=config.burn_in)
