"""Window selection, tally and event-time proposal kernels, and the Gaussian
pre-proposal / conditioning machinery used to propose velocities.

All kernels report exact forward and reverse log-densities so the sampler can
assemble Hastings ratios for trans-dimensional moves.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .geometry import join_time
from .model import Dataset, Trajectory

__all__ = [
    "ProposalNumericalError",
    "GaussianSpec",
    "condition",
    "sample_conditioned",
    "conditioned_logpdf",
    "TallyProposalKind",
    "Window",
    "WindowJoint",
    "extract_window",
    "window_tally",
    "l_distribution_pmf",
    "window_selection_logprob",
    "select_window",
    "propose_tally",
    "TimeKernelConfig",
    "propose_event_times",
    "event_times_logpdf",
    "ar1_preproposal",
    "build_joint",
]

LOG_2PI = math.log(2.0 * math.pi)


class ProposalNumericalError(Exception):
    """Raised when conditioning hits a numerically unusable covariance."""


# ---------------------------------------------------------------------------
# Possibly-singular Gaussians
# ---------------------------------------------------------------------------

class GaussianSpec:
    """Multivariate Gaussian with an eigendecomposition cache.

    ``mean`` may carry several columns (shape (d, k)) sharing one covariance;
    the window machinery uses one column per spatial coordinate. Eigenvalues
    below ``floor`` are treated as exact linear constraints: they contribute
    neither sampling variation nor pseudo-density terms.
    """

    __slots__ = ("mean", "cov", "floor", "_eigvals", "_eigvecs")

    def __init__(self, mean, cov, floor: float | None = None):
        self.mean = np.atleast_1d(np.asarray(mean, dtype=float))
        self.cov = np.atleast_2d(np.asarray(cov, dtype=float))
        d = self.cov.shape[0]
        if self.cov.shape != (d, d) or self.mean.shape[0] != d:
            raise ValueError("mean and covariance dimensions disagree")
        if floor is None:
            floor = 1e-10 * max(float(np.trace(self.cov)) / d, 1e-300)
        self.floor = float(floor)
        self._eigvals = None
        self._eigvecs = None

    @property
    def dim(self) -> int:
        return self.cov.shape[0]

    def eig(self) -> tuple[np.ndarray, np.ndarray]:
        if self._eigvals is None:
            sym = 0.5 * (self.cov + self.cov.T)
            try:
                w, q = np.linalg.eigh(sym)
            except np.linalg.LinAlgError as exc:
                raise ProposalNumericalError("eigendecomposition failed") from exc
            # the floor carries the problem scale; a degenerate matrix's own
            # trace can be ~0, so it cannot serve as the reference
            tol = max(1e-8 * float(np.trace(sym)) / sym.shape[0], 1e2 * self.floor, 1e-300)
            if w[0] < -tol:
                raise ProposalNumericalError(f"covariance indefinite (min eigenvalue {w[0]:.3e})")
            self._eigvals = w
            self._eigvecs = q
        return self._eigvals, self._eigvecs

    def _project(self, x) -> np.ndarray:
        resid = np.asarray(x, dtype=float) - self.mean
        _, q = self.eig()
        proj = q.T @ resid
        return proj if proj.ndim == 2 else proj[:, None]

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        """Draw one value per mean column; floored directions carry no noise."""
        w, q = self.eig()
        sd = np.sqrt(np.where(w >= self.floor, np.maximum(w, 0.0), 0.0))
        z = rng.standard_normal((self.dim, 1 if self.mean.ndim == 1 else self.mean.shape[1]))
        draw = q @ (sd[:, None] * z)
        return self.mean + (draw[:, 0] if self.mean.ndim == 1 else draw)

    def logpdf(self, x, support_tol: float = 1e-6) -> float:
        """Pseudo log-density on the support, summed over mean columns.

        Directions below the eigenvalue floor are exact constraints: the
        point must match them to ``support_tol`` or the result is -inf.
        """
        w, _ = self.eig()
        proj = self._project(x)
        live = w >= self.floor
        if (~live).any() and float(np.max(np.abs(proj[~live]))) > support_tol:
            return -np.inf
        lw = w[live]
        if lw.size == 0:
            return 0.0
        p = proj[live]
        quad = float(np.sum(p * p / lw[:, None]))
        return -0.5 * p.shape[1] * float(np.sum(LOG_2PI + np.log(lw))) - 0.5 * quad

    def logpdf_floored(self, x) -> float:
        """Proper Gaussian log-density with floored eigenvalues (all directions count)."""
        w, _ = self.eig()
        lw = np.maximum(w, self.floor)
        proj = self._project(x)
        quad = float(np.sum(proj * proj / lw[:, None]))
        return -0.5 * proj.shape[1] * float(np.sum(LOG_2PI + np.log(lw))) - 0.5 * quad


def condition(joint: GaussianSpec, z_idx, z_values) -> tuple[GaussianSpec, float]:
    """Condition a joint Gaussian on components ``z_idx`` taking ``z_values``.

    Returns the conditional over the remaining components (original order)
    and the log marginal density of the conditioned values, evaluated with
    floored eigenvalues. Raises ProposalNumericalError when the conditioned
    block is indefinite beyond tolerance.
    """
    z_idx = np.asarray(z_idx, dtype=int)
    d = joint.dim
    f_idx = np.setdiff1d(np.arange(d), z_idx)
    z_values = np.asarray(z_values, dtype=float)

    svv = joint.cov[np.ix_(f_idx, f_idx)]
    svz = joint.cov[np.ix_(f_idx, z_idx)]
    szz = joint.cov[np.ix_(z_idx, z_idx)]
    mu_f = joint.mean[f_idx]
    mu_z = joint.mean[z_idx]

    zspec = GaussianSpec(mu_z, szz)
    w, q = zspec.eig()
    lw = np.maximum(w, zspec.floor)
    evidence = zspec.logpdf_floored(z_values)

    resid = z_values - mu_z
    proj = q.T @ resid
    if proj.ndim == 1:
        szz_inv_resid = q @ (proj / lw)
    else:
        szz_inv_resid = q @ (proj / lw[:, None])
    gain = svz @ q
    mean_c = mu_f + svz @ szz_inv_resid
    cov_c = svv - (gain / lw) @ gain.T
    floor_c = 1e-10 * max(float(np.trace(svv)) / max(f_idx.size, 1), 1e-300)
    return GaussianSpec(mean_c, cov_c, floor=floor_c), evidence


def sample_conditioned(spec: GaussianSpec, rng: np.random.Generator) -> np.ndarray:
    """Draw from a conditioned proposal (degenerate directions pinned)."""
    return spec.sample(rng)


def conditioned_logpdf(spec: GaussianSpec, values) -> float:
    """Pseudo log-density of ``values`` under a conditioned proposal."""
    return spec.logpdf(values)


# ---------------------------------------------------------------------------
# Windows
# ---------------------------------------------------------------------------

class TallyProposalKind(enum.Enum):
    FIXED_KEEP = "fixed_keep_times"
    FIXED_RESAMPLE = "fixed_resample_times"
    UNIFORM = "uniform"
    POISSON = "poisson"
    RANDOM_WALK = "random_walk"


@dataclass
class Window:
    """A stretch (t_B, t_E) of the path selected for updating.

    The ends sit on current turn events or on the dataset boundary; at the
    dataset boundary the anchor location is only observed with error
    (``left_latent`` / ``right_open``).
    """

    B: int
    E: int
    t_B: float
    t_E: float
    x_B: np.ndarray
    v_B: np.ndarray | None
    x_E: np.ndarray | None
    v_E: np.ndarray | None
    left_latent: bool
    right_open: bool
    obs_idx: np.ndarray
    obs_times: np.ndarray
    obs_locs: np.ndarray
    obs0_loc: np.ndarray | None
    obsn_loc: np.ndarray | None
    bounds: np.ndarray
    lengths: np.ndarray

    @property
    def n_intervals(self) -> int:
        return self.lengths.size

    @property
    def span(self) -> float:
        return self.t_E - self.t_B


def extract_window(traj: Trajectory, ds: Dataset, B: int, E: int) -> Window:
    """Window anchored at event indices B and E (0 and N+1 mean the dataset ends)."""
    n_ev = traj.n_turns
    if not (0 <= B < E <= n_ev + 1):
        raise ValueError("invalid window indices")
    bounds_all = traj.boundaries
    t_B = float(bounds_all[B])
    t_E = float(bounds_all[E])
    left_latent = B == 0
    right_open = E == n_ev + 1
    lo, hi = np.searchsorted(ds.times, [t_B, t_E])
    if lo < ds.times.size and ds.times[lo] == t_B:
        lo += 1  # interior observations are strictly inside (t_B, t_E)
    obs_idx = np.arange(lo, hi)
    obs_times = ds.times[obs_idx]
    bounds = np.concatenate([[t_B], obs_times, [t_E]])
    return Window(
        B=B,
        E=E,
        t_B=t_B,
        t_E=t_E,
        x_B=traj.boundary_locations[B].copy(),
        v_B=traj.velocities[B - 1].copy() if B >= 1 else None,
        x_E=traj.boundary_locations[E].copy() if not right_open else None,
        v_E=traj.velocities[E].copy() if not right_open else None,
        left_latent=left_latent,
        right_open=right_open,
        obs_idx=obs_idx,
        obs_times=obs_times,
        obs_locs=ds.locations[obs_idx],
        obs0_loc=ds.locations[0].copy() if left_latent else None,
        obsn_loc=ds.locations[-1].copy() if right_open else None,
        bounds=bounds,
        lengths=np.diff(bounds),
    )


def window_tally(window: Window, interior_times: np.ndarray) -> np.ndarray:
    """Counts of event times per window interval."""
    idx = np.searchsorted(window.bounds, interior_times, side="right") - 1
    return np.bincount(idx, minlength=window.n_intervals).astype(int)


# ---------------------------------------------------------------------------
# Window selection
# ---------------------------------------------------------------------------

_L_PMFS: dict[TallyProposalKind, np.ndarray] = {}


def l_distribution_pmf(kind: TallyProposalKind) -> np.ndarray:
    """Distribution of the targeted interior-event count, by proposal kind."""
    if kind not in _L_PMFS:
        if kind is TallyProposalKind.FIXED_KEEP:
            pmf = np.zeros(31)
            pmf[1:31] = 1.0 / 30.0
        elif kind is TallyProposalKind.FIXED_RESAMPLE:
            pmf = np.zeros(8)
            pmf[1:8] = 1.0 / 7.0
        elif kind is TallyProposalKind.UNIFORM:
            pmf = np.zeros(3)
            pmf[1:3] = 0.5
        else:  # Poisson and random-walk kinds share Binomial(9, 0.2)
            k = np.arange(10)
            pmf = np.array([math.comb(9, int(i)) for i in k]) * 0.2**k * 0.8 ** (9 - k)
        _L_PMFS[kind] = pmf
    return _L_PMFS[kind]


def window_selection_logprob(kind: TallyProposalKind, L: int, n_events: int) -> float:
    """Log-probability that selection lands on a window with L interior events.

    The targeted count is clamped down to the number of existing events, so
    L == n_events absorbs the tail of the count distribution; the (B, E)
    pair is then uniform over the n_events - L + 1 admissible pairs.
    """
    if L < 0 or L > n_events:
        return -np.inf
    pmf = l_distribution_pmf(kind)
    p = float(pmf[L]) if L < pmf.size else 0.0
    if L == n_events and n_events + 1 < pmf.size:
        p += float(pmf[n_events + 1 :].sum())
    if p <= 0.0:
        return -np.inf
    return math.log(p) - math.log(n_events - L + 1)


def select_window(
    traj: Trajectory,
    kind: TallyProposalKind,
    ds: Dataset,
    rng: np.random.Generator,
) -> tuple[Window, float]:
    """Sample a window for the given kind; returns it with its selection log-probability."""
    n_ev = traj.n_turns
    pmf = l_distribution_pmf(kind)
    L = int(np.searchsorted(np.cumsum(pmf), rng.random() * pmf.sum(), side="right"))
    L = min(L, n_ev)
    B = int(rng.integers(0, n_ev - L + 1))
    E = B + L + 1
    return extract_window(traj, ds, B, E), window_selection_logprob(kind, L, n_ev)


# ---------------------------------------------------------------------------
# Tally proposals
# ---------------------------------------------------------------------------

def _multinomial_logpmf(m: np.ndarray, total: int, p: np.ndarray) -> float:
    if int(m.sum()) != total:
        return -np.inf
    return float(gammaln(total + 1) - np.sum(gammaln(m + 1)) + np.sum(m * np.log(p)))


def _poisson_logpmf(m: np.ndarray, mu: np.ndarray) -> float:
    return float(np.sum(m * np.log(mu) - mu - gammaln(m + 1)))


_RW_P_UP = 1.0 / 3.0
_RW_P_DOWN = 1.0 / 3.0


def _rw_step_logq(m_from: int, m_to: int) -> float:
    """Random-walk tally step; the down-move from zero proposes zero again."""
    if m_from == 0:
        if m_to == 0:
            return math.log(1.0 - _RW_P_UP)
        if m_to == 1:
            return math.log(_RW_P_UP)
        return -np.inf
    if m_to == m_from + 1:
        return math.log(_RW_P_UP)
    if m_to == m_from - 1:
        return math.log(_RW_P_DOWN)
    if m_to == m_from:
        return math.log(1.0 - _RW_P_UP - _RW_P_DOWN)
    return -np.inf


def propose_tally(
    kind: TallyProposalKind,
    m: np.ndarray,
    window: Window,
    lam: float,
    rng: np.random.Generator,
) -> tuple[np.ndarray, float, float]:
    """Propose a tally for the window; returns (M', log q(M'|M), log q(M|M'))."""
    m = np.asarray(m, dtype=int)
    if kind in (TallyProposalKind.FIXED_KEEP, TallyProposalKind.FIXED_RESAMPLE):
        return m.copy(), 0.0, 0.0
    if kind is TallyProposalKind.UNIFORM:
        total = int(m.sum())
        p = window.lengths / window.span
        m_new = rng.multinomial(total, p).astype(int)
        return m_new, _multinomial_logpmf(m_new, total, p), _multinomial_logpmf(m, total, p)
    if kind is TallyProposalKind.POISSON:
        mu = lam * window.lengths
        m_new = rng.poisson(mu).astype(int) if m.size else m.copy()
        return m_new, _poisson_logpmf(m_new, mu), _poisson_logpmf(m, mu)
    if kind is TallyProposalKind.RANDOM_WALK:
        steps = rng.integers(-1, 2, size=m.size)
        m_new = np.maximum(m + steps, 0).astype(int)
        fwd = sum(_rw_step_logq(int(a), int(b)) for a, b in zip(m, m_new))
        rev = sum(_rw_step_logq(int(b), int(a)) for a, b in zip(m, m_new))
        return m_new, fwd, rev
    raise ValueError(f"unknown tally kind {kind}")


# ---------------------------------------------------------------------------
# Event-time proposals
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TimeKernelConfig:
    """Constructive event-time kernel settings (scaled time units)."""

    tau: float = 0.05
    constructive_prob: float = 0.5


def _constructive_time(
    m: np.ndarray,
    j: int,
    window: Window,
    ds: Dataset,
    varsigma: float,
    sigma: float,
) -> float | None:
    """Join time for the lone event of a 0,1,0 window pattern, if determined.

    Applies only when interval j spans two consecutive observations whose
    outer neighbours exist: the flanking zero tallies leave the neighbouring
    velocities data-determined (up to error), so the event time is pinned
    near where those two lines meet.
    """
    if int(m[j]) != 1 or j == 0 or j == m.size - 1:
        return None
    if int(m[j - 1]) != 0 or int(m[j + 1]) != 0:
        return None
    k = int(window.obs_idx[j - 1])
    if k < 1 or k + 2 > ds.times.size - 1:
        return None
    t = ds.times
    x = ds.locations
    v_pre = (x[k] - x[k - 1]) / (t[k] - t[k - 1])
    v_post = (x[k + 2] - x[k + 1]) / (t[k + 2] - t[k + 1])
    return join_time(
        (float(t[k]), x[k]),
        v_pre,
        (float(t[k + 1]), x[k + 1]),
        v_post,
        (float(t[k]), float(t[k + 1])),
        time_tol=max(3.0 * varsigma / sigma, 1e-9),
        pos_tol=max(3.0 * varsigma, 1e-9),
    )


def propose_event_times(
    m_new: np.ndarray,
    window: Window,
    ds: Dataset,
    varsigma: float,
    sigma: float,
    cfg: TimeKernelConfig,
    rng: np.random.Generator,
) -> tuple[np.ndarray, float]:
    """Draw interior event times matching the tally; returns (times, log q(T'|M')).

    Within each interval the times are uniform order statistics, except that
    a lone event in a 0,1,0 pattern mixes in (with probability
    ``cfg.constructive_prob``) a uniform draw around the join time of the
    neighbouring data-determined lines.
    """
    times = []
    logq = 0.0
    for j in range(window.n_intervals):
        mj = int(m_new[j])
        if mj == 0:
            continue
        a, b = window.bounds[j], window.bounds[j + 1]
        width = b - a
        t_star = _constructive_time(m_new, j, window, ds, varsigma, sigma)
        if t_star is None:
            draw = np.sort(rng.uniform(a, b, size=mj))
            logq += math.lgamma(mj + 1) - mj * math.log(width)
        else:
            lo = max(t_star - cfg.tau, a)
            hi = min(t_star + cfg.tau, b)
            if rng.random() < cfg.constructive_prob:
                draw = np.array([rng.uniform(lo, hi)])
            else:
                draw = np.array([rng.uniform(a, b)])
            dens = (1.0 - cfg.constructive_prob) / width
            if lo <= draw[0] <= hi:
                dens += cfg.constructive_prob / (hi - lo)
            logq += math.log(dens)
        times.append(draw)
    out = np.concatenate(times) if times else np.empty(0)
    return out, logq


def event_times_logpdf(
    m: np.ndarray,
    interior_times: np.ndarray,
    window: Window,
    ds: Dataset,
    varsigma: float,
    sigma: float,
    cfg: TimeKernelConfig,
) -> float:
    """Log-density of a time configuration under the same kernel the sampler draws from."""
    logq = 0.0
    pos = 0
    for j in range(window.n_intervals):
        mj = int(m[j])
        if mj == 0:
            continue
        a, b = window.bounds[j], window.bounds[j + 1]
        width = b - a
        ts = interior_times[pos : pos + mj]
        pos += mj
        if np.any(ts < a) or np.any(ts > b):
            return -np.inf
        t_star = _constructive_time(m, j, window, ds, varsigma, sigma)
        if t_star is None:
            logq += math.lgamma(mj + 1) - mj * math.log(width)
        else:
            lo = max(t_star - cfg.tau, a)
            hi = min(t_star + cfg.tau, b)
            dens = (1.0 - cfg.constructive_prob) / width
            if lo <= ts[0] <= hi:
                dens += cfg.constructive_prob / (hi - lo)
            logq += math.log(dens)
    return logq


# ---------------------------------------------------------------------------
# Gaussian pre-proposal and the window joint
# ---------------------------------------------------------------------------

def ar1_preproposal(
    interior_times: np.ndarray,
    window: Window,
    sigma: float,
    gamma: float,
) -> GaussianSpec:
    """Joint Gaussian over the window velocities before seeing any data.

    One AR(1)-correlated component per coordinate: mean anchored at the
    incoming velocity (zero at the dataset start), variance sigma^2 and
    lag-h correlation gamma^h. Includes the velocity taking over at t_E
    unless the window runs to the dataset end.
    """
    if not -1.0 < gamma < 1.0:
        raise ValueError("autocorrelation parameter must lie in (-1, 1)")
    d = interior_times.size + 1 + (0 if window.right_open else 1)
    mean = np.tile(window.v_B, (d, 1)) if window.v_B is not None else np.zeros((d, 2))
    if gamma == 0.0:
        cov = sigma**2 * np.eye(d)
    else:
        h = np.abs(np.subtract.outer(np.arange(d), np.arange(d)))
        cov = sigma**2 * gamma ** h
    return GaussianSpec(mean, cov, floor=1e-10 * sigma**2)


@dataclass
class WindowJoint:
    """Joint Gaussian over window unknowns and the values they are conditioned on.

    Component layout (per coordinate): latent start location (if the window
    begins at the dataset start), the L'+1 segment velocities, the take-over
    velocity at t_E (if interior), then one affine row per conditioned value.
    """

    spec: GaussianSpec
    free_idx: np.ndarray
    z_idx: np.ndarray
    z_values: np.ndarray
    n_segments: int
    has_start: bool
    has_end_velocity: bool


def build_joint(
    interior_times: np.ndarray,
    window: Window,
    preprop: GaussianSpec,
    varsigma: float,
) -> WindowJoint:
    """Extend the velocity pre-proposal to the quantities conditioned on.

    Interior observations and the dataset-end observations carry error
    variance varsigma^2; the end location of an interior-ended window is an
    exact (noise-free) row, and the take-over velocity is conditioned on
    directly as a component of the pre-proposal.
    """
    interior_times = np.asarray(interior_times, dtype=float)
    n_seg = interior_times.size + 1
    seg_start = np.concatenate([[window.t_B], interior_times])
    seg_end = np.concatenate([interior_times, [window.t_E]])

    has_xb = window.left_latent
    has_ue = not window.right_open
    d_f = (1 if has_xb else 0) + n_seg + (1 if has_ue else 0)
    o_v = 1 if has_xb else 0

    mu_f = np.zeros((d_f, 2))
    cov_f = np.zeros((d_f, d_f))
    if has_xb:
        mu_f[0] = window.obs0_loc
        cov_f[0, 0] = max(varsigma, 1e-12) ** 2
    mu_f[o_v:] = preprop.mean
    cov_f[o_v:, o_v:] = preprop.cov

    rows: list[np.ndarray] = []
    offsets: list[np.ndarray] = []
    noises: list[float] = []
    z_vals: list[np.ndarray] = []

    def location_row(t: float, noise: float, value: np.ndarray) -> None:
        r = np.zeros(d_f)
        if has_xb:
            r[0] = 1.0
        r[o_v : o_v + n_seg] = np.clip(t, seg_start, seg_end) - seg_start
        rows.append(r)
        offsets.append(np.zeros(2) if has_xb else window.x_B)
        noises.append(noise)
        z_vals.append(np.asarray(value, dtype=float))

    if has_xb:
        r = np.zeros(d_f)
        r[0] = 1.0
        rows.append(r)
        offsets.append(np.zeros(2))
        noises.append(varsigma**2)
        z_vals.append(window.obs0_loc)
    for t_obs, x_obs in zip(window.obs_times, window.obs_locs):
        location_row(float(t_obs), varsigma**2, x_obs)
    if window.right_open:
        location_row(window.t_E, varsigma**2, window.obsn_loc)
    else:
        location_row(window.t_E, 0.0, window.x_E)

    n_rows = len(rows)
    d = d_f + n_rows
    mean = np.empty((d, 2))
    cov = np.zeros((d, d))
    mean[:d_f] = mu_f
    cov[:d_f, :d_f] = cov_f
    rmat = np.vstack(rows)
    mean[d_f:] = rmat @ mu_f + np.vstack(offsets)
    cross = rmat @ cov_f
    cov[d_f:, :d_f] = cross
    cov[:d_f, d_f:] = cross.T
    cov[d_f:, d_f:] = cross @ rmat.T + np.diag(noises)

    z_idx = list(range(d_f, d))
    if has_ue:
        z_idx.append(o_v + n_seg)
        z_vals.append(window.v_E)
    z_idx_arr = np.asarray(z_idx, dtype=int)
    free_idx = np.setdiff1d(np.arange(d), z_idx_arr)
    return WindowJoint(
        spec=GaussianSpec(mean, cov),
        free_idx=free_idx,
        z_idx=z_idx_arr,
        z_values=np.vstack(z_vals),
        n_segments=n_seg,
        has_start=has_xb,
        has_end_velocity=has_ue,
    )
