"""Trajectory representation, forward simulation and model densities.

A trajectory is piecewise linear: velocity is constant between turn events
whose times come from a homogeneous Poisson process. Locations are observed
at arbitrary times with isotropic Gaussian error.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .distributions import (
    LOG_2PI,
    RiceSpeedKernel,
    rayleigh_sample,
    rice_logpdf,
    rice_sample,
    von_mises_logpdf,
    von_mises_sample,
    wrap_angle,
)

__all__ = [
    "ModelParams",
    "Trajectory",
    "Dataset",
    "interpolate",
    "simulate",
    "observe",
    "velocity_transition_logpdf",
    "stationary_velocity_logpdf",
    "path_logdensity",
    "observation_loglik",
]


@dataclass(frozen=True)
class ModelParams:
    """Movement-model parameters.

    lam:      turn rate (events per unit time, > 0)
    kappa:    von Mises concentration of turning angles (>= 0)
    sigma:    Rayleigh scale of speeds (> 0)
    rho:      correlation of successive speeds (0 <= rho < 1)
    varsigma: SD of observation error (>= 0)
    """

    lam: float
    kappa: float
    sigma: float
    rho: float
    varsigma: float

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError("turn rate must be > 0")
        if self.kappa < 0:
            raise ValueError("turn concentration must be >= 0")
        if self.sigma <= 0:
            raise ValueError("speed scale must be > 0")
        if not (0.0 <= self.rho < 1.0):
            raise ValueError("speed correlation must lie in [0, 1)")
        if self.varsigma < 0:
            raise ValueError("error SD must be >= 0")

    @property
    def speed_kernel(self) -> RiceSpeedKernel:
        return RiceSpeedKernel(self.sigma, self.rho)

    def replace(self, **kw) -> "ModelParams":
        d = dict(lam=self.lam, kappa=self.kappa, sigma=self.sigma, rho=self.rho, varsigma=self.varsigma)
        d.update(kw)
        return ModelParams(**d)


class Trajectory:
    """Piecewise-linear path on [t0, t_end].

    ``turn_times`` is strictly increasing and interior to (t0, t_end);
    ``velocities`` has one more row than there are turn times, row i applying
    between the i-th and (i+1)-th boundary. Treated as immutable once built.
    """

    __slots__ = ("t0", "x0", "turn_times", "velocities", "t_end", "_bounds", "_locs")

    def __init__(self, t0, x0, turn_times, velocities, t_end):
        turn_times = np.asarray(turn_times, dtype=float)
        velocities = np.asarray(velocities, dtype=float).reshape(-1, 2)
        x0 = np.asarray(x0, dtype=float).reshape(2)
        if t_end <= t0:
            raise ValueError("t_end must exceed t0")
        if turn_times.size:
            if np.any(np.diff(turn_times) <= 0):
                raise ValueError("turn times must be strictly increasing")
            if turn_times[0] <= t0 or turn_times[-1] >= t_end:
                raise ValueError("turn times must lie strictly inside (t0, t_end)")
        if velocities.shape[0] != turn_times.size + 1:
            raise ValueError("need exactly one velocity per segment")
        if not np.all(np.isfinite(velocities)):
            raise ValueError("velocities must be finite")
        self.t0 = float(t0)
        self.t_end = float(t_end)
        self.x0 = x0
        self.turn_times = turn_times
        self.velocities = velocities
        self._bounds = None
        self._locs = None

    @property
    def n_turns(self) -> int:
        return self.turn_times.size

    @property
    def boundaries(self) -> np.ndarray:
        """Segment boundary times: [t0, turn_times..., t_end]."""
        if self._bounds is None:
            self._bounds = np.concatenate([[self.t0], self.turn_times, [self.t_end]])
        return self._bounds

    @property
    def boundary_locations(self) -> np.ndarray:
        """Locations at each boundary time, (n_turns + 2, 2)."""
        if self._locs is None:
            durs = np.diff(self.boundaries)
            steps = self.velocities * durs[:, None]
            locs = np.empty((durs.size + 1, 2))
            locs[0] = self.x0
            np.cumsum(steps, axis=0, out=locs[1:])
            locs[1:] += self.x0
            self._locs = locs
        return self._locs

    def segment_of(self, t) -> np.ndarray:
        """Index of the segment containing each time (right-continuous)."""
        idx = np.searchsorted(self.turn_times, t, side="right")
        return idx

    def speeds(self) -> np.ndarray:
        return np.hypot(self.velocities[:, 0], self.velocities[:, 1])

    def bearings(self) -> np.ndarray:
        return np.arctan2(self.velocities[:, 1], self.velocities[:, 0])


def interpolate(traj: Trajectory, t) -> np.ndarray:
    """Location of the path at time(s) t in [t0, t_end]."""
    t = np.asarray(t, dtype=float)
    if np.any(t < traj.t0) or np.any(t > traj.t_end):
        raise ValueError("interpolation time outside the trajectory span")
    seg = traj.segment_of(t)
    base = traj.boundary_locations[seg]
    start = traj.boundaries[seg]
    out = base + (t - start)[..., None] * traj.velocities[seg]
    return out


def simulate(
    params: ModelParams,
    t0: float,
    t_end: float,
    rng: np.random.Generator,
    init: tuple[np.ndarray, np.ndarray] | None = None,
) -> Trajectory:
    """Draw a trajectory from the model on [t0, t_end].

    Turn times are a Poisson(lam) process; the initial velocity has uniform
    bearing and Rayleigh(sigma) speed unless ``init`` supplies (x0, v0).
    Each turn applies a von Mises bearing increment and a draw from the
    speed kernel.
    """
    if t_end <= t0:
        raise ValueError("t_end must exceed t0")
    n = rng.poisson(params.lam * (t_end - t0))
    times = np.sort(rng.uniform(t0, t_end, size=n))
    if init is not None:
        x0 = np.asarray(init[0], dtype=float)
        v0 = np.asarray(init[1], dtype=float)
        speed = float(np.hypot(*v0))
        bearing = float(np.arctan2(v0[1], v0[0]))
    else:
        x0 = np.zeros(2)
        speed = rayleigh_sample(params.sigma, rng)
        bearing = rng.uniform(0.0, 2.0 * np.pi)
    kernel = params.speed_kernel
    speeds = np.empty(n + 1)
    bearings = np.empty(n + 1)
    speeds[0] = speed
    bearings[0] = bearing
    for i in range(n):
        bearings[i + 1] = bearings[i] + von_mises_sample(params.kappa, rng)
        speeds[i + 1] = rice_sample(speeds[i], kernel, rng)
    velocities = np.column_stack([speeds * np.cos(bearings), speeds * np.sin(bearings)])
    return Trajectory(t0, x0, times, velocities, t_end)


@dataclass(frozen=True)
class Dataset:
    """Time-ordered noisy location observations.

    ``time_unit``/``distance_unit`` carry human-readable unit labels so that
    scaled copies can be round-tripped (see dataio.scale).
    """

    times: np.ndarray
    locations: np.ndarray
    time_unit: str = "time"
    distance_unit: str = "distance"

    def __post_init__(self):
        object.__setattr__(self, "times", np.asarray(self.times, dtype=float))
        object.__setattr__(self, "locations", np.asarray(self.locations, dtype=float).reshape(-1, 2))
        if self.times.size < 2:
            raise ValueError("a dataset needs at least two observations")
        if self.times.size != self.locations.shape[0]:
            raise ValueError("times and locations must align")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("observation times must be strictly increasing")
        if not (np.all(np.isfinite(self.times)) and np.all(np.isfinite(self.locations))):
            raise ValueError("observations must be finite")

    @property
    def n_intervals(self) -> int:
        return self.times.size - 1

    def interval_lengths(self) -> np.ndarray:
        return np.diff(self.times)

    def empirical_speeds(self) -> np.ndarray:
        steps = np.diff(self.locations, axis=0)
        return np.hypot(steps[:, 0], steps[:, 1]) / self.interval_lengths()


def observe(traj: Trajectory, times, varsigma: float, rng: np.random.Generator) -> Dataset:
    """Observe the path at the given times with isotropic Gaussian error."""
    times = np.asarray(times, dtype=float)
    truth = interpolate(traj, times)
    noisy = truth + varsigma * rng.standard_normal(truth.shape)
    return Dataset(times, noisy)


# ---------------------------------------------------------------------------
# Densities
# ---------------------------------------------------------------------------

def velocity_transition_logpdf(v_next, v_prev, params: ModelParams):
    """Log-density of the velocity after a turn, in Cartesian coordinates.

    The turn applies a von Mises bearing increment and a Rice speed draw;
    dividing by the new speed converts the polar density to velocity space.
    Zero next-speed is a singular point and yields -inf.
    """
    v_next = np.asarray(v_next, dtype=float)
    v_prev = np.asarray(v_prev, dtype=float)
    s_next = np.hypot(v_next[..., 0], v_next[..., 1])
    s_prev = np.hypot(v_prev[..., 0], v_prev[..., 1])
    dpsi = wrap_angle(
        np.arctan2(v_next[..., 1], v_next[..., 0]) - np.arctan2(v_prev[..., 1], v_prev[..., 0])
    )
    with np.errstate(divide="ignore", invalid="ignore"):
        out = (
            von_mises_logpdf(dpsi, params.kappa)
            + rice_logpdf(s_next, s_prev, params.speed_kernel)
            - np.log(s_next)
        )
    return np.where(s_next > 0, out, -np.inf)


def stationary_velocity_logpdf(v, sigma: float):
    """Log-density of the stationary velocity: circular Gaussian N(0, sigma^2 I)."""
    v = np.asarray(v, dtype=float)
    sq = v[..., 0] ** 2 + v[..., 1] ** 2
    return -LOG_2PI - 2.0 * math.log(sigma) - sq / (2.0 * sigma**2)


def _transition_chain_logpdf(velocities: np.ndarray, params: ModelParams) -> float:
    """Sum of velocity transition terms along consecutive rows."""
    if velocities.shape[0] < 2:
        return 0.0
    s = np.hypot(velocities[:, 0], velocities[:, 1])
    if np.any(s[1:] == 0.0):
        return -np.inf
    psi = np.arctan2(velocities[:, 1], velocities[:, 0])
    dpsi = wrap_angle(np.diff(psi))
    terms = (
        von_mises_logpdf(dpsi, params.kappa)
        + rice_logpdf(s[1:], s[:-1], params.speed_kernel)
        - np.log(s[1:])
    )
    return float(np.sum(terms))


def path_logdensity(
    traj: Trajectory,
    params: ModelParams,
    v_anchor: np.ndarray | None = None,
) -> float:
    """Log-density of (turn times, velocities) under the movement model.

    The event-time factor is the Poisson process density on the full window,
    N log(lam) - lam (t_end - t0). The first velocity transitions from
    ``v_anchor`` when given, and otherwise contributes its stationary
    circular-Gaussian density.
    """
    n = traj.n_turns
    out = n * math.log(params.lam) - params.lam * (traj.t_end - traj.t0)
    if v_anchor is not None:
        chain = np.vstack([np.asarray(v_anchor, dtype=float), traj.velocities])
        out += _transition_chain_logpdf(chain, params)
    else:
        out += float(stationary_velocity_logpdf(traj.velocities[0], params.sigma))
        out += _transition_chain_logpdf(traj.velocities, params)
    return out


def observation_loglik(traj: Trajectory, ds: Dataset, varsigma: float) -> float:
    """Gaussian log-likelihood of the observations around the interpolated path."""
    if varsigma <= 0:
        raise ValueError("observation likelihood needs varsigma > 0")
    pred = interpolate(traj, ds.times)
    resid = ds.locations - pred
    sq = float(np.sum(resid * resid))
    n = ds.times.size
    return -n * (LOG_2PI + 2.0 * math.log(varsigma)) - sq / (2.0 * varsigma**2)
