"""Scalar densities, samplers and parameter priors for the movement model.

All log-densities accept floats or numpy arrays and broadcast; all samplers
take an explicit ``numpy.random.Generator`` so independent chains can own
independent streams.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import betaln, i0e

__all__ = [
    "VonMises",
    "RiceSpeedKernel",
    "TruncatedNormal",
    "BesselExponential",
    "BetaPrior",
    "PriorSet",
    "log_i0",
    "von_mises_logpdf",
    "von_mises_sample",
    "rayleigh_logpdf",
    "rayleigh_sample",
    "rice_logpdf",
    "rice_sample",
    "bivariate_rayleigh_logpdf",
    "prior_logpdf",
    "wrap_angle",
]

LOG_2PI = math.log(2.0 * math.pi)


def wrap_angle(theta):
    """Wrap an angle (radians) into [-pi, pi)."""
    return np.mod(np.asarray(theta) + np.pi, 2.0 * np.pi) - np.pi


def log_i0(x):
    """log I0(x), stable for large arguments (uses the scaled Bessel i0e)."""
    x = np.abs(np.asarray(x, dtype=float))
    return np.log(i0e(x)) + x


# ---------------------------------------------------------------------------
# von Mises turning angles
# ---------------------------------------------------------------------------

def von_mises_logpdf(theta, kappa):
    """Log-density of the von Mises(0, kappa) distribution on [-pi, pi)."""
    if np.any(np.asarray(kappa) < 0):
        raise ValueError("von Mises concentration must be >= 0")
    theta = wrap_angle(theta)
    return kappa * np.cos(theta) - LOG_2PI - log_i0(kappa)


def von_mises_sample(kappa: float, rng: np.random.Generator, size=None):
    """Draw turning angles from von Mises(0, kappa) by Best-Fisher rejection."""
    if kappa < 0:
        raise ValueError("von Mises concentration must be >= 0")
    if kappa == 0.0:
        return rng.uniform(-np.pi, np.pi, size=size)
    n = 1 if size is None else int(np.prod(size))
    tau = 1.0 + math.sqrt(1.0 + 4.0 * kappa * kappa)
    rho = (tau - math.sqrt(2.0 * tau)) / (2.0 * kappa)
    r = (1.0 + rho * rho) / (2.0 * rho)
    out = np.empty(n)
    filled = 0
    while filled < n:
        m = n - filled
        u1 = rng.random(m)
        u2 = rng.random(m)
        z = np.cos(np.pi * u1)
        f = (1.0 + r * z) / (r + z)
        c = kappa * (r - f)
        keep = (c * (2.0 - c) - u2 > 0.0) | (np.log(c / u2) + 1.0 - c >= 0.0)
        acc = f[keep]
        take = acc[: m]
        out[filled : filled + take.size] = np.arccos(np.clip(take, -1.0, 1.0))
        filled += take.size
    out *= np.where(rng.random(n) < 0.5, -1.0, 1.0)
    if size is None:
        return float(out[0])
    return out.reshape(size)


@dataclass(frozen=True)
class VonMises:
    """Turning-angle distribution with fixed zero mean."""

    kappa: float

    def __post_init__(self):
        if self.kappa < 0:
            raise ValueError("kappa must be >= 0")

    def logpdf(self, theta):
        return von_mises_logpdf(theta, self.kappa)

    def sample(self, rng, size=None):
        return von_mises_sample(self.kappa, rng, size=size)


# ---------------------------------------------------------------------------
# Rayleigh / Rice speeds
# ---------------------------------------------------------------------------

def rayleigh_logpdf(s, sigma):
    """Log-density of Rayleigh(sigma); -inf for negative speeds."""
    if sigma <= 0:
        raise ValueError("Rayleigh scale must be > 0")
    s = np.asarray(s, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(s) - 2.0 * math.log(sigma) - 0.5 * (s / sigma) ** 2
    return np.where(s >= 0, out, -np.inf)


def rayleigh_sample(sigma: float, rng: np.random.Generator, size=None):
    if sigma <= 0:
        raise ValueError("Rayleigh scale must be > 0")
    return rng.rayleigh(scale=sigma, size=size)


@dataclass(frozen=True)
class RiceSpeedKernel:
    """Markov kernel for successive speeds: Rice conditional with Rayleigh marginals.

    ``sigma`` is the marginal Rayleigh scale, ``rho`` the correlation
    parameter of the bivariate Rayleigh pair (0 <= rho < 1).
    """

    sigma: float
    rho: float

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError("speed scale must be > 0")
        if not (0.0 <= self.rho < 1.0):
            raise ValueError("speed correlation must lie in [0, 1)")


def rice_logpdf(s_next, s_prev, kernel: RiceSpeedKernel):
    """Conditional log-density p(s_next | s_prev) of the speed kernel.

    Reduces to Rayleigh(sigma) at rho = 0 for any previous speed.
    """
    sig2 = kernel.sigma**2 * (1.0 - kernel.rho**2)
    s_next = np.asarray(s_next, dtype=float)
    s_prev = np.asarray(s_prev, dtype=float)
    nc = s_prev * kernel.rho
    with np.errstate(divide="ignore", invalid="ignore"):
        out = (
            np.log(s_next)
            - np.log(sig2)
            - (s_next**2 + nc**2) / (2.0 * sig2)
            + log_i0(s_next * nc / sig2)
        )
    return np.where(s_next >= 0, out, -np.inf)


def rice_sample(s_prev, kernel: RiceSpeedKernel, rng: np.random.Generator):
    """Draw s_next | s_prev as the norm of a 2-D Gaussian; exact, no rejection."""
    s_prev = np.asarray(s_prev, dtype=float)
    sd = kernel.sigma * math.sqrt(1.0 - kernel.rho**2)
    a = s_prev * kernel.rho + sd * rng.standard_normal(s_prev.shape)
    b = sd * rng.standard_normal(s_prev.shape)
    out = np.hypot(a, b)
    return float(out) if out.ndim == 0 else out


def bivariate_rayleigh_logpdf(s_a, s_b, kernel: RiceSpeedKernel):
    """Joint log-density of a correlated speed pair with Rayleigh(sigma) marginals.

    Symmetric in its speed arguments; marginalizing either one recovers
    Rayleigh(sigma), and the conditional is the Rice kernel.
    """
    sig2 = kernel.sigma**2 * (1.0 - kernel.rho**2)
    s_a = np.asarray(s_a, dtype=float)
    s_b = np.asarray(s_b, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = (
            np.log(s_a)
            + np.log(s_b)
            - 2.0 * np.log(kernel.sigma)
            - np.log(sig2)
            - (s_a**2 + s_b**2) / (2.0 * sig2)
            + log_i0(kernel.rho * s_a * s_b / sig2)
        )
    return np.where((s_a >= 0) & (s_b >= 0), out, -np.inf)


# ---------------------------------------------------------------------------
# Priors
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TruncatedNormal:
    """Normal(mode, scale^2) truncated to (0, inf), normalizing constant included."""

    mode: float
    scale: float

    def __post_init__(self):
        if self.scale <= 0:
            raise ValueError("truncated-normal scale must be > 0")

    def _log_norm(self) -> float:
        # mass of the untruncated normal on (0, inf)
        return math.log(0.5 * math.erfc(-self.mode / (self.scale * math.sqrt(2.0))))

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        z = (x - self.mode) / self.scale
        out = -0.5 * z * z - math.log(self.scale) - 0.5 * LOG_2PI - self._log_norm()
        return np.where(x > 0, out, -np.inf)

    def sample(self, rng: np.random.Generator, size=None):
        n = 1 if size is None else int(np.prod(size))
        out = np.empty(n)
        filled = 0
        while filled < n:
            draw = self.mode + self.scale * rng.standard_normal(n - filled)
            keep = draw[draw > 0]
            out[filled : filled + keep.size] = keep
            filled += keep.size
        if size is None:
            return float(out[0])
        return out.reshape(size)

    def cdf(self, x):
        from scipy.stats import norm

        lo = norm.cdf(0.0, loc=self.mode, scale=self.scale)
        return np.clip((norm.cdf(x, loc=self.mode, scale=self.scale) - lo) / (1.0 - lo), 0.0, 1.0)


@dataclass(frozen=True)
class BesselExponential:
    """Conjugate prior for a von Mises concentration: p(k) prop. to I0(k)^-a exp(-b k).

    Evaluated without its normalizing constant (no closed form); use only
    where ratios are taken. Normalizable iff a + b > 0 with a >= 0.
    """

    a: float = 1.0
    b: float = -0.5

    def __post_init__(self):
        if self.a < 0 or self.a + self.b <= 0:
            raise ValueError("Bessel-exponential prior requires a >= 0 and a + b > 0")

    def logpdf(self, kappa):
        kappa = np.asarray(kappa, dtype=float)
        out = -self.a * log_i0(kappa) - self.b * kappa
        return np.where(kappa >= 0, out, -np.inf)

    def _grid(self, n=4097):
        # upper end where the unnormalized density has decayed by e^-40 from its peak
        hi = 40.0 / (self.a + self.b) + 10.0
        k = np.linspace(0.0, hi, n)
        logp = self.logpdf(k)
        p = np.exp(logp - logp.max())
        cdf = np.concatenate([[0.0], np.cumsum((p[1:] + p[:-1]) * 0.5 * np.diff(k))])
        return k, cdf / cdf[-1]

    def cdf(self, x):
        k, c = self._grid()
        return np.interp(x, k, c)

    def sample(self, rng: np.random.Generator, size=None):
        k, c = self._grid()
        u = rng.random(size=size)
        return np.interp(u, c, k)


@dataclass(frozen=True)
class BetaPrior:
    """Beta(alpha, beta) prior on the speed-correlation parameter."""

    alpha: float = 1.0
    beta: float = 1.2

    def __post_init__(self):
        if self.alpha <= 0 or self.beta <= 0:
            raise ValueError("Beta parameters must be > 0")

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = (
                (self.alpha - 1.0) * np.log(x)
                + (self.beta - 1.0) * np.log1p(-x)
                - betaln(self.alpha, self.beta)
            )
        return np.where((x >= 0) & (x < 1), out, -np.inf)

    def sample(self, rng: np.random.Generator, size=None):
        return rng.beta(self.alpha, self.beta, size=size)

    def cdf(self, x):
        from scipy.stats import beta as beta_dist

        return beta_dist.cdf(x, self.alpha, self.beta)

    @property
    def mean(self) -> float:
        return self.alpha / (self.alpha + self.beta)


@dataclass(frozen=True)
class PriorSet:
    """Independent priors on (lambda, kappa, sigma, rho, varsigma).

    ``varsigma_prior`` may be None when the observation error is held fixed
    (error-free mode); the error SD then contributes nothing to the prior.
    """

    lambda_prior: TruncatedNormal
    sigma_prior: TruncatedNormal
    kappa_prior: BesselExponential
    rho_prior: BetaPrior
    varsigma_prior: TruncatedNormal | None

    def scaled(self, time_factor: float, dist_factor: float) -> "PriorSet":
        """Transform priors stated in data units onto the scaled working units."""
        speed = dist_factor / time_factor

        def tn(p: TruncatedNormal, f: float) -> TruncatedNormal:
            return TruncatedNormal(p.mode / f, p.scale / f)

        return PriorSet(
            lambda_prior=tn(self.lambda_prior, 1.0 / time_factor),
            sigma_prior=tn(self.sigma_prior, speed),
            kappa_prior=self.kappa_prior,
            rho_prior=self.rho_prior,
            varsigma_prior=None if self.varsigma_prior is None else tn(self.varsigma_prior, dist_factor),
        )


def prior_logpdf(params, priors: PriorSet) -> float:
    """Joint log-prior of a parameter vector; -inf outside the support.

    The kappa component is evaluated up to its (fixed) normalizing
    constant, so the value is meaningful only in ratios.
    """
    total = (
        float(priors.lambda_prior.logpdf(params.lam))
        + float(priors.sigma_prior.logpdf(params.sigma))
        + float(priors.kappa_prior.logpdf(params.kappa))
        + float(priors.rho_prior.logpdf(params.rho))
    )
    if priors.varsigma_prior is not None:
        total += float(priors.varsigma_prior.logpdf(params.varsigma))
    return total
