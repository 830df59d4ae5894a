"""Chain diagnostics: effective sample size and posterior quantile tables."""
from __future__ import annotations

import numpy as np

__all__ = ["ess", "quantile_table", "QUANTILES", "REPORT_COLUMNS"]

QUANTILES = (2.5, 25.0, 50.0, 75.0, 97.5)
REPORT_COLUMNS = ("lambda", "kappa", "sigma", "rho", "varsigma", "N")


def ess(chain: np.ndarray) -> float:
    """Effective sample size via the initial monotone positive sequence estimator.

    Autocovariances are paired (lags 2m, 2m+1), truncated at the first
    non-positive pair and forced non-increasing; deterministic and tuning-free.
    A constant chain has ESS 1 by convention.
    """
    x = np.asarray(chain, dtype=float)
    n = x.size
    if n < 2:
        return 1.0
    x = x - x.mean()
    var = float(np.dot(x, x)) / n
    if var == 0.0:
        return 1.0
    nf = int(2 ** np.ceil(np.log2(2 * n)))
    f = np.fft.rfft(x, nf)
    acov = np.fft.irfft(f * np.conjugate(f), nf)[:n].real / n
    rho = acov / acov[0]
    # paired sums Gamma_m = rho_{2m} + rho_{2m+1}
    m_max = (n - 1) // 2
    gamma = rho[0 : 2 * m_max : 2][: m_max] + rho[1 : 2 * m_max + 1 : 2][: m_max]
    tau = 1.0
    if gamma.size:
        pos = np.nonzero(gamma <= 0)[0]
        cut = int(pos[0]) if pos.size else gamma.size
        g = np.minimum.accumulate(gamma[:cut]) if cut else gamma[:0]
        tau = max(2.0 * float(np.sum(g)) - 1.0, 1.0 / n)
    return max(n / tau, 1.0)


def quantile_table(columns: dict[str, np.ndarray]) -> dict[str, dict[float, float]]:
    """Posterior quantiles (2.5/25/50/75/97.5%) per named chain column."""
    out: dict[str, dict[float, float]] = {}
    for name, values in columns.items():
        qs = np.percentile(values, QUANTILES)
        out[name] = {q: float(v) for q, v in zip(QUANTILES, qs)}
    return out
