"""Rank-normalised split R-hat and bulk effective sample size.

Follows Vehtari, Gelman, Simpson, Carpenter & Buerkner (2021): chains are
split in half, pooled draws are replaced by normal scores of their ranks,
R-hat is the larger of the bulk and folded (|x - median|) versions, and ESS
uses Geyer's initial monotone sequence on the combined autocorrelation.
R-hat values below 1 (between-chain variance smaller than expected by
chance) are reported as 1.
"""

import numpy as np
import pandas as pd
from scipy import stats

from .errors import DomainError


def _split(x):
    half = x.shape[1] // 2
    return np.concatenate([x[:, :half], x[:, x.shape[1] - half :]], axis=0)


def _rank_normalize(x):
    ranks = stats.rankdata(x, method="average").reshape(x.shape)
    return stats.norm.ppf((ranks - 0.375) / (x.size + 0.25))


def _rhat(x):
    n = x.shape[1]
    within = x.var(axis=1, ddof=1).mean()
    between = n * x.mean(axis=1).var(ddof=1)
    if within == 0:
        return np.nan
    return float(np.sqrt(((n - 1) / n * within + between / n) / within))


def split_rhat(x):
    """Rank-normalised split R-hat for draws shaped (chain, draw)."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[0] < 2:
        raise DomainError("R-hat needs at least 2 chains")
    if np.ptp(x) == 0:
        return np.nan
    s = _split(x)
    bulk = _rhat(_rank_normalize(s))
    folded = _rhat(_rank_normalize(np.abs(s - np.median(s))))
    return max(bulk, folded, 1.0)


def _autocov(x):
    n = x.shape[1]
    m = 1 << int(np.ceil(np.log2(2 * n)))
    xc = x - x.mean(axis=1, keepdims=True)
    f = np.fft.rfft(xc, n=m, axis=1)
    return np.fft.irfft(f * np.conj(f), n=m, axis=1)[:, :n] / n


def _ess(x):
    m, n = x.shape
    acov = _autocov(x)
    mean_var = acov[:, 0].mean() * n / (n - 1)
    var_plus = mean_var * (n - 1) / n + x.mean(axis=1).var(ddof=1)
    if var_plus == 0:
        return np.nan
    rho = np.zeros(n)
    rho[0] = 1.0
    even, odd = 1.0, 1.0 - (mean_var - acov[:, 1].mean()) / var_plus
    rho[1] = odd
    t = 1
    while t < n - 3 and even + odd > 0:
        even = 1.0 - (mean_var - acov[:, t + 1].mean()) / var_plus
        odd = 1.0 - (mean_var - acov[:, t + 2].mean()) / var_plus
        if even + odd >= 0:
            rho[t + 1], rho[t + 2] = even, odd
        t += 2
    max_t = t - 2
    if even > 0:
        rho[max_t + 1] = even
    # enforce monotone decrease of paired sums
    t = 1
    while t <= max_t - 2:
        if rho[t + 1] + rho[t + 2] > rho[t - 1] + rho[t]:
            rho[t + 1] = rho[t + 2] = 0.5 * (rho[t - 1] + rho[t])
        t += 2
    tau = -1.0 + 2.0 * rho[: max_t + 1].sum() + rho[max_t + 1 : max_t + 2].sum()
    tau = max(tau, 1.0 / np.log10(m * n))
    return float(m * n / tau)


def bulk_ess(x):
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[0] < 2:
        raise DomainError("ESS needs at least 2 chains")
    if np.ptp(x) == 0:
        return np.nan
    return _ess(_rank_normalize(_split(x)))


def diagnose(d):
    """Split R-hat and bulk ESS for mu, nu, sigma2, the g's and every delta_i."""
    if d.n_chains < 2:
        raise DomainError("diagnostics need at least 2 chains")
    series = {name: getattr(d, name) for name in ("mu", "nu", "sigma2", "g_alpha", "g_nu", "g_delta")}
    for i, s in enumerate(d.subjects):
        series[f"delta[{s}]"] = d.delta[:, :, i]
    rows = [(name, split_rhat(x), bulk_ess(x)) for name, x in series.items()]
    return pd.DataFrame(rows, columns=["parameter", "rhat", "ess_bulk"]).set_index("parameter")
