"""Per-subject effect estimates, shrinkage, back-transforms and posterior
model probabilities."""

import math
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .dataio import SHIFTED_LOG, effects_by_subject
from .errors import DomainError, ScaleError
from .model import write_kv


@dataclass(eq=False)
class EffectSummary:
    """``table`` has one row per subject (subject, observed_effect,
    posterior_mean, ci_low, ci_high), ordered by observed effect."""

    table: pd.DataFrame
    nu_mean: float
    nu_ci: tuple
    level: float
    scale: str
    shift_ms: float | None
    observed_range: tuple
    estimated_range: tuple
    variance_ratio: float
    interval_violations: tuple = ()

    def scalars(self):
        out = {
            "scale": self.scale,
            "shift_ms": "none" if self.shift_ms is None else repr(float(self.shift_ms)),
            "level": self.level,
            "n_subjects": len(self.table),
            "nu_mean": self.nu_mean,
            "nu_ci_low": self.nu_ci[0],
            "nu_ci_high": self.nu_ci[1],
            "observed_min": self.observed_range[0],
            "observed_max": self.observed_range[1],
            "estimated_min": self.estimated_range[0],
            "estimated_max": self.estimated_range[1],
            "variance_ratio": self.variance_ratio,
        }
        if self.interval_violations:
            out["interval_violations"] = ",".join(self.interval_violations)
        return out


def summarize_effects(draws, t, level=0.95):
    if not 0 < level < 1:
        raise DomainError(f"level must lie in (0, 1), got {level}")
    if tuple(draws.subjects) != tuple(t.subjects):
        raise DomainError("draws and table list different subjects")
    lo_q, hi_q = 0.5 * (1 - level), 0.5 * (1 + level)
    delta = draws.delta.reshape(-1, draws.delta.shape[-1])
    post_mean = delta.mean(axis=0)
    lo, hi = np.quantile(delta, [lo_q, hi_q], axis=0)
    observed = effects_by_subject(t)
    table = pd.DataFrame(
        {
            "subject": list(t.subjects),
            "observed_effect": observed,
            "posterior_mean": post_mean,
            "ci_low": lo,
            "ci_high": hi,
        }
    )
    table = table.sort_values(["observed_effect", "subject"], kind="stable").reset_index(drop=True)
    bad = table[(table.ci_low > table.posterior_mean) | (table.posterior_mean > table.ci_high)]
    nu = draws.nu.ravel()
    var_obs = observed.var()
    return EffectSummary(
        table=table,
        nu_mean=float(nu.mean()),
        nu_ci=tuple(float(v) for v in np.quantile(nu, [lo_q, hi_q])),
        level=level,
        scale=t.scale,
        shift_ms=t.shift_ms,
        observed_range=(float(observed.min()), float(observed.max())),
        estimated_range=(float(post_mean.min()), float(post_mean.max())),
        variance_ratio=float(post_mean.var() / var_obs) if var_obs > 0 else math.nan,
        interval_violations=tuple(bad.subject),
    )


@dataclass(frozen=True)
class BackTransform:
    multiplicative_factor: float
    percent_increase: float
    approx_ms: float
    baseline_ms: float


def back_transform(nu_mean, t):
    """Express a log-scale common effect on the millisecond scale.

    The factor exp(nu) is exact. The millisecond figure multiplies the
    proportional increase by the mean baseline-condition RT above the shift,
    exp(log rt) averaged over condition-0 trials, and is only an
    approximation.
    """
    if t.scale != SHIFTED_LOG:
        raise ScaleError("back-transform needs a table on the shifted-log scale")
    factor = math.exp(nu_mean)
    baseline = float(np.exp(t.rt[t.condition == 0]).mean())
    return BackTransform(factor, 100.0 * (factor - 1.0), (factor - 1.0) * baseline, baseline)


def posterior_model_prob(bf, prior_odds=1.0):
    """Posterior probability of the numerator model: bf*odds / (1 + bf*odds)."""
    if not (bf > 0 and prior_odds > 0):
        raise DomainError("Bayes factor and prior odds must be positive")
    odds = bf * prior_odds
    if math.isinf(odds):
        return 1.0
    return odds / (1.0 + odds)


def write_effects(path, s):
    s.table.to_csv(path, index=False, float_format="%.10g")


def write_summary(path, s, bt=None):
    items = s.scalars()
    if bt is not None:
        items.update(
            {
                "multiplicative_factor": bt.multiplicative_factor,
                "percent_increase": bt.percent_increase,
                "approx_ms": bt.approx_ms,
                "baseline_ms": bt.baseline_ms,
            }
        )
    write_kv(path, items)
