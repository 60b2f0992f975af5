"""Marginal likelihoods, the encompassing-prior Bayes factor for the
positive-effects model, and the four-model comparison."""

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import rng as rngmod
from .dataio import validate_design
from .errors import DomainError, NumericError, UnstableEstimateError
from .gibbs import McmcConfig, gibbs_fit
from .linalg import BlockSystem
from .linalg import log_marginal_given_g as _lml_given_g
from .model import ModelKind, PriorConfig, build_design, sample_g, write_kv
from .summary import posterior_model_prob

_SHARD = 10_000
_PRIOR_SHARD = 100_000
_Z95 = 1.959963984540054


@dataclass(frozen=True)
class LogMarginal:
    model: ModelKind
    logml: float
    mc_se: float
    n_mc: int


@dataclass(frozen=True)
class EvidenceConfig:
    n_mc: int = 100_000
    n_prior_draws: int = 1_000_000
    seed: int = 20210702
    prior_odds: float = 1.0


@dataclass(frozen=True)
class EncompassingResult:
    bf_plus_u: float
    posterior_fraction: float
    prior_fraction: float
    interval: tuple
    n_posterior: int
    n_prior: int


def _system(d):
    return d if isinstance(d, BlockSystem) else BlockSystem(d)


def log_marginal_given_g(d, g):
    """Exact log marginal likelihood of design ``d`` at fixed g.

    ``g`` holds one value per g-group present in the design (``d.groups``
    order: g_alpha, g_nu, g_delta); extra leading axes are batched.
    """
    s = _system(d)
    g = np.asarray(g, dtype=float)
    if g.shape[-1] != len(s.groups):
        raise DomainError(f"design has g groups {s.groups}, got {g.shape[-1]} values")
    out = _lml_given_g(s, g)
    return float(out) if out.ndim == 0 else out


def log_marginal(d, p=None, n_mc=100_000, seed=0):
    """Monte-Carlo log marginal likelihood, averaging over g drawn from its prior.

    Shard ``k`` of 10^4 draws uses stream ``(seed, LOGML, k)``; within a shard
    the g's are drawn group by group in canonical order, so designs sharing
    a group see the same draws for it. Shards are merged with a running
    log-sum-exp. ``mc_se`` is the delta-method standard error of the log.
    """
    p = p or PriorConfig()
    if n_mc < 10_000:
        raise DomainError("n_mc must be at least 10^4")
    s = _system(d)
    scales = [p.scale_for(g) for g in s.groups]
    top, s1, s2 = -math.inf, 0.0, 0.0
    done = 0
    for shard in range(math.ceil(n_mc / _SHARD)):
        size = min(_SHARD, n_mc - done)
        gen = rngmod.stream(seed, rngmod.LOGML, shard)
        g = np.stack([sample_g(r, gen, size=size) for r in scales], axis=-1)
        lw = _lml_given_g(s, g)
        lw = np.where(np.isnan(lw), -np.inf, lw)
        m = lw.max()
        done += size
        if m == -math.inf:
            continue
        if m > top:
            scale = math.exp(top - m) if top > -math.inf else 0.0
            s1, s2, top = s1 * scale, s2 * scale * scale, m
        w = np.exp(lw - top)
        s1 += w.sum()
        s2 += (w * w).sum()
    if top == -math.inf:
        raise NumericError("integrand is zero for every g draw")
    mean = s1 / n_mc
    var = max(s2 / n_mc - mean * mean, 0.0) * n_mc / (n_mc - 1)
    return LogMarginal(
        model=s.kind,
        logml=float(top + math.log(mean)),
        mc_se=float(math.sqrt(var / n_mc) / mean),
        n_mc=n_mc,
    )


@lru_cache(maxsize=64)
def prior_constraint_fraction(r_nu, r_delta, n_subjects, n_draws, seed):
    """Prior probability that every delta_i = nu + theta_i is positive.

    Returns ``(hits, n_draws)``. sigma2 cancels from the event, so nu and
    theta are simulated in units of sigma.
    """
    hits = 0
    done = 0
    for shard in range(math.ceil(n_draws / _PRIOR_SHARD)):
        size = min(_PRIOR_SHARD, n_draws - done)
        gen = rngmod.stream(seed, rngmod.PRIOR_FRACTION, shard)
        g_nu = sample_g(r_nu, gen, size=size)
        g_delta = sample_g(r_delta, gen, size=size)
        nu = np.sqrt(g_nu) * gen.standard_normal(size)
        zmin = gen.standard_normal((size, n_subjects)).min(axis=1)
        hits += int(np.count_nonzero(nu + np.sqrt(g_delta) * zmin > 0))
        done += size
    return hits, n_draws


def encompassing_bf(draws, p=None, n_subjects=None, n_prior_draws=1_000_000, seed=0):
    """Bayes factor of the positive-effects model against the unconstrained one.

    Ratio of the posterior to the prior proportion of draws in which every
    delta_i is positive. The 95% interval propagates binomial error of both
    proportions on the log scale.
    """
    p = p or PriorConfig()
    n_subjects = n_subjects or draws.delta.shape[-1]
    if n_prior_draws < 100_000:
        raise DomainError("n_prior_draws must be at least 10^5")
    if draws.delta.shape[-1] != n_subjects:
        raise DomainError("draws do not match the number of subjects")
    ok = draws.delta.min(axis=-1) > 0
    n_post = ok.size
    post = float(ok.mean())
    hits, n_prior = prior_constraint_fraction(p.r_nu, p.r_delta, n_subjects, n_prior_draws, seed)
    if hits == 0:
        raise UnstableEstimateError(
            f"no prior draw out of {n_prior} satisfied the constraint; increase n_prior_draws"
        )
    prior = hits / n_prior
    bf = post / prior
    prior_var = (1 - prior) / (n_prior * prior)
    if post > 0:
        sd = math.sqrt((1 - post) / (n_post * post) + prior_var)
        interval = (bf * math.exp(-_Z95 * sd), bf * math.exp(_Z95 * sd))
    else:
        # rule of three for an empty posterior count
        interval = (0.0, (3.0 / n_post) / prior * math.exp(_Z95 * math.sqrt(prior_var)))
    return EncompassingResult(bf, post, prior, interval, n_post, n_prior)


@dataclass(frozen=True)
class BfReport:
    bf_plus_u: float
    bf_plus_u_interval: tuple
    posterior_fraction: float
    prior_fraction: float
    posterior_prob_plus: float
    log_bf_u1: float
    log_bf_u0: float
    winner: ModelKind
    log_marginals: dict = field(default_factory=dict)
    prior_odds: float = 1.0

    @property
    def bf_u_1(self):
        return _safe_exp(self.log_bf_u1)

    @property
    def bf_u_0(self):
        return _safe_exp(self.log_bf_u0)

    @property
    def log10_bf_u1(self):
        return self.log_bf_u1 / math.log(10)

    @property
    def log10_bf_u0(self):
        return self.log_bf_u0 / math.log(10)

    def log_evidence(self, model):
        """Log marginal likelihood; M_+ is derived from M_u and bf_plus_u."""
        model = ModelKind(model)
        if model == ModelKind.POSITIVE:
            base = self.log_marginals[ModelKind.UNCONSTRAINED].logml
            return base + math.log(self.bf_plus_u) if self.bf_plus_u > 0 else -math.inf
        return self.log_marginals[model].logml

    def log_bf(self, a, b):
        return self.log_evidence(a) - self.log_evidence(b)


def _safe_exp(x):
    try:
        return math.exp(x)
    except OverflowError:
        return math.inf


def select_winner(log_ml_u, log_ml_1, log_ml_0, bf_plus_u):
    """Tournament: M_+ vs M_u by bf_plus_u, then the survivor against M_1 and M_0."""
    if bf_plus_u > 1:
        top, top_ml = ModelKind.POSITIVE, log_ml_u + math.log(bf_plus_u)
    else:
        top, top_ml = ModelKind.UNCONSTRAINED, log_ml_u
    contenders = [(top_ml, 2, top), (log_ml_1, 1, ModelKind.COMMON), (log_ml_0, 0, ModelKind.NULL)]
    return max(contenders)[2]


def compare_models(t, p=None, m=None, ev=None, draws=None):
    """Full comparison of the four models for trial table ``t``.

    Pass ``draws`` from an earlier :func:`~rtmixed.gibbs.gibbs_fit` of the same
    table to skip refitting.
    """
    p = p or PriorConfig()
    m = m or McmcConfig()
    ev = ev or EvidenceConfig()
    validate_design(t)
    if draws is None:
        draws = gibbs_fit(t, p, m)
    enc = encompassing_bf(draws, p, t.n_subjects, ev.n_prior_draws, ev.seed)
    lms = {
        kind: log_marginal(build_design(t, kind), p, ev.n_mc, ev.seed)
        for kind in (ModelKind.UNCONSTRAINED, ModelKind.COMMON, ModelKind.NULL)
    }
    lu = lms[ModelKind.UNCONSTRAINED].logml
    l1 = lms[ModelKind.COMMON].logml
    l0 = lms[ModelKind.NULL].logml
    prob = posterior_model_prob(enc.bf_plus_u, ev.prior_odds) if enc.bf_plus_u > 0 else 0.0
    return BfReport(
        bf_plus_u=enc.bf_plus_u,
        bf_plus_u_interval=enc.interval,
        posterior_fraction=enc.posterior_fraction,
        prior_fraction=enc.prior_fraction,
        posterior_prob_plus=prob,
        log_bf_u1=lu - l1,
        log_bf_u0=lu - l0,
        winner=select_winner(lu, l1, l0, enc.bf_plus_u),
        log_marginals=lms,
        prior_odds=ev.prior_odds,
    )


def report_items(r):
    items = {
        "winner": r.winner.label,
        "bf_plus_u": r.bf_plus_u,
        "bf_plus_u_ci_low": r.bf_plus_u_interval[0],
        "bf_plus_u_ci_high": r.bf_plus_u_interval[1],
        "log_bf_plus_u": math.log(r.bf_plus_u) if r.bf_plus_u > 0 else -math.inf,
        "posterior_fraction": r.posterior_fraction,
        "prior_fraction": r.prior_fraction,
        "prior_odds": r.prior_odds,
        "posterior_prob_plus": r.posterior_prob_plus,
        "log_bf_u1": r.log_bf_u1,
        "log10_bf_u1": r.log10_bf_u1,
        "log_bf_u0": r.log_bf_u0,
        "log10_bf_u0": r.log10_bf_u0,
    }
    for kind, lm in r.log_marginals.items():
        items[f"logml_{kind.value}"] = lm.logml
        items[f"logml_{kind.value}_mc_se"] = lm.mc_se
        items[f"logml_{kind.value}_n_mc"] = lm.n_mc
    return items


def write_bf_report(path, r):
    """Machine-readable key = value file."""
    write_kv(path, report_items(r))


def format_bf_report(r):
    lo, hi = r.bf_plus_u_interval
    lines = [
        "Model comparison",
        "================",
        f"M_+ vs M_u : BF = {r.bf_plus_u:.4g}  (95% MC interval {lo:.4g} to {hi:.4g})",
        f"             posterior fraction {r.posterior_fraction:.4f}, "
        f"prior fraction {r.prior_fraction:.4g}",
        f"             P(M_+ | data) = {r.posterior_prob_plus:.4f} at prior odds {r.prior_odds:g}",
        f"M_u vs M_1 : log BF = {r.log_bf_u1:.4f}  (log10 {r.log10_bf_u1:.3f})",
        f"M_u vs M_0 : log BF = {r.log_bf_u0:.4f}  (log10 {r.log10_bf_u0:.3f})",
        "",
        "Log marginal likelihoods (shared improper constants omitted)",
    ]
    for kind, lm in r.log_marginals.items():
        lines.append(f"  {kind.label:4s} {lm.logml:.6f}  +/- {lm.mc_se:.2g}  (n_mc {lm.n_mc})")
    lines += ["", f"Winner: {r.winner.label}"]
    return "\n".join(lines) + "\n"
