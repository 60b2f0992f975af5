"""Synthetic data, brute-force oracles and model-recovery runs.

The oracles here deliberately avoid :mod:`rtmixed.linalg`: they integrate
the data density in its n x n covariance form

    y | mu, sigma2, g ~ Normal(mu 1, sigma2 (I + sum_k g_k Z_k Z_k'))

(mu and sigma2 collapsed analytically, g by tensor-product trapezoid
quadrature on log g with scipy's inverse-gamma density), which shares no
algebra with the precision-form block solver used by the sampler and the
Monte-Carlo evidence.
"""

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields, replace

import numpy as np
import pandas as pd
from scipy import stats
from scipy.special import gammaln, logsumexp

from . import rng as rngmod
from .dataio import TrialTable, apply_shift_log
from .errors import DomainError, NumericError, SchemaError
from .evidence import EvidenceConfig, compare_models
from .gibbs import McmcConfig, gibbs_fit, sample_truncated_normal
from .diagnostics import diagnose
from .model import ModelKind, PriorConfig, read_kv, write_kv
from .summary import summarize_effects

RAW_NORMAL = "raw_normal"
SHIFTED_LOGNORMAL = "shifted_lognormal"
NORMAL_PIPELINE = "normal"
LOG_PIPELINE = "shifted-lognormal"


@dataclass(frozen=True)
class SimSpec:
    """Generating parameters. Location and spread values are in ms on the raw
    scale and in log units on the shifted-lognormal scale."""

    true_model: ModelKind = ModelKind.UNCONSTRAINED
    n_subjects: int = 40
    trials_per_cell: int = 50
    mu: float = 1000.0
    sigma: float = 200.0
    nu: float = 60.0
    eta: float = 30.0
    intercept_sd: float | None = None
    scale: str = RAW_NORMAL
    shift_ms: float = 200.0
    seed: int = 1

    def __post_init__(self):
        object.__setattr__(self, "true_model", ModelKind(self.true_model))
        if self.scale not in (RAW_NORMAL, SHIFTED_LOGNORMAL):
            raise DomainError(f"unknown scale {self.scale!r}")
        if self.intercept_sd is None:
            object.__setattr__(
                self, "intercept_sd", 100.0 if self.scale == RAW_NORMAL else 0.25
            )
        if self.n_subjects < 1 or self.trials_per_cell < 1:
            raise DomainError("need at least one subject and one trial per cell")
        if not (self.sigma > 0 and self.shift_ms > 0 and self.intercept_sd >= 0 and self.eta >= 0):
            raise DomainError("scale parameters must be positive")
        if self.true_model in (ModelKind.COMMON, ModelKind.NULL) and self.eta != 0:
            raise DomainError(f"{self.true_model.label} requires eta = 0")
        if self.true_model == ModelKind.NULL and self.nu != 0:
            raise DomainError("M_0 requires nu = 0")


def read_sim_spec(path):
    raw = read_kv(path)
    types = {f.name: f.type for f in fields(SimSpec)}
    unknown = set(raw) - set(types)
    if unknown:
        raise SchemaError(f"unknown simulation keys {sorted(unknown)}")
    kw = {}
    for key, value in raw.items():
        if key in ("n_subjects", "trials_per_cell", "seed"):
            kw[key] = int(value)
        elif key in ("true_model", "scale"):
            kw[key] = value
        else:
            kw[key] = float(value)
    return SimSpec(**kw)


def write_sim_spec(path, s):
    items = asdict(s)
    items["true_model"] = s.true_model.value
    write_kv(path, items)


def _effects(s, gen):
    n, kind = s.n_subjects, s.true_model
    if kind == ModelKind.UNCONSTRAINED:
        return s.nu + s.eta * gen.standard_normal(n)
    if kind == ModelKind.POSITIVE:
        if s.eta == 0:
            if s.nu <= 0:
                raise DomainError("M_+ with eta = 0 needs nu > 0")
            return np.full(n, s.nu)
        return sample_truncated_normal(s.nu, s.eta, 0.0, gen, size=n)
    if kind == ModelKind.COMMON:
        return np.full(n, float(s.nu))
    return np.zeros(n)


def generate_with_truth(s):
    """Trial table plus the realised alpha, delta and model-scale values."""
    gen = rngmod.stream(s.seed, rngmod.SIMULATE)
    n, k = s.n_subjects, s.trials_per_cell
    alpha = s.intercept_sd * gen.standard_normal(n)
    delta = _effects(s, gen)
    subj = np.repeat(np.arange(n), 2 * k)
    cond = np.tile(np.repeat([0, 1], k), n)
    linear = s.mu + alpha[subj] + cond * delta[subj] + s.sigma * gen.standard_normal(len(subj))
    width = len(str(n))
    labels = np.array([f"s{i + 1:0{width}d}" for i in range(n)])[subj]
    rt = linear if s.scale == RAW_NORMAL else np.exp(linear) + s.shift_ms
    table = TrialTable(labels, cond, rt, ("0", "1"))
    return table, {"alpha": alpha, "delta": delta, "linear": linear}


def generate(s):
    return generate_with_truth(s)[0]


@dataclass(frozen=True)
class GridSpec:
    """Trapezoid grid on log g, spanning ``log(r**2) + lower`` to
    ``log(r**2) + upper`` in each g dimension."""

    n_points: int = 41
    lower: float = -8.0
    upper: float = 22.0
    chunk: int = 8192

    def refined(self):
        return replace(self, n_points=2 * self.n_points - 1)


def _group_projections(d):
    cols = d.column_groups()
    w = d.matrix
    out = []
    for g in d.groups:
        z = w[:, [i for i, c in enumerate(cols) if c == g]]
        out.append(z @ z.T)
    return out


def _grid(d, p, grid):
    axes, logw = [], []
    for g in d.groups:
        r = p.scale_for(g)
        u = np.linspace(2 * math.log(r) + grid.lower, 2 * math.log(r) + grid.upper, grid.n_points)
        h = u[1] - u[0]
        trap = np.full(u.size, h)
        trap[[0, -1]] = h / 2
        prior_u = stats.invgamma(a=0.5, scale=0.5 * r * r).logpdf(np.exp(u)) + u
        axes.append(u)
        logw.append(prior_u + np.log(trap))
    mesh = np.meshgrid(*axes, indexing="ij")
    wmesh = np.meshgrid(*logw, indexing="ij")
    return np.exp(np.stack([m.ravel() for m in mesh], axis=-1)), sum(w.ravel() for w in wmesh)


def _covariance_form(d, g, projections):
    """log p(y | g) with mu and sigma2 integrated, via V = I + sum g_k Z_k Z_k'."""
    y = d.response
    n = len(y)
    v = np.eye(n) + np.einsum("kg,gij->kij", g, np.stack(projections))
    rhs = np.broadcast_to(np.stack([np.ones(n), y], axis=-1), (len(g), n, 2))
    sol = np.linalg.solve(v, rhs)
    a = sol[:, :, 0].sum(-1)
    b = y @ sol[:, :, 0].T
    c = np.einsum("i,ki->k", y, sol[:, :, 1])
    q = c - b * b / a
    half = 0.5 * (n - 1)
    logdet = np.linalg.slogdet(v)[1]
    return (
        -half * math.log(2 * math.pi) - 0.5 * logdet - 0.5 * np.log(a) + gammaln(half)
        - half * np.log(0.5 * q)
    )


def _check_toy(d):
    if d.matrix.shape[1] > 10:
        raise DomainError("grid oracle is limited to designs with at most 10 columns")


def _grid_logml(d, p, grid):
    g, logw = _grid(d, p, grid)
    proj = _group_projections(d)
    parts = [
        _covariance_form(d, g[i : i + grid.chunk], proj) + logw[i : i + grid.chunk]
        for i in range(0, len(g), grid.chunk)
    ]
    return float(logsumexp(np.concatenate(parts)))


def grid_oracle_logml(d, p=None, grid=None, check_refinement=True):
    """Log marginal likelihood of design ``d`` by quadrature over g.

    With ``check_refinement`` the grid is refined (spacing halved) and a
    change above 0.01 log units raises :class:`NumericError`; the refined
    value is returned.
    """
    p = p or PriorConfig()
    grid = grid or GridSpec()
    _check_toy(d)
    coarse = _grid_logml(d, p, grid)
    if not check_refinement:
        return coarse
    fine = _grid_logml(d, p, grid.refined())
    if abs(fine - coarse) >= 0.01:
        raise NumericError(f"grid not converged: {coarse:.5f} vs {fine:.5f}")
    return fine


def grid_oracle_posterior(d, p=None, grid=None):
    """Posterior mean and SD of mu, sigma2 and (if present) nu by quadrature.

    Given g, sigma2 | y is Inverse-gamma((n-1)/2, S/2) and the coefficients
    are Normal(b, sigma2 M^-1) with M = W'W + diag(1/g); both are evaluated
    with dense linear algebra on the explicit design and mixed over the g
    grid. Returns ``{name: (mean, sd)}``.
    """
    p = p or PriorConfig()
    grid = grid or GridSpec(n_points=61, lower=-10.0, upper=28.0)
    _check_toy(d)
    g, logw = _grid(d, p, grid)
    proj = _group_projections(d)
    w_mat, y = d.matrix, d.response
    n = len(y)
    gidx = {name: i for i, name in enumerate(d.groups)}
    col_group = np.array([-1 if c is None else gidx[c] for c in d.column_groups()])
    wtw, wty = w_mat.T @ w_mat, w_mat.T @ y
    names = {"mu": 0}
    if "g_nu" in gidx:
        names["nu"] = int(np.flatnonzero(col_group == gidx["g_nu"])[0])

    logpost, m1, m2 = [], {k: [] for k in names}, {k: [] for k in names}
    s1, s2 = [], []
    for i in range(0, len(g), grid.chunk):
        gc = g[i : i + grid.chunk]
        logpost.append(_covariance_form(d, gc, proj) + logw[i : i + grid.chunk])
        pen = np.where(col_group >= 0, 1.0 / gc[:, np.maximum(col_group, 0)], 0.0)
        m = wtw + pen[:, :, None] * np.eye(len(col_group))
        minv = np.linalg.inv(m)
        beta = minv @ wty
        ss = y @ y - beta @ wty
        e_s2 = ss / (n - 3)
        s1.append(e_s2)
        s2.append(ss * ss / ((n - 3) * (n - 5)))
        for k, j in names.items():
            m1[k].append(beta[:, j])
            m2[k].append(beta[:, j] ** 2 + e_s2 * minv[:, j, j])
    lp = np.concatenate(logpost)
    w = np.exp(lp - lp.max())
    w /= w.sum()

    def moments(first, second):
        mean = float(w @ np.concatenate(first))
        return mean, float(math.sqrt(max(w @ np.concatenate(second) - mean * mean, 0.0)))

    out = {k: moments(m1[k], m2[k]) for k in names}
    out["sigma2"] = moments(s1, s2)
    return out


def _run_replicate(job):
    s, rep, pipelines, prior, mcmc, ev = job
    seed = rngmod.child_seed(s.seed, rngmod.RECOVERY, rep)
    table = generate(replace(s, seed=seed))
    m = replace(mcmc, seed=rngmod.child_seed(seed, rngmod.CHAIN))
    e = replace(ev, seed=rngmod.child_seed(seed, rngmod.LOGML))
    rows = []
    for pipeline in pipelines:
        t = table if pipeline == NORMAL_PIPELINE else apply_shift_log(table, prior.shift_ms)
        draws = gibbs_fit(t, prior, m)
        report = compare_models(t, prior, m, e, draws=draws)
        summ = summarize_effects(draws, t)
        rows.append(
            {
                "true_model": s.true_model.label,
                "replicate": rep,
                "pipeline": pipeline,
                "selected_model": report.winner.label,
                "bf_plus_u": report.bf_plus_u,
                "log_bf_u1": report.log_bf_u1,
                "log_bf_u0": report.log_bf_u0,
                "nu_mean": summ.nu_mean,
                "variance_ratio": summ.variance_ratio,
                "max_rhat": float(np.nanmax(diagnose(draws)["rhat"])),
            }
        )
    return rows


def recovery_study(
    specs,
    repetitions,
    pipelines=(NORMAL_PIPELINE, LOG_PIPELINE),
    prior=None,
    mcmc=None,
    ev=None,
    n_jobs=1,
):
    """Generate, fit and compare ``repetitions`` data sets for every spec.

    Replicate ``k`` of a spec is generated with seed
    ``child_seed(spec.seed, RECOVERY, k)`` and fitted with seeds derived from
    that, so rows are reproducible independently of ``n_jobs``. Returns one
    row per (spec, replicate, pipeline).
    """
    prior = prior or PriorConfig()
    mcmc = mcmc or McmcConfig()
    ev = ev or EvidenceConfig()
    jobs = [
        (s, rep, tuple(pipelines), prior, mcmc, ev)
        for s in specs
        for rep in range(repetitions)
    ]
    if n_jobs > 1:
        with ProcessPoolExecutor(n_jobs) as pool:
            results = list(pool.map(_run_replicate, jobs))
    else:
        results = [_run_replicate(j) for j in jobs]
    return pd.DataFrame([row for rows in results for row in rows])
