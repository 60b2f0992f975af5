"""Gibbs sampler for the unconstrained model.

One sweep, for all chains at once:

(a) the location block (mu, nu, alpha, theta) jointly from its Gaussian full
    conditional, through the arrowhead factorisation in :mod:`rtmixed.linalg`;
(b) sigma2 from its inverse-gamma conditional, shape (n + 2N + 1)/2 and scale
    (RSS + sum_k ||b_k||^2 / g_k) / 2;
(c) each g_k from Inverse-gamma((m_k + 1)/2, (r_k^2 + ||b_k||^2 / sigma2)/2),
    m_k being the number of coefficients in group k.

Chains are vectorised along a leading axis but each consumes its own Philox
stream ``rng.stream(seed, CHAIN, chain_id)``; the standard normals and
standard gammas for every sweep are drawn from that stream up front in
fixed-size chunks, so output is bit-identical for a given seed.
"""

import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from . import rng as rngmod
from .dataio import validate_design
from .diagnostics import diagnose  # noqa: F401  (public via this module)
from .errors import DomainError, NumericError, SchemaError
from .linalg import BlockSystem
from .model import ModelKind, PriorConfig, build_design, sample_g

_CHUNK = 1000
SCALARS = ("mu", "nu", "sigma2", "g_alpha", "g_nu", "g_delta")


@dataclass(frozen=True)
class McmcConfig:
    n_chains: int = 4
    n_iterations: int = 5000
    burn_in: int = 1000
    thin: int = 1
    seed: int = 20210701

    def __post_init__(self):
        if self.n_chains < 2:
            raise DomainError("need at least 2 chains")
        if not 0 <= self.burn_in < self.n_iterations:
            raise DomainError("burn_in must be in [0, n_iterations)")
        if self.thin < 1:
            raise DomainError("thin must be >= 1")
        if self.n_retained < 100:
            raise DomainError(f"only {self.n_retained} retained draws per chain; need >= 100")

    @property
    def n_retained(self):
        return (self.n_iterations - self.burn_in) // self.thin


@dataclass(eq=False)
class PosteriorDraws:
    """Retained draws, arrays shaped (chain, draw) or (chain, draw, subject)."""

    mu: np.ndarray
    nu: np.ndarray
    sigma2: np.ndarray
    g_alpha: np.ndarray
    g_nu: np.ndarray
    g_delta: np.ndarray
    alpha: np.ndarray
    theta: np.ndarray
    subjects: tuple
    delta: np.ndarray = field(init=False)

    def __post_init__(self):
        self.delta = self.nu[..., None] + self.theta

    @property
    def eta2(self):
        return self.g_delta * self.sigma2

    @property
    def n_chains(self):
        return self.mu.shape[0]

    @property
    def n_draws(self):
        return self.mu.shape[1]

    def thinned(self, k):
        return PosteriorDraws(
            *(getattr(self, n)[:, ::k] for n in SCALARS + ("alpha", "theta")),
            subjects=self.subjects,
        )

    def to_frame(self):
        c, d = self.mu.shape
        cols = {
            "chain": np.repeat(np.arange(c), d),
            "draw": np.tile(np.arange(d), c),
        }
        for name in SCALARS:
            cols[name] = getattr(self, name).ravel()
        cols["eta2"] = self.eta2.ravel()
        for arr, prefix in ((self.alpha, "alpha"), (self.theta, "theta"), (self.delta, "delta")):
            for i, s in enumerate(self.subjects):
                cols[f"{prefix}[{s}]"] = arr[:, :, i].ravel()
        return pd.DataFrame(cols)


def write_draws(path, draws):
    """One row per draw. Columns: chain, draw, mu, nu, sigma2, g_alpha, g_nu,
    g_delta, eta2, then alpha[s], theta[s], delta[s] for each subject s."""
    draws.to_frame().to_csv(path, index=False, float_format="%.17g")


def read_draws(path):
    frame = pd.read_csv(path, float_precision="round_trip")
    need = ("chain", "draw") + SCALARS
    missing = [c for c in need if c not in frame.columns]
    if missing:
        raise SchemaError(f"draws file lacks columns {missing}")
    frame = frame.sort_values(["chain", "draw"], kind="stable")
    n_chains = frame["chain"].nunique()
    n_draws = len(frame) // n_chains
    if n_chains * n_draws != len(frame):
        raise SchemaError("chains have unequal numbers of draws")
    subjects = tuple(c[len("alpha[") : -1] for c in frame.columns if c.startswith("alpha["))

    def take(cols):
        # C order, so reductions sum in the same order as on fresh draws
        arr = np.ascontiguousarray(frame[list(cols)].to_numpy(dtype=float))
        return arr.reshape(n_chains, n_draws, -1)

    scalars = [take([n])[..., 0] for n in SCALARS]
    alpha = take([f"alpha[{s}]" for s in subjects])
    theta = take([f"theta[{s}]" for s in subjects])
    return PosteriorDraws(*scalars, alpha=alpha, theta=theta, subjects=subjects)


def _initial_state(y_var, r, gen):
    sigma2 = y_var * math.exp(0.5 * gen.standard_normal())
    g = np.array([np.clip(sample_g(ri, gen), ri * ri / 100.0, ri * ri * 100.0) for ri in r])
    return sigma2, g


def gibbs_fit(t, p=None, m=None, *, fixed_g=None):
    """Posterior draws of the unconstrained model for trial table ``t``.

    ``fixed_g`` (g_alpha, g_nu, g_delta) freezes the g's; it exists to test
    the location and sigma2 updates against closed forms.
    """
    p = p or PriorConfig()
    m = m or McmcConfig()
    validate_design(t)
    system = BlockSystem(build_design(t, ModelKind.UNCONSTRAINED))
    n_sub = system.n_subjects
    r = np.array([p.r_alpha, p.r_nu, p.r_delta])
    c = m.n_chains

    shape_sigma = 0.5 * (system.n + system.n_penalised)
    shape_g = 0.5 * (system.group_sizes + 1.0)
    shapes = np.concatenate([[shape_sigma], shape_g])
    zdim = system.kg + n_sub * system.kl

    gens = [rngmod.stream(m.seed, rngmod.CHAIN, k) for k in range(c)]
    y_var = system.yty / max(system.n - 1, 1)
    if not y_var > 0:
        y_var = 1.0
    sigma2 = np.empty(c)
    g = np.empty((c, 3))
    for k, gen in enumerate(gens):
        sigma2[k], g[k] = _initial_state(y_var, r, gen)
    if fixed_g is not None:
        g[:] = np.asarray(fixed_g, dtype=float)

    n_keep = m.n_retained
    out = {n: np.empty((c, n_keep)) for n in SCALARS}
    out["alpha"] = np.empty((c, n_keep, n_sub))
    out["theta"] = np.empty((c, n_keep, n_sub))

    kept = 0
    for start in range(0, m.n_iterations, _CHUNK):
        size = min(_CHUNK, m.n_iterations - start)
        z = np.stack([gen.standard_normal((size, zdim)) for gen in gens], axis=1)
        gam = np.stack([gen.standard_gamma(shapes, size=(size, 4)) for gen in gens], axis=1)
        for j in range(size):
            it = start + j
            f = system.factor(g)
            zg = z[j, :, : system.kg]
            zl = z[j, :, system.kg :].reshape(c, n_sub, system.kl)
            bg, bl = f.draw(np.sqrt(sigma2), zg, zl)
            rss = system.rss(bg, bl)
            ss = np.stack(
                [(bl[..., 0] ** 2).sum(-1), bg[:, 1] ** 2, (bl[..., 1] ** 2).sum(-1)], axis=-1
            )
            sigma2 = 0.5 * (rss + (ss / g).sum(-1)) / gam[j, :, 0]
            if fixed_g is None:
                g = 0.5 * (r * r + ss / sigma2[:, None]) / gam[j, :, 1:]
            if not (np.all(np.isfinite(bg)) and np.all(sigma2 > 0) and np.all(g > 0)
                    and np.all(np.isfinite(sigma2)) and np.all(np.isfinite(g))):
                raise NumericError(f"non-finite state at iteration {it}")
            if it >= m.burn_in and (it - m.burn_in) % m.thin == 0 and kept < n_keep:
                out["mu"][:, kept] = bg[:, 0] + system.y_offset
                out["nu"][:, kept] = bg[:, 1]
                out["sigma2"][:, kept] = sigma2
                out["g_alpha"][:, kept] = g[:, 0]
                out["g_nu"][:, kept] = g[:, 1]
                out["g_delta"][:, kept] = g[:, 2]
                out["alpha"][:, kept] = bl[..., 0]
                out["theta"][:, kept] = bl[..., 1]
                kept += 1
    return PosteriorDraws(subjects=t.subjects, **out)


def location_conditional(t, sigma2, g):
    """Mean and covariance of the location block given sigma2 and g.

    Returned in design-column order (mu, alpha_1..N, nu, theta_1..N),
    computed by the same block factorisation the sampler uses.
    """
    system = BlockSystem(build_design(t, ModelKind.UNCONSTRAINED))
    f = system.factor(np.asarray(g, dtype=float))
    kg, kl, n_sub = system.kg, system.kl, system.n_subjects
    zdim = kg + kl * n_sub
    sig = math.sqrt(sigma2)
    mean = system.assemble(f.beta_g, f.beta_l)
    basis = np.eye(zdim)
    bg, bl = f.draw(
        np.full(zdim, sig),
        basis[:, :kg],
        basis[:, kg:].reshape(zdim, n_sub, kl),
    )
    cols = system.assemble(bg, bl) - mean  # row k = T e_k
    return mean, cols.T @ cols


def _std_tail(a, gen, size):
    """Standard normal conditioned on > a, with a >= 0.45 (Robert 1995)."""
    lam = 0.5 * (a + np.sqrt(a * a + 4.0))
    out = np.empty(size)
    todo = np.arange(size)
    while todo.size:
        aa = a[todo] if np.ndim(a) else a
        ll = lam[todo] if np.ndim(lam) else lam
        z = aa + gen.standard_exponential(todo.size) / ll
        ok = gen.random(todo.size) <= np.exp(-0.5 * (z - ll) ** 2)
        out[todo[ok]] = z[ok]
        todo = todo[~ok]
    return out


def sample_truncated_normal(mean, sd, lower, rng, size=None):
    """Draw from Normal(mean, sd**2) restricted to values above ``lower``.

    Lower bounds more than 0.45 sd above the mean use exponential rejection,
    which stays efficient arbitrarily far into the tail.
    """
    mean, sd, lower = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (mean, sd, lower)))
    if np.any(~(sd > 0)):
        raise DomainError("sd must be positive")
    shape = mean.shape if size is None else tuple(np.atleast_1d(size))
    mean, sd, lower = (np.broadcast_to(v, shape).ravel() for v in (mean, sd, lower))
    a = (lower - mean) / sd
    z = np.empty(a.shape)
    tail = a >= 0.45
    idx = np.flatnonzero(~tail)
    while idx.size:
        cand = rng.standard_normal(idx.size)
        ok = cand > a[idx]
        z[idx[ok]] = cand[ok]
        idx = idx[~ok]
    if tail.any():
        z[tail] = _std_tail(a[tail], rng, int(tail.sum()))
    out = (mean + sd * z).reshape(shape)
    return float(out) if out.ndim == 0 else out
