"""Penalised normal equations with arrowhead structure.

For a design W = [global columns | per-subject local columns] the penalised
cross-product matrix

    M = W'W + diag(penalties)

couples subjects only through the global columns (intercept, common effect).
Ordering the unknowns as (global, subject 1 locals, ..., subject N locals),
M is an arrowhead matrix with k_g x k_g corner, N diagonal blocks of size
k_l x k_l and N coupling blocks. Block elimination of the locals gives
O(N) factorisation, log-determinant, solve and Gaussian draws. All routines
broadcast over leading batch axes (Monte-Carlo g draws, parallel chains).

Blocks are at most 2 x 2, so the small Cholesky kernels are written out
elementwise rather than delegated to batched LAPACK calls.
"""

import math

import numpy as np
from scipy.special import gammaln

from .errors import NumericError
from .model import Block

_GLOBAL = (Block.INTERCEPT, Block.COMMON_EFFECT)
_LOCAL = (Block.SUBJECT_DEV, Block.EFFECT_DEV)


def _chol(a):
    k = a.shape[-1]
    if k == 1:
        out = np.sqrt(a)
    elif k == 2:
        l00 = np.sqrt(a[..., 0, 0])
        l10 = a[..., 1, 0] / l00
        l11 = np.sqrt(a[..., 1, 1] - l10 * l10)
        out = np.zeros_like(a)
        out[..., 0, 0] = l00
        out[..., 1, 0] = l10
        out[..., 1, 1] = l11
    else:
        return np.linalg.cholesky(a)
    diag = np.diagonal(out, axis1=-2, axis2=-1)
    if not np.all(diag > 0) or not np.all(np.isfinite(diag)):
        raise NumericError("penalised system is not positive definite")
    return out


def _fsolve(l, b):
    """Solve L x = b for lower-triangular L; b has shape (..., k, m)."""
    k = l.shape[-1]
    if k == 1:
        return b / l
    if k == 2:
        x0 = b[..., 0, :] / l[..., 0, 0, None]
        x1 = (b[..., 1, :] - l[..., 1, 0, None] * x0) / l[..., 1, 1, None]
        return np.stack([x0, x1], axis=-2)
    return np.linalg.solve(l, b)


def _bsolve(l, b):
    """Solve L' x = b."""
    k = l.shape[-1]
    if k == 1:
        return b / l
    if k == 2:
        x1 = b[..., 1, :] / l[..., 1, 1, None]
        x0 = (b[..., 0, :] - l[..., 1, 0, None] * x1) / l[..., 0, 0, None]
        return np.stack([x0, x1], axis=-2)
    return np.linalg.solve(np.swapaxes(l, -1, -2), b)


def _cho_solve(l, b):
    return _bsolve(l, _fsolve(l, b))


def _logdet(l):
    return 2.0 * np.log(np.diagonal(l, axis1=-2, axis2=-1)).sum(axis=-1)


class BlockSystem:
    """Sufficient statistics of a :class:`~rtmixed.model.DesignMatrix`.

    The response is centred at its mean before forming cross products; the
    intercept absorbs the offset (``y_offset``) and marginal likelihoods are
    unaffected because the intercept prior is flat.
    """

    def __init__(self, design):
        self.kind = design.kind
        self.groups = design.groups
        gidx = {g: i for i, g in enumerate(self.groups)}
        n_sub = design.n_subjects
        cols, glob, loc, grp = [], [], [], []
        start = 0
        for label, block, g in design.blocks:
            width = block.shape[1]
            if label in _GLOBAL:
                glob.append(start)
                grp.append(-1 if g is None else gidx[g])
            else:
                loc.append((start, gidx[g]))
            cols.append(block)
            start += width
        w = np.hstack(cols)
        y = np.asarray(design.response, dtype=float)
        self.n = len(y)
        self.y_offset = float(y.mean())
        yc = y - self.y_offset
        wtw = w.T @ w
        wty = w.T @ yc

        self.glob_cols = np.array(glob)
        self.glob_group = np.array(grp)
        # local column index for subject i, local slot j
        self.loc_cols = np.array([[s + i for s, _ in loc] for i in range(n_sub)])
        self.loc_group = np.array([g for _, g in loc])
        self.kg, self.kl, self.n_subjects = len(glob), len(loc), n_sub

        gc, lc = self.glob_cols, self.loc_cols
        self.G = wtw[np.ix_(gc, gc)]
        self.C = wtw[lc[:, :, None], gc[None, None, :]]  # (N, kl, kg)
        self.B0 = wtw[lc[:, :, None], lc[:, None, :]]  # (N, kl, kl)
        self.hg = wty[gc]
        self.hl = wty[lc]
        self.yty = float(yc @ yc)

        # Split each global column as X = Z A + R, where A marks local slots
        # whose columns sum to it (intercept = sum of subject indicators).
        # The Schur complement is then formed without subtracting nearly
        # equal terms when a g is very large.
        xg = w[:, gc]
        slot_sums = np.stack([w[:, lc[:, k]].sum(axis=1) for k in range(self.kl)], axis=1)
        self.A = np.array(
            [[float(np.array_equal(slot_sums[:, k], xg[:, j])) for j in range(self.kg)]
             for k in range(self.kl)]
        ).reshape(self.kl, self.kg)
        r = xg - slot_sums @ self.A
        self.RtR = r.T @ r
        self.Rty = r.T @ yc
        self.B0A = self.B0 @ self.A  # (N, kl, kg)
        self.V = self.C - self.B0A

        off = wtw[np.ix_(lc.ravel(), lc.ravel())].copy()
        for i in range(n_sub):
            sl = slice(i * self.kl, (i + 1) * self.kl)
            off[sl, sl] = 0.0
        if np.any(off != 0):
            raise NumericError("design couples local columns of different subjects")

        # number of penalised coefficients per g group
        counts = np.zeros(len(self.groups), dtype=int)
        for g in self.glob_group:
            if g >= 0:
                counts[g] += 1
        for g in self.loc_group:
            counts[g] += n_sub
        self.group_sizes = counts
        self.n_penalised = int(counts.sum())

    def factor(self, g):
        return Factor(self, np.asarray(g, dtype=float))

    def rss(self, beta_g, beta_l):
        """||y - W beta||^2 from the block cross products (batched)."""
        lin = np.einsum("...a,a->...", beta_g, self.hg) + np.einsum(
            "...nk,nk->...", beta_l, self.hl
        )
        quad = (
            np.einsum("...a,ab,...b->...", beta_g, self.G, beta_g)
            + 2.0 * np.einsum("...nk,nka,...a->...", beta_l, self.C, beta_g)
            + np.einsum("...nk,nkj,...nj->...", beta_l, self.B0, beta_l)
        )
        return self.yty - 2.0 * lin + quad

    def assemble(self, beta_g, beta_l):
        """Coefficient vector in design-column order (intercept un-centred)."""
        p = self.kg + self.kl * self.n_subjects
        out = np.zeros(beta_g.shape[:-1] + (p,))
        out[..., self.glob_cols] = beta_g
        out[..., self.loc_cols] = beta_l
        out[..., self.glob_cols[0]] += self.y_offset
        return out


class Factor:
    """Factorisation of M = W'W + diag(1/g) for a batch of g vectors.

    ``g`` has shape (..., n_groups); attributes carry the same leading shape.
    """

    def __init__(self, system, g):
        s = system
        self.system = s
        inv_g = 1.0 / g
        if s.kg:
            pen_g = np.where(s.glob_group >= 0, inv_g[..., np.maximum(s.glob_group, 0)], 0.0)
        pen_l = inv_g[..., s.loc_group]  # (..., kl)
        eye_l = np.eye(s.kl)
        b = s.B0 + (pen_l[..., None, :, None] * eye_l)  # (..., N, kl, kl)
        self.LB = _chol(b)
        self.BiC = _cho_solve(self.LB, np.broadcast_to(s.C, b.shape[:-1] + (s.kg,)))
        self.Bih = _cho_solve(self.LB, np.broadcast_to(s.hl[..., None], b.shape[:-1] + (1,)))[
            ..., 0
        ]
        # schur = G + P_g - C'B^-1 C and rhs = h_g - C'B^-1 h_l, rewritten with
        # C = B0 A + V and P - P B^-1 P = P B^-1 B0 (see BlockSystem)
        pa = pen_l[..., None, :, None] * s.A  # (..., 1, kl, kg)
        bib0a = _cho_solve(self.LB, np.broadcast_to(s.B0A, b.shape[:-1] + (s.kg,)))
        biv = _cho_solve(self.LB, np.broadcast_to(s.V, b.shape[:-1] + (s.kg,)))
        t1 = np.einsum("...nka,...nkb->...ab", np.broadcast_to(pa, bib0a.shape), bib0a)
        t2 = np.einsum("...nka,...nkb->...ab", np.broadcast_to(pa, biv.shape), biv)
        t3 = np.einsum("nka,...nkb->...ab", s.V, biv)
        schur = s.RtR + pen_g[..., :, None] * np.eye(s.kg) + t1 + t2 + np.swapaxes(t2, -1, -2) - t3
        schur = 0.5 * (schur + np.swapaxes(schur, -1, -2))
        rhs = s.Rty + np.einsum("...nka,...nk->...a", np.broadcast_to(pa, biv.shape) - s.V, self.Bih)
        self.LS = _chol(schur)
        self.beta_g = _cho_solve(self.LS, rhs[..., None])[..., 0]
        self.beta_l = self.Bih - np.einsum("...nka,...a->...nk", self.BiC, self.beta_g)
        self.logdet = _logdet(self.LB).sum(axis=-1) + _logdet(self.LS)
        self.quad = np.einsum("...a,a->...", self.beta_g, s.hg) + np.einsum(
            "...nk,nk->...", self.beta_l, s.hl
        )

    def draw(self, sigma, z_g, z_l):
        """Gaussian draw with mean M^-1 W'y and covariance sigma^2 M^-1.

        ``z_g`` (..., kg) and ``z_l`` (..., N, kl) are standard normals; the
        map from (z_g, z_l) to the draw is affine.
        """
        sigma = np.asarray(sigma, dtype=float)
        bg = self.beta_g + sigma[..., None] * _bsolve(self.LS, z_g[..., None])[..., 0]
        bl = (
            self.Bih
            - np.einsum("...nka,...a->...nk", self.BiC, bg)
            + sigma[..., None, None] * _bsolve(self.LB, z_l[..., None])[..., 0]
        )
        return bg, bl


def log_marginal_given_g(system, g):
    """Log marginal likelihood of the data for fixed g (batched over g rows).

    Coefficients, the flat-prior intercept and the Jeffreys-prior sigma2 are
    integrated in closed form:

        -(n-1)/2 log(2 pi) - 1/2 sum_k m_k log g_k - 1/2 log|M|
        + lgamma((n-1)/2) - (n-1)/2 log(S/2),      S = y'y - b'M b
    """
    g = np.asarray(g, dtype=float)
    if np.any(~(g > 0)):
        raise NumericError("g must be positive")
    s = system
    f = s.factor(g)
    ss = s.yty - f.quad
    if np.any(~(ss > 0)):
        raise NumericError("non-positive residual sum of squares")
    half = 0.5 * (s.n - 1)
    return (
        -half * math.log(2.0 * math.pi)
        - 0.5 * (np.log(g) * s.group_sizes).sum(axis=-1)
        - 0.5 * f.logdet
        + gammaln(half)
        - half * np.log(0.5 * ss)
    )
