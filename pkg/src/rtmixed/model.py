"""Model specifications, prior configuration and design matrices.

All four models share

    y = mu + alpha[i] + x * (nu + theta[i]) + e,    e ~ Normal(0, sigma2)

with alpha[i] ~ Normal(0, g_alpha * sigma2), nu ~ Normal(0, g_nu * sigma2) and
theta[i] ~ Normal(0, g_delta * sigma2), so that delta[i] = nu + theta[i].
Each g has a scaled Inverse-chi-square(1, r**2) prior, i.e. it is
distributed as r**2 / chi2_1. mu has a flat prior and sigma2 the Jeffreys
prior 1/sigma2.

The common-effect model drops the theta columns and the null model drops
both the nu and theta columns. The positive-effects model shares the
unconstrained parameterisation and is handled by the encompassing-prior
computation in :mod:`rtmixed.evidence`.
"""

import enum
import math
from dataclasses import asdict, dataclass, fields

import numpy as np

from .errors import DomainError, SchemaError


class ModelKind(str, enum.Enum):
    UNCONSTRAINED = "unconstrained"
    POSITIVE = "positive"
    COMMON = "common"
    NULL = "null"

    @property
    def label(self):
        return {"unconstrained": "M_u", "positive": "M_+", "common": "M_1", "null": "M_0"}[
            self.value
        ]


class Block(str, enum.Enum):
    INTERCEPT = "intercept"
    SUBJECT_DEV = "subject_dev"
    COMMON_EFFECT = "common_effect"
    EFFECT_DEV = "effect_dev"


# g-group indices. Position in a g vector follows the order of the groups
# actually present in a design (see DesignMatrix.groups).
G_ALPHA, G_NU, G_DELTA = "g_alpha", "g_nu", "g_delta"
_BLOCK_GROUP = {
    Block.INTERCEPT: None,
    Block.SUBJECT_DEV: G_ALPHA,
    Block.COMMON_EFFECT: G_NU,
    Block.EFFECT_DEV: G_DELTA,
}


@dataclass(frozen=True)
class PriorConfig:
    """Scales of the Inverse-chi-square(1, r**2) priors on the g's.

    ``r_alpha`` governs subject intercept spread; it is not a published value
    (default 1, intercept spread of the order of trial noise) and should be
    varied in sensitivity checks. ``sigma_guess_ms`` only documents the
    calibration behind ``r_nu`` and ``r_delta`` (50 ms and 30 ms against
    300 ms trial noise) and is not used in any computation.
    """

    r_alpha: float = 1.0
    r_nu: float = 1.0 / 6.0
    r_delta: float = 1.0 / 10.0
    sigma_guess_ms: float = 300.0
    shift_ms: float = 200.0

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise DomainError(f"{f.name} must be a positive finite number, got {v!r}")

    def scale_for(self, group):
        return {G_ALPHA: self.r_alpha, G_NU: self.r_nu, G_DELTA: self.r_delta}[group]


def _parse_number(text):
    text = text.strip()
    if "/" in text:
        num, den = text.split("/", 1)
        return float(num) / float(den)
    return float(text)


def read_kv(path):
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise SchemaError(f"{path}:{lineno}: expected 'key = value'")
            key, value = line.split("=", 1)
            out[key.strip()] = value.strip()
    return out


def write_kv(path, items, header=None):
    with open(path, "w") as fh:
        if header:
            for line in header.splitlines():
                fh.write(f"# {line}\n")
        for key, value in items.items():
            if isinstance(value, (float, np.floating)):
                value = repr(float(value))
            elif isinstance(value, np.integer):
                value = int(value)
            fh.write(f"{key} = {value}\n")


def read_prior_config(path):
    raw = read_kv(path)
    known = {f.name for f in fields(PriorConfig)}
    unknown = set(raw) - known
    if unknown:
        raise SchemaError(f"unknown prior keys {sorted(unknown)}")
    try:
        return PriorConfig(**{k: _parse_number(v) for k, v in raw.items()})
    except ValueError as exc:
        raise SchemaError(str(exc)) from exc


def write_prior_config(path, p):
    write_kv(path, asdict(p))


@dataclass(frozen=True, eq=False)
class DesignMatrix:
    """Dense design with labelled column blocks.

    ``blocks`` is an ordered list of ``(Block, columns, g_group)``. Rows follow
    the trial table; ``subject_index`` maps rows to subjects so the solver can
    exploit the per-subject block structure.
    """

    blocks: list
    response: np.ndarray
    subject_index: np.ndarray
    n_subjects: int
    kind: ModelKind

    @property
    def n_rows(self):
        return len(self.response)

    @property
    def matrix(self):
        return np.hstack([cols for _, cols, _ in self.blocks])

    @property
    def groups(self):
        """g-groups present, in canonical order."""
        present = {g for _, _, g in self.blocks if g is not None}
        return [g for g in (G_ALPHA, G_NU, G_DELTA) if g in present]

    def column_groups(self):
        """Per-column g-group name (None for unpenalised columns)."""
        out = []
        for _, cols, g in self.blocks:
            out.extend([g] * cols.shape[1])
        return out

    def block(self, label):
        for b, cols, _ in self.blocks:
            if b == label:
                return cols
        raise KeyError(label)


def build_design(t, spec):
    kind = ModelKind(spec)
    x = t.condition.astype(float)[:, None]
    ind = np.zeros((len(t), t.n_subjects))
    ind[np.arange(len(t)), t.subject_index] = 1.0
    blocks = [
        (Block.INTERCEPT, np.ones((len(t), 1)), None),
        (Block.SUBJECT_DEV, ind, G_ALPHA),
    ]
    if kind != ModelKind.NULL:
        blocks.append((Block.COMMON_EFFECT, x, G_NU))
    if kind in (ModelKind.UNCONSTRAINED, ModelKind.POSITIVE):
        blocks.append((Block.EFFECT_DEV, x * ind, G_DELTA))
    return DesignMatrix(blocks, t.rt.copy(), t.subject_index.copy(), t.n_subjects, kind)


def prior_density_g(g, r):
    """Density of the scaled Inverse-chi-square(1, r**2) distribution at g."""
    g = np.asarray(g, dtype=float)
    if np.any(~(g > 0)) or not r > 0:
        raise DomainError("g and r must be positive")
    out = r / math.sqrt(2.0 * math.pi) * g**-1.5 * np.exp(-(r * r) / (2.0 * g))
    return out if out.ndim else float(out)


def log_prior_density_g(g, r):
    g = np.asarray(g, dtype=float)
    return math.log(r) - 0.5 * math.log(2.0 * math.pi) - 1.5 * np.log(g) - (r * r) / (2.0 * g)


def sample_g(r, rng, size=None):
    """Draw g = r**2 / chi2_1 (Inverse-gamma with shape 1/2, scale r**2/2)."""
    if not r > 0:
        raise DomainError("r must be positive")
    return 0.5 * r * r / rng.standard_gamma(0.5, size=size)
