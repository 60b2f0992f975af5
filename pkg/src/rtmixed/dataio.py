"""Trial-level response-time tables: loading, validation, shift-log transform
and per-subject observed effects."""

import csv
from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd

from .errors import DesignError, RowError, SchemaError, TransformError

RAW_MS = "raw_ms"
SHIFTED_LOG = "shifted_log"


@dataclass(frozen=True)
class TrialSchema:
    """Column names in the input file and the condition coded 0.

    ``baseline`` is the condition the effect is measured against (e.g.
    "congruent"); the other level becomes code 1. It may be omitted only when
    the condition column already holds the labels ``0`` and ``1``.
    """

    subject: str = "subject"
    condition: str = "condition"
    rt: str = "rt"
    baseline: str | None = None
    min_rt: float | None = None
    max_rt: float | None = None


@dataclass(frozen=True, eq=False)
class TrialTable:
    subject: np.ndarray
    condition: np.ndarray
    rt: np.ndarray
    condition_names: tuple = ("0", "1")
    shift_ms: float | None = None
    subjects: tuple = field(init=False)
    subject_index: np.ndarray = field(init=False)

    def __post_init__(self):
        subject = np.asarray(self.subject).astype(str)
        condition = np.asarray(self.condition)
        rt = np.asarray(self.rt, dtype=float)
        if not (len(subject) == len(condition) == len(rt)):
            raise SchemaError("subject, condition and rt columns differ in length")
        if not np.all(np.isin(condition, (0, 1))):
            raise DesignError("condition codes must be 0 or 1")
        if self.shift_ms is None:
            bad = np.flatnonzero(~(rt > 0))
            if bad.size:
                raise RowError("non-positive response time", bad + 1)
        elif not np.all(np.isfinite(rt)):
            raise RowError("non-finite log response time", np.flatnonzero(~np.isfinite(rt)) + 1)
        labels, first = np.unique(subject, return_index=True)
        order = np.argsort(first)
        subjects = tuple(labels[order])
        lookup = {s: i for i, s in enumerate(subjects)}
        index = np.fromiter((lookup[s] for s in subject), dtype=np.intp, count=len(subject))
        object.__setattr__(self, "subject", subject)
        object.__setattr__(self, "condition", condition.astype(np.int8))
        object.__setattr__(self, "rt", rt)
        object.__setattr__(self, "condition_names", tuple(str(c) for c in self.condition_names))
        object.__setattr__(self, "subjects", subjects)
        object.__setattr__(self, "subject_index", index)

    @property
    def scale(self):
        return RAW_MS if self.shift_ms is None else SHIFTED_LOG

    @property
    def n_subjects(self):
        return len(self.subjects)

    def __len__(self):
        return len(self.rt)

    def cell_counts(self):
        """Array (n_subjects, 2) of trial counts per subject and condition."""
        counts = np.zeros((self.n_subjects, 2), dtype=np.int64)
        np.add.at(counts, (self.subject_index, self.condition), 1)
        return counts

    def cell_means(self):
        counts = self.cell_counts()
        sums = np.zeros((self.n_subjects, 2))
        np.add.at(sums, (self.subject_index, self.condition), self.rt)
        with np.errstate(invalid="ignore", divide="ignore"):
            return sums / counts

    def to_frame(self):
        names = np.asarray(self.condition_names)[self.condition]
        return pd.DataFrame({"subject": self.subject, "condition": names, "rt": self.rt})


@dataclass(frozen=True)
class DesignSummary:
    n_subjects: int
    trials_per_cell: dict
    total_trials: int


def _sniff_delimiter(path):
    with open(path, newline="") as fh:
        head = fh.read(64 * 1024)
    try:
        return csv.Sniffer().sniff(head, delimiters=",\t;").delimiter
    except csv.Error:
        return ","


def _to_float(text):
    # Python's parser is correctly rounded, so written values reload bit-exactly.
    try:
        return float(text)
    except ValueError:
        return np.nan


def load_trials(path, schema=None):
    """Read a delimited trial table (comma, tab or semicolon; header row).

    Returns a raw-millisecond :class:`TrialTable` in file row order.
    """
    schema = schema or TrialSchema()
    sep = _sniff_delimiter(path)
    frame = pd.read_csv(path, sep=sep, dtype=str, keep_default_na=False)
    frame.columns = [c.strip() for c in frame.columns]
    missing = [c for c in (schema.subject, schema.condition, schema.rt) if c not in frame.columns]
    if missing:
        raise SchemaError(f"missing column(s) {missing}; found {list(frame.columns)}")

    rt = np.array([_to_float(v) for v in frame[schema.rt]], dtype=float)
    bad = np.flatnonzero(~np.isfinite(rt) | ~(rt > 0))
    if bad.size:
        raise RowError("non-numeric or non-positive response time", bad + 1)

    cond = frame[schema.condition].str.strip().to_numpy()
    levels = sorted(set(cond))
    if len(levels) != 2:
        raise DesignError(f"condition column must have exactly 2 levels, found {levels}")
    baseline = schema.baseline
    if baseline is None:
        if set(levels) != {"0", "1"}:
            raise SchemaError(
                f"name the baseline condition (one of {levels}); it is never inferred"
            )
        baseline = "0"
    if baseline not in levels:
        raise SchemaError(f"baseline {baseline!r} is not a level of {levels}")
    other = levels[1] if levels[0] == baseline else levels[0]
    code = (cond == other).astype(np.int8)

    keep = np.ones(len(rt), dtype=bool)
    if schema.min_rt is not None:
        keep &= rt >= schema.min_rt
    if schema.max_rt is not None:
        keep &= rt <= schema.max_rt
    subject = frame[schema.subject].str.strip().to_numpy()
    return TrialTable(subject[keep], code[keep], rt[keep], (baseline, other))


def validate_design(t):
    if len(t) == 0:
        raise DesignError("empty trial table")
    counts = t.cell_counts()
    empty = np.argwhere(counts == 0)
    if empty.size:
        i, j = empty[0]
        raise DesignError(
            f"subject {t.subjects[i]!r} has no trials in condition {t.condition_names[j]!r}"
            + (f" ({len(empty)} empty cells in total)" if len(empty) > 1 else "")
        )
    cells = {
        (s, t.condition_names[j]): int(counts[i, j])
        for i, s in enumerate(t.subjects)
        for j in (0, 1)
    }
    return DesignSummary(t.n_subjects, cells, int(counts.sum()))


def apply_shift_log(t, shift_ms=200.0):
    """Replace each rt by ``ln(rt - shift_ms)``. Rows with rt <= shift are an error."""
    if t.scale != RAW_MS:
        raise TransformError("table is already on the shifted-log scale", [])
    if not shift_ms > 0:
        raise TransformError(f"shift must be positive, got {shift_ms}", [])
    bad = np.flatnonzero(~(t.rt > shift_ms))
    if bad.size:
        raise TransformError(f"response time not above shift {shift_ms} ms", bad + 1)
    return replace(t, rt=np.log(t.rt - shift_ms), shift_ms=float(shift_ms))


def invert_shift_log(t):
    """Back to milliseconds: ``exp(rt) + shift``."""
    if t.scale != SHIFTED_LOG:
        raise TransformError("table is not on the shifted-log scale", [])
    return replace(t, rt=np.exp(t.rt) + t.shift_ms, shift_ms=None)


def effects_by_subject(t):
    """Observed effect per subject in ``t.subjects`` order."""
    means = t.cell_means()
    return means[:, 1] - means[:, 0]


def observed_effects(t):
    """Per-subject mean(condition 1) - mean(condition 0), sorted ascending.

    Returns a list of ``(subject, effect)`` pairs.
    """
    validate_design(t)
    eff = effects_by_subject(t)
    order = sorted(range(len(eff)), key=lambda i: (eff[i], t.subjects[i]))
    return [(t.subjects[i], float(eff[i])) for i in order]


def write_observed_effects(path, effects):
    pd.DataFrame(effects, columns=["subject", "observed_effect"]).to_csv(
        path, index=False, float_format="%.10g"
    )


def write_trials(path, t):
    frame = t.to_frame()
    frame.to_csv(path, index=False, float_format="%.17g")
