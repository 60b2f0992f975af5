import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from conftest import make_table
from rtmixed.dataio import (
    RAW_MS,
    SHIFTED_LOG,
    TrialSchema,
    TrialTable,
    apply_shift_log,
    invert_shift_log,
    load_trials,
    observed_effects,
    validate_design,
    write_trials,
)
from rtmixed.errors import DesignError, RowError, SchemaError, TransformError
from rtmixed.simulate import SimSpec, generate


def write(tmp_path, text, name="trials.csv"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_three_row_file_has_empty_cell(tmp_path):
    path = write(tmp_path, "subject,condition,rt\n1,a,500\n1,b,560\n2,a,480\n")
    t = load_trials(path, TrialSchema(baseline="a"))
    assert t.n_subjects == 2
    with pytest.raises(DesignError, match="'2'.*'b'"):
        validate_design(t)


def test_negative_rt_reports_row(tmp_path):
    path = write(tmp_path, "subject,condition,rt\n1,0,500\n1,1,-5\n")
    with pytest.raises(RowError) as err:
        load_trials(path)
    assert err.value.rows == [2]
    assert err.value.exit_code == 2


def test_non_numeric_rt(tmp_path):
    path = write(tmp_path, "subject,condition,rt\n1,0,500\n1,1,fast\n1,1,\n")
    with pytest.raises(RowError) as err:
        load_trials(path)
    assert err.value.rows == [2, 3]


def test_balanced_design_summary():
    rows = [(s, c, 400 + 10 * k) for s in ("a", "b") for c in (0, 1) for k in range(5)]
    summary = validate_design(make_table(rows))
    assert summary.n_subjects == 2
    assert summary.total_trials == 20
    assert set(summary.trials_per_cell.values()) == {5}


@pytest.mark.parametrize("sep", [",", "\t", ";"])
def test_delimiters(tmp_path, sep):
    lines = ["subject,condition,rt", "1,con,500", "1,inc,560", "2,con,480", "2,inc,530"]
    path = write(tmp_path, "\n".join(line.replace(",", sep) for line in lines) + "\n")
    t = load_trials(path, TrialSchema(baseline="con"))
    assert t.condition_names == ("con", "inc")
    assert t.condition.tolist() == [0, 1, 0, 1]
    assert t.rt.tolist() == [500, 560, 480, 530]


def test_schema_errors(tmp_path):
    path = write(tmp_path, "id,condition,rt\n1,0,500\n")
    with pytest.raises(SchemaError, match="missing column"):
        load_trials(path)
    path = write(tmp_path, "subject,condition,rt\n1,x,500\n1,y,510\n")
    with pytest.raises(SchemaError, match="baseline"):
        load_trials(path)
    with pytest.raises(SchemaError, match="not a level"):
        load_trials(path, TrialSchema(baseline="z"))


def test_three_levels_is_design_error(tmp_path):
    path = write(tmp_path, "subject,condition,rt\n1,a,500\n1,b,510\n1,c,520\n")
    with pytest.raises(DesignError, match="exactly 2 levels"):
        load_trials(path, TrialSchema(baseline="a"))


def test_baseline_choice_flips_effect_sign(tmp_path):
    path = write(tmp_path, "subject,condition,rt\n1,a,450\n1,b,510\n")
    ab = observed_effects(load_trials(path, TrialSchema(baseline="a")))
    ba = observed_effects(load_trials(path, TrialSchema(baseline="b")))
    assert ab == [("1", 60.0)]
    assert ba == [("1", -60.0)]


def test_trimming_is_opt_in(tmp_path):
    path = write(tmp_path, "subject,condition,rt\n1,0,90\n1,0,500\n1,1,560\n1,1,4000\n")
    assert len(load_trials(path)) == 4
    t = load_trials(path, TrialSchema(min_rt=100, max_rt=3000))
    assert t.rt.tolist() == [500, 560]


def test_shift_log_value():
    t = make_table([("a", 0, 1200.0), ("a", 1, 1300.0)])
    out = apply_shift_log(t, 200)
    assert out.scale == SHIFTED_LOG
    assert out.shift_ms == 200
    assert out.rt[0] == pytest.approx(6.9078, abs=5e-5)
    assert t.scale == RAW_MS


def test_shift_log_rejects_rt_at_shift():
    t = make_table([("a", 0, 500.0), ("a", 1, 200.0), ("b", 0, 150.0)])
    with pytest.raises(TransformError) as err:
        apply_shift_log(t, 200)
    assert err.value.rows == [2, 3]
    assert err.value.exit_code == 3


def test_shift_log_twice_is_an_error():
    t = apply_shift_log(make_table([("a", 0, 500.0), ("a", 1, 600.0)]))
    with pytest.raises(TransformError):
        apply_shift_log(t)


def test_shift_log_reduces_skew():
    t = generate(SimSpec(true_model="unconstrained", n_subjects=10, trials_per_cell=200,
                         mu=6.0, sigma=0.6, nu=0.1, eta=0.05, scale="shifted_lognormal", seed=3))
    before = stats.skew(t.rt)
    after = stats.skew(apply_shift_log(t, 200).rt)
    assert before > 1.0
    assert abs(after) < before


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(200.001, 1e5, allow_nan=False), min_size=2, max_size=30))
def test_shift_log_round_trip(values):
    n = len(values)
    t = make_table([("s", i % 2, v) for i, v in enumerate(values)])
    back = invert_shift_log(apply_shift_log(t, 200))
    np.testing.assert_allclose(back.rt, t.rt, rtol=1e-9)
    assert back.scale == RAW_MS
    assert len(back) == n


def test_observed_effect_single_subject():
    t = make_table([("a", 0, 450.0), ("a", 1, 510.0)])
    assert observed_effects(t) == [("a", 60.0)]


def test_equal_means_give_zero_effects():
    rows = [(s, c, 500.0 + k) for s in ("a", "b", "c") for c in (0, 1) for k in (-5, 5)]
    assert [e for _, e in observed_effects(make_table(rows))] == [0.0, 0.0, 0.0]


@settings(max_examples=30, deadline=None)
@given(st.randoms(use_true_random=False))
def test_observed_effects_invariant_to_row_order(rnd):
    rows = [(s, c, 400.0 + 17 * k + 31 * c + 7 * i)
            for i, s in enumerate("abcd") for c in (0, 1) for k in range(3)]
    shuffled = rows[:]
    rnd.shuffle(shuffled)
    a = dict(observed_effects(make_table(rows)))
    b = dict(observed_effects(make_table(shuffled)))
    assert a.keys() == b.keys()
    for key in a:
        assert math.isclose(a[key], b[key], rel_tol=1e-12, abs_tol=1e-9)


def test_observed_effects_sorted_ascending():
    rows = [("a", 0, 500), ("a", 1, 600), ("b", 0, 500), ("b", 1, 450), ("c", 0, 500), ("c", 1, 510)]
    assert [s for s, _ in observed_effects(make_table(rows))] == ["b", "c", "a"]


def test_table_rejects_bad_codes():
    with pytest.raises(DesignError):
        TrialTable(np.array(["a"]), np.array([2]), np.array([500.0]))


def test_write_then_load_preserves_values(tmp_path):
    t = generate(SimSpec(n_subjects=3, trials_per_cell=2, seed=4))
    write_trials(tmp_path / "t.csv", t)
    back = load_trials(tmp_path / "t.csv")
    assert back.subjects == t.subjects
    np.testing.assert_array_equal(back.rt, t.rt)
    np.testing.assert_array_equal(back.condition, t.condition)
