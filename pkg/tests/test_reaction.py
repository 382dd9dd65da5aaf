import numpy as np
import pytest
from hypothesis import given, strategies as st

from kpplab.errors import InvalidFunctionError
from kpplab.reaction import (from_callable, get_reaction, linear_bound_check, logistic, minimal_speed,
                             reaction_from_dict, subadditivity_check, validate_kpp)

s_sq = from_callable(lambda s: s * (1 - s) ** 2, 1.0, name="s(1-s)^2")
non_kpp = from_callable(lambda s: s ** 2 * (1 - s), 1e-12, name="s^2(1-s)")


def test_logistic_validates(f_log):
    # [PAPER] logistic satisfies every KPP clause
    v = validate_kpp(f_log, 64)
    assert v.passed, v.failed()


def test_cubic_decay_validates():
    # [TRIVIAL] f/s = (1-s)^2 is nonincreasing
    assert validate_kpp(s_sq, 64).passed


def test_non_kpp_fails_ratio():
    # [TRIVIAL] f/s = s(1-s) increases near 0
    v = validate_kpp(non_kpp, 64)
    assert not v.conditions["f(s)/s nonincreasing"]


def test_wrong_slope_caught_by_difference():
    bad = from_callable(lambda s: s * (1 - s), 1.5)
    v = validate_kpp(bad)
    assert v.failed() == ["f'(0) matches difference"]


def test_validate_rejects_nonfinite_and_small_samples(f_log):
    with pytest.raises(InvalidFunctionError):
        validate_kpp(from_callable(lambda s: np.where(s > 0.5, np.nan, s * (1 - s)), 1.0))
    with pytest.raises(ValueError):
        validate_kpp(f_log, 8)


def test_minimal_speed_examples():
    assert minimal_speed(logistic()) == 2.0  # [PAPER] c* = 2 sqrt(f'(0)) with f'(0)=1
    assert minimal_speed(logistic(r=4.0)) == 4.0  # [TRIVIAL]
    g = from_callable(lambda s: s * (1 - s) * (1 + s), 1.0)
    assert validate_kpp(g).passed
    assert minimal_speed(g) == 2.0  # [TRIVIAL]


def test_minimal_speed_rejects_nonpositive_slope():
    with pytest.raises(InvalidFunctionError):
        minimal_speed(from_callable(lambda s: 0 * s, 0.0))


def test_subadditivity_examples(f_log):
    assert subadditivity_check(f_log, 10_000, seed=7)  # [PAPER]
    b = np.linspace(0, 2, 101)
    assert np.all(f_log(0 + b) <= f_log(0.0) + f_log(b))  # [TRIVIAL] a = 0
    assert f_log(1.6) == 0.0 and np.isclose(2 * f_log(0.8), 0.32)  # [TRIVIAL] zero extension


def test_zero_extension(f_log):
    assert f_log(-0.5) == 0.0 and f_log(1.5) == 0.0
    assert f_log(0.0) == 0.0 and f_log(1.0) == 0.0


def test_registry_and_dict():
    f = get_reaction("logistic", r=2.0)
    assert f.deriv_at_0 == 2.0
    g = reaction_from_dict(f.to_dict())
    s = np.linspace(0, 1, 17)
    assert np.array_equal(f(s), g(s))
    assert reaction_from_dict("logistic").deriv_at_0 == 1.0


@given(st.floats(0, 2), st.floats(0, 2), st.sampled_from([1.0, 2.0, 4.0]))
def test_subadditive_property(a, b, r):
    f = logistic(r=r)
    assert f(a + b) <= f(a) + f(b) + 1e-12


@given(st.floats(0.05, 0.95), st.floats(0.1, 5.0))
def test_speed_depends_only_on_slope(s0, amp):
    # modify f away from 0 with a bump supported in [s0 - w, s0 + w], keep f'(0)
    w = min(s0, 1 - s0) / 2
    base = logistic()

    def raw(s):
        bump = np.clip(1 - ((s - s0) / w) ** 2, 0, None) ** 2
        return base(s) * (1 + amp * bump)

    g = from_callable(raw, 1.0)
    assert minimal_speed(g) == minimal_speed(base)


@given(st.sampled_from([1.0, 2.0, 3.0]))
def test_linear_bound(r):
    assert linear_bound_check(logistic(r=r))
    assert linear_bound_check(s_sq)
