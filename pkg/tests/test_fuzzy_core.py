import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from potassium_anfis.fuzzy_core import (
    GRID_COVERAGE_FLOOR,
    Gaussian,
    TskModel,
    TskRule,
    Trapezoid,
    eval_mf,
    forward,
    grid_model,
    grid_partition,
    infer,
)

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)

# Consequent (weight, bias) pairs of a fitted three-rule T-axis model.
FITTED_CONSEQUENTS = [(-0.0501, 6.9810), (-0.0712, 8.0007), (-0.1123, 8.9554)]


def single_rule(weight, bias, mf=None):
    mf = mf or Gaussian(0.0, 50.0)
    return TskModel((TskRule((mf,), (weight,), bias),), ("t_axis_deg",))


def test_trapezoid_examples():
    mf = Trapezoid(0, 1, 2, 3)
    assert eval_mf(mf, 1.5) == 1.0
    assert eval_mf(mf, 0.5) == 0.5
    assert eval_mf(mf, 2.5) == 0.5
    assert eval_mf(mf, -1.0) == 0.0
    assert eval_mf(mf, 3.0) == 0.0


def test_gaussian_peak():
    assert eval_mf(Gaussian(0.0, 1.0), 0.0) == 1.0
    assert eval_mf(Gaussian(0.0, 1.0), 1.0) == pytest.approx(math.exp(-0.5), rel=1e-15)


def test_degenerate_ramps_step_to_plateau():
    left = Trapezoid(1, 1, 2, 3)
    right = Trapezoid(0, 1, 2, 2)
    assert eval_mf(left, 1.0) == 1.0
    assert eval_mf(left, 0.999) == 0.0
    assert eval_mf(right, 2.0) == 1.0
    assert eval_mf(right, 2.001) == 0.0


def test_invalid_parameters_rejected():
    with pytest.raises(ValueError, match="a <= b <= c <= d"):
        Trapezoid(0, 2, 1, 3)
    with pytest.raises(ValueError):
        Gaussian(0.0, 0.0)


def test_with_params_restores_ordering():
    mf = Trapezoid(0, 1, 2, 3).with_params([0.5, 0.2, 2.5, 2.4])
    assert mf.a <= mf.b <= mf.c <= mf.d
    g = Gaussian(0.0, 1.0, sigma_min=0.1).with_params([0.0, -5.0])
    assert g.sigma == 0.1


@given(a=finite, w1=st.floats(0, 100), w2=st.floats(0, 100), w3=st.floats(0, 100), x=finite)
def test_trapezoid_degree_in_unit_interval(a, w1, w2, w3, x):
    mf = Trapezoid(a, a + w1, a + w1 + w2, a + w1 + w2 + w3)
    assert 0.0 <= eval_mf(mf, x) <= 1.0


@given(mu=finite, sigma=st.floats(1e-3, 1e3), x=finite)
def test_gaussian_degree_in_unit_interval(mu, sigma, x):
    assert 0.0 <= eval_mf(Gaussian(mu, sigma), x) <= 1.0


def test_single_rule_is_its_linear_consequent():
    y, firing, norm, dead = infer(single_rule(*FITTED_CONSEQUENTS[0]), [20.0])
    assert y == pytest.approx(-0.0501 * 20 + 6.9810, abs=1e-12)
    assert y == pytest.approx(5.9790, abs=1e-12)
    assert norm.tolist() == [1.0]
    assert not dead


def test_one_active_rule_returns_its_consequent():
    rules = (
        TskRule((Trapezoid(0, 1, 2, 3),), (2.0,), 1.0),
        TskRule((Trapezoid(5, 6, 7, 8),), (-1.0,), 0.5),
    )
    model = TskModel(rules, ("x",))
    y, firing, _, _ = infer(model, [1.5])
    assert firing.tolist() == [1.0, 0.0]
    assert y == 2.0 * 1.5 + 1.0


def test_equal_firing_averages_consequents():
    mf = Gaussian(0.0, 1.0)
    model = TskModel((TskRule((mf,), (1.0,), 0.0), TskRule((mf,), (0.0,), 3.0)), ("x",))
    y, _, norm, _ = infer(model, [0.7])
    assert norm.tolist() == [0.5, 0.5]
    assert y == pytest.approx((0.7 + 3.0) / 2, abs=1e-15)


def test_zero_firing_falls_back_to_nearest_rule():
    rules = (
        TskRule((Trapezoid(0, 1, 2, 3),), (0.0,), 1.0),
        TskRule((Trapezoid(10, 11, 12, 13),), (0.0,), 7.0),
    )
    model = TskModel(rules, ("x",))
    y, _, norm, dead = infer(model, [20.0])
    assert dead
    assert y == 7.0
    assert norm.tolist() == [0.0, 1.0]


def _random_model(rng, n_rules, dims):
    rules = []
    for _ in range(n_rules):
        ants = tuple(Gaussian(float(rng.uniform(-5, 5)), float(rng.uniform(0.5, 3))) for _ in range(dims))
        rules.append(TskRule(ants, tuple(float(w) for w in rng.normal(size=dims)), float(rng.normal())))
    return TskModel(tuple(rules), tuple(f"x{j}" for j in range(dims)))


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n_rules=st.integers(1, 6), dims=st.integers(1, 3))
def test_output_is_convex_combination(seed, n_rules, dims):
    rng = np.random.default_rng(seed)
    model = _random_model(rng, n_rules, dims)
    X = rng.uniform(-6, 6, size=(20, dims))
    res = forward(model, X)
    live = ~res.zero_firing
    f = res.consequents[live]
    span = np.abs(f).max(axis=1) + 1.0
    assert np.all(res.y[live] >= f.min(axis=1) - 1e-12 * span)
    assert np.all(res.y[live] <= f.max(axis=1) + 1e-12 * span)
    assert np.allclose(res.normalized.sum(axis=1), 1.0, atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n_rules=st.integers(2, 6))
def test_rule_order_does_not_change_output_bits(seed, n_rules):
    rng = np.random.default_rng(seed)
    model = _random_model(rng, n_rules, 2)
    perm = rng.permutation(n_rules)
    shuffled = TskModel(tuple(model.rules[i] for i in perm), model.input_names)
    X = rng.uniform(-6, 6, size=(25, 2))
    assert np.array_equal(forward(model, X).y, forward(shuffled, X).y)


def test_grid_partition_two_mfs_cover_endpoints():
    (mfs,) = grid_partition([(0.0, 10.0)], 2)
    first, second = mfs
    assert first.b == 0.0
    assert second.c == 10.0
    assert eval_mf(first, 0.0) == 1.0
    assert eval_mf(second, 10.0) == 1.0


def test_grid_partition_plateau_centres_equally_spaced():
    (mfs,) = grid_partition([(0.0, 100.0)], 5)
    centres = np.array([0.5 * (m.b + m.c) for m in mfs])
    # Construction: plateau i spans [i*s, i*s + s/2] with s = range / (m - 1/2).
    s = 100.0 / 4.5
    np.testing.assert_allclose(np.diff(centres), s, rtol=1e-12)
    np.testing.assert_allclose(centres, s / 4 + s * np.arange(5), rtol=1e-12)
    assert mfs[0].b == 0.0 and mfs[-1].c == 100.0


@given(lo=st.floats(-1e3, 1e3), width=st.floats(1e-2, 1e3), m=st.integers(2, 7), t=st.floats(0, 1))
def test_grid_partition_coverage_floor(lo, width, m, t):
    (mfs,) = grid_partition([(lo, lo + width)], m)
    x = lo + t * width
    total = sum(eval_mf(mf, x) for mf in mfs)
    assert total >= GRID_COVERAGE_FLOOR - 1e-9


def test_grid_partition_rejects_degenerate_range():
    with pytest.raises(ValueError, match="degenerate"):
        grid_partition([(1.0, 1.0)], 3)
    with pytest.raises(ValueError):
        grid_partition([(0.0, 1.0)], 1)


def test_grid_model_rule_counts():
    assert grid_model([(0, 100)], 5, ["t"]).n_rules == 5
    assert grid_model([(0, 1), (0, 1)], 3, ["a", "b"]).n_rules == 9


@given(x=st.floats(-50, 150))
def test_grid_model_zero_consequents_output_zero(x):
    model = grid_model([(0.0, 100.0)], 5, ["t"])
    assert infer(model, [x])[0] == 0.0


def test_json_round_trip_is_lossless():
    rng = np.random.default_rng(3)
    model = _random_model(rng, 4, 2)
    rules = list(model.rules)
    rules[0] = TskRule((Trapezoid(-1.1, 0.3, 0.30000000000000004, 2.0), Gaussian(1 / 3, 2 / 7)), (1 / 9, -2 / 3), math.pi)
    model = TskModel(tuple(rules), model.input_names)
    back = TskModel.from_json(model.to_json())
    assert back == model
    X = rng.uniform(-6, 6, size=(50, 2))
    assert np.array_equal(forward(model, X).y, forward(back, X).y)
    doc = json.loads(model.to_json())
    assert doc["rules"][0]["antecedents"][0]["kind"] == "trapezoid"


def test_model_validation():
    with pytest.raises(ValueError):
        TskModel((), ("x",))
    with pytest.raises(ValueError):
        TskModel((TskRule((Gaussian(0, 1),), (1.0,), 0.0),), ("x", "y"))
    with pytest.raises(ValueError, match="product"):
        TskModel((TskRule((Gaussian(0, 1),), (1.0,), 0.0),), ("x",), t_norm="min")
