"""Parameter store: evaluation, update folding, masking, knots, serialization."""

import json

import numpy as np
import pytest

from polygam.data import BinLayout, FeatureBins
from polygam.errors import ConfigError, DataError
from polygam.losses import link_apply
from polygam.model import (
    ConstraintSpec,
    FeatureConstraint,
    ParameterStore,
    accumulate_global,
    accumulate_update,
    dumps_model,
    evaluate_derivative,
    evaluate_shape,
    knot_gaps,
    load_model,
    predict,
    save_model,
    zero_init,
)

from conftest import layout_for, make_dataset, single_feature_store


# ---------------------------------------------------------------------------
# constraints


def test_constraint_defaults_are_valid():
    assert FeatureConstraint().validate("x") == []


def test_constraint_smoothness_bound():
    errs = FeatureConstraint(smoothness=2, max_degree=2).validate("x")
    assert any("S <= D-1" in e for e in errs)


def test_constraint_curvature_needs_continuity_and_degree():
    errs = FeatureConstraint(curvature=1).validate("x")
    assert any("curvature" in e for e in errs)
    errs = FeatureConstraint(curvature=1, smoothness=0, max_degree=1).validate("x")
    assert errs
    assert FeatureConstraint(curvature=1, smoothness=0, max_degree=2).validate("x") == []


def test_constraint_bad_signs():
    assert FeatureConstraint(monotone=2).validate("x")
    assert FeatureConstraint(curvature=-3, smoothness=0, max_degree=2).validate("x")


def test_default_spec_outputs_for_builds_mask():
    rng = np.random.default_rng(0)
    ds = make_dataset(rng.normal(size=(30, 3)), rng.integers(0, 3, 30), task="multiclass")
    spec = ConstraintSpec.default(ds, outputs_for={"x1": [2]})
    assert spec.allow_mask[:, 0].all() and spec.allow_mask[:, 2].all()
    assert spec.allow_mask[:, 1].tolist() == [False, False, True]


def test_default_spec_unknown_feature_name():
    rng = np.random.default_rng(0)
    ds = make_dataset(rng.normal(size=(30, 2)), rng.normal(size=30))
    with pytest.raises(ConfigError):
        ConstraintSpec.default(ds, outputs_for={"nope": [0]})


def test_default_spec_categorical_forced_to_steps():
    rng = np.random.default_rng(1)
    X = np.column_stack([rng.normal(size=40), rng.integers(0, 2, 40)])
    ds = make_dataset(X, rng.normal(size=40), kinds=["numeric", "categorical"])
    spec = ConstraintSpec.default(ds, smoothness=2, max_degree=3)
    assert spec.features[0].smoothness == 2
    assert spec.features[1].max_degree == 0 and spec.features[1].smoothness == -1


def test_multi_output_constrained_feature_warns():
    rng = np.random.default_rng(2)
    ds = make_dataset(rng.normal(size=(60, 1)), rng.integers(0, 3, 60), task="multiclass")
    spec = ConstraintSpec.default(
        ds, overrides={"x0": FeatureConstraint(monotone=1)}
    )
    with pytest.warns(UserWarning, match="multiple"):
        spec.validate(ds.feature_names, ds.n_outputs)


# ---------------------------------------------------------------------------
# evaluation


def test_zero_store_evaluates_to_zero():
    store = single_feature_store([0.0], [0.0], -1.0, 1.0)
    for x in (-5.0, 0.0, 0.25, 7.0):
        assert evaluate_shape(store, 0, 0, x) == 0.0
        assert evaluate_derivative(store, 0, 0, x, 1) == 0.0


def test_single_bin_linear_plus_step():
    store = single_feature_store([], [], 0.0, 5.0)
    store.params[0][0].step_values[:] = 1.0
    store.params[0][0].poly_coeffs[0, 1] = 2.0
    assert evaluate_shape(store, 0, 0, 3.0) == 7.0


def test_derivative_of_quadratic_piece():
    store = single_feature_store([], [], 0.0, 5.0)
    store.params[0][0].poly_coeffs[0, 2] = 1.0
    assert evaluate_derivative(store, 0, 0, 3.0, 1) == 6.0


def test_second_derivative_of_cubic_piece():
    store = single_feature_store([], [], 0.0, 5.0)
    store.params[0][0].poly_coeffs[0, 3] = 2.0
    assert evaluate_derivative(store, 0, 0, 1.0, 2) == 12.0


def test_derivative_rejects_other_orders():
    store = single_feature_store([], [], 0.0, 1.0)
    with pytest.raises(ValueError):
        evaluate_derivative(store, 0, 0, 0.5, 3)


def test_derivative_matches_finite_differences_off_knots():
    rng = np.random.default_rng(3)
    store = single_feature_store([1.0, 2.0, 3.0], [2.0], 0.0, 4.0)
    store.params[0][0].poly_coeffs[:] = rng.normal(size=(2, 4))
    for _ in range(100):
        x = float(rng.uniform(0.05, 3.95))
        if min(abs(x - e) for e in (1.0, 2.0, 3.0)) < 0.02:
            continue
        d = 1e-5
        fd1 = (evaluate_shape(store, 0, 0, x + d) - evaluate_shape(store, 0, 0, x - d)) / (2 * d)
        an1 = evaluate_derivative(store, 0, 0, x, 1)
        assert abs(fd1 - an1) <= 1e-6 * max(1.0, abs(an1))


def test_evaluation_total_over_reals():
    store = single_feature_store([0.0, 1.0], [1.0], -1.0, 2.0)
    store.params[0][0].poly_coeffs[:] = 0.5
    store.params[0][0].step_values[:] = -0.25
    xs = np.array([-1e12, -1.0, 0.0, 0.5, 1.0, 2.0, 1e12])
    vals = evaluate_shape(store, 0, 0, xs)
    assert np.isfinite(vals).all()


# ---------------------------------------------------------------------------
# update folding


def test_degree0_update_shifts_step_layer():
    store = single_feature_store([1.0, 2.0], [2.0], 0.0, 3.0)
    accumulate_update(store, 0, 0, 0, 2.0, gamma_left=1.0, gamma_right=3.0, learning_rate=1.0)
    assert store.params[0][0].step_values.tolist() == [1.0, 1.0, 3.0]


def test_degree0_threshold_must_be_fine_edge():
    store = single_feature_store([1.0, 2.0], [2.0], 0.0, 3.0)
    with pytest.raises(ValueError):
        accumulate_update(store, 0, 0, 0, 1.5, 1.0, 1.0, 1.0)


def test_degree1_update_right_side_local_coeffs():
    store = single_feature_store([2.0], [2.0], 2.0, 4.0)
    accumulate_update(store, 0, 0, 1, 2.0, gamma_left=0.0, gamma_right=1.0, learning_rate=1.0)
    right = store.params[0][0].poly_coeffs[1]
    assert right.tolist() == [0.0, 1.0, 0.0, 0.0]
    # both one-sided limits at the split are zero
    assert evaluate_shape(store, 0, 0, 2.0) == 0.0
    assert evaluate_shape(store, 0, 0, 2.0 - 1e-12) == 0.0


def test_degree2_expansion_matches_pointwise_monomial():
    store = single_feature_store([0.0], [0.0], -3.0, 3.0)
    accumulate_update(store, 0, 0, 2, 0.0, gamma_left=1.0, gamma_right=0.0, learning_rate=1.0)
    # left piece holds (x-0)^2 expanded at lower edge -3: t^2 - 6t + 9
    assert store.params[0][0].poly_coeffs[0].tolist() == [9.0, -6.0, 1.0, 0.0]
    rng = np.random.default_rng(4)
    for x in rng.uniform(-3.0, 3.0, size=50):
        want = x * x if x < 0.0 else 0.0
        assert evaluate_shape(store, 0, 0, float(x)) == pytest.approx(want, abs=1e-12)


def test_zero_gammas_leave_store_unchanged():
    store = single_feature_store([1.0], [1.0], 0.0, 2.0)
    before = dumps_model(store)
    accumulate_update(store, 0, 0, 1, 1.0, 0.0, 0.0, 0.5)
    assert dumps_model(store) == before


def test_degree1_threshold_must_be_coarse_edge():
    store = single_feature_store([1.0, 2.0], [2.0], 0.0, 3.0)
    with pytest.raises(ValueError):
        accumulate_update(store, 0, 0, 1, 1.0, 1.0, 1.0, 1.0)  # fine-only edge


def test_global_degree0_shifts_every_step_value():
    store = single_feature_store([1.0, 2.0], [2.0], 0.0, 3.0)
    accumulate_global(store, 0, 0, 0, gamma=5.0, learning_rate=0.1)
    assert store.params[0][0].step_values.tolist() == [0.5, 0.5, 0.5]


def test_global_slope_raises_f_by_twenty_over_ten():
    store = single_feature_store([5.0], [5.0], 0.0, 10.0)
    before = evaluate_shape(store, 0, 0, 10.0) - evaluate_shape(store, 0, 0, 0.0)
    accumulate_global(store, 0, 0, 1, gamma=2.0, learning_rate=1.0)
    after = evaluate_shape(store, 0, 0, 10.0) - evaluate_shape(store, 0, 0, 0.0)
    assert after - before == pytest.approx(20.0, abs=1e-12)


def test_global_zero_gamma_noop():
    store = single_feature_store([1.0], [1.0], 0.0, 2.0)
    before = dumps_model(store)
    accumulate_global(store, 0, 0, 2, 0.0, 0.1)
    assert dumps_model(store) == before


def test_global_cubic_matches_monomial_pointwise():
    store = single_feature_store([1.0, 2.0], [1.0, 2.0], -1.0, 3.0)
    accumulate_global(store, 0, 0, 3, gamma=0.7, learning_rate=0.5)
    rng = np.random.default_rng(5)
    for x in rng.uniform(-1.0, 3.0, size=50):
        want = 0.5 * 0.7 * (x - (-1.0)) ** 3
        assert evaluate_shape(store, 0, 0, float(x)) == pytest.approx(want, rel=1e-13)


# ---------------------------------------------------------------------------
# prediction and masking


def test_zero_model_regression_predicts_zero():
    store = single_feature_store([0.0], [0.0], -1.0, 1.0)
    F = predict(store, np.array([[0.3], [0.9]]))
    assert np.array_equal(F, np.zeros((2, 1)))


def test_zero_model_multiclass_uniform_probabilities():
    store = single_feature_store([0.0], [0.0], -1.0, 1.0, n_outputs=3, task="multiclass")
    F = predict(store, np.array([[0.5]]))
    p = link_apply("multiclass", F)
    assert p[0].tolist() == [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]


def test_masked_feature_cannot_touch_output():
    fb0 = FeatureBins(np.array([0.0]), np.array([0.0]), -1.0, 1.0)
    fb1 = FeatureBins(np.array([0.0]), np.array([0.0]), -1.0, 1.0)
    layout = BinLayout(features=[fb0, fb1])
    mask = np.array([[True, False], [True, True]])
    spec = ConstraintSpec(
        features=[FeatureConstraint(), FeatureConstraint()], allow_mask=mask
    )
    store = zero_init(layout, "multiclass", 2, ["a", "b"], spec)
    store.params[0][1].step_values[:] = 99.0  # must be ignored by the mask
    store.params[1][1].step_values[:] = 1.0
    base = predict(store, np.array([[0.2, 0.2]]))
    bumped = predict(store, np.array([[0.2, 0.9]]))
    assert base[0, 0] == bumped[0, 0]
    assert base[0, 1] == bumped[0, 1]  # same bin either way
    assert base[0, 0] == 0.0


def test_predict_rejects_wrong_width():
    store = single_feature_store([0.0], [0.0], -1.0, 1.0)
    with pytest.raises(DataError):
        predict(store, np.zeros((3, 2)))


# ---------------------------------------------------------------------------
# knot gaps


def test_knot_gaps_flag_step_discontinuity():
    store = single_feature_store([1.0, 2.0], [2.0], 0.0, 3.0)
    accumulate_update(store, 0, 0, 0, 1.0, 0.0, 2.0, 1.0)
    gaps = knot_gaps(store, 0, 0, order=0)
    assert gaps.tolist() == [2.0, 0.0]


def test_knot_gaps_zero_for_global_polynomial():
    store = single_feature_store([1.0, 2.0], [1.0, 2.0], 0.0, 3.0)
    accumulate_global(store, 0, 0, 3, gamma=1.3, learning_rate=1.0)
    for order in (0, 1, 2):
        assert np.abs(knot_gaps(store, 0, 0, order)).max() <= 1e-12


def test_knot_gaps_detect_slope_break():
    store = single_feature_store([1.0], [1.0], 0.0, 2.0)
    accumulate_update(store, 0, 0, 1, 1.0, gamma_left=0.0, gamma_right=1.0, learning_rate=1.0)
    assert abs(knot_gaps(store, 0, 0, 0)[0]) <= 1e-15
    assert knot_gaps(store, 0, 0, 1)[0] == 1.0


# ---------------------------------------------------------------------------
# serialization


def random_trained_store(seed=6):
    rng = np.random.default_rng(seed)
    store = single_feature_store([0.5, 1.0, 1.5], [1.0], 0.0, 2.0)
    store.intercepts[0] = rng.normal()
    store.params[0][0].step_values[:] = rng.normal(size=4)
    store.params[0][0].poly_coeffs[:] = rng.normal(size=(2, 4))
    return store


def test_save_load_round_trip_exact(tmp_path):
    store = random_trained_store()
    path = tmp_path / "m.json"
    save_model(store, path)
    loaded = load_model(path)
    rng = np.random.default_rng(7)
    X = rng.uniform(-1.0, 3.0, size=(100, 1))
    assert np.array_equal(predict(store, X), predict(loaded, X))


def test_save_load_save_byte_identical(tmp_path):
    store = random_trained_store()
    p1, p2 = tmp_path / "a.json", tmp_path / "b.json"
    save_model(store, p1)
    save_model(load_model(p1), p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_load_rejects_unknown_version(tmp_path):
    store = random_trained_store()
    path = tmp_path / "m.json"
    save_model(store, path)
    doc = json.loads(path.read_text())
    doc["format_version"] = "999"
    path.write_text(json.dumps(doc))
    with pytest.raises(DataError, match="version"):
        load_model(path)


def test_load_rejects_corrupt_numbers(tmp_path):
    store = random_trained_store()
    path = tmp_path / "m.json"
    save_model(store, path)
    txt = path.read_text().replace(":", ":", 1)
    path.write_text(txt[: len(txt) // 2])
    with pytest.raises(Exception):
        load_model(path)


def test_hand_written_minimal_model(tmp_path):
    doc = {
        "format_version": "1",
        "task": "regression",
        "outputs": 1,
        "target_column": "y",
        "features": [
            {
                "name": "x0",
                "kind": "numeric",
                "fine_edges": [],
                "coarse_edges": [],
                "x_min": 0.0,
                "x_max": 4.0,
                "S": -1,
                "D": 3,
                "monotone": 0,
                "curvature": 0,
            }
        ],
        "allow_mask": [[True]],
        "intercepts": [0.0],
        "params": [[{"step_values": [0.0], "poly_coeffs": [[0.0, 1.0, 0.0, 0.0]]}]],
        "se_accumulators": None,
    }
    path = tmp_path / "m.json"
    path.write_text(json.dumps(doc))
    store = load_model(path)
    f2 = evaluate_shape(store, 0, 0, 2.0)
    f1 = evaluate_shape(store, 0, 0, 1.0)
    assert f2 - f1 == 1.0


def test_serialized_numbers_survive_parsing():
    store = random_trained_store()
    doc = json.loads(dumps_model(store))
    got = np.array(doc["params"][0][0]["poly_coeffs"])
    assert np.array_equal(got, store.params[0][0].poly_coeffs)
