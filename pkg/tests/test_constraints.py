"""Shape-constraint enforcement: sign feasibility at every stage of training."""

import numpy as np
import pytest

from polygam.booster import TrainConfig, train
from polygam.model import (
    ConstraintSpec,
    FeatureConstraint,
    evaluate_derivative,
    evaluate_shape,
)

from conftest import make_dataset

GRID = 2000
TOL = -1e-9


def fit(x, y, constraint, max_iterations=150, lr=0.1):
    ds = make_dataset(x, y)
    spec = ConstraintSpec.default(ds, overrides={"x0": constraint})
    cfg = TrainConfig(
        learning_rate=lr,
        max_iterations=max_iterations,
        early_stopping_patience=0,
        validation_fraction=0.0,
    )
    return train(ds, constraints=spec, config=cfg), ds


def grid_for(ds):
    return np.linspace(ds.X[:, 0].min(), ds.X[:, 0].max(), GRID)


def step_diffs(store):
    return np.diff(store.params[0][0].step_values)


def test_increasing_constraint_on_increasing_data_fits_and_holds():
    rng = np.random.default_rng(0)
    x = rng.uniform(0, 2, 400)
    y = 1.5 * x + rng.normal(scale=0.2, size=400)
    res, ds = fit(x, y, FeatureConstraint(monotone=1, smoothness=0, max_degree=2))
    g = grid_for(ds)
    assert evaluate_derivative(res.store, 0, 0, g, 1).min() >= TOL
    base = np.mean((y - y.mean()) ** 2)
    assert res.train_loss < 0.3 * base


def test_increasing_constraint_on_decreasing_data_collapses_flat():
    rng = np.random.default_rng(1)
    x = rng.uniform(0, 2, 400)
    y = -2.0 * x + rng.normal(scale=0.2, size=400)
    res, ds = fit(x, y, FeatureConstraint(monotone=1, smoothness=0, max_degree=2))
    g = grid_for(ds)
    fp = evaluate_derivative(res.store, 0, 0, g, 1)
    assert fp.min() >= TOL
    # anti-monotone signal: the constrained fit cannot move much
    f = evaluate_shape(res.store, 0, 0, g)
    assert f.max() - f.min() <= 0.5


def test_decreasing_constraint_step_layer():
    rng = np.random.default_rng(2)
    x = rng.uniform(0, 1, 300)
    y = np.exp(-3 * x) + rng.normal(scale=0.05, size=300)
    res, _ = fit(x, y, FeatureConstraint(monotone=-1, max_degree=0))
    assert step_diffs(res.store).max() <= -TOL


def test_convexity_constraint_holds_on_grid():
    rng = np.random.default_rng(3)
    x = rng.uniform(-1, 1, 500)
    y = 2 * x**2 + rng.normal(scale=0.1, size=500)
    res, ds = fit(x, y, FeatureConstraint(curvature=1, smoothness=0, max_degree=3))
    g = grid_for(ds)
    assert evaluate_derivative(res.store, 0, 0, g, 2).min() >= TOL
    base = np.mean((y - y.mean()) ** 2)
    assert res.train_loss < 0.3 * base


def test_concavity_constraint_on_convex_data_stays_feasible():
    rng = np.random.default_rng(4)
    x = rng.uniform(-1, 1, 400)
    y = 3 * x**2 + rng.normal(scale=0.1, size=400)
    res, ds = fit(x, y, FeatureConstraint(curvature=-1, smoothness=0, max_degree=2))
    g = grid_for(ds)
    assert (-evaluate_derivative(res.store, 0, 0, g, 2)).min() >= TOL


def test_combined_decreasing_convex_cost_curve():
    rng = np.random.default_rng(5)
    x = rng.uniform(0.0, 2.0, 600)
    y = 1.0 / (0.4 + x) + rng.normal(scale=0.05, size=600)
    res, ds = fit(
        x,
        y,
        FeatureConstraint(monotone=-1, curvature=1, smoothness=1, max_degree=3),
        max_iterations=200,
    )
    g = grid_for(ds)
    assert (-evaluate_derivative(res.store, 0, 0, g, 1)).min() >= TOL
    assert evaluate_derivative(res.store, 0, 0, g, 2).min() >= TOL


def test_constraints_hold_after_every_iteration():
    rng = np.random.default_rng(6)
    x = rng.uniform(0.0, 2.0, 300)
    y = np.exp(-x) + rng.normal(scale=0.05, size=300)
    ds = make_dataset(x, y)
    spec = ConstraintSpec.default(
        ds,
        overrides={
            "x0": FeatureConstraint(monotone=-1, curvature=1, smoothness=1, max_degree=3)
        },
    )
    cfg = TrainConfig(
        max_iterations=40,
        early_stopping_patience=0,
        validation_fraction=0.0,
        snapshot_every=10,
    )
    res = train(ds, constraints=spec, config=cfg)
    g = np.linspace(x.min(), x.max(), 500)
    for it in range(res.n_iterations + 1):
        state = res.replay_to(it)
        assert (-evaluate_derivative(state, 0, 0, g, 1)).min() >= TOL, f"iter {it}"
        assert evaluate_derivative(state, 0, 0, g, 2).min() >= TOL, f"iter {it}"


def test_monotone_binary_task_probability_direction():
    rng = np.random.default_rng(7)
    x = rng.uniform(-2, 2, 500)
    p = 1.0 / (1.0 + np.exp(-1.5 * x))
    y = (rng.uniform(size=500) < p).astype(int)
    ds = make_dataset(x, y, task="binary")
    spec = ConstraintSpec.default(
        ds, overrides={"x0": FeatureConstraint(monotone=1, smoothness=0, max_degree=2)}
    )
    cfg = TrainConfig(
        max_iterations=120, early_stopping_patience=0, validation_fraction=0.0
    )
    res = train(ds, constraints=spec, config=cfg)
    g = np.linspace(x.min(), x.max(), 1000)
    assert evaluate_derivative(res.store, 0, 0, g, 1).min() >= TOL
    f = evaluate_shape(res.store, 0, 0, g)
    assert f[-1] > f[0]  # signal actually learned, not clamped to zero


def test_unconstrained_feature_is_untouched_by_neighbor_constraint():
    rng = np.random.default_rng(8)
    X = rng.uniform(-1, 1, size=(400, 2))
    y = X[:, 0] ** 3 + 2 * X[:, 1] + rng.normal(scale=0.1, size=400)
    ds = make_dataset(X, y)
    spec = ConstraintSpec.default(
        ds,
        overrides={"x1": FeatureConstraint(monotone=1, smoothness=0, max_degree=2)},
    )
    cfg = TrainConfig(
        max_iterations=150, early_stopping_patience=0, validation_fraction=0.0
    )
    res = train(ds, constraints=spec, config=cfg)
    g = np.linspace(-1, 1, 500)
    # constrained neighbor holds; unconstrained x0 keeps its sign change
    assert evaluate_derivative(res.store, 0, 1, g, 1).min() >= TOL
    f0 = evaluate_shape(res.store, 0, 0, g)
    assert f0.max() > 0.05 and f0.min() < -0.05
