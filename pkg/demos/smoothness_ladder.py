#!/usr/bin/env python3
"""The smoothness knob, S = -1 through S = 2.

One wiggly feature, four fits. The setting S controls which polynomial
degrees may carry a jump at a knot: an update of degree d joins pieces with
continuous derivatives up to order d-1, so forbidding split updates of degree
<= S leaves every retained update continuous through order S. The fitted
curve is then C^S by construction, not by penalty.

The script measures the largest discontinuity of f, f', f'' across all
interior knots after each fit. Entries above the S diagonal are genuine
jumps; entries at or below it sit at floating-point level.

The target is deliberately wiggly, which also exposes the honest cost of
the guarantee: smoother update families give the booster fewer admissible
moves per iteration, so at a fixed budget the strict fits trail the loose
ones on raw error. Nothing is lost in expressiveness (piecewise cubics
approximate this curve to ~1e-4 at the knot spacing used); the price is
paid in convergence speed.
"""

import numpy as np

from polygam import (
    ConstraintSpec,
    Dataset,
    TrainConfig,
    knot_gaps,
    loss_eval,
    predict,
    train,
)

rng = np.random.default_rng(21)
N = 3000
x = rng.uniform(-2.5, 2.5, N)
y = np.sin(3.0 * x) * np.exp(-0.2 * x * x) + rng.normal(scale=0.15, size=N)

ds = Dataset(
    X=x[:, None],
    y=y,
    feature_names=["x"],
    kinds=["numeric"],
    task="regression",
    n_outputs=1,
)

holdout = rng.uniform(-2.5, 2.5, 1000)
holdout_y = np.sin(3.0 * holdout) * np.exp(-0.2 * holdout * holdout)

cfg = TrainConfig(
    learning_rate=0.2,
    max_iterations=6000,
    early_stopping_patience=0,
    validation_fraction=0.0,
)

print(f"{'S':>3} {'max |gap f|':>12} {'max |gap f_p|':>14} {'max |gap f_pp|':>15} {'holdout MSE':>12}")
for s in (-1, 0, 1, 2):
    spec = ConstraintSpec.default(ds, smoothness=s, max_degree=3)
    res = train(ds, constraints=spec, config=cfg)
    gaps = []
    for order in range(3):
        g = np.abs(knot_gaps(res.store, 0, 0, order))
        gaps.append(float(g.max()) if g.size else 0.0)
    mse = loss_eval("regression", holdout_y, predict(res.store, holdout[:, None]))
    print(f"{s:3d} {gaps[0]:12.2e} {gaps[1]:14.2e} {gaps[2]:15.2e} {mse:12.5f}")

print()
print("read each row against its S: gaps for orders <= S sit at 1e-14 or")
print("below, the orders above are free to jump and do. Holdout error climbs")
print("with S at this fixed budget; run longer and the strict fits close in.")
