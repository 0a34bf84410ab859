"""Independent oracles for the test suites.

Everything here is written for clarity over speed and is deliberately kept off
the production code paths: nothing in the library imports this module. Tests
compare fast-path results against these brute-force references.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = [
    "brute_force_stump",
    "finite_diff_grad",
    "finite_diff_second",
    "tree_list_eval",
]


def _leaf_value(sg: float, sh: float, l1: float, l2: float) -> float:
    # same closed form the booster uses: soft-threshold on the gradient sum,
    # ridge term on the hessian sum, denominator floored away from zero
    mag = max(abs(sg) - l1, 0.0)
    num = -math.copysign(mag, sg) if mag > 0.0 else 0.0
    den = max(sh + l2, 1e-12)
    return num / den


def brute_force_stump(
    x: np.ndarray,
    g: np.ndarray,
    h: np.ndarray,
    thresholds: np.ndarray,
    l1: float = 0.0,
    l2: float = 0.0,
    min_leaf: int = 1,
):
    """Exhaustive degree-0 stump search.

    For every threshold u the samples split into {x < u} and {x >= u}, each
    side's leaf value is the closed-form Newton step, and the quadratic model
    loss  sum_sides (gamma*sum_g + 0.5*gamma^2*sum_h)  is evaluated directly.
    Side sums use math.fsum, so the result is independent of sample order.
    Returns (threshold, gamma_left, gamma_right, model_loss) for the argmin,
    ties broken toward the lowest threshold, or None when no threshold leaves
    min_leaf samples on both sides.
    """
    g = np.asarray(g, dtype=float)
    h = np.asarray(h, dtype=float)
    x = np.asarray(x, dtype=float)
    best = None
    for u in sorted(np.asarray(thresholds, dtype=float).tolist()):
        left = x < u
        right = ~left
        if int(left.sum()) < min_leaf or int(right.sum()) < min_leaf:
            continue
        loss = 0.0
        gammas = []
        for side in (left, right):
            sg = math.fsum(g[side])
            sh = math.fsum(h[side])
            gamma = _leaf_value(sg, sh, l1, l2)
            gammas.append(gamma)
            loss += gamma * sg + 0.5 * gamma * gamma * sh
        if best is None or loss < best[3]:
            best = (float(u), gammas[0], gammas[1], loss)
    return best


def finite_diff_grad(fn, x: np.ndarray, delta: float = 1e-4) -> np.ndarray:
    """Central-difference gradient of a scalar function, one coordinate at a time."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    for i in range(x.size):
        hi = x.copy()
        lo = x.copy()
        hi.flat[i] += delta
        lo.flat[i] -= delta
        out.flat[i] = (fn(hi) - fn(lo)) / (2.0 * delta)
    return out


def finite_diff_second(fn, x: np.ndarray, delta: float = 1e-4) -> np.ndarray:
    """Central second difference per coordinate (diagonal of the Hessian)."""
    x = np.asarray(x, dtype=float)
    mid = fn(x)
    out = np.empty_like(x)
    for i in range(x.size):
        hi = x.copy()
        lo = x.copy()
        hi.flat[i] += delta
        lo.flat[i] -= delta
        out.flat[i] = (fn(hi) - 2.0 * mid + fn(lo)) / (delta * delta)
    return out


def tree_list_eval(
    X: np.ndarray,
    feature_names: list,
    intercepts: np.ndarray,
    records: list,
    learning_rate: float,
    x_ref: list,
) -> np.ndarray:
    """Evaluate a boosted model as the literal sum of its logged tree updates.

    Takes plain dicts in the training-log schema, so it shares no code with
    the parameter store. Each split record contributes
    gamma_side * (x - threshold)^degree on its side of the threshold; each
    global record contributes gamma * (x - x_ref[k])^degree everywhere.
    """
    X = np.asarray(X, dtype=float)
    intercepts = np.asarray(intercepts, dtype=float)
    F = np.tile(intercepts, (X.shape[0], 1))
    for rec in records:
        k = feature_names.index(rec["feature"])
        xk = X[:, k]
        i = int(rec["output"])
        d = int(rec["degree"])
        if rec["kind"] == "global":
            F[:, i] += learning_rate * rec["gamma_left"] * (xk - x_ref[k]) ** d
        else:
            u = rec["threshold"]
            gamma = np.where(xk < u, rec["gamma_left"], rec["gamma_right"])
            F[:, i] += learning_rate * gamma * (xk - u) ** d
    return F
