"""Parameter storage, evaluation, and serialization for additive polynomial models.

Each (output, feature) shape function is stored in two layers:

* a step layer over the fine quantile grid (degree-0 terms), and
* one cubic polynomial per coarse piece, written in the local coordinate
  t = x - lower_edge(piece); the first piece's lower edge is the observed
  feature minimum, which is also the reference point of global terms.

Boosting updates arrive as one-sided monomials gamma*(x - u)^d and are folded
into the affected pieces by exact binomial expansion, so the stored form and
the sum-of-trees form agree to float rounding.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .data import BinLayout, CATEGORICAL, Dataset, FeatureBins
from .errors import ConfigError, DataError

FORMAT_VERSION = "1"
MAX_DEGREE = 3


@dataclass
class FeatureConstraint:
    """Shape rules for one feature.

    smoothness S: highest degree whose splits are forbidden (-1 = none); those
    degrees get one global parameter each, making the shape C^S at the knots.
    max_degree D: highest monomial degree. monotone/curvature are sign flags
    (+1, -1, or 0 = unconstrained) on f' and f'' over the observed range.
    """

    smoothness: int = -1
    max_degree: int = MAX_DEGREE
    monotone: int = 0
    curvature: int = 0

    def validate(self, name: str) -> list[str]:
        errs = []
        if self.max_degree not in (0, 1, 2, 3):
            errs.append(f"feature {name!r}: D must be in 0..3, got {self.max_degree}")
        if self.smoothness not in (-1, 0, 1, 2):
            errs.append(f"feature {name!r}: S must be in -1..2, got {self.smoothness}")
        if self.smoothness > self.max_degree - 1:
            errs.append(
                f"feature {name!r}: S <= D-1 required, got S={self.smoothness} D={self.max_degree}"
            )
        if self.monotone not in (-1, 0, 1):
            errs.append(f"feature {name!r}: monotone sign must be -1, 0, or +1")
        if self.curvature not in (-1, 0, 1):
            errs.append(f"feature {name!r}: curvature sign must be -1, 0, or +1")
        if self.curvature != 0 and (self.smoothness < 0 or self.max_degree < 2):
            errs.append(
                f"feature {name!r}: curvature constraint requires S >= 0 and D >= 2"
            )
        return errs


@dataclass
class ConstraintSpec:
    """Per-feature constraints plus the (output, feature) allow-mask."""

    features: list[FeatureConstraint]
    allow_mask: np.ndarray  # (J, K) bool

    @classmethod
    def default(
        cls,
        dataset: Dataset,
        smoothness: int = -1,
        max_degree: int = MAX_DEGREE,
        overrides: dict[str, FeatureConstraint] | None = None,
        outputs_for: dict[str, list[int]] | None = None,
    ) -> "ConstraintSpec":
        """Build a spec with uniform defaults, categorical overrides, and
        optional per-feature settings / output restrictions by name."""
        overrides = overrides or {}
        outputs_for = outputs_for or {}
        feats = []
        for name, kind in zip(dataset.feature_names, dataset.kinds):
            fc = overrides.get(name)
            if fc is None:
                fc = FeatureConstraint(smoothness=smoothness, max_degree=max_degree)
            if kind == CATEGORICAL:
                # step functions only; knot continuity is meaningless between levels
                fc = FeatureConstraint(
                    smoothness=-1, max_degree=0, monotone=fc.monotone, curvature=0
                )
            feats.append(fc)
        mask = np.ones((dataset.n_outputs, dataset.n_features), dtype=bool)
        for name, outs in outputs_for.items():
            if name not in dataset.feature_names:
                raise ConfigError(f"constraint references unknown feature {name!r}")
            k = dataset.feature_names.index(name)
            mask[:, k] = False
            for i in outs:
                if not 0 <= i < dataset.n_outputs:
                    raise ConfigError(
                        f"feature {name!r}: output index {i} out of range 0..{dataset.n_outputs - 1}"
                    )
                mask[i, k] = True
        return cls(features=feats, allow_mask=mask)

    def validate(self, feature_names: list[str], n_outputs: int) -> None:
        """Raise ConfigError listing every problem at once."""
        errs = []
        if len(self.features) != len(feature_names):
            errs.append(
                f"constraint list has {len(self.features)} entries for "
                f"{len(feature_names)} features"
            )
        else:
            for name, fc in zip(feature_names, self.features):
                errs.extend(fc.validate(name))
        if self.allow_mask.shape != (n_outputs, len(feature_names)):
            errs.append(
                f"allow mask shape {self.allow_mask.shape} does not match "
                f"(outputs, features) = ({n_outputs}, {len(feature_names)})"
            )
        if errs:
            raise ConfigError("; ".join(errs))
        if n_outputs > 1:
            for k, (name, fc) in enumerate(zip(feature_names, self.features)):
                if (fc.monotone or fc.curvature) and int(self.allow_mask[:, k].sum()) > 1:
                    warnings.warn(
                        f"feature {name!r} is constrained but allowed in multiple "
                        "outputs; the constraint holds per shape function, not for "
                        "the output probabilities",
                        stacklevel=2,
                    )


@dataclass
class ShapeParams:
    """Parameters of one (output, feature) shape function."""

    step_values: np.ndarray  # (n_fine_bins,)
    poly_coeffs: np.ndarray  # (n_coarse_bins, 4) in local coordinates

    def copy(self) -> "ShapeParams":
        return ShapeParams(self.step_values.copy(), self.poly_coeffs.copy())


@dataclass
class ParameterStore:
    """All model parameters plus the layout needed to evaluate them."""

    layout: BinLayout
    task: str
    n_outputs: int
    feature_names: list[str]
    constraints: ConstraintSpec
    intercepts: np.ndarray  # (J,)
    params: list[list[ShapeParams]]  # [output][feature]
    se_fine: list[list[np.ndarray | None]] = field(default_factory=list)
    se_coarse: list[list[np.ndarray | None]] = field(default_factory=list)
    target_name: str = "target"

    def copy(self) -> "ParameterStore":
        return ParameterStore(
            layout=self.layout,
            task=self.task,
            n_outputs=self.n_outputs,
            feature_names=self.feature_names,
            constraints=self.constraints,
            intercepts=self.intercepts.copy(),
            params=[[p.copy() for p in row] for row in self.params],
            se_fine=[[a.copy() if a is not None else None for a in row] for row in self.se_fine],
            se_coarse=[
                [a.copy() if a is not None else None for a in row] for row in self.se_coarse
            ],
            target_name=self.target_name,
        )

    @property
    def has_uncertainty(self) -> bool:
        return bool(self.se_fine)


def zero_init(
    layout: BinLayout,
    task: str,
    n_outputs: int,
    feature_names: list[str],
    constraints: ConstraintSpec,
    target_name: str = "target",
) -> ParameterStore:
    params = [
        [
            ShapeParams(
                step_values=np.zeros(layout[k].n_fine_bins),
                poly_coeffs=np.zeros((layout[k].n_coarse_bins, MAX_DEGREE + 1)),
            )
            for k in range(len(layout))
        ]
        for _ in range(n_outputs)
    ]
    return ParameterStore(
        layout=layout,
        task=task,
        n_outputs=n_outputs,
        feature_names=feature_names,
        constraints=constraints,
        intercepts=np.zeros(n_outputs),
        params=params,
        target_name=target_name,
    )


def _codes(x: np.ndarray, edges: np.ndarray) -> np.ndarray:
    """0-based bin index per value, right-open pieces."""
    return np.searchsorted(edges, x, side="right")


def evaluate_shape(store: ParameterStore, i: int, k: int, x) -> np.ndarray | float:
    """Shape-function value f_ik at x (scalar or vector)."""
    scalar = np.isscalar(x)
    xv = np.atleast_1d(np.asarray(x, dtype=float))
    fb = store.layout[k]
    sp = store.params[i][k]
    fcode = _codes(xv, fb.fine_edges)
    ccode = _codes(xv, fb.coarse_edges)
    lower = fb.coarse_lower_edges
    t = xv - lower[ccode]
    c = sp.poly_coeffs[ccode]
    val = sp.step_values[fcode] + ((c[:, 3] * t + c[:, 2]) * t + c[:, 1]) * t + c[:, 0]
    return float(val[0]) if scalar else val


def evaluate_derivative(store: ParameterStore, i: int, k: int, x, order: int):
    """First or second derivative of the shape function; right-hand value at knots.

    The step layer is piecewise constant, so only the polynomial layer
    contributes.
    """
    if order not in (1, 2):
        raise ValueError(f"order must be 1 or 2, got {order}")
    scalar = np.isscalar(x)
    xv = np.atleast_1d(np.asarray(x, dtype=float))
    fb = store.layout[k]
    sp = store.params[i][k]
    ccode = _codes(xv, fb.coarse_edges)
    t = xv - fb.coarse_lower_edges[ccode]
    c = sp.poly_coeffs[ccode]
    if order == 1:
        val = (3.0 * c[:, 3] * t + 2.0 * c[:, 2]) * t + c[:, 1]
    else:
        val = 6.0 * c[:, 3] * t + 2.0 * c[:, 2]
    return float(val[0]) if scalar else val


def accumulate_update(
    store: ParameterStore,
    i: int,
    k: int,
    d: int,
    threshold: float,
    gamma_left: float,
    gamma_right: float,
    learning_rate: float,
) -> None:
    """Fold one two-leaf monomial update into the stored form.

    Degree 0 updates add constants to the fine step layer on each side of the
    threshold (a fine-grid edge). Degree >= 1 updates add gamma*(x-u)^d per
    side (u a coarse-grid edge), expanded into each affected piece's local
    coordinates: (x-u)^d = sum_m C(d,m) (lo_p - u)^(d-m) t^m.
    """
    fb = store.layout[k]
    sp = store.params[i][k]
    if d == 0:
        j = int(np.searchsorted(fb.fine_edges, threshold))
        if j >= fb.fine_edges.size or fb.fine_edges[j] != threshold:
            raise ValueError(f"threshold {threshold!r} is not a fine-grid edge")
        sp.step_values[: j + 1] += learning_rate * gamma_left
        sp.step_values[j + 1 :] += learning_rate * gamma_right
        return
    j = int(np.searchsorted(fb.coarse_edges, threshold))
    if j >= fb.coarse_edges.size or fb.coarse_edges[j] != threshold:
        raise ValueError(f"threshold {threshold!r} is not a coarse-grid edge")
    lower = fb.coarse_lower_edges
    for pieces, gamma in ((slice(0, j + 1), gamma_left), (slice(j + 1, None), gamma_right)):
        if gamma == 0.0:
            continue
        delta = lower[pieces] - threshold
        for m in range(d + 1):
            sp.poly_coeffs[pieces, m] += (
                learning_rate * gamma * math.comb(d, m) * delta ** (d - m)
            )


def accumulate_global(
    store: ParameterStore, i: int, k: int, d: int, gamma: float, learning_rate: float
) -> None:
    """Fold a global monomial gamma*(x - x_ref)^d into the stored form.

    x_ref is the observed feature minimum. d = 0 adds a constant to every fine
    step value; d >= 1 expands into every coarse piece.
    """
    fb = store.layout[k]
    sp = store.params[i][k]
    if d == 0:
        sp.step_values += learning_rate * gamma
        return
    delta = fb.coarse_lower_edges - fb.x_min
    for m in range(d + 1):
        sp.poly_coeffs[:, m] += learning_rate * gamma * math.comb(d, m) * delta ** (d - m)


def predict(store: ParameterStore, X: np.ndarray) -> np.ndarray:
    """Raw scores F, shape (N, J). Masked (output, feature) pairs are skipped
    outright, so their columns cannot influence the output even in principle."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != len(store.feature_names):
        raise DataError(
            f"expected feature matrix with {len(store.feature_names)} columns, "
            f"got shape {X.shape}"
        )
    n = X.shape[0]
    F = np.tile(store.intercepts, (n, 1))
    mask = store.constraints.allow_mask
    for k in range(X.shape[1]):
        if not mask[:, k].any():
            continue
        fb = store.layout[k]
        col = X[:, k]
        fcode = _codes(col, fb.fine_edges)
        ccode = _codes(col, fb.coarse_edges)
        t = col - fb.coarse_lower_edges[ccode]
        for i in range(store.n_outputs):
            if not mask[i, k]:
                continue
            sp = store.params[i][k]
            c = sp.poly_coeffs[ccode]
            F[:, i] += (
                sp.step_values[fcode]
                + ((c[:, 3] * t + c[:, 2]) * t + c[:, 1]) * t
                + c[:, 0]
            )
    return F


def knot_gaps(store: ParameterStore, i: int, k: int, order: int = 0) -> np.ndarray:
    """One-sided analytic gap (right minus left) at every fine-grid knot.

    order 0 includes the step layer; orders 1 and 2 are polynomial-only. Used
    by the smoothness tests: a C^S fit must show zero gaps up to order S.
    """
    fb = store.layout[k]
    sp = store.params[i][k]
    edges = fb.fine_edges
    if edges.size == 0:
        return np.empty(0)
    lower = fb.coarse_lower_edges
    # piece holding points just below the knot vs the piece at/above it
    p_right = _codes(edges, fb.coarse_edges)
    is_coarse = np.isin(edges, fb.coarse_edges)
    p_left = np.where(is_coarse, p_right - 1, p_right)

    def _one_sided(piece: np.ndarray) -> np.ndarray:
        t = edges - lower[piece]
        c = sp.poly_coeffs[piece]
        if order == 0:
            return ((c[:, 3] * t + c[:, 2]) * t + c[:, 1]) * t + c[:, 0]
        if order == 1:
            return (3.0 * c[:, 3] * t + 2.0 * c[:, 2]) * t + c[:, 1]
        return 6.0 * c[:, 3] * t + 2.0 * c[:, 2]

    gaps = _one_sided(p_right) - _one_sided(p_left)
    if order == 0:
        gaps = gaps + (sp.step_values[1:] - sp.step_values[:-1])
    return gaps


# ---------------------------------------------------------------------------
# serialization


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    return obj


def _dump(obj, out: list[str]) -> None:
    """Minimal JSON writer: floats via repr (shortest exact decimal)."""
    obj = _jsonable(obj)
    if obj is None:
        out.append("null")
    elif obj is True:
        out.append("true")
    elif obj is False:
        out.append("false")
    elif isinstance(obj, float):
        if not math.isfinite(obj):
            raise ValueError("non-finite value in model serialization")
        out.append(repr(obj))
    elif isinstance(obj, int):
        out.append(str(obj))
    elif isinstance(obj, str):
        out.append(json.dumps(obj))
    elif isinstance(obj, (list, tuple)):
        out.append("[")
        for n, item in enumerate(obj):
            if n:
                out.append(",")
            _dump(item, out)
        out.append("]")
    elif isinstance(obj, dict):
        out.append("{")
        for n, (key, val) in enumerate(obj.items()):
            if n:
                out.append(",")
            out.append(json.dumps(str(key)))
            out.append(":")
            _dump(val, out)
        out.append("}")
    else:
        raise TypeError(f"cannot serialize {type(obj)!r}")


def dumps_model(store: ParameterStore) -> str:
    feats = []
    for name, fb, fc in zip(store.feature_names, store.layout.features, store.constraints.features):
        feats.append(
            {
                "name": name,
                "kind": fb.kind,
                "fine_edges": fb.fine_edges,
                "coarse_edges": fb.coarse_edges,
                "x_min": fb.x_min,
                "x_max": fb.x_max,
                "S": fc.smoothness,
                "D": fc.max_degree,
                "monotone": fc.monotone,
                "curvature": fc.curvature,
            }
        )
    params = [
        [
            {"step_values": sp.step_values, "poly_coeffs": sp.poly_coeffs}
            for sp in row
        ]
        for row in store.params
    ]
    if store.has_uncertainty:
        se_acc = [
            [
                {
                    "fine": store.se_fine[i][k],
                    "coarse": store.se_coarse[i][k],
                }
                for k in range(len(store.feature_names))
            ]
            for i in range(store.n_outputs)
        ]
    else:
        se_acc = None
    doc = {
        "format_version": FORMAT_VERSION,
        "task": store.task,
        "outputs": store.n_outputs,
        "target_column": store.target_name,
        "features": feats,
        "allow_mask": store.constraints.allow_mask.astype(bool),
        "intercepts": store.intercepts,
        "params": params,
        "se_accumulators": se_acc,
    }
    out: list[str] = []
    _dump(doc, out)
    return "".join(out)


def save_model(store: ParameterStore, path) -> None:
    with open(path, "w") as fh:
        fh.write(dumps_model(store))
        fh.write("\n")


def load_model(path) -> ParameterStore:
    with open(path) as fh:
        doc = json.load(fh)
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise DataError(
            f"unsupported model format version {version!r}, expected {FORMAT_VERSION!r}"
        )
    feats = doc["features"]
    layout = BinLayout(
        features=[
            FeatureBins(
                fine_edges=np.asarray(f["fine_edges"], dtype=float),
                coarse_edges=np.asarray(f["coarse_edges"], dtype=float),
                x_min=float(f["x_min"]),
                x_max=float(f["x_max"]),
                kind=f["kind"],
            )
            for f in feats
        ]
    )
    constraints = ConstraintSpec(
        features=[
            FeatureConstraint(
                smoothness=int(f["S"]),
                max_degree=int(f["D"]),
                monotone=int(f["monotone"]),
                curvature=int(f["curvature"]),
            )
            for f in feats
        ],
        allow_mask=np.asarray(doc["allow_mask"], dtype=bool),
    )
    params = [
        [
            ShapeParams(
                step_values=np.asarray(sp["step_values"], dtype=float),
                poly_coeffs=np.asarray(sp["poly_coeffs"], dtype=float),
            )
            for sp in row
        ]
        for row in doc["params"]
    ]
    store = ParameterStore(
        layout=layout,
        task=doc["task"],
        n_outputs=int(doc["outputs"]),
        feature_names=[f["name"] for f in feats],
        constraints=constraints,
        intercepts=np.asarray(doc["intercepts"], dtype=float),
        params=params,
        target_name=doc.get("target_column", "target"),
    )
    se_acc = doc.get("se_accumulators")
    if se_acc is not None:
        store.se_fine = [
            [np.asarray(e["fine"], dtype=float) if e["fine"] is not None else None for e in row]
            for row in se_acc
        ]
        store.se_coarse = [
            [
                np.asarray(e["coarse"], dtype=float) if e["coarse"] is not None else None
                for e in row
            ]
            for row in se_acc
        ]
    return store
