"""Second-order boosting of depth-1 polynomial trees.

Each iteration scores, per output, every admissible candidate update:

* a degree-0 split on the fine grid (only when S = -1),
* a degree-d split on the coarse grid for each d in (S, D],
* a global degree-d term for each d <= S (smoothness-protected degrees).

Split leaf values are Newton steps on derivative sums taken relative to the
split point, gamma = -soft_threshold(sum g*(x-u)^d, l1) / (sum h*(x-u)^2d + l2),
so both leaves vanish at the threshold and updates of degree >= 1 keep the
shape function continuous. Monotonicity and curvature clamp each candidate's
leaf values into a feasible interval before gains are compared.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .data import BinLayout, Dataset, FeatureBins, build_bin_layout, split_indices
from .errors import ConfigError, NumericError
from .losses import derivatives, loss_eval
from .model import (
    ConstraintSpec,
    FeatureConstraint,
    ParameterStore,
    accumulate_global,
    accumulate_update,
    zero_init,
)

H_FLOOR = 1e-12
FEAS_SLACK = 1e-10  # constraints enforced to >= -FEAS_SLACK; tests allow -1e-9


@dataclass
class TrainConfig:
    learning_rate: float = 0.1
    l1: float = 0.001
    l2: float = 0.01
    min_data_in_leaf: int = 10
    max_iterations: int = 25000
    early_stopping_patience: int = 100
    validation_fraction: float = 0.125
    seed: int = 0
    snapshot_every: int = 100

    def validate(self) -> None:
        errs = []
        if not 0.0 < self.learning_rate <= 1.0:
            errs.append(f"learning_rate must be in (0, 1], got {self.learning_rate}")
        if self.l1 < 0.0:
            errs.append(f"l1 must be >= 0, got {self.l1}")
        if self.l2 < 0.0:
            errs.append(f"l2 must be >= 0, got {self.l2}")
        if self.min_data_in_leaf < 1:
            errs.append(f"min_data_in_leaf must be >= 1, got {self.min_data_in_leaf}")
        if self.max_iterations < 0:
            errs.append(f"max_iterations must be >= 0, got {self.max_iterations}")
        if self.early_stopping_patience < 0:
            errs.append(f"early_stopping_patience must be >= 0")
        if not 0.0 <= self.validation_fraction < 1.0:
            errs.append(
                f"validation_fraction must be in [0, 1), got {self.validation_fraction}"
            )
        if self.snapshot_every < 1:
            errs.append(f"snapshot_every must be >= 1")
        if errs:
            raise ConfigError("; ".join(errs))


@dataclass
class SplitCandidate:
    output: int
    feature: int
    degree: int
    kind: str  # "split" | "global"
    threshold: float | None
    edge_index: int | None
    gamma_left: float
    gamma_right: float | None
    gain: float
    n_left: int
    n_right: int
    # derivative sums kept for pooling/rescoring
    sums: tuple = ()

    def sort_key(self):
        thr = self.threshold if self.threshold is not None else math.inf
        kind_rank = 0 if self.kind == "split" else 1
        return (-self.gain, self.feature, self.degree, thr, kind_rank)


@dataclass
class LogRecord:
    iteration: int
    output: int
    feature: str
    degree: int
    kind: str
    threshold: float | None
    gamma_left: float
    gamma_right: float | None
    gain: float
    train_loss: float
    valid_loss: float | None

    def to_json(self) -> str:
        return json.dumps(
            {
                "iteration": self.iteration,
                "output": self.output,
                "feature": self.feature,
                "degree": self.degree,
                "kind": self.kind,
                "threshold": self.threshold,
                "gamma_left": self.gamma_left,
                "gamma_right": self.gamma_right,
                "gain": self.gain,
                "train_loss": self.train_loss,
                "valid_loss": self.valid_loss,
            }
        )


@dataclass
class TrainResult:
    store: ParameterStore
    initial_store: ParameterStore
    log: list[LogRecord]
    best_iteration: int
    n_iterations: int
    train_loss: float
    valid_loss: float | None
    learning_rate: float = 0.1
    snapshots: list[tuple[int, ParameterStore]] = field(default_factory=list)

    def replay_to(self, iteration: int) -> ParameterStore:
        """Model state after `iteration` full iterations, reconstructed from
        the nearest snapshot plus log replay; bit-identical to training."""
        return replay(
            self.initial_store, self.log, iteration, self.snapshots, self.learning_rate
        )


def write_log(log: list[LogRecord], path) -> None:
    with open(path, "w") as fh:
        for rec in log:
            fh.write(rec.to_json())
            fh.write("\n")


# ---------------------------------------------------------------------------
# leaf values and gains


def leaf_value(sum_g, sum_h, l1: float = 0.0, l2: float = 0.0):
    """Regularized Newton step: -soft_threshold(sum_g, l1) / (sum_h + l2)."""
    sg = np.asarray(sum_g, dtype=float)
    sh = np.asarray(sum_h, dtype=float)
    mag = np.maximum(np.abs(sg) - l1, 0.0)
    den = np.maximum(sh + l2, H_FLOOR)
    out = -np.sign(sg) * mag / den
    return float(out) if out.ndim == 0 else out


def candidate_gain(gamma_left, sg_left, sh_left, gamma_right, sg_right, sh_right):
    """Predicted loss decrease of the quadratic model at the given leaf values."""
    return -(
        gamma_left * sg_left
        + 0.5 * gamma_left * gamma_left * sh_left
        + gamma_right * sg_right
        + 0.5 * gamma_right * gamma_right * sh_right
    )


def param_gradients(g: np.ndarray, h: np.ndarray, x: np.ndarray, threshold: float, d: int):
    """Reference split sums, computed directly per side (no prefix tricks):
    returns ((sum g*(x-u)^d left, right), (sum h*(x-u)^2d left, right))."""
    s = np.asarray(x, dtype=float) - threshold
    left = s < 0
    p = s**d
    q = s ** (2 * d)
    g = np.asarray(g, dtype=float)
    h = np.asarray(h, dtype=float)
    return (
        (float((g * p)[left].sum()), float((g * p)[~left].sum())),
        (float((h * q)[left].sum()), float((h * q)[~left].sum())),
    )


# ---------------------------------------------------------------------------
# per-feature workspace


class _FeatureWork:
    """Cached per-feature structures for the candidate scans."""

    def __init__(self, x: np.ndarray, fb: FeatureBins, fc: FeatureConstraint):
        self.x = x
        self.fb = fb
        self.fc = fc
        n = x.size
        self.n = n
        self.split_degrees = list(range(max(fc.smoothness + 1, 0), fc.max_degree + 1))
        self.global_degrees = list(range(0, fc.smoothness + 1))

        self.fcodes = np.searchsorted(fb.fine_edges, x, side="right")
        counts = np.bincount(self.fcodes, minlength=fb.n_fine_bins)
        self.n_left_fine = np.cumsum(counts)[:-1]  # per fine edge

        self.ccodes = np.searchsorted(fb.coarse_edges, x, side="right")
        ccounts = np.bincount(self.ccodes, minlength=fb.n_coarse_bins)
        self.n_left_coarse = np.cumsum(ccounts)[:-1]  # per coarse edge

        self.lower = fb.coarse_lower_edges
        self.widths = np.append(fb.coarse_edges, fb.x_max) - self.lower

        self.max_split_deg = max((d for d in self.split_degrees if d >= 1), default=0)
        self.max_global_deg = max(self.global_degrees, default=0)

        if self.max_split_deg >= 1:
            t = x - self.lower[self.ccodes]
            self.tpow = np.empty((2 * self.max_split_deg + 1, n))
            self.tpow[0] = 1.0
            for p in range(1, 2 * self.max_split_deg + 1):
                self.tpow[p] = self.tpow[p - 1] * t
            self._build_tensors()
        else:
            self.tpow = None

        if self.max_global_deg >= 1:
            r = x - fb.x_min
            self.rpow = np.empty((2 * self.max_global_deg + 1, n))
            self.rpow[0] = 1.0
            for p in range(1, self.rpow.shape[0]):
                self.rpow[p] = self.rpow[p - 1] * r
        else:
            self.rpow = None

        # filled per (iteration, output); regression reuses static h moments
        self._static_h = None

    def _build_tensors(self) -> None:
        """Binomial recombination weights: split sums of g*(x-u)^d over one side
        are rebuilt from per-piece moments of g*t^m, t the piece-local offset.
        Working per piece keeps every term at the scale of its own piece, which
        avoids the cancellation blowup of global-monomial prefix sums."""
        edges = self.fb.coarse_edges
        mj = edges.size
        mb = self.lower.size
        dmax = self.max_split_deg
        if mj == 0:
            self.WLg = self.WRg = self.WLh = self.WRh = None
            return
        delta = self.lower[:, None] - edges[None, :]  # (mb, mj)
        dpow = np.stack([delta**p for p in range(2 * dmax + 1)])
        left = (np.arange(mb)[:, None] <= np.arange(mj)[None, :]).astype(float)
        right = 1.0 - left
        nd = dmax  # degrees 1..dmax
        # each side is summed directly from its own pieces: deriving one side
        # as total-minus-other cancels catastrophically when that side is tiny
        self.WLg = np.zeros((nd, mj, mb, dmax + 1))
        self.WRg = np.zeros_like(self.WLg)
        self.WLh = np.zeros((nd, mj, mb, 2 * dmax + 1))
        self.WRh = np.zeros_like(self.WLh)
        for di, d in enumerate(range(1, dmax + 1)):
            for m in range(d + 1):
                w = math.comb(d, m) * dpow[d - m]
                self.WLg[di, :, :, m] = (w * left).T
                self.WRg[di, :, :, m] = (w * right).T
            for m in range(2 * d + 1):
                w = math.comb(2 * d, m) * dpow[2 * d - m]
                self.WLh[di, :, :, m] = (w * left).T
                self.WRh[di, :, :, m] = (w * right).T

    def moments(self, weights: np.ndarray, max_m: int) -> np.ndarray:
        """Per-coarse-piece sums of weights * t^m for m = 0..max_m."""
        mb = self.fb.n_coarse_bins
        out = np.empty((mb, max_m + 1))
        for m in range(max_m + 1):
            out[:, m] = np.bincount(self.ccodes, weights=weights * self.tpow[m], minlength=mb)
        return out

    def split_sums(self, g: np.ndarray, h: np.ndarray, h_static: bool):
        """Left/right split sums for every coarse threshold and degree 1..dmax.

        Returns (sgl, sgr, shl, shr), each (dmax, n_thresholds)."""
        dmax = self.max_split_deg
        G = self.moments(g, dmax)
        if h_static:
            if self._static_h is None:
                self._static_h = self.moments(h, 2 * dmax)
            H = self._static_h
        else:
            H = self.moments(h, 2 * dmax)
        sgl = np.einsum("djbm,bm->dj", self.WLg, G)
        sgr = np.einsum("djbm,bm->dj", self.WRg, G)
        shl = np.einsum("djbm,bm->dj", self.WLh, H)
        shr = np.einsum("djbm,bm->dj", self.WRh, H)
        return sgl, sgr, shl, shr


# ---------------------------------------------------------------------------
# constraint feasibility


def _tighten(lo: float, hi: float, a: np.ndarray, b: np.ndarray):
    """Intersect the interval with the half-lines {gamma : b + a*gamma >= -slack}."""
    pos = a > 0.0
    if pos.any():
        lo = max(lo, float(((-b[pos] - FEAS_SLACK) / a[pos]).max()))
    neg = a < 0.0
    if neg.any():
        hi = min(hi, float(((-b[neg] - FEAS_SLACK) / a[neg]).min()))
    return lo, hi


def _update_deriv_coeffs(delta: np.ndarray, d: int, lr: float, order: int):
    """Coefficients (in local t) of d^order/dx^order of lr*(x-u)^d on a piece
    whose lower edge sits at offset delta = lower - u."""
    z = np.zeros_like(delta)
    if order == 1:
        if d == 1:
            return lr + z, z, z
        if d == 2:
            return 2.0 * lr * delta, 2.0 * lr + z, z
        if d == 3:
            return 3.0 * lr * delta**2, 6.0 * lr * delta, 3.0 * lr + z
    else:
        if d == 2:
            return 2.0 * lr + z, z, z
        if d == 3:
            return 6.0 * lr * delta, 6.0 * lr + z, z
    return z, z, z


def _gamma_interval(
    coeffs: np.ndarray,
    lower: np.ndarray,
    widths: np.ndarray,
    sel: slice,
    u: float,
    d: int,
    m_sign: int,
    c_sign: int,
    lr: float,
    gamma_prop: float,
):
    """Feasible interval for gamma when adding lr*gamma*(x-u)^d over the
    selected pieces, under monotonicity sign m and curvature sign c.

    Endpoint constraints are linear in gamma and exact; the interior minimum
    of the (quadratic) first derivative moves with gamma, so it is handled by
    a short fixed-point refinement around the clamped proposal. The interval
    always contains 0 because the pre-update state is feasible.
    """
    lo, hi = -math.inf, math.inf
    w = widths[sel]
    delta = lower[sel] - u
    c1 = coeffs[sel, 1]
    c2 = coeffs[sel, 2]
    c3 = coeffs[sel, 3]

    quad = None
    if m_sign:
        B0 = m_sign * c1
        B1 = m_sign * 2.0 * c2
        B2 = m_sign * 3.0 * c3
        a0, a1, a2 = _update_deriv_coeffs(delta, d, lr, order=1)
        A0, A1, A2 = m_sign * a0, m_sign * a1, m_sign * a2
        lo, hi = _tighten(lo, hi, A0, B0)
        lo, hi = _tighten(lo, hi, A0 + A1 * w + A2 * w * w, B0 + B1 * w + B2 * w * w)
        quad = (A0, A1, A2, B0, B1, B2)
    if c_sign and d >= 2:
        C0 = c_sign * 2.0 * c2
        C1 = c_sign * 6.0 * c3
        a0, a1, _ = _update_deriv_coeffs(delta, d, lr, order=2)
        D0, D1 = c_sign * a0, c_sign * a1
        lo, hi = _tighten(lo, hi, D0, C0)
        lo, hi = _tighten(lo, hi, D0 + D1 * w, C0 + C1 * w)

    if quad is not None:
        A0, A1, A2, B0, B1, B2 = quad
        if np.any(A2 != 0.0) or np.any(B2 != 0.0):
            gamma_c = min(max(gamma_prop, lo), hi) if lo <= hi else 0.0
            for _ in range(8):
                q2 = B2 + gamma_c * A2
                q1 = B1 + gamma_c * A1
                q0 = B0 + gamma_c * A0
                pos = q2 > 0.0
                with np.errstate(divide="ignore", invalid="ignore"):
                    tstar = np.where(pos, -q1 / (2.0 * q2), -1.0)
                inside = pos & (tstar > 0.0) & (tstar < w)
                qmin = q0 - np.where(pos, q1 * q1 / (4.0 * np.maximum(q2, 1e-300)), 0.0)
                viol = inside & (qmin < -FEAS_SLACK)
                if not viol.any():
                    break
                ts = tstar[viol]
                a_t = A0[viol] + A1[viol] * ts + A2[viol] * ts * ts
                b_t = B0[viol] + B1[viol] * ts + B2[viol] * ts * ts
                lo, hi = _tighten(lo, hi, a_t, b_t)
                new_c = min(max(gamma_c, lo), hi) if lo <= hi else 0.0
                if new_c == gamma_c:
                    break
                gamma_c = new_c
    if lo > hi:
        lo = hi = 0.0
    return lo, hi


def _side_worst(
    coeffs: np.ndarray,
    lower: np.ndarray,
    widths: np.ndarray,
    sel: slice,
    u: float,
    d: int,
    gamma: float,
    lr: float,
    m_sign: int,
    c_sign: int,
) -> float:
    """Exact post-update worst constraint value over the selected pieces."""
    w = widths[sel]
    delta = lower[sel] - u
    c1 = coeffs[sel, 1]
    c2 = coeffs[sel, 2]
    c3 = coeffs[sel, 3]
    worst = math.inf
    if m_sign:
        a0, a1, a2 = _update_deriv_coeffs(delta, d, lr, order=1)
        q0 = m_sign * (c1 + gamma * a0)
        q1 = m_sign * (2.0 * c2 + gamma * a1)
        q2 = m_sign * (3.0 * c3 + gamma * a2)
        vals = [q0, q0 + q1 * w + q2 * w * w]
        pos = q2 > 0.0
        with np.errstate(divide="ignore", invalid="ignore"):
            tstar = np.where(pos, -q1 / (2.0 * np.where(pos, q2, 1.0)), -1.0)
        inside = pos & (tstar > 0.0) & (tstar < w)
        if inside.any():
            ts = tstar[inside]
            vals.append(q0[inside] + q1[inside] * ts + q2[inside] * ts * ts)
        worst = min(worst, min(float(v.min()) for v in vals if v.size))
    if c_sign and d >= 2:
        a0, a1, _ = _update_deriv_coeffs(delta, d, lr, order=2)
        q0 = c_sign * (2.0 * c2 + gamma * a0)
        q1 = c_sign * (6.0 * c3 + gamma * a1)
        vals = [q0, q0 + q1 * w]
        worst = min(worst, min(float(v.min()) for v in vals if v.size))
    return worst


def _pieces_for_side(n_pieces: int, edge_index: int | None, side: str):
    if edge_index is None:
        return slice(0, n_pieces)
    if side == "left":
        return slice(0, edge_index + 1)
    return slice(edge_index + 1, n_pieces)


def _clamp_candidate(cand: SplitCandidate, wk: _FeatureWork, coeffs: np.ndarray, lr: float,
                     l1: float, l2: float) -> SplitCandidate | None:
    """Clamp a candidate's leaf values into their feasible intervals, apply the
    cross-split ordering rules, verify exactly, and rescore. Returns None when
    the candidate collapses to a no-op."""
    fc = wk.fc
    m_sign, c_sign = fc.monotone, fc.curvature
    if not m_sign and not c_sign:
        return cand
    sgl, shl, sgr, shr = cand.sums
    n_pieces = wk.lower.size
    d = cand.degree

    if cand.kind == "global":
        gamma = cand.gamma_left
        if d >= 1:
            sel = _pieces_for_side(n_pieces, None, "all")
            lo, hi = _gamma_interval(
                coeffs, wk.lower, wk.widths, sel, wk.fb.x_min, d, m_sign, c_sign, lr, gamma
            )
            gamma = min(max(gamma, lo), hi)
            for _ in range(60):
                if (
                    _side_worst(
                        coeffs, wk.lower, wk.widths, sel, wk.fb.x_min, d, gamma, lr, m_sign, c_sign
                    )
                    >= -FEAS_SLACK
                ):
                    break
                gamma *= 0.5
            else:
                gamma = 0.0
        gain = candidate_gain(gamma, sgl, shl, 0.0, 0.0, 0.0)
        return SplitCandidate(
            cand.output, cand.feature, d, "global", None, None,
            float(gamma), None, float(gain), cand.n_left, cand.n_right, cand.sums,
        )

    gl, gr = cand.gamma_left, cand.gamma_right
    u = cand.threshold
    j = cand.edge_index
    if d == 0:
        # step updates: only the ordering rule applies (no derivative effect)
        if m_sign and m_sign * (gr - gl) < 0.0:
            pooled = leaf_value(sgl + sgr, shl + shr, l1, l2)
            gl = gr = float(pooled)
    else:
        sel_l = _pieces_for_side(n_pieces, j, "left")
        sel_r = _pieces_for_side(n_pieces, j, "right")
        lo_l, hi_l = _gamma_interval(
            coeffs, wk.lower, wk.widths, sel_l, u, d, m_sign, c_sign, lr, gl
        )
        lo_r, hi_r = _gamma_interval(
            coeffs, wk.lower, wk.widths, sel_r, u, d, m_sign, c_sign, lr, gr
        )
        gl = min(max(gl, lo_l), hi_l)
        gr = min(max(gr, lo_r), hi_r)
        if d == 1 and c_sign and c_sign * (gr - gl) < 0.0:
            # a degree-1 split kinks f'; the kink must bend with the curvature sign
            pooled = float(leaf_value(sgl + sgr, shl + shr, l1, l2))
            lo = max(lo_l, lo_r)
            hi = min(hi_l, hi_r)
            pooled = min(max(pooled, lo), hi) if lo <= hi else 0.0
            gl = gr = pooled
        for _ in range(60):
            worst = min(
                _side_worst(coeffs, wk.lower, wk.widths, sel_l, u, d, gl, lr, m_sign, c_sign),
                _side_worst(coeffs, wk.lower, wk.widths, sel_r, u, d, gr, lr, m_sign, c_sign),
            )
            if worst >= -FEAS_SLACK:
                break
            gl *= 0.5
            gr *= 0.5
        else:
            gl = gr = 0.0
    gain = candidate_gain(gl, sgl, shl, gr, sgr, shr)
    return SplitCandidate(
        cand.output, cand.feature, d, "split", u, j,
        float(gl), float(gr), float(gain), cand.n_left, cand.n_right, cand.sums,
    )

# ---------------------------------------------------------------------------
# candidate enumeration


def _best_for_output(
    i: int,
    g_i: np.ndarray,
    h_i: np.ndarray,
    works: list[_FeatureWork],
    store: ParameterStore,
    cfg: TrainConfig,
    h_static: bool,
) -> SplitCandidate | None:
    n = g_i.size
    l1, l2 = cfg.l1, cfg.l2
    min_leaf = cfg.min_data_in_leaf
    best: SplitCandidate | None = None

    def consider(cand: SplitCandidate | None):
        nonlocal best
        if cand is None or not math.isfinite(cand.gain) or cand.gain <= 0.0:
            return
        if best is None or cand.sort_key() < best.sort_key():
            best = cand

    for k, wk in enumerate(works):
        if not store.constraints.allow_mask[i, k]:
            continue
        fc = wk.fc
        coeffs = store.params[i][k].poly_coeffs
        constrained = bool(fc.monotone or fc.curvature)

        # degree-0 splits on the fine grid
        if 0 in wk.split_degrees and wk.fb.fine_edges.size > 0:
            gf = np.bincount(wk.fcodes, weights=g_i, minlength=wk.fb.n_fine_bins)
            hf = np.bincount(wk.fcodes, weights=h_i, minlength=wk.fb.n_fine_bins)
            cg = np.cumsum(gf)
            ch = np.cumsum(hf)
            sgl, sg_tot = cg[:-1], cg[-1]
            shl, sh_tot = ch[:-1], ch[-1]
            sgr = sg_tot - sgl
            shr = sh_tot - shl
            nl = wk.n_left_fine
            valid = (nl >= min_leaf) & (n - nl >= min_leaf)
            if valid.any():
                gl = leaf_value(sgl, shl, l1, l2)
                gr = leaf_value(sgr, shr, l1, l2)
                if fc.monotone:
                    bad = valid & (fc.monotone * (gr - gl) < 0.0)
                    if bad.any():
                        pooled = leaf_value(sgl + sgr, shl + shr, l1, l2)
                        gl = np.where(bad, pooled, gl)
                        gr = np.where(bad, pooled, gr)
                gains = candidate_gain(gl, sgl, shl, gr, sgr, shr)
                gains = np.where(valid, gains, -np.inf)
                j = int(np.argmax(gains))
                if gains[j] > 0.0:
                    consider(
                        SplitCandidate(
                            i, k, 0, "split", float(wk.fb.fine_edges[j]), j,
                            float(gl[j]), float(gr[j]), float(gains[j]),
                            int(nl[j]), int(n - nl[j]),
                            (float(sgl[j]), float(shl[j]), float(sgr[j]), float(shr[j])),
                        )
                    )

        # degree >= 1 splits on the coarse grid
        high = [d for d in wk.split_degrees if d >= 1]
        if high and wk.fb.coarse_edges.size > 0:
            sgl, sgr, shl, shr = wk.split_sums(g_i, h_i, h_static)
            nl = wk.n_left_coarse
            valid = (nl >= min_leaf) & (n - nl >= min_leaf)
            for d in high:
                row = d - 1
                gl = leaf_value(sgl[row], shl[row], l1, l2)
                gr = leaf_value(sgr[row], shr[row], l1, l2)
                gains = candidate_gain(gl, sgl[row], shl[row], gr, sgr[row], shr[row])
                gains = np.where(valid, gains, -np.inf)
                if not constrained:
                    j = int(np.argmax(gains))
                    if gains[j] > 0.0:
                        consider(
                            SplitCandidate(
                                i, k, d, "split", float(wk.fb.coarse_edges[j]), j,
                                float(gl[j]), float(gr[j]), float(gains[j]),
                                int(nl[j]), int(n - nl[j]),
                                (float(sgl[row, j]), float(shl[row, j]),
                                 float(sgr[row, j]), float(shr[row, j])),
                            )
                        )
                else:
                    # every candidate is clamped before gains are compared
                    for j in np.flatnonzero(valid):
                        j = int(j)
                        raw = SplitCandidate(
                            i, k, d, "split", float(wk.fb.coarse_edges[j]), j,
                            float(gl[j]), float(gr[j]), float(gains[j]),
                            int(nl[j]), int(n - nl[j]),
                            (float(sgl[row, j]), float(shl[row, j]),
                             float(sgr[row, j]), float(shr[row, j])),
                        )
                        consider(_clamp_candidate(raw, wk, coeffs, cfg.learning_rate, l1, l2))

        # smoothness-protected degrees get a single global parameter
        for d in wk.global_degrees:
            if d == 0:
                sg = float(g_i.sum())
                sh = float(h_i.sum())
            else:
                sg = float(g_i @ wk.rpow[d])
                sh = float(h_i @ wk.rpow[2 * d])
            gamma = float(leaf_value(sg, sh, l1, l2))
            raw = SplitCandidate(
                i, k, d, "global", None, None, gamma, None,
                float(candidate_gain(gamma, sg, sh, 0.0, 0.0, 0.0)), n, 0,
                (sg, sh, 0.0, 0.0),
            )
            if constrained and d >= 1:
                raw = _clamp_candidate(raw, wk, coeffs, cfg.learning_rate, l1, l2)
            consider(raw)

    return best


# ---------------------------------------------------------------------------
# applying updates


def _apply_candidate(
    store: ParameterStore,
    cand: SplitCandidate,
    lr: float,
    works: list[_FeatureWork],
    F: np.ndarray,
    X_valid: np.ndarray | None,
    F_valid: np.ndarray | None,
) -> None:
    i, k, d = cand.output, cand.feature, cand.degree
    wk = works[k]
    fb = wk.fb
    if cand.kind == "global":
        accumulate_global(store, i, k, d, cand.gamma_left, lr)
        F[:, i] += lr * cand.gamma_left * (wk.rpow[d] if d >= 1 else 1.0)
        if F_valid is not None:
            xv = X_valid[:, k]
            F_valid[:, i] += lr * cand.gamma_left * (xv - fb.x_min) ** d
        return
    u = cand.threshold
    accumulate_update(store, i, k, d, u, cand.gamma_left, cand.gamma_right, lr)
    if d == 0:
        left = wk.fcodes <= cand.edge_index
        F[:, i] += lr * np.where(left, cand.gamma_left, cand.gamma_right)
        if F_valid is not None:
            xv = X_valid[:, k]
            F_valid[:, i] += lr * np.where(xv < u, cand.gamma_left, cand.gamma_right)
    else:
        left = wk.ccodes <= cand.edge_index
        s = wk.x - u
        F[:, i] += lr * np.where(left, cand.gamma_left, cand.gamma_right) * s**d
        if F_valid is not None:
            xv = X_valid[:, k]
            sv = xv - u
            F_valid[:, i] += lr * np.where(sv < 0.0, cand.gamma_left, cand.gamma_right) * sv**d


def _replay_one(store: ParameterStore, rec: LogRecord, lr: float) -> None:
    k = store.feature_names.index(rec.feature)
    if rec.kind == "global":
        accumulate_global(store, rec.output, k, rec.degree, rec.gamma_left, lr)
    else:
        accumulate_update(
            store, rec.output, k, rec.degree, rec.threshold,
            rec.gamma_left, rec.gamma_right, lr,
        )


def replay(
    initial_store: ParameterStore,
    log: list[LogRecord],
    iteration: int,
    snapshots: list[tuple[int, ParameterStore]] | None = None,
    learning_rate: float = 0.1,
) -> ParameterStore:
    """Reconstruct the parameter state after `iteration` full iterations by
    replaying logged updates on top of the nearest earlier snapshot. The
    arithmetic mirrors training exactly, so the result is bit-identical."""
    base_iter = 0
    store = initial_store
    if snapshots:
        for it, snap in snapshots:
            if base_iter <= it <= iteration:
                base_iter = it
                store = snap
    out = store.copy()
    for rec in log:
        if base_iter < rec.iteration <= iteration:
            _replay_one(out, rec, learning_rate)
    return out


# ---------------------------------------------------------------------------
# training loop


def _initial_intercepts(task: str, y: np.ndarray, n_outputs: int) -> np.ndarray:
    if task == "regression":
        return np.array([float(np.mean(y))])
    if task == "binary":
        p = float(np.clip(np.mean(y), 1e-12, 1.0 - 1e-12))
        return np.array([math.log(p / (1.0 - p))])
    counts = np.bincount(y.astype(int), minlength=n_outputs).astype(float)
    priors = np.clip(counts / max(y.size, 1), 1e-12, None)
    return np.log(priors)


def train(
    dataset: Dataset,
    layout: BinLayout | None = None,
    constraints: ConstraintSpec | None = None,
    config: TrainConfig | None = None,
    valid: Dataset | None = None,
) -> TrainResult:
    """Fit an additive model by second-order boosting.

    When `valid` is None and validation_fraction > 0, a validation split is
    carved out of `dataset` (stratified by class for classification). Bin
    edges always come from `dataset` as handed in, before any carving.
    """
    cfg = config or TrainConfig()
    cfg.validate()
    if layout is None:
        layout = build_bin_layout(dataset)
    if constraints is None:
        constraints = ConstraintSpec.default(dataset)
    constraints.validate(dataset.feature_names, dataset.n_outputs)

    if valid is None and cfg.validation_fraction > 0.0:
        labels = dataset.y if dataset.task != "regression" else None
        tr_idx, va_idx, _ = split_indices(
            dataset.X.shape[0],
            (1.0 - cfg.validation_fraction, cfg.validation_fraction, 0.0),
            cfg.seed,
            labels=labels,
        )
        ds_train = dataset.subset(tr_idx)
        ds_valid = dataset.subset(va_idx)
    else:
        ds_train = dataset
        ds_valid = valid

    use_early_stop = cfg.early_stopping_patience > 0
    if use_early_stop and (ds_valid is None or ds_valid.X.shape[0] == 0):
        raise ConfigError(
            "early stopping requires a non-empty validation split; "
            "set early_stopping_patience=0 or provide validation data"
        )

    task = dataset.task
    intercepts = _initial_intercepts(task, ds_train.y, dataset.n_outputs)
    store = zero_init(layout, task, dataset.n_outputs, dataset.feature_names,
                      constraints, dataset.target_name)
    store.intercepts = intercepts.copy()
    initial_store = store.copy()

    works = [
        _FeatureWork(ds_train.X[:, k], layout.features[k], constraints.features[k])
        for k in range(len(dataset.feature_names))
    ]
    h_static = task == "regression"

    J = dataset.n_outputs
    n_tr = ds_train.X.shape[0]
    F = np.tile(intercepts, (n_tr, 1))
    if ds_valid is not None and ds_valid.X.shape[0] > 0:
        F_valid = np.tile(intercepts, (ds_valid.X.shape[0], 1))
        X_valid = ds_valid.X
    else:
        F_valid = None
        X_valid = None

    log: list[LogRecord] = []
    snapshots: list[tuple[int, ParameterStore]] = [(0, store.copy())]
    train_loss = loss_eval(task, ds_train.y, F)
    valid_loss = loss_eval(task, ds_valid.y, F_valid) if F_valid is not None else None
    best_valid = valid_loss if valid_loss is not None else math.inf
    best_iter = 0
    last_iter = 0

    for it in range(1, cfg.max_iterations + 1):
        batch = derivatives(task, ds_train.y, F)
        g, h = batch.g, batch.h
        picks: list[SplitCandidate] = []
        for i in range(J):
            cand = _best_for_output(i, g[:, i], h[:, i], works, store, cfg, h_static)
            if cand is not None:
                picks.append(cand)
        if not picks:
            last_iter = it - 1
            break
        for cand in picks:
            _apply_candidate(store, cand, cfg.learning_rate, works, F, X_valid, F_valid)
        train_loss = loss_eval(task, ds_train.y, F)
        valid_loss = loss_eval(task, ds_valid.y, F_valid) if F_valid is not None else None
        if not math.isfinite(train_loss) or (
            valid_loss is not None and not math.isfinite(valid_loss)
        ):
            raise NumericError(f"non-finite loss at iteration {it}")
        for cand in picks:
            log.append(
                LogRecord(
                    it, cand.output, dataset.feature_names[cand.feature],
                    cand.degree, cand.kind, cand.threshold,
                    cand.gamma_left, cand.gamma_right, cand.gain,
                    train_loss, valid_loss,
                )
            )
        last_iter = it
        if it % cfg.snapshot_every == 0:
            snapshots.append((it, store.copy()))
        if F_valid is not None and valid_loss < best_valid:
            best_valid = valid_loss
            best_iter = it
        if use_early_stop and it - best_iter >= cfg.early_stopping_patience:
            break

    if not use_early_stop:
        best_iter = last_iter

    if best_iter < last_iter:
        store = replay(initial_store, log, best_iter, snapshots, cfg.learning_rate)

    result = TrainResult(
        store=store,
        initial_store=initial_store,
        log=log,
        best_iteration=best_iter,
        n_iterations=last_iter,
        train_loss=train_loss,
        valid_loss=valid_loss,
        learning_rate=cfg.learning_rate,
        snapshots=snapshots,
    )
    return result
