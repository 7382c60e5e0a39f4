"""Bayesian, maximum-likelihood and two-step (trilateration) estimators."""

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import DegenerateMass, FormError, SingularGeometry
from .geometry import PlanePoint
from . import kernels
from .likelihood import log_lr_field, pack_records

__all__ = [
    "Prior",
    "EstimateResult",
    "cell_centers",
    "log_weight_lattice",
    "posterior_mean",
    "bayes_estimate",
    "mle_estimate",
    "mle_candidates",
    "estimate_arrival",
    "trilaterate",
]

G0 = 101
G1 = 201
LOG_WINDOW = 30.0
BOUNDARY_TOL = 1e-6
MAX_EXPAND = 3


@dataclass(frozen=True)
class Prior:
    """Positive weight function on the parameter box (``None`` means uniform)."""

    log_density: Optional[Callable] = None
    label: str = "uniform"

    @classmethod
    def uniform(cls):
        return cls()

    @classmethod
    def from_density(cls, density, label="density"):
        def log_density(x, y):
            with np.errstate(divide="ignore", invalid="ignore"):
                return np.log(density(x, y))

        return cls(log_density, label)

    @classmethod
    def linear(cls, a, b, c):
        """Density proportional to ``a + b*x + c*y``."""
        return cls.from_density(lambda x, y: a + b * np.asarray(x) + c * np.asarray(y), f"linear({a},{b},{c})")

    @classmethod
    def from_table(cls, xs, ys, values):
        """Bilinear interpolation of a density tabulated on the grid ``xs`` x ``ys``."""
        from scipy.interpolate import RegularGridInterpolator

        interp = RegularGridInterpolator((np.asarray(ys), np.asarray(xs)), np.asarray(values, dtype=float),
                                         bounds_error=False, fill_value=None)

        def density(x, y):
            x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
            return interp(np.stack([y.ravel(), x.ravel()], axis=-1)).reshape(x.shape)

        return cls.from_density(density, "table")

    def log_weights(self, x, y, box):
        shape = np.broadcast_shapes(np.shape(x), np.shape(y))
        if self.log_density is None:
            return np.full(shape, -math.log(box.area))
        lw = np.broadcast_to(np.asarray(self.log_density(x, y), dtype=float), shape)
        if not np.all(np.isfinite(lw)):
            raise ValueError(f"prior {self.label} is not strictly positive on the parameter box")
        return lw


@dataclass
class EstimateResult:
    estimate: PlanePoint
    kind: str
    diagnostics: dict = field(default_factory=dict)


def cell_centers(lo, hi, cells, start=0, stop=None):
    """Centers of cells ``start..stop-1`` of a uniform partition of ``[lo, hi]``."""
    stop = cells if stop is None else stop
    return lo + (np.arange(start, stop) + 0.5) * ((hi - lo) / cells)


def log_weight_lattice(model, array, records, prior, xc, yc):
    """log(prior * likelihood ratio) at cell centers; -inf inside the epsilon-balls."""
    if model.is_constant:
        times, offsets = pack_records(records)
        pos = array.positions
        lw = kernels.loglr_lattice_constant(
            xc, yc, pos[:, 0], pos[:, 1], array.nu, times, offsets,
            model.ell, model.scale_n * model.form.lambda1, array.horizon, array.epsilon,
        )
        if prior.log_density is None:
            return lw - math.log(array.theta_box.area)
        X, Y = np.meshgrid(xc, yc)
        return lw + prior.log_weights(X, Y, array.theta_box)
    X, Y = np.meshgrid(xc, yc)
    _, right = log_lr_field(model, array, records, X, Y)
    lw = right + prior.log_weights(X, Y, array.theta_box)
    lw[array.in_exclusion(X, Y)] = -np.inf
    return lw


def posterior_mean(lw, xc, yc):
    """Midpoint-rule ratio of integrals with log-sum-exp stabilization.

    Returns ``(x, y, log_sum)`` where ``log_sum`` is the log of the (unscaled)
    sum of weights.
    """
    top = np.max(lw)
    if not np.isfinite(top):
        raise DegenerateMass("no admissible cell carries posterior mass")
    w = np.exp(lw - top)
    total = w.sum()
    x = float(w.sum(axis=0) @ xc / total)
    y = float(w.sum(axis=1) @ yc / total)
    return x, y, top + math.log(total)


def _band_fractions(lw, band, open_sides):
    w = np.exp(lw - np.max(lw))
    total = w.sum()
    fr = {}
    ny, nx = w.shape
    b = min(band, ny, nx)
    if open_sides["left"]:
        fr["left"] = w[:, :b].sum() / total
    if open_sides["right"]:
        fr["right"] = w[:, nx - b:].sum() / total
    if open_sides["bottom"]:
        fr["bottom"] = w[:b, :].sum() / total
    if open_sides["top"]:
        fr["top"] = w[ny - b:, :].sum() / total
    return fr


def bayes_estimate(model, array, records, prior=None, *, g0=G0, g1=G1,
                   log_window=LOG_WINDOW, boundary_tol=BOUNDARY_TOL, max_expand=MAX_EXPAND):
    """Posterior mean by two-stage midpoint quadrature.

    Stage 1 scores a ``g0`` x ``g0`` cell grid over the box. Stage 2 subdivides
    every stage-1 cell of the bounding box of the cells within ``log_window``
    of the best one (plus one cell of margin) into ``m`` x ``m`` sub-cells, with
    ``m`` chosen so the sub-cell width is at most ``0.1 * nu / (n * lambda_peak)``
    and the refined box has at least ``g1`` cells per side. The refined cells
    are a window of the global ``g0*m`` lattice, so the result coincides with a
    dense single-stage evaluation of that lattice up to the neglected tail.
    """
    prior = Prior.uniform() if prior is None else prior
    box = array.theta_box

    xc1 = cell_centers(box.alpha1, box.alpha2, g0)
    yc1 = cell_centers(box.beta1, box.beta2, g0)
    lw1 = log_weight_lattice(model, array, records, prior, xc1, yc1)
    top = np.max(lw1)
    if not np.isfinite(top):
        raise DegenerateMass("all stage-1 cells lie in the exclusion balls")
    rows, cols = np.nonzero(lw1 >= top - log_window)
    i0, i1 = max(rows.min() - 1, 0), min(rows.max() + 2, g0)
    j0, j1 = max(cols.min() - 1, 0), min(cols.max() + 2, g0)

    h1 = max(box.width, box.height) / g0
    peak = model.form.peak
    m = 1
    if peak > 0:
        h_rule = 0.1 * array.nu / (model.scale_n * peak)
        m = max(m, math.ceil(h1 / h_rule - 1e-9))
    m = max(m, math.ceil(g1 / min(i1 - i0, j1 - j0)))
    K = g0 * m

    rounds = 0
    while True:
        xc = cell_centers(box.alpha1, box.alpha2, K, j0 * m, j1 * m)
        yc = cell_centers(box.beta1, box.beta2, K, i0 * m, i1 * m)
        lw = log_weight_lattice(model, array, records, prior, xc, yc)
        if not np.isfinite(np.max(lw)):
            raise DegenerateMass("refined box carries no admissible mass")
        open_sides = {"left": j0 > 0, "right": j1 < g0, "bottom": i0 > 0, "top": i1 < g0}
        fr = _band_fractions(lw, m, open_sides)
        frac = float(sum(fr.values()))
        if frac <= boundary_tol or rounds >= max_expand:
            break
        rounds += 1
        # flagged sides move out by the current box size
        grow_x = max(2, j1 - j0)
        grow_y = max(2, i1 - i0)
        if fr.get("left", 0.0) > boundary_tol / 4:
            j0 = max(j0 - grow_x, 0)
        if fr.get("right", 0.0) > boundary_tol / 4:
            j1 = min(j1 + grow_x, g0)
        if fr.get("bottom", 0.0) > boundary_tol / 4:
            i0 = max(i0 - grow_y, 0)
        if fr.get("top", 0.0) > boundary_tol / 4:
            i1 = min(i1 + grow_y, g0)

    x, y, log_sum = posterior_mean(lw, xc, yc)
    hx = box.width / K
    hy = box.height / K
    diag = {
        "levels": (g0, K),
        "refine": m,
        "expansions": rounds,
        "box_cells": (int(i0), int(i1), int(j0), int(j1)),
        "boundary_fraction": frac,
        "mass_captured": 1.0 - frac,
        "log_evidence": float(log_sum + math.log(hx * hy)),
    }
    return EstimateResult(PlanePoint(x, y), "BE", diag)


# ---------------------------------------------------------------------------
# Maximum likelihood
# ---------------------------------------------------------------------------


def _circle_circle(c1, r1, c2, r2):
    d = math.hypot(c2[0] - c1[0], c2[1] - c1[1])
    ex = (c2[0] - c1[0]) / d
    ey = (c2[1] - c1[1]) / d
    R1, R2 = np.meshgrid(r1, r2, indexing="ij")
    a = (R1 ** 2 - R2 ** 2 + d * d) / (2 * d)
    h2 = R1 ** 2 - a ** 2
    ok = h2 >= 0
    a = a[ok]
    h = np.sqrt(h2[ok])
    bx = c1[0] + a * ex
    by = c1[1] + a * ey
    xs = np.concatenate([bx - h * ey, bx + h * ey])
    ys = np.concatenate([by + h * ex, by - h * ex])
    return xs, ys


def _circle_edges(c, r, box):
    xs, ys = [], []
    for xv in (box.alpha1, box.alpha2):
        q = r ** 2 - (xv - c[0]) ** 2
        q = np.sqrt(q[q >= 0])
        for sgn in (-1.0, 1.0):
            ys.append(c[1] + sgn * q)
            xs.append(np.full(q.size, xv))
    for yv in (box.beta1, box.beta2):
        q = r ** 2 - (yv - c[1]) ** 2
        q = np.sqrt(q[q >= 0])
        for sgn in (-1.0, 1.0):
            xs.append(c[0] + sgn * q)
            ys.append(np.full(q.size, yv))
    return np.concatenate(xs), np.concatenate(ys)


def mle_candidates(array, records):
    """Jump-locus vertices inside the closed box: circle/circle and circle/edge
    intersections of the event circles ``|theta_j - theta| = nu * t_ij``, plus
    the box corners."""
    box = array.theta_box
    lo, hi = array.delay_window
    radii = {}
    for rec in records:
        j = rec.sensor
        t = rec.times
        sel = t[(t >= lo[j] - 1e-12) & (t <= hi[j] + 1e-12)]
        radii[j] = array.nu * sel
    P = array.positions
    xs = [box.corners()[:, 0]]
    ys = [box.corners()[:, 1]]
    keys = sorted(radii)
    for a_i, j in enumerate(keys):
        cx, cy = _circle_edges(P[j], radii[j], box)
        xs.append(cx)
        ys.append(cy)
        for k in keys[a_i + 1:]:
            if radii[j].size and radii[k].size:
                cx, cy = _circle_circle(P[j], radii[j], P[k], radii[k])
                xs.append(cx)
                ys.append(cy)
    x = np.concatenate(xs)
    y = np.concatenate(ys)
    keep = box.contains(x, y) & ~array.in_exclusion(x, y)
    return x[keep], y[keep]


def _best_index(values, x, y, tol=1e-12):
    top = np.max(values)
    idx = np.flatnonzero(values >= top - tol)
    order = np.lexsort((y[idx], x[idx]))
    return int(idx[order[0]])


def mle_estimate(model, array, records, *, g0=G0, n_starts=10, atol=1e-9, min_step_frac=1e-4):
    """Maximize ``max(left, right)`` of the log-likelihood ratio over the box."""
    box = array.theta_box

    def evaluate(x, y):
        left, right = log_lr_field(model, array, records, x, y, atol=atol)
        val = np.maximum(left, right)
        val = np.where(array.in_exclusion(x, y), -np.inf, val)
        return val, left, right

    gx, gy = box.node_grid(g0)
    cx, cy = mle_candidates(array, records)
    x = np.concatenate([gx.ravel(), cx])
    y = np.concatenate([gy.ravel(), cy])
    val, left, right = evaluate(x, y)
    n_grid = gx.size

    # distinct starting points by value
    order = np.argsort(-val, kind="stable")
    starts = []
    for i in order:
        p = (x[i], y[i])
        if p not in starts:
            starts.append(p)
        if len(starts) >= n_starts:
            break

    dirs = np.array([[1, 0], [-1, 0], [0, 1], [0, -1], [1, 1], [1, -1], [-1, 1], [-1, -1]], dtype=float)
    dirs[4:] /= math.sqrt(2.0)
    step0 = max(box.width, box.height) / (g0 - 1)
    min_step = min_step_frac * box.diameter
    sx, sy, sv, sl, sr = [], [], [], [], []
    evaluations = 0
    for px, py in starts:
        cur = evaluate(np.array([px]), np.array([py]))[0][0]
        step = step0
        while step >= min_step:
            tx = np.clip(px + step * dirs[:, 0], box.alpha1, box.alpha2)
            ty = np.clip(py + step * dirs[:, 1], box.beta1, box.beta2)
            tv, tl, tr = evaluate(tx, ty)
            evaluations += tx.size
            sx.append(tx); sy.append(ty); sv.append(tv); sl.append(tl); sr.append(tr)
            b = int(np.argmax(tv))
            if tv[b] > cur + 1e-12:
                px, py, cur = tx[b], ty[b], tv[b]
            else:
                step *= 0.5

    if sx:
        x = np.concatenate([x] + sx)
        y = np.concatenate([y] + sy)
        val = np.concatenate([val] + sv)
        left = np.concatenate([left] + sl)
        right = np.concatenate([right] + sr)
    i = _best_index(val, x, y)
    side = "both" if left[i] == right[i] else ("right" if right[i] > left[i] else "left")
    diag = {
        "log_lr": float(val[i]),
        "side": side,
        "grid_points": int(n_grid),
        "candidates": int(cx.size),
        "search_evaluations": evaluations,
    }
    return EstimateResult(PlanePoint(float(x[i]), float(y[i])), "MLE", diag)


# ---------------------------------------------------------------------------
# Two-step estimator
# ---------------------------------------------------------------------------


def estimate_arrival(model, record, horizon):
    """One-sensor change-point MLE of the arrival time (constant signal).

    The profile ``ell*[X(T) - X(tau)] + n*lambda1*(tau - T)`` increases between
    events and drops at each, so its supremum sits at the left limit of an
    event time or at ``T``. Ties go to the smallest time.
    """
    if not model.is_constant:
        raise FormError("estimate_arrival needs a Constant signal form")
    t = record.times
    t = t[(t > 0) & (t < horizon)]
    nl1 = model.scale_n * model.form.lambda1
    ell = model.ell
    total = t.size
    cand = np.append(t, horizon)
    values = np.append(ell * (total - np.arange(total)) + nl1 * (t - horizon), 0.0)
    return float(cand[int(np.argmax(values))])


def trilaterate(array, tau_hats):
    """Solve the squared-range system, linearized against the first sensor."""
    tau = np.asarray(tau_hats, dtype=float)
    P = array.positions
    if tau.shape != (P.shape[0],):
        raise ValueError(f"need one arrival time per sensor ({P.shape[0]}), got shape {tau.shape}")
    d2 = (array.nu * tau) ** 2
    A = 2.0 * (P[1:] - P[0])
    b = np.sum(P[1:] ** 2, axis=1) - np.sum(P[0] ** 2) - (d2[1:] - d2[0])
    with np.errstate(divide="ignore"):
        cond = float(np.linalg.cond(A))
    if not np.isfinite(cond) or cond > 1e12:
        raise SingularGeometry(f"trilateration system is singular (condition number {cond:.3g})")
    if A.shape[0] == 2:
        sol = np.linalg.solve(A, b)
    else:
        sol = np.linalg.lstsq(A, b, rcond=None)[0]
    return EstimateResult(PlanePoint(float(sol[0]), float(sol[1])), "TRILAT", {"condition_number": cond})
