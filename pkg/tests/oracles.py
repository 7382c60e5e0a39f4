"""Reference computations written independently of the package kernels.

Everything here is plain numpy, deliberately slow and direct.
"""

import math

import numpy as np

from poisloc.geometry import ParameterRectangle, SensorArray
from poisloc.signal import Constant, SignalModel

R5 = 8.5
DEFAULT_SENSORS = [
    (R5, 0.0),
    (0.0, R5),
    (R5 * math.cos(5 * math.pi / 4), R5 * math.sin(5 * math.pi / 4)),
]
# all three sensors on one side of the origin: every direction vector has
# positive coordinates, so all-positive and all-negative projection patterns exist
ONE_SIDED_SENSORS = [(8.5, 0.0), (0.0, 8.5), (6.0, 6.0)]


def default_array(epsilon=1.0, horizon=10.0, nu=1.0, sensors=None):
    return SensorArray(
        DEFAULT_SENSORS if sensors is None else sensors,
        nu, epsilon, ParameterRectangle(-1.0, 1.0, -1.0, 1.0), horizon,
    )


def constant_model(n=1.0, lambda0=1.0, lambda1=2.0):
    return SignalModel(lambda0, Constant(lambda1), float(n))


def loglr_right(model, array, records, X, Y):
    """Constant-signal right-limit log LR by direct counting at each point."""
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    ell = math.log(1.0 + model.form.lambda1 / model.lambda0)
    nl1 = model.scale_n * model.form.lambda1
    out = np.zeros(np.broadcast(X, Y).shape)
    for rec in records:
        sx, sy = array.positions[rec.sensor]
        tau = np.sqrt((X - sx) ** 2 + (Y - sy) ** 2) / array.nu
        after = rec.count - np.searchsorted(rec.times, tau, side="left")
        out += ell * after - nl1 * np.maximum(array.horizon - tau, 0.0)
    return out


def excluded(array, X, Y):
    bad = np.zeros(np.broadcast(X, Y).shape, dtype=bool)
    for sx, sy in array.positions:
        bad |= np.sqrt((X - sx) ** 2 + (Y - sy) ** 2) <= array.epsilon
    return bad


def dense_bayes(model, array, records, cells, log_prior=None, rows_per_chunk=256):
    """Posterior mean over every cell of a ``cells`` x ``cells`` midpoint lattice on the box."""
    box = array.theta_box
    xc = box.alpha1 + (np.arange(cells) + 0.5) * ((box.alpha2 - box.alpha1) / cells)
    yc = box.beta1 + (np.arange(cells) + 0.5) * ((box.beta2 - box.beta1) / cells)
    lw = np.empty((cells, cells))
    for a in range(0, cells, rows_per_chunk):
        X, Y = np.meshgrid(xc, yc[a:a + rows_per_chunk])
        v = loglr_right(model, array, records, X, Y)
        if log_prior is not None:
            v = v + log_prior(X, Y)
        v[excluded(array, X, Y)] = -np.inf
        lw[a:a + rows_per_chunk] = v
    w = np.exp(lw - lw.max())
    s = w.sum()
    return float((w.sum(axis=0) * xc).sum() / s), float((w.sum(axis=1) * yc).sum() / s)


def closed_form_bayes(model, array, records, xc, yc):
    """Constant-signal BE through the product form: weight
    (1 + lambda1/lambda0)^(-sum_j X_j(tau_j)) * exp(n*lambda1*sum_j tau_j)."""
    X, Y = np.meshgrid(xc, yc)
    ell = math.log(1.0 + model.form.lambda1 / model.lambda0)
    log_w = np.zeros(X.shape)
    for rec in records:
        sx, sy = array.positions[rec.sensor]
        tau = np.sqrt((X - sx) ** 2 + (Y - sy) ** 2) / array.nu
        before = np.searchsorted(rec.times, tau, side="left")
        log_w += -ell * before + model.scale_n * model.form.lambda1 * tau
    log_w[excluded(array, X, Y)] = -np.inf
    w = np.exp(log_w - log_w.max())
    s = w.sum()
    return float((w.sum(axis=0) * xc).sum() / s), float((w.sum(axis=1) * yc).sum() / s)


def cramer_trilaterate(positions, nu, taus):
    """Squared-range system linearized against the LAST sensor, solved by Cramer's rule (3 sensors)."""
    p = np.asarray(positions, dtype=float)
    d2 = (nu * np.asarray(taus, dtype=float)) ** 2
    r = p[2]
    a11, a12 = 2 * (p[0] - r)
    a21, a22 = 2 * (p[1] - r)
    b1 = p[0] @ p[0] - r @ r - (d2[0] - d2[2])
    b2 = p[1] @ p[1] - r @ r - (d2[1] - d2[2])
    det = a11 * a22 - a12 * a21
    return (b1 * a22 - a12 * b2) / det, (a11 * b2 - b1 * a21) / det


def arrival_profile_argmax(model, times, horizon):
    """Single-sensor change-point MLE by scanning a fine grid of candidate times plus left limits."""
    ell = math.log(1.0 + model.form.lambda1 / model.lambda0)
    nl1 = model.scale_n * model.form.lambda1
    t = np.asarray(times)
    cand = np.concatenate([t[(t > 0) & (t < horizon)], [horizon]])
    # left limit at an event time counts that event as post-arrival
    vals = np.array([ell * np.sum(t >= c) + nl1 * (c - horizon) if c < horizon else 0.0 for c in cand])
    return float(cand[int(np.argmax(vals))])


def loglr_sides(model, array, records, X, Y, atol=1e-9):
    """Constant-signal (left, right) log LR with the same event-on-circle tolerance as the MLE."""
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    ell = math.log(1.0 + model.form.lambda1 / model.lambda0)
    nl1 = model.scale_n * model.form.lambda1
    left = np.zeros(np.broadcast(X, Y).shape)
    right = np.zeros_like(left)
    for rec in records:
        sx, sy = array.positions[rec.sensor]
        tau = np.sqrt((X - sx) ** 2 + (Y - sy) ** 2) / array.nu
        comp = nl1 * np.maximum(array.horizon - tau, 0.0)
        right += ell * (rec.count - np.searchsorted(rec.times, tau - atol, side="left")) - comp
        left += ell * (rec.count - np.searchsorted(rec.times, tau + atol, side="right")) - comp
    return left, right


def circle_candidates(array, records):
    """Pairwise event-circle intersections, circle/edge intersections and corners inside the box."""
    box = array.theta_box
    pos = array.positions
    radii = {r.sensor: array.nu * r.times for r in records}
    pts = [(box.alpha1, box.beta1), (box.alpha1, box.beta2), (box.alpha2, box.beta1), (box.alpha2, box.beta2)]
    js = sorted(radii)
    for ia, a in enumerate(js):
        ca = pos[a]
        for ra in radii[a]:
            for xv in (box.alpha1, box.alpha2):
                q = ra * ra - (xv - ca[0]) ** 2
                if q >= 0:
                    pts += [(xv, ca[1] + math.sqrt(q)), (xv, ca[1] - math.sqrt(q))]
            for yv in (box.beta1, box.beta2):
                q = ra * ra - (yv - ca[1]) ** 2
                if q >= 0:
                    pts += [(ca[0] + math.sqrt(q), yv), (ca[0] - math.sqrt(q), yv)]
        for b in js[ia + 1:]:
            cb = pos[b]
            d = math.dist(ca, cb)
            e = (cb - ca) / d
            perp = np.array([-e[1], e[0]])
            for ra in radii[a]:
                for rb in radii[b]:
                    x = (ra * ra - rb * rb + d * d) / (2 * d)
                    h2 = ra * ra - x * x
                    if h2 < 0:
                        continue
                    base = ca + x * e
                    h = math.sqrt(h2)
                    pts.append(tuple(base + h * perp))
                    pts.append(tuple(base - h * perp))
    p = np.array(pts)
    inside = (p[:, 0] >= box.alpha1) & (p[:, 0] <= box.alpha2) & (p[:, 1] >= box.beta1) & (p[:, 1] <= box.beta2)
    p = p[inside]
    return p[~excluded(array, p[:, 0], p[:, 1])]


def brute_force_mle(model, array, records, nodes, extra=None):
    """Argmax of max(left, right) over a node grid plus extra points; ties to smallest (x, y)."""
    box = array.theta_box
    gx, gy = np.meshgrid(np.linspace(box.alpha1, box.alpha2, nodes), np.linspace(box.beta1, box.beta2, nodes))
    x = gx.ravel()
    y = gy.ravel()
    if extra is not None and len(extra):
        x = np.concatenate([x, extra[:, 0]])
        y = np.concatenate([y, extra[:, 1]])
    left, right = loglr_sides(model, array, records, x, y)
    val = np.maximum(left, right)
    val[excluded(array, x, y)] = -np.inf
    top = val.max()
    idx = np.flatnonzero(val >= top - 1e-12)
    best = min(idx, key=lambda i: (x[i], y[i]))
    return float(x[best]), float(y[best]), float(top)
