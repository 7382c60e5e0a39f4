"""Log-likelihood ratio of the source position and Hellinger-type functionals.

All likelihood values are on the log scale. The ratio is taken against the
pure-background model, so the ``n * lambda0`` compensator terms cancel and
never appear.

One-sided values: ``right`` counts an event sitting exactly at the delay
``tau_j(theta)`` (the limit approached from smaller delays), ``left`` does
not. They differ only on the event circles ``|theta_j - theta| = nu * t_ij``.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from . import kernels
from .errors import FormError
from .signal import cumulative_signal

__all__ = [
    "SidedValue",
    "pack_records",
    "log_lr",
    "log_lr_constant",
    "log_lr_field",
    "hellinger",
    "expected_half_lr",
]


@dataclass(frozen=True)
class SidedValue:
    left: float
    right: float

    @property
    def value(self):
        return max(self.left, self.right)


def pack_records(records):
    """Concatenate per-sensor event times; returns ``(times, offsets)``."""
    records = sorted(records, key=lambda r: r.sensor)
    offsets = np.zeros(len(records) + 1, dtype=np.int64)
    offsets[1:] = np.cumsum([r.count for r in records])
    times = np.concatenate([r.times for r in records]) if records else np.empty(0)
    return np.ascontiguousarray(times, dtype=float), offsets


def _compensator(model, tau, horizon):
    return cumulative_signal(model, tau, horizon) if tau <= horizon else 0.0


def log_lr(model, array, theta, records, atol=0.0):
    """General log-likelihood ratio: per-event log ratios minus the compensator."""
    array.check_exclusion(theta)
    T = array.horizon
    n = model.scale_n
    taus = array.delays(theta.x, theta.y)
    left = 0.0
    right = 0.0
    for rec in sorted(records, key=lambda r: r.sensor):
        tau = float(taus[rec.sensor])
        t = rec.times
        comp = n * _compensator(model, tau, T)
        s = t - tau
        terms = np.log1p(model.form(np.maximum(s, 0.0)) / model.lambda0)
        right += float(np.sum(terms[s >= -atol])) - comp
        left += float(np.sum(terms[s > atol])) - comp
    return SidedValue(left, right)


def log_lr_constant(model, array, theta, records, atol=0.0):
    """Closed form for a constant signal: ell * post-arrival counts - n*lambda1*sum(T - tau)."""
    if not model.is_constant:
        raise FormError("log_lr_constant needs a Constant signal form")
    array.check_exclusion(theta)
    T = array.horizon
    n = model.scale_n
    ell = model.ell
    lam1 = model.form.lambda1
    taus = array.delays(theta.x, theta.y)
    left = 0.0
    right = 0.0
    for rec in records:
        tau = float(taus[rec.sensor])
        total = rec.count
        n_less = int(np.searchsorted(rec.times, tau - atol, side="left"))
        n_le = int(np.searchsorted(rec.times, tau + atol, side="right"))
        comp = n * lam1 * max(T - tau, 0.0)
        right += ell * (total - n_less) - comp
        left += ell * (total - n_le) - comp
    return SidedValue(left, right)


def _tabulated_field(model, array, records, px, py, atol, chunk_elems=2_000_000):
    T = array.horizon
    n = model.scale_n
    left = np.zeros(px.size)
    right = np.zeros(px.size)
    for rec in records:
        sx, sy = array.positions[rec.sensor]
        tau = np.hypot(px - sx, py - sy) / array.nu
        comp = n * np.where(tau <= T, model.form.cumulative(np.maximum(T - tau, 0.0)), 0.0)
        t = rec.times
        if t.size:
            step = max(1, chunk_elems // t.size)
            for a in range(0, px.size, step):
                s = t[None, :] - tau[a:a + step, None]
                terms = np.log1p(model.form(np.maximum(s, 0.0)) / model.lambda0)
                right[a:a + step] += np.where(s >= -atol, terms, 0.0).sum(axis=1)
                left[a:a + step] += np.where(s > atol, terms, 0.0).sum(axis=1)
        right -= comp
        left -= comp
    return left, right


def log_lr_field(model, array, records, px, py, atol=0.0):
    """Vectorized ``log_lr`` over many points; returns ``(left, right)`` arrays.

    No exclusion check is made; callers mask the epsilon-balls themselves.
    """
    px = np.asarray(px, dtype=float)
    py = np.asarray(py, dtype=float)
    shape = np.broadcast_shapes(px.shape, py.shape)
    px = np.broadcast_to(px, shape).ravel()
    py = np.broadcast_to(py, shape).ravel()
    if model.is_constant:
        times, offsets = pack_records(records)
        left, right = kernels.loglr_points_constant(
            px, py, array.positions[:, 0], array.positions[:, 1], array.nu,
            times, offsets, model.ell, model.scale_n * model.form.lambda1, array.horizon, atol,
        )
    else:
        left, right = _tabulated_field(model, array, records, px, py, atol)
    return left.reshape(shape), right.reshape(shape)


def hellinger(model, array, theta_a, theta_b):
    """Sum over sensors of the integral of (sqrt(lambda_a) - sqrt(lambda_b))^2 on [0, T]."""
    array.check_exclusion(theta_a)
    array.check_exclusion(theta_b)
    T = array.horizon
    n = model.scale_n
    ta = array.delays(theta_a.x, theta_a.y)
    tb = array.delays(theta_b.x, theta_b.y)
    if model.is_constant:
        c = (math.sqrt(model.lambda0 + model.form.lambda1) - math.sqrt(model.lambda0)) ** 2
        return float(n * c * np.sum(np.abs(np.clip(ta, 0, T) - np.clip(tb, 0, T))))
    return _hellinger_quad(model, T, ta, tb)


def _hellinger_quad(model, T, ta, tb):
    n = model.scale_n
    lam0 = model.lambda0
    form = model.form
    total = 0.0
    for a, b in zip(ta, tb):
        a = float(a)
        b = float(b)
        if a == b:
            continue

        def f(t, a=a, b=b):
            la = form(t - a) if t >= a else 0.0
            lb = form(t - b) if t >= b else 0.0
            return (math.sqrt(n * float(la) + n * lam0) - math.sqrt(n * float(lb) + n * lam0)) ** 2

        pts = {a, b}
        if hasattr(form, "knots"):
            pts.update((form.knots + a).tolist())
            pts.update((form.knots + b).tolist())
        edges = sorted(p for p in pts if 0.0 < p < T)
        edges = [0.0] + edges + [T]
        for lo, hi in zip(edges[:-1], edges[1:]):
            if hi > lo:
                val, _ = integrate.quad(f, lo, hi, epsabs=1e-11, epsrel=1e-10, limit=200)
                total += val
    return float(total)


def expected_half_lr(model, array, theta0, u):
    """E[Z_n(u)^{1/2}] = exp(-H/2) with H the Hellinger-type distance to theta0 + u/n."""
    u = np.asarray(u, dtype=float)
    theta_u = theta0 + u / model.scale_n
    return math.exp(-0.5 * hellinger(model, array, theta0, theta_u))
