"""Hot numeric kernels, each in a numba and a pure-numpy flavour.

The public names (``loglr_points_constant``, ``loglr_lattice_constant``,
``ln_z_lattice``) dispatch to
the numba versions unless ``POISLOC_BACKEND=numpy`` is set. Both flavours
perform the same floating-point operations in the same order, so they agree
to the last bit on the platforms we test; the test-suite checks this.
"""

import math

import numpy as np

from ._backend import HAVE_NUMBA, USE_NUMBA, njit

__all__ = [
    "loglr_points_constant",
    "loglr_lattice_constant",
    "ln_z_lattice",
    "loglr_points_constant_numpy",
    "loglr_lattice_constant_numpy",
    "ln_z_lattice_numpy",
]


# ---------------------------------------------------------------------------
# Constant-signal log-likelihood ratio at arbitrary parameter points
# ---------------------------------------------------------------------------


def loglr_points_constant_numpy(px, py, sx, sy, nu, times, offsets, ell, nl1, horizon, atol):
    px = np.ascontiguousarray(px, dtype=np.float64).ravel()
    py = np.ascontiguousarray(py, dtype=np.float64).ravel()
    left = np.zeros(px.size)
    right = np.zeros(px.size)
    for j in range(sx.size):
        tau = np.hypot(px - sx[j], py - sy[j]) / nu
        t = times[offsets[j]:offsets[j + 1]]
        total = t.size
        n_less = np.searchsorted(t, tau - atol, side="left")
        n_le = np.searchsorted(t, tau + atol, side="right")
        comp = nl1 * np.maximum(horizon - tau, 0.0)
        right = right + (ell * (total - n_less) - comp)
        left = left + (ell * (total - n_le) - comp)
    return left, right


@njit
def _count_less(arr, lo, hi, x):
    # number of arr[lo:hi] strictly below x
    a, b = lo, hi
    while a < b:
        mid = (a + b) >> 1
        if arr[mid] < x:
            a = mid + 1
        else:
            b = mid
    return a - lo


@njit
def _count_le(arr, lo, hi, x):
    a, b = lo, hi
    while a < b:
        mid = (a + b) >> 1
        if arr[mid] <= x:
            a = mid + 1
        else:
            b = mid
    return a - lo


@njit
def _loglr_points_constant_nb(px, py, sx, sy, nu, times, offsets, ell, nl1, horizon, atol, left, right):
    for i in range(px.size):
        lv = 0.0
        rv = 0.0
        for j in range(sx.size):
            tau = math.hypot(px[i] - sx[j], py[i] - sy[j]) / nu
            lo = offsets[j]
            hi = offsets[j + 1]
            total = hi - lo
            n_less = _count_less(times, lo, hi, tau - atol)
            n_le = _count_le(times, lo, hi, tau + atol)
            comp = nl1 * max(horizon - tau, 0.0)
            rv = rv + (ell * (total - n_less) - comp)
            lv = lv + (ell * (total - n_le) - comp)
        left[i] = lv
        right[i] = rv


def loglr_points_constant_numba(px, py, sx, sy, nu, times, offsets, ell, nl1, horizon, atol):
    px = np.ascontiguousarray(px, dtype=np.float64).ravel()
    py = np.ascontiguousarray(py, dtype=np.float64).ravel()
    left = np.empty(px.size)
    right = np.empty(px.size)
    _loglr_points_constant_nb(
        px, py,
        np.ascontiguousarray(sx, dtype=np.float64),
        np.ascontiguousarray(sy, dtype=np.float64),
        float(nu),
        np.ascontiguousarray(times, dtype=np.float64),
        np.ascontiguousarray(offsets, dtype=np.int64),
        float(ell), float(nl1), float(horizon), float(atol),
        left, right,
    )
    return left, right


# ---------------------------------------------------------------------------
# Constant-signal right-limit log-likelihood ratio on a lattice
# ---------------------------------------------------------------------------
#
# Cells whose center lies in a closed exclusion ball get -inf. Along a row the
# delays move by a fraction of the spacing, so the event pointers are walked
# from the previous cell instead of re-searched. Distances use sqrt of the
# squared sum (not hypot): coordinates are moderate and it is twice as fast.


def loglr_lattice_constant_numpy(xc, yc, sx, sy, nu, times, offsets, ell, nl1, horizon, eps):
    X = xc[None, :]
    Y = yc[:, None]
    out = np.zeros((yc.size, xc.size))
    excluded = np.zeros(out.shape, dtype=bool)
    for j in range(sx.size):
        dx = X - sx[j]
        dy = Y - sy[j]
        tau = np.sqrt(dx * dx + dy * dy) / nu
        t = times[offsets[j]:offsets[j + 1]]
        n_less = np.searchsorted(t, tau, side="left")
        out = out + (ell * (t.size - n_less) - nl1 * np.maximum(horizon - tau, 0.0))
        excluded |= tau * nu <= eps
    out[excluded] = -np.inf
    return out


@njit
def _loglr_lattice_constant_nb(xc, yc, sx, sy, nu, times, offsets, ell, nl1, horizon, eps, out):
    k = sx.size
    ptr = np.empty(k, dtype=np.int64)
    for b in range(yc.size):
        y = yc[b]
        for j in range(k):
            dx = xc[0] - sx[j]
            dy = y - sy[j]
            tau0 = math.sqrt(dx * dx + dy * dy) / nu
            ptr[j] = offsets[j] + _count_less(times, offsets[j], offsets[j + 1], tau0)
        for a in range(xc.size):
            x = xc[a]
            acc = 0.0
            bad = False
            for j in range(k):
                dx = x - sx[j]
                dy = y - sy[j]
                tau = math.sqrt(dx * dx + dy * dy) / nu
                lo = offsets[j]
                hi = offsets[j + 1]
                p = ptr[j]
                while p > lo and times[p - 1] >= tau:
                    p -= 1
                while p < hi and times[p] < tau:
                    p += 1
                ptr[j] = p
                acc = acc + (ell * (hi - p) - nl1 * max(horizon - tau, 0.0))
                if tau * nu <= eps:
                    bad = True
            out[b, a] = -np.inf if bad else acc


def loglr_lattice_constant_numba(xc, yc, sx, sy, nu, times, offsets, ell, nl1, horizon, eps):
    xc = np.ascontiguousarray(xc, dtype=np.float64)
    yc = np.ascontiguousarray(yc, dtype=np.float64)
    out = np.empty((yc.size, xc.size))
    _loglr_lattice_constant_nb(
        xc, yc,
        np.ascontiguousarray(sx, dtype=np.float64),
        np.ascontiguousarray(sy, dtype=np.float64),
        float(nu),
        np.ascontiguousarray(times, dtype=np.float64),
        np.ascontiguousarray(offsets, dtype=np.int64),
        float(ell), float(nl1), float(horizon), float(eps), out,
    )
    return out


# ---------------------------------------------------------------------------
# Limit field ln Z(u) on a regular lattice
# ---------------------------------------------------------------------------
#
# Per sensor the Poisson part of ln Z is ell * (#{jumps <= s} - base) with s the
# projection <m_j, u>; ``jumps`` holds the merged, sorted jump positions of the
# two one-sided paths and ``base`` the number of negative-side jumps.


def ln_z_lattice_numpy(xc, yc, mx, my, jumps, offsets, base, ell, dx, dy):
    X = xc[None, :]
    Y = yc[:, None]
    acc = np.zeros((yc.size, xc.size))
    for j in range(mx.size):
        s = mx[j] * X + my[j] * Y
        cnt = np.searchsorted(jumps[offsets[j]:offsets[j + 1]], s, side="right")
        acc += ell * (cnt - base[j])
    return acc - (dx * X + dy * Y)


@njit
def _ln_z_lattice_nb(xc, yc, mx, my, jumps, offsets, base, ell, dx, dy, out):
    k = mx.size
    ptr = np.empty(k, dtype=np.int64)
    for b in range(yc.size):
        y = yc[b]
        for j in range(k):
            s0 = mx[j] * xc[0] + my[j] * y
            ptr[j] = offsets[j] + _count_le(jumps, offsets[j], offsets[j + 1], s0)
        for a in range(xc.size):
            x = xc[a]
            acc = 0.0
            for j in range(k):
                s = mx[j] * x + my[j] * y
                lo = offsets[j]
                hi = offsets[j + 1]
                p = ptr[j]
                # s is monotone along the row, so the pointer only moves one way
                if mx[j] >= 0.0:
                    while p < hi and jumps[p] <= s:
                        p += 1
                else:
                    while p > lo and jumps[p - 1] > s:
                        p -= 1
                ptr[j] = p
                acc += ell * ((p - lo) - base[j])
            out[b, a] = acc - (dx * x + dy * y)


def ln_z_lattice_numba(xc, yc, mx, my, jumps, offsets, base, ell, dx, dy):
    xc = np.ascontiguousarray(xc, dtype=np.float64)
    yc = np.ascontiguousarray(yc, dtype=np.float64)
    out = np.empty((yc.size, xc.size))
    _ln_z_lattice_nb(
        xc, yc,
        np.ascontiguousarray(mx, dtype=np.float64),
        np.ascontiguousarray(my, dtype=np.float64),
        np.ascontiguousarray(jumps, dtype=np.float64),
        np.ascontiguousarray(offsets, dtype=np.int64),
        np.ascontiguousarray(base, dtype=np.int64),
        float(ell), float(dx), float(dy), out,
    )
    return out


if USE_NUMBA:
    loglr_points_constant = loglr_points_constant_numba
    loglr_lattice_constant = loglr_lattice_constant_numba
    ln_z_lattice = ln_z_lattice_numba
else:
    loglr_points_constant = loglr_points_constant_numpy
    loglr_lattice_constant = loglr_lattice_constant_numpy
    ln_z_lattice = ln_z_lattice_numpy

if not HAVE_NUMBA:  # pragma: no cover
    loglr_points_constant_numba = loglr_points_constant_numpy
    loglr_lattice_constant_numba = loglr_lattice_constant_numpy
    ln_z_lattice_numba = ln_z_lattice_numpy
