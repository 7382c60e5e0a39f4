"""Limit likelihood-ratio field and the limit law of the rescaled Bayes error.

In the local parameter ``u`` the field is driven by one two-sided Poisson
path per sensor along the projected coordinate ``s_j = <m_j, u>``:

    ln Z(u) = sum_j ell * [N_j+(s_j) 1{s_j >= 0} - N_j-(-s_j) 1{s_j < 0}] - <drift, u>

with ``N_j+`` of rate ``lambda0/nu`` and ``N_j-`` of rate ``(lambda0+lambda1)/nu``.
"""

import csv
import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .geometry import direction_frame
from .simulate import SimulationSeed

__all__ = [
    "LimitModel",
    "ZetaSample",
    "EfficiencyBound",
    "LIMIT_STREAM",
    "sample_paths",
    "sample_ln_z",
    "sample_ln_z_many",
    "sample_zeta",
    "efficiency_bound",
    "write_zeta_csv",
]

# first stream label of every limit-process generator, keeps these streams
# disjoint from the event simulator's per-sensor streams
LIMIT_STREAM = 1_000_003

TAIL_TOL = 1e-4
MAX_DOUBLINGS = 3
_BLOCK = 256


@dataclass(frozen=True)
class LimitModel:
    directions: np.ndarray  # (k, 2), unit vectors from the source toward each sensor
    ell: float
    rate_plus: float
    rate_minus: float
    drift: np.ndarray
    half_width: float
    spacing: float

    def __post_init__(self):
        m = np.array(self.directions, dtype=float)
        if m.ndim != 2 or m.shape[1] != 2:
            raise ValueError("directions must have shape (k, 2)")
        if not np.allclose(np.hypot(m[:, 0], m[:, 1]), 1.0, atol=1e-12):
            raise ValueError("directions must be unit vectors")
        if not (self.rate_plus > 0 and self.rate_minus > 0 and self.ell > 0):
            raise ValueError("rates and jump size must be positive")
        if not (self.half_width > 0 and 0 < self.spacing <= self.half_width):
            raise ValueError("need 0 < spacing <= half_width")
        m.flags.writeable = False
        d = np.array(self.drift, dtype=float)
        d.flags.writeable = False
        object.__setattr__(self, "directions", m)
        object.__setattr__(self, "drift", d)

    @classmethod
    def from_rates(cls, directions, lambda0, lambda1, nu, half_width=None, spacing=None):
        m = np.asarray(directions, dtype=float)
        if half_width is None:
            half_width = 40.0 * nu / lambda1 * max(1.0, 1.0 / lambda0)
        if spacing is None:
            spacing = half_width / 400.0
        return cls(
            directions=m,
            ell=math.log1p(lambda1 / lambda0),
            rate_plus=lambda0 / nu,
            rate_minus=(lambda0 + lambda1) / nu,
            drift=(lambda1 / nu) * m.sum(axis=0),
            half_width=float(half_width),
            spacing=float(spacing),
        )

    @classmethod
    def from_model(cls, model, array, theta0, **kw):
        """Limit of the field for a change-point model; depends on the signal only through its value at 0."""
        frame = direction_frame(array, theta0)
        return cls.from_rates(frame.m, model.lambda0, model.form.at_zero, array.nu, **kw)

    def scaled(self, factor):
        """Same field with every rate multiplied by ``factor`` (distances shrink by it)."""
        return LimitModel(
            self.directions, self.ell, self.rate_plus * factor, self.rate_minus * factor,
            self.drift * factor, self.half_width / factor, self.spacing / factor,
        )


@dataclass(frozen=True)
class ZetaSample:
    zeta: tuple
    log_mass: float
    tail_fraction: float
    half_width: float
    flagged: bool


@dataclass(frozen=True)
class EfficiencyBound:
    mean: float
    se: float
    reps: int
    flagged: int


class _UnitPath:
    """Arrival times of a unit-rate Poisson process, extended on demand."""

    def __init__(self, rng):
        self.rng = rng
        self.times = np.empty(0)

    def upto(self, length):
        while self.times.size == 0 or self.times[-1] <= length:
            start = self.times[-1] if self.times.size else 0.0
            block = start + np.cumsum(self.rng.standard_exponential(_BLOCK))
            self.times = np.concatenate([self.times, block])
        return self.times[: np.searchsorted(self.times, length, side="right")]


class _Paths:
    def __init__(self, limit, seed):
        if not isinstance(seed, SimulationSeed):
            seed = SimulationSeed(int(seed))
        self.limit = limit
        k = limit.directions.shape[0]
        self.plus = [_UnitPath(seed.generator(LIMIT_STREAM, j, 0)) for j in range(k)]
        self.minus = [_UnitPath(seed.generator(LIMIT_STREAM, j, 1)) for j in range(k)]

    def jumps(self, extent):
        """Merged jump positions per sensor and the count on the negative side.

        Positive-side jumps sit at ``p``, negative-side ones at ``-q``; then
        ``#{J <= s} - Q`` equals ``N+(s)`` for ``s >= 0`` and ``-N-(-s)`` for ``s < 0``.
        """
        lim = self.limit
        parts, offsets, base = [], [0], []
        for j in range(lim.directions.shape[0]):
            ext = float(extent[j])
            p = self.plus[j].upto(ext * lim.rate_plus) / lim.rate_plus
            q = self.minus[j].upto(ext * lim.rate_minus) / lim.rate_minus
            J = np.concatenate([-q[::-1], p])
            parts.append(J)
            offsets.append(offsets[-1] + J.size)
            base.append(q.size)
        return (np.ascontiguousarray(np.concatenate(parts)), np.array(offsets, dtype=np.int64),
                np.array(base, dtype=np.int64))


def sample_paths(limit, seed, extent):
    """Jump data (jumps, offsets, base) covering ``|s_j| <= extent[j]``."""
    return _Paths(limit, seed).jumps(np.broadcast_to(np.asarray(extent, dtype=float), (limit.directions.shape[0],)))


def sample_ln_z(limit, us, seed):
    """ln Z at displacement(s) ``us`` (shape ``(..., 2)``) from one draw of the paths."""
    us = np.asarray(us, dtype=float)
    flat = us.reshape(-1, 2)
    s = flat @ limit.directions.T  # (points, k)
    extent = np.abs(s).max(axis=0) if s.size else np.zeros(limit.directions.shape[0])
    jumps, offsets, base = sample_paths(limit, seed, extent)
    acc = np.zeros(flat.shape[0])
    for j in range(limit.directions.shape[0]):
        J = jumps[offsets[j]:offsets[j + 1]]
        acc += limit.ell * (np.searchsorted(J, s[:, j], side="right") - base[j])
    out = acc - flat @ limit.drift
    out[np.all(flat == 0.0, axis=1)] = 0.0
    return out.reshape(us.shape[:-1])


def sample_ln_z_many(limit, us, draws, seed):
    """``draws`` independent copies of ln Z at a few points, shape ``(draws, points)``.

    Samples the joint law at the given points directly: per sensor and side the
    counts at the sorted projections are cumulative sums of independent Poisson
    increments. Same law as :func:`sample_ln_z`, far cheaper for many draws.
    """
    flat = np.asarray(us, dtype=float).reshape(-1, 2)
    s = flat @ limit.directions.T
    if not isinstance(seed, SimulationSeed):
        seed = SimulationSeed(int(seed))
    rng = seed.generator(LIMIT_STREAM, 99)
    acc = np.zeros((draws, flat.shape[0]))
    for j in range(limit.directions.shape[0]):
        for sign, rate in ((1.0, limit.rate_plus), (-1.0, limit.rate_minus)):
            mask = sign * s[:, j] > 0
            if not mask.any():
                continue
            idx = np.flatnonzero(mask)
            dist = sign * s[idx, j]
            order = np.argsort(dist, kind="stable")
            steps = np.diff(np.concatenate([[0.0], dist[order]]))
            counts = np.cumsum(rng.poisson(rate * steps, size=(draws, steps.size)), axis=1)
            acc[:, idx[order]] += sign * limit.ell * counts
    return acc - flat @ limit.drift


def _lattice_moments(lnz, xc, yc):
    top = float(np.max(lnz))
    w = np.exp(lnz - top)
    total = float(w.sum())
    zx = float(w.sum(axis=0) @ xc / total)
    zy = float(w.sum(axis=1) @ yc / total)
    ring = float(w[0].sum() + w[-1].sum() + w[1:-1, 0].sum() + w[1:-1, -1].sum())
    return zx, zy, top + math.log(total), ring / total


def sample_zeta(limit, seed, *, tail_tol=TAIL_TOL, max_doublings=MAX_DOUBLINGS):
    """One draw of the ratio-of-integrals limit vector by midpoint rule on ``[-U, U]^2``."""
    paths = _Paths(limit, seed)
    h = limit.spacing
    U = limit.half_width
    for doubling in range(max_doublings + 1):
        cells = int(round(2 * U / h))
        xc = -U + (np.arange(cells) + 0.5) * h
        m = limit.directions
        extent = U * (np.abs(m[:, 0]) + np.abs(m[:, 1]))
        jumps, offsets, base = paths.jumps(extent)
        lnz = kernels.ln_z_lattice(
            xc, xc, np.ascontiguousarray(m[:, 0]), np.ascontiguousarray(m[:, 1]),
            jumps, offsets, base, limit.ell, float(limit.drift[0]), float(limit.drift[1]),
        )
        zx, zy, log_mass, tail = _lattice_moments(lnz, xc, xc)
        if tail < tail_tol:
            break
        if doubling < max_doublings:
            U *= 2.0
    return ZetaSample((zx, zy), log_mass + 2 * math.log(h), tail, U, bool(tail >= tail_tol))


def efficiency_bound(limit, reps, seed, *, draws=None):
    """Monte Carlo mean of ``|zeta|^2`` and its standard error."""
    if reps < 100:
        raise ValueError(f"reps must be at least 100, got {reps}")
    if draws is None:
        draws = [sample_zeta(limit, SimulationSeed(int(seed), r)) for r in range(reps)]
    sq = np.array([d.zeta[0] ** 2 + d.zeta[1] ** 2 for d in draws])
    se = float(sq.std(ddof=1) / math.sqrt(sq.size))
    return EfficiencyBound(float(sq.mean()), se, int(sq.size), int(sum(d.flagged for d in draws)))


def write_zeta_csv(samples, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["zeta1", "zeta2", "mass", "tail_fraction"])
        for s in samples:
            w.writerow([repr(s.zeta[0]), repr(s.zeta[1]), repr(s.log_mass), repr(s.tail_fraction)])
