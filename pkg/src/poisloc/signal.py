"""Change-point intensity models.

Sensor ``j`` observes a Poisson process with intensity

    n * lambda(t - tau_j) * 1{t >= tau_j} + n * lambda0,   0 <= t <= T,

where ``lambda`` is either a constant ``lambda1`` or a tabulated, linearly
interpolated function. The indicator is closed at ``tau_j``.
"""

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DomainError

__all__ = [
    "Constant",
    "Tabulated",
    "SignalModel",
    "intensity",
    "cumulative_signal",
    "log_ratio",
]


@dataclass(frozen=True)
class Constant:
    lambda1: float

    def __post_init__(self):
        if not (math.isfinite(self.lambda1) and self.lambda1 > 0):
            raise ValueError(f"lambda1 must be positive and finite, got {self.lambda1}")

    @property
    def peak(self):
        return float(self.lambda1)

    @property
    def at_zero(self):
        return float(self.lambda1)

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        return np.where(s >= 0, self.lambda1, 0.0)

    def cumulative(self, x):
        return self.lambda1 * np.maximum(np.asarray(x, dtype=float), 0.0)


@dataclass(frozen=True, eq=False)
class Tabulated:
    """Signal shape given at knots and linearly interpolated in between.

    Values must be nonnegative. Outside the knot range the end values are held
    constant; ``lambda(s) = 0`` for ``s < 0`` regardless of the table.
    """

    knots: np.ndarray
    values: np.ndarray
    _cum: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        knots = np.asarray(self.knots, dtype=float).copy()
        values = np.asarray(self.values, dtype=float).copy()
        if knots.ndim != 1 or knots.shape != values.shape or knots.size < 2:
            raise ValueError("knots and values must be 1-D arrays of equal length >= 2")
        if not (np.all(np.isfinite(knots)) and np.all(np.isfinite(values))):
            raise ValueError("knots and values must be finite")
        if np.any(np.diff(knots) <= 0):
            raise ValueError("knots must be strictly increasing")
        if knots[0] != 0.0:
            raise ValueError("the first knot must be at 0")
        if np.any(values < 0):
            raise ValueError("tabulated signal values must be nonnegative")
        knots.flags.writeable = False
        values.flags.writeable = False
        cum = np.concatenate([[0.0], np.cumsum(0.5 * (values[1:] + values[:-1]) * np.diff(knots))])
        cum.flags.writeable = False
        object.__setattr__(self, "knots", knots)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "_cum", cum)

    @classmethod
    def from_csv(cls, path):
        """Read a two-column ``time,value`` table; a header row is optional."""
        rows = []
        with open(path, newline="") as fh:
            for i, row in enumerate(csv.reader(fh)):
                if not row or not "".join(row).strip():
                    continue
                try:
                    rows.append((float(row[0]), float(row[1])))
                except ValueError:
                    if i == 0:
                        continue
                    raise
        arr = np.array(rows, dtype=float)
        return cls(arr[:, 0], arr[:, 1])

    @property
    def peak(self):
        return float(self.values.max())

    @property
    def at_zero(self):
        return float(self.values[0])

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        return np.where(s >= 0, np.interp(s, self.knots, self.values), 0.0)

    def cumulative(self, x):
        """Exact integral of the interpolant over ``[0, x]``."""
        x = np.asarray(x, dtype=float)
        xc = np.maximum(x, 0.0)
        k = np.clip(np.searchsorted(self.knots, xc, side="right") - 1, 0, self.knots.size - 1)
        t0 = self.knots[k]
        v0 = self.values[k]
        v1 = np.interp(xc, self.knots, self.values)
        # beyond the last knot the held value makes v0 == v1, still exact
        return self._cum[k] + 0.5 * (v0 + v1) * (xc - t0)


@dataclass(frozen=True)
class SignalModel:
    lambda0: float
    form: object
    scale_n: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.lambda0) and self.lambda0 > 0):
            raise ValueError(f"lambda0 must be positive and finite, got {self.lambda0}")
        if not (math.isfinite(self.scale_n) and self.scale_n > 0):
            raise ValueError(f"scale_n must be positive and finite, got {self.scale_n}")
        if not isinstance(self.form, (Constant, Tabulated)):
            raise TypeError("form must be Constant or Tabulated")

    @property
    def is_constant(self):
        return isinstance(self.form, Constant)

    @property
    def ell(self):
        """Log jump size ``ln(1 + lambda(0)/lambda0)``."""
        return math.log1p(self.form.at_zero / self.lambda0)

    def with_scale(self, n):
        return replace(self, scale_n=float(n))


def intensity(model, tau_j, t, horizon=None):
    if t < 0 or (horizon is not None and t > horizon):
        raise DomainError(f"t={t} outside [0, {horizon}]")
    n = model.scale_n
    s = t - tau_j
    signal = float(model.form(s)) if s >= 0 else 0.0
    return n * signal + n * model.lambda0


def cumulative_signal(model, tau_j, horizon):
    """Integral of ``lambda(t - tau_j)`` over ``[tau_j, T]``, without the factor n."""
    if not (0 <= tau_j <= horizon):
        raise DomainError(f"tau={tau_j} outside [0, {horizon}]")
    if model.is_constant:
        return model.form.lambda1 * (horizon - tau_j)
    return float(model.form.cumulative(horizon - tau_j))


def log_ratio(model, tau_j, t):
    if t < tau_j:
        raise DomainError(f"t={t} precedes the arrival time {tau_j}")
    if model.is_constant:
        return model.ell
    return math.log1p(float(model.form(t - tau_j)) / model.lambda0)
