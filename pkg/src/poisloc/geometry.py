"""Sensor/source geometry: delays, direction frames and identifiability checks."""

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import ExclusionViolation
from .signal import Tabulated

__all__ = [
    "PlanePoint",
    "ParameterRectangle",
    "SensorArray",
    "DirectionFrame",
    "ValidationReport",
    "delay",
    "direction_frame",
    "i3_determinant",
    "validate_identifiability",
]


@dataclass(frozen=True)
class PlanePoint:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"non-finite coordinates ({self.x}, {self.y})")

    def as_array(self):
        return np.array([self.x, self.y], dtype=float)

    def __add__(self, other):
        ox, oy = other
        return PlanePoint(self.x + float(ox), self.y + float(oy))

    def __iter__(self):
        yield self.x
        yield self.y


@dataclass(frozen=True)
class ParameterRectangle:
    alpha1: float
    alpha2: float
    beta1: float
    beta2: float

    def __post_init__(self):
        vals = (self.alpha1, self.alpha2, self.beta1, self.beta2)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("rectangle bounds must be finite")
        if not (self.alpha1 < self.alpha2 and self.beta1 < self.beta2):
            raise ValueError("need alpha1 < alpha2 and beta1 < beta2")

    @property
    def width(self):
        return self.alpha2 - self.alpha1

    @property
    def height(self):
        return self.beta2 - self.beta1

    @property
    def area(self):
        return self.width * self.height

    @property
    def diameter(self):
        return math.hypot(self.width, self.height)

    @property
    def centroid(self):
        return PlanePoint(0.5 * (self.alpha1 + self.alpha2), 0.5 * (self.beta1 + self.beta2))

    def corners(self):
        return np.array([
            [self.alpha1, self.beta1],
            [self.alpha2, self.beta1],
            [self.alpha1, self.beta2],
            [self.alpha2, self.beta2],
        ])

    def contains(self, x, y, closed=True):
        x = np.asarray(x)
        y = np.asarray(y)
        if closed:
            return (x >= self.alpha1) & (x <= self.alpha2) & (y >= self.beta1) & (y <= self.beta2)
        return (x > self.alpha1) & (x < self.alpha2) & (y > self.beta1) & (y < self.beta2)

    def node_grid(self, size):
        """``size`` x ``size`` grid of nodes including the boundary."""
        return np.meshgrid(
            np.linspace(self.alpha1, self.alpha2, size),
            np.linspace(self.beta1, self.beta2, size),
        )


@dataclass(frozen=True)
class SensorArray:
    """Sensors, propagation speed ``nu``, exclusion radius and parameter box.

    Collinearity and the delay window are deliberately not enforced here;
    :func:`validate_identifiability` reports on them.
    """

    sensors: tuple
    nu: float
    epsilon: float
    theta_box: ParameterRectangle
    horizon: float
    _pos: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        sensors = tuple(s if isinstance(s, PlanePoint) else PlanePoint(*map(float, s)) for s in self.sensors)
        if len(sensors) < 3:
            raise ValueError("need at least three sensors")
        if len(set(sensors)) != len(sensors):
            raise ValueError("sensor positions must be pairwise distinct")
        for name in ("nu", "epsilon", "horizon"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be positive and finite, got {v}")
        pos = np.array([[s.x, s.y] for s in sensors], dtype=float)
        pos.flags.writeable = False
        object.__setattr__(self, "sensors", sensors)
        object.__setattr__(self, "_pos", pos)

    @property
    def positions(self):
        return self._pos

    @property
    def size(self):
        return len(self.sensors)

    def delays(self, x, y):
        """Delays of all sensors for (broadcastable) source coordinates; shape ``(k, ...)``."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        sx = self._pos[:, 0].reshape((-1,) + (1,) * max(x.ndim, y.ndim))
        sy = self._pos[:, 1].reshape(sx.shape)
        return np.hypot(x - sx, y - sy) / self.nu

    def in_exclusion(self, x, y):
        """True where ``(x, y)`` lies in some closed ball ``B(theta_j, epsilon)``."""
        return np.any(self.delays(x, y) * self.nu <= self.epsilon, axis=0)

    def check_exclusion(self, theta):
        rho = np.hypot(self._pos[:, 0] - theta.x, self._pos[:, 1] - theta.y)
        if np.any(rho < self.epsilon):
            j = int(np.argmin(rho))
            raise ExclusionViolation(
                f"point ({theta.x}, {theta.y}) is {rho[j]:.6g} from sensor {j}, inside epsilon={self.epsilon}"
            )

    @cached_property
    def delay_window(self):
        """Per-sensor (min, max) delay over the closed parameter box."""
        box = self.theta_box
        lo = np.empty(self.size)
        hi = np.empty(self.size)
        for j, (sx, sy) in enumerate(self._pos):
            cx = min(max(sx, box.alpha1), box.alpha2)
            cy = min(max(sy, box.beta1), box.beta2)
            lo[j] = math.hypot(sx - cx, sy - cy) / self.nu
            hi[j] = np.max(np.hypot(box.corners()[:, 0] - sx, box.corners()[:, 1] - sy)) / self.nu
        return lo, hi


def delay(array, j, theta):
    sx, sy = array.positions[j]
    return math.hypot(sx - theta.x, sy - theta.y) / array.nu


@dataclass(frozen=True)
class DirectionFrame:
    rho: np.ndarray
    tau: np.ndarray
    m: np.ndarray  # shape (k, 2); m_j points from the source toward sensor j


def direction_frame(array, theta0):
    diff = array.positions - theta0.as_array()
    rho = np.hypot(diff[:, 0], diff[:, 1])
    if np.any(rho < array.epsilon):
        raise ExclusionViolation(f"source ({theta0.x}, {theta0.y}) within epsilon of sensor {int(np.argmin(rho))}")
    return DirectionFrame(rho=rho, tau=rho / array.nu, m=diff / rho[:, None])


def i3_determinant(p1, p2, p3):
    """Determinant of [[x1, x2, x3], [y1, y2, y3], [1, 1, 1]]."""
    (x1, y1), (x2, y2), (x3, y3) = p1, p2, p3
    return (x2 - x1) * (y3 - y1) - (x3 - x1) * (y2 - y1)


@dataclass
class Check:
    name: str
    passed: bool
    detail: str = ""


@dataclass
class ValidationReport:
    checks: list
    warnings: list

    @property
    def ok(self):
        return all(c.passed for c in self.checks)

    def __getitem__(self, name):
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def lines(self):
        out = [f"{c.name}: {'pass' if c.passed else 'FAIL'}{' - ' + c.detail if c.detail else ''}" for c in self.checks]
        out += [f"warning: {w}" for w in self.warnings]
        return out

    def __str__(self):
        return "\n".join(self.lines())


def _smoothness_check(form, lambda0):
    # Linear interpolation is never C^2; this only rejects tables that look
    # discontinuous at the knot resolution.
    v = form.values
    t = form.knots
    if v.size < 3:
        return True, "two-knot table (linear)"
    d1 = np.diff(v) / np.diff(t)
    d2 = np.diff(d1) / (0.5 * (t[2:] - t[:-2]))
    if not np.all(np.isfinite(d2)):
        return False, "non-finite second differences"
    scale = max(float(np.ptp(v)), 1e-12 * lambda0)
    step = float(np.max(np.abs(np.diff(v))))
    if step > 0.25 * scale and v.size > 5:
        return False, f"adjacent-knot step {step:.3g} exceeds 25% of the signal range {scale:.3g}"
    return True, f"max |second difference| {float(np.max(np.abs(d2))):.3g}"


def validate_identifiability(array, signal=None, grid=101):
    checks = []
    warnings = []
    box = array.theta_box
    gx, gy = box.node_grid(grid)
    excluded = array.in_exclusion(gx, gy)
    free = ~excluded
    checks.append(Check(
        "I1",
        bool(free.any()),
        f"{int(free.sum())}/{free.size} grid nodes outside the epsilon-balls",
    ))

    if signal is None or signal.is_constant:
        checks.append(Check("I2", True, "constant signal"))
    else:
        ok, detail = _smoothness_check(signal.form, signal.lambda0)
        checks.append(Check("I2", ok, detail))
        if isinstance(signal.form, Tabulated) and signal.form.values.min() < 0.01 * signal.lambda0:
            warnings.append(
                f"min signal value {signal.form.values.min():.3g} < 0.01*lambda0; the exponential tail bound weakens"
            )

    p = array.positions
    det = i3_determinant(p[0], p[1], p[2])
    scale = max(float(np.max(np.abs(p[:3]))), 1e-300) ** 2
    checks.append(Check("I3", abs(det) > 1e-9 * scale, f"determinant {det:.6g} (threshold {1e-9 * scale:.3g})"))

    tau = array.delays(gx[free], gy[free])
    tau_c = array.delays(box.corners()[:, 0], box.corners()[:, 1])
    tau_all = np.concatenate([tau.ravel(), tau_c.ravel()])
    inside = bool(np.all((tau_all > 0) & (tau_all < array.horizon))) if tau_all.size else False
    checks.append(Check(
        "delay_window",
        inside,
        f"delays span [{tau_all.min():.6g}, {tau_all.max():.6g}] vs horizon {array.horizon:g}" if tau_all.size else "no admissible nodes",
    ))
    return ValidationReport(checks, warnings)
