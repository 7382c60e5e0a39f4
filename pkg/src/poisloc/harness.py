"""Experiment configuration, Monte Carlo drivers and result files."""

import csv
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from ._backend import backend_name
from .errors import ConfigError, InsufficientReplications
from .estimators import Prior, bayes_estimate, estimate_arrival, mle_estimate, trilaterate
from .geometry import ParameterRectangle, PlanePoint, SensorArray, validate_identifiability
from .likelihood import hellinger, log_lr, log_lr_constant, log_lr_field
from .limit_process import LimitModel, efficiency_bound, sample_ln_z, sample_zeta
from .signal import Constant, SignalModel, Tabulated
from .simulate import SimulationSeed, sample_events

__all__ = [
    "ExperimentConfig",
    "TrialResult",
    "ConvergenceReport",
    "CSV_HEADER",
    "ESTIMATORS",
    "config_from_dict",
    "load_config",
    "default_config_dict",
    "default_config",
    "trial_seed",
    "simulate_trial",
    "estimate_records",
    "run_error_curve",
    "summarize",
    "curve_checks",
    "sample_zeta_draws",
    "sample_finite_ln_z",
    "sample_limit_ln_z",
    "run_convergence_check",
    "ks_distance",
    "run_invariant_suite",
]

CSV_HEADER = ["n", "rep", "estimator", "x", "y", "error", "wall_ms"]
ESTIMATORS = ("BE", "MLE", "TRILAT")

_TOP_KEYS = {
    "geometry", "signal", "theta0", "n_values", "replications", "estimators",
    "prior", "seed", "output_dir", "record_timing",
}
_GEOMETRY_KEYS = {"sensors", "nu", "epsilon", "theta_box", "T"}
_SIGNAL_KEYS = {"lambda0", "lambda1", "knots", "values", "table"}
_PRIOR_KEYS = {"kind", "coef"}


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentConfig:
    array: SensorArray
    signal: SignalModel
    theta0: PlanePoint
    n_values: tuple
    replications: int
    estimators: tuple
    prior_spec: dict
    seed: int
    output_dir: str
    record_timing: bool = False
    raw: dict = field(default_factory=dict, compare=False, repr=False)
    base_dir: str = field(default=None, compare=False, repr=False)

    def prior(self):
        return make_prior(self.prior_spec)

    def model(self, n):
        return self.signal.with_scale(n)

    def replace(self, **changes):
        """New validated config with top-level keys of the JSON form replaced."""
        raw = dict(self.raw)
        raw.update(changes)
        return config_from_dict(raw, base_dir=self.base_dir)


def make_prior(spec):
    kind = spec.get("kind", "uniform")
    if kind == "uniform":
        return Prior.uniform()
    if kind == "linear":
        a, b, c = spec["coef"]
        return Prior.linear(float(a), float(b), float(c))
    raise ConfigError("prior.kind", f"unknown prior kind {kind!r}")


def _unknown(section, got, allowed):
    extra = sorted(set(got) - allowed)
    if extra:
        raise ConfigError(f"{section}{'.' if section else ''}{extra[0]}", "unknown key")


def _number(value, name, positive=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ConfigError(name, f"expected a finite number, got {value!r}")
    if positive and value <= 0:
        raise ConfigError(name, f"must be positive, got {value!r}")
    return float(value)


def _pair(value, name):
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        raise ConfigError(name, "expected a pair [x, y]")
    return _number(value[0], name), _number(value[1], name)


def _signal_from(d, base_dir):
    _unknown("signal", d, _SIGNAL_KEYS)
    lam0 = _number(d.get("lambda0"), "signal.lambda0", positive=True)
    kinds = [k for k in ("lambda1", "knots", "table") if k in d]
    if len(kinds) != 1:
        raise ConfigError("signal", "give exactly one of lambda1, knots/values, table")
    try:
        if "lambda1" in d:
            form = Constant(_number(d["lambda1"], "signal.lambda1", positive=True))
        elif "knots" in d:
            if "values" not in d:
                raise ConfigError("signal.values", "required with knots")
            form = Tabulated(d["knots"], d["values"])
        else:
            path = Path(d["table"])
            if not path.is_absolute() and base_dir is not None:
                path = Path(base_dir) / path
            form = Tabulated.from_csv(path)
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError("signal", str(exc)) from exc
    return SignalModel(lam0, form)


def config_from_dict(d, base_dir=None):
    """Validate a JSON-style dict and build an :class:`ExperimentConfig`."""
    if not isinstance(d, dict):
        raise ConfigError("config", "top level must be an object")
    _unknown("", d, _TOP_KEYS)
    for key in ("geometry", "signal", "theta0", "n_values", "replications", "seed"):
        if key not in d:
            raise ConfigError(key, "missing")

    g = d["geometry"]
    if not isinstance(g, dict):
        raise ConfigError("geometry", "expected an object")
    _unknown("geometry", g, _GEOMETRY_KEYS)
    for key in _GEOMETRY_KEYS:
        if key not in g:
            raise ConfigError(f"geometry.{key}", "missing")
    sensors = g["sensors"]
    if not isinstance(sensors, list) or len(sensors) < 3:
        raise ConfigError("geometry.sensors", "need a list of at least three [x, y] pairs")
    sensors = [_pair(s, f"geometry.sensors[{i}]") for i, s in enumerate(sensors)]
    box = g["theta_box"]
    if not isinstance(box, list) or len(box) != 4:
        raise ConfigError("geometry.theta_box", "expected [alpha1, alpha2, beta1, beta2]")
    try:
        rect = ParameterRectangle(*(_number(v, "geometry.theta_box") for v in box))
        array = SensorArray(
            sensors,
            _number(g["nu"], "geometry.nu", positive=True),
            _number(g["epsilon"], "geometry.epsilon", positive=True),
            rect,
            _number(g["T"], "geometry.T", positive=True),
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError("geometry", str(exc)) from exc

    if not isinstance(d["signal"], dict):
        raise ConfigError("signal", "expected an object")
    signal = _signal_from(d["signal"], base_dir)

    theta0 = PlanePoint(*_pair(d["theta0"], "theta0"))
    if not rect.contains(theta0.x, theta0.y, closed=False):
        raise ConfigError("theta0", "must lie in the open parameter box")
    if array.in_exclusion(theta0.x, theta0.y):
        raise ConfigError("theta0", "lies inside an exclusion ball")

    report = validate_identifiability(array, signal)
    if not report.ok:
        bad = [c for c in report.checks if not c.passed][0]
        raise ConfigError("signal" if bad.name == "I2" else "geometry", f"{bad.name} fails: {bad.detail}")

    ns = d["n_values"]
    if not isinstance(ns, list) or not ns:
        raise ConfigError("n_values", "expected a non-empty list")
    ns = tuple(_number(v, "n_values", positive=True) for v in ns)
    if any(b <= a for a, b in zip(ns, ns[1:])):
        raise ConfigError("n_values", "must be strictly ascending")

    reps = d["replications"]
    if isinstance(reps, bool) or not isinstance(reps, int) or reps < 1:
        raise ConfigError("replications", f"must be an integer >= 1, got {reps!r}")

    est = d.get("estimators", list(ESTIMATORS))
    if not isinstance(est, list) or not est or any(e not in ESTIMATORS for e in est) or len(set(est)) != len(est):
        raise ConfigError("estimators", f"expected a non-empty subset of {list(ESTIMATORS)}")
    if "TRILAT" in est and not signal.is_constant:
        raise ConfigError("estimators", "TRILAT needs a constant signal")

    prior = d.get("prior", {"kind": "uniform"})
    if not isinstance(prior, dict):
        raise ConfigError("prior", "expected an object")
    _unknown("prior", prior, _PRIOR_KEYS)
    kind = prior.get("kind", "uniform")
    if kind == "linear":
        coef = prior.get("coef")
        if not isinstance(coef, list) or len(coef) != 3:
            raise ConfigError("prior.coef", "expected [a, b, c] for density a + b*x + c*y")
        a, b, c = (_number(v, "prior.coef") for v in coef)
        cx, cy = rect.corners()[:, 0], rect.corners()[:, 1]
        if np.any(a + b * cx + c * cy <= 0):
            raise ConfigError("prior.coef", "density must be positive on the parameter box")
    elif kind != "uniform":
        raise ConfigError("prior.kind", f"unknown prior kind {kind!r}")

    seed = d["seed"]
    if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2 ** 64:
        raise ConfigError("seed", "expected an unsigned 64-bit integer")
    out = d.get("output_dir", "results")
    if not isinstance(out, str):
        raise ConfigError("output_dir", "expected a string")
    timing = d.get("record_timing", False)
    if not isinstance(timing, bool):
        raise ConfigError("record_timing", "expected true or false")

    return ExperimentConfig(
        array=array,
        signal=signal,
        theta0=theta0,
        n_values=ns,
        replications=reps,
        estimators=tuple(est),
        prior_spec=dict(prior),
        seed=seed,
        output_dir=out,
        record_timing=timing,
        raw=json.loads(json.dumps(d)),
        base_dir=None if base_dir is None else str(base_dir),
    )


def load_config(path):
    path = Path(path)
    with open(path) as fh:
        try:
            d = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError("config", f"invalid JSON: {exc}") from exc
    return config_from_dict(d, base_dir=path.parent)


def default_config_dict():
    text = resources.files("poisloc").joinpath("data/default.json").read_text()
    return json.loads(text)


def default_config(**changes):
    d = default_config_dict()
    d.update(changes)
    return config_from_dict(d)


# ---------------------------------------------------------------------------
# Trials
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TrialResult:
    n: float
    rep: int
    estimator: str
    x: float
    y: float
    error: float
    wall_ms: float = 0.0

    def row(self):
        return [_fmt(self.n), str(self.rep), self.estimator, repr(self.x), repr(self.y), repr(self.error), repr(self.wall_ms)]


def _fmt(n):
    return repr(int(n)) if float(n).is_integer() else repr(float(n))


def trial_seed(root, n, rep):
    """Stream for replication ``rep`` at scale ``n`` (n enters in micro-units)."""
    return SimulationSeed(int(root), int(rep), key=(int(round(float(n) * 1e6)),))


def simulate_trial(config, n, rep, seed=None):
    root = config.seed if seed is None else seed
    return sample_events(config.model(n), config.array, config.theta0, trial_seed(root, n, rep))


def estimate_records(config, n, records, kind, prior=None):
    model = config.model(n)
    if kind == "BE":
        return bayes_estimate(model, config.array, records, config.prior() if prior is None else prior)
    if kind == "MLE":
        return mle_estimate(model, config.array, records)
    if kind == "TRILAT":
        taus = [estimate_arrival(model, r, config.array.horizon) for r in sorted(records, key=lambda r: r.sensor)]
        return trilaterate(config.array, taus)
    raise ValueError(f"unknown estimator {kind!r}")


def _run_trial(task):
    config, n, rep, estimators = task
    records = simulate_trial(config, n, rep)
    prior = config.prior()
    rows = []
    for kind in estimators:
        t0 = time.perf_counter()
        res = estimate_records(config, n, records, kind, prior)
        ms = (time.perf_counter() - t0) * 1e3 if config.record_timing else 0.0
        x, y = res.estimate
        err = math.hypot(x - config.theta0.x, y - config.theta0.y)
        rows.append(TrialResult(float(n), rep, kind, x, y, err, ms))
    return rows


def _map(func, tasks, jobs):
    if jobs is None or jobs <= 1:
        for t in tasks:
            yield func(t)
        return
    chunk = max(1, len(tasks) // (8 * jobs))
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        yield from ex.map(func, tasks, chunksize=chunk)


def run_error_curve(config, *, jobs=1, out_dir=None, estimators=None, n_values=None, replications=None, write=True):
    """Simulate and estimate every (n, replication); rows come back in (n, rep) order.

    With ``write`` the rows are streamed to ``<out_dir>/trials.csv`` as they are
    produced and a per-n summary goes to ``<out_dir>/summary.json``.
    """
    estimators = tuple(config.estimators if estimators is None else estimators)
    n_values = tuple(config.n_values if n_values is None else n_values)
    reps = config.replications if replications is None else int(replications)
    if reps < 1:
        raise ConfigError("replications", f"must be an integer >= 1, got {reps!r}")
    tasks = [(config, n, r, estimators) for n in n_values for r in range(reps)]
    rows = []
    fh = None
    if write:
        out = Path(config.output_dir if out_dir is None else out_dir)
        out.mkdir(parents=True, exist_ok=True)
        fh = open(out / "trials.csv", "w", newline="")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
    try:
        for batch in _map(_run_trial, tasks, jobs):
            rows.extend(batch)
            if fh is not None:
                for r in batch:
                    w.writerow(r.row())
    finally:
        if fh is not None:
            fh.close()
    if write:
        summary = summarize(rows)
        summary["backend"] = backend_name()
        summary["seed"] = config.seed
        summary["checks"] = curve_checks(rows)
        with open(out / "summary.json", "w") as sf:
            json.dump(summary, sf, indent=2, sort_keys=True)
            sf.write("\n")
    return rows


def summarize(rows):
    groups = {}
    for r in rows:
        groups.setdefault((r.estimator, r.n), []).append(r.error)
    per = []
    for (kind, n), errs in sorted(groups.items(), key=lambda kv: (ESTIMATORS.index(kv[0][0]), kv[0][1])):
        e = np.array(errs)
        mse = float(np.mean(e ** 2))
        per.append({
            "estimator": kind,
            "n": n,
            "reps": int(e.size),
            "mean_error": float(e.mean()),
            "median_error": float(np.median(e)),
            "error_variance": float(e.var(ddof=1)) if e.size > 1 else 0.0,
            "mse": mse,
            "n2_mse": n * n * mse,
            "n2_mse_se": float(n * n * np.std(e ** 2, ddof=1) / math.sqrt(e.size)) if e.size > 1 else None,
        })
    return {"per_n": per}


def curve_checks(rows, estimator="BE", n_range=(5, 100)):
    """Median-error decay: nonincreasing over ``n_range`` up to one inversion,
    and the last median below a tenth of the first."""
    med = {}
    for r in rows:
        if r.estimator == estimator and n_range[0] <= r.n <= n_range[1]:
            med.setdefault(r.n, []).append(r.error)
    ns = sorted(med)
    if len(ns) < 2:
        return {}
    m = [float(np.median(med[n])) for n in ns]
    inversions = sum(1 for a, b in zip(m, m[1:]) if b > a)
    ratio = m[-1] / m[0] if m[0] > 0 else float("inf")
    return {
        "estimator": estimator,
        "n": ns,
        "median_error": m,
        "inversions": inversions,
        "decay_ratio": ratio,
        "monotone_pass": inversions <= 1,
        "decay_pass": ratio < 0.1,
    }


# ---------------------------------------------------------------------------
# Limit law comparison
# ---------------------------------------------------------------------------


def _zeta_task(task):
    limit, root, lo, hi = task
    out = []
    for r in range(lo, hi):
        z = sample_zeta(limit, SimulationSeed(root, r))
        out.append(z)
    return out


def sample_zeta_draws(limit, reps, seed, jobs=1):
    """``reps`` independent zeta draws, draw ``r`` on stream ``(seed, r)``."""
    step = max(1, min(250, reps // max(1, 4 * (jobs or 1))))
    tasks = [(limit, int(seed), lo, min(lo + step, reps)) for lo in range(0, reps, step)]
    draws = []
    for batch in _map(_zeta_task, tasks, jobs):
        draws.extend(batch)
    return draws


def _finite_ln_z_task(task):
    config, n, us, root, lo, hi = task
    model = config.model(n)
    px = config.theta0.x + np.concatenate([[0.0], us[:, 0] / n])
    py = config.theta0.y + np.concatenate([[0.0], us[:, 1] / n])
    out = np.empty((hi - lo, us.shape[0]))
    for k, rep in enumerate(range(lo, hi)):
        records = simulate_trial(config, n, rep, seed=root)
        _, right = log_lr_field(model, config.array, records, px, py)
        out[k] = right[1:] - right[0]
    return out


def sample_finite_ln_z(config, n, us, draws, *, seed=None, jobs=1):
    """Rescaled log-likelihood ratio ln L(theta0 + u/n) - ln L(theta0) over simulated replications.

    Replication ``r`` uses the same event stream as :func:`simulate_trial`.
    Returns shape ``(draws, points)``.
    """
    us = np.asarray(us, dtype=float).reshape(-1, 2)
    root = config.seed if seed is None else int(seed)
    step = max(1, min(250, draws // max(1, 4 * (jobs or 1))))
    tasks = [(config, n, us, root, lo, min(lo + step, draws)) for lo in range(0, draws, step)]
    return np.concatenate(list(_map(_finite_ln_z_task, tasks, jobs)), axis=0)


def _limit_ln_z_task(task):
    limit, us, root, lo, hi = task
    return np.array([sample_ln_z(limit, us, SimulationSeed(root, r)) for r in range(lo, hi)])


def sample_limit_ln_z(limit, us, draws, seed, jobs=1):
    """``draws`` path draws of the limit field at ``us``, draw ``r`` on stream ``(seed, r)``."""
    us = np.asarray(us, dtype=float).reshape(-1, 2)
    step = max(1, min(2000, draws // max(1, 4 * (jobs or 1))))
    tasks = [(limit, us, int(seed), lo, min(lo + step, draws)) for lo in range(0, draws, step)]
    return np.concatenate(list(_map(_limit_ln_z_task, tasks, jobs)), axis=0)


def ks_distance(a, b, merge_tol=0.0):
    """Two-sample Kolmogorov-Smirnov distance.

    Pooled values closer than ``merge_tol`` to their neighbour are treated as
    one atom. Use a small positive tolerance for lattice-valued samples whose
    atoms are shifted by a vanishing offset; ``merge_tol=0`` is the usual
    statistic.
    """
    a = np.sort(np.asarray(a, dtype=float))
    b = np.sort(np.asarray(b, dtype=float))
    pooled = np.sort(np.concatenate([a, b]))
    if merge_tol > 0:
        ends = np.append(np.diff(pooled) > merge_tol, True)
        at = pooled[ends]
    else:
        at = np.unique(pooled)
    fa = np.searchsorted(a, at, side="right") / a.size
    fb = np.searchsorted(b, at, side="right") / b.size
    return float(np.max(np.abs(fa - fb)))


@dataclass
class ConvergenceReport:
    n_values: list
    n2_mse: list
    n2_mse_se: list
    bound: float
    bound_se: float
    ratio_to_bound: list
    rate_ratio: float
    marginal_ks: tuple
    radial_ks: float
    passed: dict

    def to_dict(self):
        return asdict(self)


def run_convergence_check(config, limit_reps, *, jobs=1, replications=None, rows=None, zeta_draws=None,
                          limit_seed=None, se_limit=0.2):
    """Rescaled BE risk against the efficiency bound and the limit law.

    ``rows`` may pass precomputed BE trials and ``zeta_draws`` precomputed
    limit draws; otherwise both are generated.
    """
    if "BE" not in config.estimators:
        raise ConfigError("estimators", "convergence check needs BE")
    if rows is None:
        rows = run_error_curve(config, jobs=jobs, estimators=("BE",), replications=replications, write=False)
    be = [r for r in rows if r.estimator == "BE"]
    ns = sorted({r.n for r in be})

    limit = LimitModel.from_model(config.signal, config.array, config.theta0)
    if zeta_draws is None:
        root = config.seed + 1 if limit_seed is None else limit_seed
        zeta_draws = sample_zeta_draws(limit, limit_reps, root, jobs)
    bound = efficiency_bound(limit, len(zeta_draws), 0, draws=zeta_draws)

    n2, n2se = [], []
    for n in ns:
        e2 = np.array([r.error ** 2 for r in be if r.n == n])
        n2.append(float(n * n * e2.mean()))
        n2se.append(float(n * n * e2.std(ddof=1) / math.sqrt(e2.size)) if e2.size > 1 else float("inf"))
        if n2se[-1] > se_limit * n2[-1]:
            raise InsufficientReplications(f"n={n}: SE of n^2*MSE is {n2se[-1] / n2[-1]:.1%} of the estimate")
    if bound.se > se_limit * bound.mean:
        raise InsufficientReplications(f"efficiency bound SE is {bound.se / bound.mean:.1%} of the estimate")

    nmax = ns[-1]
    dev = np.array([[nmax * (r.x - config.theta0.x), nmax * (r.y - config.theta0.y)] for r in be if r.n == nmax])
    zeta = np.array([d.zeta for d in zeta_draws])
    mks = (ks_distance(dev[:, 0], zeta[:, 0]), ks_distance(dev[:, 1], zeta[:, 1]))
    rks = ks_distance(np.hypot(dev[:, 0], dev[:, 1]), np.hypot(zeta[:, 0], zeta[:, 1]))
    ratios = [v / bound.mean for v in n2]
    rate_ratio = n2[-2] / n2[-1] if len(n2) >= 2 else float("nan")
    passed = {
        "rate": bool(0.6 <= rate_ratio <= 1.6) if len(n2) >= 2 else None,
        "efficiency": bool(abs(ratios[-1] - 1.0) <= 0.25),
        "bound_se": bool(bound.se < 0.05 * bound.mean),
        "marginal_ks": bool(max(mks) < 0.05),
    }
    return ConvergenceReport(ns, n2, n2se, bound.mean, bound.se, ratios, rate_ratio, mks, rks, passed)


# ---------------------------------------------------------------------------
# Quick invariant suite
# ---------------------------------------------------------------------------


def run_invariant_suite(config, seed=0):
    """A few fast self-consistency checks; returns ``[(name, passed, detail)]``."""
    out = []
    report = validate_identifiability(config.array, config.signal)
    for c in report.checks:
        out.append((c.name, c.passed, c.detail))
    rng = np.random.default_rng(seed)
    box = config.array.theta_box
    n = config.n_values[-1]
    model = config.model(n)
    records = simulate_trial(config, n, 0)

    pts = []
    while len(pts) < 20:
        x, y = rng.uniform(box.alpha1, box.alpha2), rng.uniform(box.beta1, box.beta2)
        if not config.array.in_exclusion(x, y):
            pts.append(PlanePoint(float(x), float(y)))
    if config.signal.is_constant:
        diff = max(abs(log_lr(model, config.array, p, records).right - log_lr_constant(model, config.array, p, records).right)
                   for p in pts)
        out.append(("log_lr_closed_form", diff < 1e-10, f"max |difference| {diff:.3g}"))
        errs = []
        for p in pts:
            taus = config.array.delays(p.x, p.y)
            est = trilaterate(config.array, taus).estimate
            errs.append(math.hypot(est.x - p.x, est.y - p.y))
        out.append(("trilaterate_exact", max(errs) < 1e-9, f"max error {max(errs):.3g}"))
    h0 = hellinger(model, config.array, pts[0], pts[0])
    out.append(("hellinger_zero", h0 == 0.0, f"H(theta, theta) = {h0}"))
    limit = LimitModel.from_model(config.signal, config.array, config.theta0)
    z0 = float(sample_ln_z(limit, np.zeros(2), SimulationSeed(seed)))
    out.append(("ln_z_origin", z0 == 0.0, f"ln Z(0) = {z0}"))
    be = bayes_estimate(model, config.array, records, config.prior())
    inside = bool(box.contains(be.estimate.x, be.estimate.y))
    out.append(("be_in_box", inside, f"BE {tuple(be.estimate)} at n={n:g}"))
    return out


def environment_info():
    return {"backend": backend_name(), "cpus": os.cpu_count()}
