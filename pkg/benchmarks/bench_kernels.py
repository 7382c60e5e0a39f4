"""Time the numba and pure-numpy kernel flavours on representative inputs.

    python benchmarks/bench_kernels.py [--repeat 5]

Also times one end-to-end Bayes estimate under each backend, each in a fresh
interpreter with POISLOC_BACKEND set.
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from poisloc import kernels
from poisloc._backend import HAVE_NUMBA
from poisloc.geometry import ParameterRectangle, PlanePoint, SensorArray
from poisloc.likelihood import pack_records
from poisloc.limit_process import LimitModel, sample_paths
from poisloc.signal import Constant, SignalModel
from poisloc.simulate import SimulationSeed, sample_events

SENSORS = [(8.5, 0.0), (0.0, 8.5), (-6.010407640085655, -6.010407640085654)]

END_TO_END = """
import time
from poisloc import harness
cfg = harness.default_config()
recs = harness.simulate_trial(cfg, 100, 0)
harness.estimate_records(cfg, 100, recs, "BE")  # warm-up / compile
t = time.perf_counter()
for _ in range(5):
    harness.estimate_records(cfg, 100, recs, "BE")
print((time.perf_counter() - t) / 5)
"""


def _inputs():
    arr = SensorArray(SENSORS, 1.0, 1.0, ParameterRectangle(-1, 1, -1, 1), 10.0)
    model = SignalModel(1.0, Constant(2.0), 100.0)
    recs = sample_events(model, arr, PlanePoint(0.0, 0.0), SimulationSeed(1))
    times, offsets = pack_records(recs)
    rng = np.random.default_rng(0)
    px, py = rng.uniform(-1, 1, (2, 100_000))
    lattice = np.linspace(-0.05, 0.05, 301)
    common = (arr.positions[:, 0], arr.positions[:, 1], arr.nu, times, offsets, model.ell, 200.0, arr.horizon)

    lim = LimitModel.from_model(model, arr, PlanePoint(0.0, 0.0))
    xc = -lim.half_width + (np.arange(800) + 0.5) * lim.spacing
    m = lim.directions
    jumps, joff, base = sample_paths(lim, SimulationSeed(2), 2 * lim.half_width)
    zargs = (xc, xc, np.ascontiguousarray(m[:, 0]), np.ascontiguousarray(m[:, 1]), jumps, joff, base,
             lim.ell, float(lim.drift[0]), float(lim.drift[1]))
    return {
        "loglr_points (1e5 points, n=100)": ("loglr_points_constant", (px, py) + common + (0.0,)),
        "loglr_lattice (301^2, n=100)": ("loglr_lattice_constant", (lattice, lattice) + common + (arr.epsilon,)),
        "ln_z_lattice (800^2)": ("ln_z_lattice", zargs),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if not HAVE_NUMBA:
        sys.exit("numba is not importable; nothing to compare")
    print(f"{'kernel':36s} {'numpy [ms]':>12s} {'numba [ms]':>12s} {'speedup':>8s} identical")
    for label, (name, a) in _inputs().items():
        f_np = getattr(kernels, name + "_numpy")
        f_nb = getattr(kernels, name + "_numba")
        same = all(np.array_equal(x, y) for x, y in zip(np.atleast_1d(f_np(*a)), np.atleast_1d(f_nb(*a))))
        t_np = min(timeit.repeat(lambda: f_np(*a), number=1, repeat=args.repeat))
        t_nb = min(timeit.repeat(lambda: f_nb(*a), number=1, repeat=args.repeat))
        print(f"{label:36s} {1e3 * t_np:12.2f} {1e3 * t_nb:12.2f} {t_np / t_nb:8.1f} {same}")

    print()
    for backend in ("numpy", "numba"):
        env = dict(os.environ, POISLOC_BACKEND=backend)
        out = subprocess.run([sys.executable, "-c", END_TO_END], env=env, capture_output=True, text=True, check=True)
        print(f"Bayes estimate at n=100, backend {backend:5s}: {1e3 * float(out.stdout):8.1f} ms")


if __name__ == "__main__":
    main()
