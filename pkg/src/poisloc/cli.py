"""Command line entry point: ``poisloc <command> [options]``."""

import argparse
import json
import sys
from pathlib import Path

from . import harness
from .errors import ConfigError, InsufficientReplications, SingularGeometry
from .limit_process import LimitModel, write_zeta_csv
from .simulate import read_events_csv, write_events_csv

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_IO = 2


def _common(p):
    p.add_argument("--config", metavar="PATH", help="JSON experiment config (default: shipped default)")
    p.add_argument("--seed", type=int, metavar="U64", help="override the root seed")
    p.add_argument("--out", metavar="DIR", help="output directory")
    p.add_argument("--reps", type=int, metavar="N", help="override replications / draws")
    p.add_argument("--jobs", type=int, default=1, metavar="K", help="worker processes (default 1)")


def build_parser():
    parser = argparse.ArgumentParser(prog="poisloc", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate one replication and write its event CSV")
    _common(p)
    p.add_argument("--n", type=float, help="scale n (default: largest configured)")
    p.add_argument("--rep", type=int, default=0, help="replication index (default 0)")

    p = sub.add_parser("estimate", help="estimate the source position from an event CSV")
    _common(p)
    p.add_argument("--events", required=True, metavar="CSV", help="event file with columns sensor,time")
    p.add_argument("--n", type=float, help="scale n (default: largest configured)")
    p.add_argument("--estimator", choices=harness.ESTIMATORS, action="append",
                   help="estimator to run; repeatable (default: those in the config)")

    p = sub.add_parser("experiment", help="run the error-curve experiment")
    _common(p)

    p = sub.add_parser("limit", help="sample the limit vector and estimate the efficiency bound")
    _common(p)

    p = sub.add_parser("check", help="validate the config and run the quick invariant suite")
    _common(p)
    return parser


def _config(args):
    cfg = harness.load_config(args.config) if args.config else harness.default_config()
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.reps is not None and args.command == "experiment":
        changes["replications"] = args.reps
    if args.out is not None and args.command == "experiment":
        changes["output_dir"] = args.out
    return cfg.replace(**changes) if changes else cfg


def _cmd_simulate(cfg, args):
    n = cfg.n_values[-1] if args.n is None else args.n
    records = harness.simulate_trial(cfg, n, args.rep)
    out = Path(args.out or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"events_n{harness._fmt(n)}_rep{args.rep}.csv"
    write_events_csv(records, path)
    print(path)
    return EXIT_OK


def _cmd_estimate(cfg, args):
    n = cfg.n_values[-1] if args.n is None else args.n
    records = read_events_csv(args.events, cfg.array.size)
    kinds = args.estimator or list(cfg.estimators)
    out = []
    for kind in kinds:
        res = harness.estimate_records(cfg, n, records, kind)
        out.append({"estimator": kind, "n": n, "x": res.estimate.x, "y": res.estimate.y,
                    "diagnostics": res.diagnostics})
    print(json.dumps(out[0] if len(out) == 1 else out, indent=2, default=float))
    return EXIT_OK


def _cmd_experiment(cfg, args):
    rows = harness.run_error_curve(cfg, jobs=args.jobs)
    summary = harness.summarize(rows)
    for s in summary["per_n"]:
        print(f"{s['estimator']:6s} n={s['n']:<6g} median_error={s['median_error']:.5g} n2_mse={s['n2_mse']:.5g}")
    print(f"wrote {Path(cfg.output_dir) / 'trials.csv'}")
    return EXIT_OK


def _cmd_limit(cfg, args):
    reps = 1000 if args.reps is None else args.reps
    if reps < 100:
        raise ConfigError("reps", f"efficiency bound needs at least 100 draws, got {reps}")
    limit = LimitModel.from_model(cfg.signal, cfg.array, cfg.theta0)
    draws = harness.sample_zeta_draws(limit, reps, cfg.seed, args.jobs)
    bound = harness.efficiency_bound(limit, reps, cfg.seed, draws=draws)
    out = Path(args.out or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_zeta_csv(draws, out / "zeta.csv")
    info = {"efficiency_bound": bound.mean, "se": bound.se, "reps": bound.reps, "flagged": bound.flagged,
            "seed": cfg.seed}
    with open(out / "efficiency_bound.json", "w") as fh:
        json.dump(info, fh, indent=2)
        fh.write("\n")
    print(f"E|zeta|^2 = {bound.mean:.6g} +/- {bound.se:.3g} ({reps} draws)")
    return EXIT_OK


def _cmd_check(cfg, args):
    results = harness.run_invariant_suite(cfg, seed=cfg.seed)
    ok = True
    for name, passed, detail in results:
        ok &= bool(passed)
        print(f"{name}: {'pass' if passed else 'FAIL'} - {detail}")
    return EXIT_OK if ok else EXIT_INVALID


COMMANDS = {
    "simulate": _cmd_simulate,
    "estimate": _cmd_estimate,
    "experiment": _cmd_experiment,
    "limit": _cmd_limit,
    "check": _cmd_check,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = _config(args)
        return COMMANDS[args.command](cfg, args)
    except (ConfigError, InsufficientReplications, SingularGeometry, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
