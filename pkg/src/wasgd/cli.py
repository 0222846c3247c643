"""Command-line entry point: ``wasgd <command> [flags]``.

Exit status is 0 on success, 2 for configuration errors and 3 for
numerical failures (divergent iterates, non-SPD matrices).
"""

import argparse
import json
import logging
import sys
from pathlib import Path

from .averaging import check_weight_conditions, default_lambda, parse_scheme
from .errors import ConfigError, NumericalError, WasgdError
from .harness import ExperimentConfig, build_model, run_experiment
from .inference import DEFAULT_LEVELS, simulate_critical_values
from .numerics import RngStream
from .sgd import StepSchedule

EXIT_CONFIG = 2
EXIT_NUMERIC = 3

SIMULATIONS = {"normality": "normality", "mse": "mse", "coverage": "coverage",
               "weights-compare": "weights_compare"}

DEFAULTS = {
    "model": "linear", "dim": None, "xstar": None, "alpha": 0.505, "eta": 1.0, "n": 100_000,
    "reps": None, "seed": 0, "scheme": None, "out": None, "workers": 1, "sigma": 1.0,
    "rho": 0.8, "response": "norm", "level": 0.95, "method": "plugin", "checkpoints": None,
    "x0": None, "eta1": None, "sandwich_reps": 10**6,
}


def _floats(text):
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    return [float(v) for v in str(text).replace(" ", "").split(",") if v]


def _add_shared(p):
    p.add_argument("--config", help="JSON file with any of the flags below (flags win)")
    p.add_argument("--model", choices=["mean", "linear", "logistic", "expectile"])
    p.add_argument("--dim", type=int)
    p.add_argument("--xstar", help="comma-separated true parameter")
    p.add_argument("--alpha", type=float, help="step-size exponent")
    p.add_argument("--eta", type=float, help="step-size constant")
    p.add_argument("--eta1", type=float, help="override the first step size")
    p.add_argument("--n", type=int, help="number of SGD iterations")
    p.add_argument("--reps", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--scheme", action="append", help="repeatable, e.g. poly:gamma=3")
    p.add_argument("--out", help="CSV output path (stdout when omitted)")
    p.add_argument("--workers", type=int)
    p.add_argument("--sigma", type=float, help="noise standard deviation (mean/linear)")
    p.add_argument("--rho", type=float, help="expectile level")
    p.add_argument("--response", help="scipy.stats name of the expectile response law")
    p.add_argument("--x0", help="comma-separated starting point")
    p.add_argument("--sandwich-reps", dest="sandwich_reps", type=int)


def build_parser():
    parser = argparse.ArgumentParser(prog="wasgd", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a Monte-Carlo experiment")
    sim.add_argument("experiment", choices=sorted(SIMULATIONS))
    _add_shared(sim)
    sim.add_argument("--level", type=float)
    sim.add_argument("--method", choices=["plugin", "random_scaling", "random-scaling"])
    sim.add_argument("--checkpoints", help="comma-separated horizons for mse")

    oracle = sub.add_parser("oracle-weights", help="Monte-Carlo optimal weights (expectile)")
    _add_shared(oracle)

    cv = sub.add_parser("critical-values", help="simulate random-scaling critical values")
    cv.add_argument("--grid", type=int, default=10_000)
    cv.add_argument("--paths", type=int, default=1_000_000)
    cv.add_argument("--seed", type=int, default=0)
    cv.add_argument("--levels", default=",".join(str(v) for v in DEFAULT_LEVELS))
    cv.add_argument("--out")

    chk = sub.add_parser("check-scheme", help="print the weight-condition report")
    chk.add_argument("--scheme", action="append", required=True)
    chk.add_argument("--n", type=int, default=10_000)
    chk.add_argument("--alpha", type=float, default=0.505)
    chk.add_argument("--eta", type=float, default=1.0)
    chk.add_argument("--lambda", dest="lam", type=float,
                     help="default min(lambda_min(A)=1, 1/(2 eta))")
    chk.add_argument("--c-tilde", dest="c_tilde", type=float, default=10.0)
    return parser


def _settings(args):
    merged = dict(DEFAULTS)
    base_dir = None
    if getattr(args, "config", None):
        path = Path(args.config)
        try:
            data = json.loads(path.read_text())
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        unknown = set(data) - set(DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        merged.update(data)
        base_dir = path.parent
    for key in DEFAULTS:
        value = getattr(args, key, None)
        if value is not None:
            merged[key] = value
    return merged, base_dir


def _experiment_config(experiment, args):
    s, base_dir = _settings(args)
    xstar = _floats(s["xstar"]) if s["xstar"] is not None else None
    try:
        model = build_model(s["model"], s["dim"], xstar, s["sigma"], s["rho"], s["response"])
        schedule = StepSchedule(s["eta"], s["alpha"], s["eta1"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    schemes = [parse_scheme(t, base_dir) for t in (s["scheme"] or [])]
    method = s["method"].replace("-", "_")
    return ExperimentConfig(
        experiment=experiment, model=model, schedule=schedule, schemes=schemes,
        n=s["n"], reps=s["reps"], seed=s["seed"], output=s["out"], workers=s["workers"],
        level=s["level"], method=method,
        checkpoints=[int(v) for v in _floats(s["checkpoints"])] if s["checkpoints"] else None,
        x0=_floats(s["x0"]) if s["x0"] is not None else None,
        sandwich_reps=s["sandwich_reps"],
    )


def _emit(report, out):
    if out is None:
        sys.stdout.write(report.to_csv())
    text = report.summary_text()
    if text:
        print(text, file=sys.stderr if out is None else sys.stdout)


def cmd_simulate(args):
    cfg = _experiment_config(SIMULATIONS[args.experiment], args)
    _emit(run_experiment(cfg), cfg.output)


def cmd_oracle(args):
    if args.model is None and args.config is None:
        args.model = "expectile"
    if args.n is None and args.config is None:
        args.n = 50
    cfg = _experiment_config("oracle_weights", args)
    _emit(run_experiment(cfg), cfg.output)


def cmd_critical_values(args):
    table = simulate_critical_values(args.grid, args.paths, _floats(args.levels),
                                     RngStream(args.seed, 0))
    if args.out:
        table.write_csv(args.out)
    else:
        print("level,quantile,grid,paths,seed")
        for lvl, q in zip(table.levels, table.quantiles):
            print(f"{lvl!r},{q!r},{table.grid},{table.paths},{table.seed}")


def cmd_check_scheme(args):
    schedule = StepSchedule(args.eta, args.alpha)
    lam = args.lam if args.lam is not None else default_lambda(schedule)
    for text in args.scheme:
        cfg = parse_scheme(text).bind_alpha(args.alpha)
        print(check_weight_conditions(cfg, args.n, lam, schedule, args.c_tilde).describe())
        print()


COMMANDS = {"simulate": cmd_simulate, "oracle-weights": cmd_oracle,
            "critical-values": cmd_critical_values, "check-scheme": cmd_check_scheme}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, WasgdError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return 0


if __name__ == "__main__":
    sys.exit(main())
