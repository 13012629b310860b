"""Command-line entry point: ``tclflex <subcommand> [options]``.

Exit status is 0 on success, 1 on configuration or input errors and 2 when a
prediction is degenerate (the certified end of the search interval fails).
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__, _core
from .config import load_config
from .controller import TRACE_COLUMNS, run_horizon
from .errors import DegenerateScenarioError, InvalidConfigError, TclflexError
from .io import (CURVE_COLUMNS, RunManifest, dumps, write_csv, write_curve_csv, write_json,
                 write_rows, write_trace_csv)
from .market import BID_STEP_KW, run_scenario
from .predict import (FAILURE, SUCCESS, BisectionConfig, ConfidenceSpec, VbTrialModel,
                      guaranteed_range, mcesb_search, probability_curve, required_trials,
                      trial_seed, zero_prob_bounds)
from .thermal import generate_population
from .weather import bind_ambient

SIMULATE_KEY = 5
LOG_COLUMNS = ("search", "mode", "bound_kw", "iteration", "a", "b", "x", "n", "N")
SUMMARY_COLUMNS = ("search", "mode", "bound_kw", "power_kw", "iterations", "trials_total")


class _Out:
    """Collects outputs; files go to ``--out`` or the text goes to stdout."""

    def __init__(self, out_dir):
        self.dir = Path(out_dir) if out_dir else None
        self.files: list[str] = []
        if self.dir:
            self.dir.mkdir(parents=True, exist_ok=True)

    def csv(self, name, columns, rows):
        if self.dir:
            write_rows(self.dir / name, columns, rows)
            self.files.append(name)
        else:
            write_csv(sys.stdout, columns, rows)

    def json(self, name, obj):
        if self.dir:
            write_json(self.dir / name, obj)
            self.files.append(name)
        else:
            sys.stdout.write(dumps(obj))


def _decisions(cfg, args, extra=None) -> dict:
    d = {
        "tau_units": "steps",
        "step_minutes": cfg.simulation["step_minutes"] if cfg else None,
        "gamma_kw": cfg.prediction["tolerance_kw"] if cfg else None,
        "backend": args.backend or _core.DEFAULT_BACKEND,
        "bid_step_kw": BID_STEP_KW,
        "headroom_accounting": cfg.accounting if cfg else None,
        "beta": "consumed - baseline + forced change (forced change > 0 adds consumption)",
    }
    d.update(extra or {})
    return d


def _finish(out: _Out, args, cfg, seed, decisions):
    if out.dir is None:
        return
    options = {"format": args.format, "threads": args.threads}
    for key in ("search", "epsilon", "delta"):
        if getattr(args, key, None) is not None:
            options[key] = getattr(args, key)
    config = cfg.resolved() if cfg else {}
    if cfg:
        config["seed"] = seed
    RunManifest(args.command, seed, config, decisions, options, out.files).write(out.dir)


def _load(args):
    if not args.config:
        raise InvalidConfigError(f"{args.command} needs --config PATH")
    cfg = load_config(args.config)
    seed = cfg.seed if args.seed is None else args.seed
    return cfg, seed


def _trial_model(cfg, backend) -> VbTrialModel:
    return VbTrialModel(
        population=cfg.population,
        ambient=bind_ambient(cfg.ambient, cfg.start),
        pre_steps=cfg.minutes_to_steps(cfg.simulation["pre_minutes"]),
        event_steps=cfg.minutes_to_steps(cfg.simulation["event_minutes"]),
        step_hours=cfg.step_hours,
        disturbance=cfg.disturbance,
        backend=backend,
        accounting=cfg.accounting,
    )


def cmd_trials(args) -> int:
    eps = 0.02 if args.epsilon is None else args.epsilon
    delta = 0.005 if args.delta is None else args.delta
    n = required_trials(ConfidenceSpec(eps, delta))
    print(n)
    if args.out:
        out = _Out(args.out)
        if args.format == "csv":
            out.csv("trials.csv", ("epsilon", "delta", "trials"),
                    [{"epsilon": eps, "delta": delta, "trials": n}])
        else:
            out.json("trials.json", {"epsilon": eps, "delta": delta, "trials": n})
        _finish(out, args, None, 0 if args.seed is None else args.seed, {})
    return 0


def cmd_simulate(args) -> int:
    cfg, seed = _load(args)
    ctl = cfg.control
    steps = cfg.minutes_to_steps(ctl["horizon_minutes"])
    r_kw = ctl["r_kw"]
    if isinstance(r_kw, list):
        if len(r_kw) != steps:
            raise InvalidConfigError(f"control.r_kw has {len(r_kw)} entries, horizon has {steps}")
        r = np.array(r_kw, dtype=np.float64)
    else:
        r = np.full(steps, float(r_kw))
    rng = np.random.default_rng(trial_seed(seed, (SIMULATE_KEY,), 0))
    pop = generate_population(cfg.population, rng)
    trace = run_horizon(pop, r, cfg.control_config(), cfg.disturbance, rng,
                        ambient=bind_ambient(cfg.ambient, cfg.start), backend=args.backend,
                        accounting=cfg.accounting)
    summary = {
        "steps": len(trace), "managed_steps": int(trace.managed.sum()),
        "max_abs_error_kw": trace.max_abs_error,
        "band_violations": int(trace.band_violations.sum()),
        "toggles": int(trace.toggles.sum()), "overrides": int(trace.overrides.sum()),
    }
    out = _Out(args.out)
    mps = float(cfg.simulation["step_minutes"])
    if args.format == "csv":
        if out.dir:
            write_trace_csv(out.dir / "trace.csv", trace, mps)
            out.files.append("trace.csv")
        else:
            rows = []
            for row in trace.rows():
                row["minute"] = row["step"] * mps
                rows.append(row)
            out.csv("trace.csv", ("minute",) + TRACE_COLUMNS, rows)
    else:
        rows = list(trace.rows())
        out.json("simulate.json", {"summary": summary, "trace": rows})
    if out.dir:
        print(f"max_abs_error_kw={summary['max_abs_error_kw']!r} "
              f"band_violations={summary['band_violations']}")
    _finish(out, args, cfg, seed, _decisions(cfg, args))
    return 0


def cmd_predict(args) -> int:
    cfg, seed = _load(args)
    pred = cfg.prediction
    search = args.search or pred["search"]
    spec = cfg.confidence
    tol = float(pred["tolerance_kw"])
    model = _trial_model(cfg, args.backend)
    pos, neg = float(pred["positive_bound_kw"]), float(pred["negative_bound_kw"])
    if search in ("range", "zero"):
        fn = guaranteed_range if search == "range" else zero_prob_bounds
        lo, hi = fn(model, spec, pos, neg, tol, seed, threads=args.threads, detail=True)
        results = [("negative", neg, lo), ("positive", pos, hi)]
    else:
        mode = SUCCESS if search == "success" else FAILURE
        results = []
        for name, bound in (("positive", pos), ("negative", neg)):
            if bound != 0:
                res = mcesb_search(model, BisectionConfig(0.0, bound, tol, mode), spec, seed,
                                   threads=args.threads)
                results.append((name, bound, res))
    out = _Out(args.out)
    summary = [{"search": search, "mode": res.mode, "bound_kw": bound, "power_kw": res.power,
                "iterations": res.iterations, "trials_total": res.trials_total}
               for _, bound, res in results]
    if args.format == "csv":
        logs = [{"search": search, "mode": res.mode, "bound_kw": bound, **e}
                for _, bound, res in results for e in res.log]
        out.csv("prediction.csv", SUMMARY_COLUMNS, summary)
        if out.dir:
            out.csv("bisection_log.csv", LOG_COLUMNS, logs)
    else:
        out.json("prediction.json", {
            "search": search, "master_seed": seed,
            "trials_per_batch": required_trials(spec),
            "results": {name: res.to_dict(timing=False) for name, _, res in results},
        })
    if out.dir:
        for row in summary:
            print(f"{row['mode']} bound={row['bound_kw']!r} power_kw={row['power_kw']!r}")
    _finish(out, args, cfg, seed, _decisions(cfg, args))
    return 0


def cmd_curve(args) -> int:
    cfg, seed = _load(args)
    c = cfg.curve
    spec = cfg.confidence
    n = int(c["trials"]) if c["trials"] else required_trials(spec)
    model = _trial_model(cfg, args.backend)
    points = probability_curve(model, float(c["start_kw"]), float(c["stop_kw"]), int(c["points"]),
                               n, spec.delta, seed, threads=args.threads)
    out = _Out(args.out)
    rows = [{"x_kw": p.power, "p_hat": p.estimate, "lower": p.lower, "upper": p.upper,
             "successes": p.successes, "trials": p.trials} for p in points]
    if args.format == "csv":
        if out.dir:
            write_curve_csv(out.dir / "curve.csv", points)
            out.files.append("curve.csv")
        else:
            out.csv("curve.csv", CURVE_COLUMNS, rows)
    else:
        out.json("curve.json", {"delta": spec.delta, "trials": n, "points": rows})
    _finish(out, args, cfg, seed, _decisions(cfg, args))
    return 0


def cmd_scenario(args) -> int:
    cfg, seed = _load(args)
    scenario = cfg.scenario()
    report = run_scenario(scenario, cfg.confidence, float(cfg.prediction["tolerance_kw"]), seed,
                          threads=args.threads, backend=args.backend)
    out = _Out(args.out)
    doc = report.to_dict()
    if out.dir:
        write_trace_csv(out.dir / "delivery_trace.csv", report.delivery.trace,
                        scenario.step_minutes)
        out.files.append("delivery_trace.csv")
    if args.format == "csv":
        row = {"scenario": scenario.name, "product": scenario.product.name,
               "predicted_kw": report.prediction.power, "bid_kw": report.bid.power_kw,
               "direction": report.bid.direction, "valid": report.bid.valid,
               "pre_period_minutes": scenario.pre_period_minutes,
               "pre_period_capped": scenario.pre_period_capped,
               **{k: v for k, v in report.delivery.summary().items() if k != "seed_entropy"}}
        out.csv("scenario.csv", tuple(row), [row])
    else:
        out.json("scenario.json", doc)
    if out.dir:
        print(f"{scenario.name or 'scenario'}: predicted_kw={report.prediction.power!r} "
              f"bid_kw={report.bid.power_kw!r} {report.bid.direction} valid={report.bid.valid}")
    extra = {"pre_period_cap_minutes": scenario.pre_period_cap_minutes,
             "pre_period_minutes": scenario.pre_period_minutes,
             "full_pre_period_minutes": scenario.full_pre_period_minutes,
             "pre_period_capped": scenario.pre_period_capped,
             "delivery_seed": "fresh, outside the prediction batches",
             "delivery_tracks": "raw predicted power"}
    _finish(out, args, cfg, seed, _decisions(cfg, args, extra))
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="run configuration (YAML or manifest)")
    common.add_argument("--seed", type=int, default=None, help="master seed (overrides config)")
    common.add_argument("--out", metavar="DIR", default=None,
                        help="output directory; without it results go to stdout")
    common.add_argument("--threads", type=int, default=1, help="trial threads, 0 = one per CPU")
    common.add_argument("--format", choices=("csv", "structured"), default=None)
    common.add_argument("--backend", choices=sorted(_core.BACKENDS), default=None,
                        help="simulation kernel (default: compiled when available)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="tclflex", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="closed-loop run, trace CSV")
    p.set_defaults(func=cmd_simulate, default_format="csv")
    p = sub.add_parser("predict", parents=[common], help="bisection prediction report")
    p.add_argument("--search", choices=("range", "zero", "success", "failure"), default=None)
    p.set_defaults(func=cmd_predict, default_format="structured")
    p = sub.add_parser("curve", parents=[common], help="supply probability curve CSV")
    p.set_defaults(func=cmd_curve, default_format="csv")
    p = sub.add_parser("scenario", parents=[common], help="market scenario end to end")
    p.set_defaults(func=cmd_scenario, default_format="structured")
    p = sub.add_parser("trials", parents=[common], help="required trial count")
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--delta", type=float, default=None)
    p.set_defaults(func=cmd_trials, default_format="structured")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.format is None:
        args.format = args.default_format
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except DegenerateScenarioError as exc:
        print(f"error: degenerate scenario: {exc}", file=sys.stderr)
        return 2
    except (TclflexError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
