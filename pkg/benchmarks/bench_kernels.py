"""Compare the compiled and pure-Python simulation kernels.

Times one full trial (population generation excluded) and one batch of
trials for several population sizes, checks that both backends return
identical records, and prints a table.

    python benchmarks/bench_kernels.py [--sizes 300 3000] [--repeat 5] [--json out.json]
"""

from __future__ import annotations

import argparse
import json
import statistics
import sys
import time

import numpy as np

from tclflex import _core
from tclflex.predict import VbTrialModel, estimate_batch, trial_seed
from tclflex.thermal import (COOLING_PUMP, REFRIGERATOR, WATER_HEATER, DeviceGroup,
                             DisturbanceModel, PopulationSpec, generate_population)


def summer_spec(n_each: int) -> PopulationSpec:
    return PopulationSpec((DeviceGroup(REFRIGERATOR, n_each, "indoor"),
                           DeviceGroup(WATER_HEATER, n_each, "indoor"),
                           DeviceGroup(COOLING_PUMP, n_each, "outdoor")))


def time_horizon(backend: str, spec: PopulationSpec, steps: int, repeat: int):
    """Median seconds for one closed-loop horizon, plus its records."""
    rng = np.random.default_rng(0)
    base = generate_population(spec, rng)
    noise = rng.normal(0.0, 0.05 ** 0.5, size=(steps, len(base)))
    amb = np.column_stack([np.full(steps, 24.0), np.full(steps, 37.5)])
    r = np.full(steps, 800.0)
    managed = np.r_[np.zeros(steps // 3, np.uint8), np.ones(steps - steps // 3, np.uint8)]
    times, rec = [], None
    for _ in range(repeat):
        pop = base.copy()
        arrays = _core.DeviceArrays.from_population(pop, 1 / 60)
        t0 = time.perf_counter()
        _, rec, _ = _core.simulate(pop, arrays, amb, noise, r, managed, backend=backend)
        times.append(time.perf_counter() - t0)
    return statistics.median(times), rec


def time_batch(backend: str, spec: PopulationSpec, trials: int) -> float:
    model = VbTrialModel(spec, {"indoor": 24.0, "outdoor": 37.5}, pre_steps=0, event_steps=15,
                         disturbance=DisturbanceModel(0.05), backend=backend)
    t0 = time.perf_counter()
    estimate_batch(model, 500.0, trials, 1, None)
    return time.perf_counter() - t0


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[300, 3000, 30000],
                    help="total devices (split evenly over three device types)")
    ap.add_argument("--steps", type=int, default=45)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--trials", type=int, default=20, help="trials per timed batch")
    ap.add_argument("--json", metavar="PATH", help="also write results as JSON")
    args = ap.parse_args(argv)

    backends = [b for b in ("compiled", "python") if b in _core.BACKENDS]
    if len(backends) < 2:
        print("compiled extension not built; timing the python backend only", file=sys.stderr)
    rows = []
    for size in args.sizes:
        spec = summer_spec(max(1, size // 3))
        row = {"devices": spec.size, "steps": args.steps}
        recs = {}
        for b in backends:
            row[f"{b}_horizon_s"], recs[b] = time_horizon(b, spec, args.steps, args.repeat)
            row[f"{b}_batch_s"] = time_batch(b, spec, args.trials)
        if len(recs) == 2:
            row["identical"] = bool(np.array_equal(recs["compiled"], recs["python"]))
            row["speedup"] = row["python_horizon_s"] / row["compiled_horizon_s"]
        rows.append(row)

    head = f"{'devices':>8} {'steps':>5}"
    for b in backends:
        head += f" {b + ' horizon':>17} {b + ' batch':>15}"
    if len(backends) == 2:
        head += f" {'speedup':>8} {'identical':>9}"
    print(head)
    for row in rows:
        line = f"{row['devices']:>8} {row['steps']:>5}"
        for b in backends:
            line += f" {row[f'{b}_horizon_s'] * 1e3:>14.2f} ms {row[f'{b}_batch_s']:>13.3f} s"
        if len(backends) == 2:
            line += f" {row['speedup']:>7.1f}x {str(row['identical']):>9}"
        print(line)
    print(f"(batch = {args.trials} trials of a {15}-step event; median of {args.repeat} horizons)")
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump(rows, fh, indent=2)
    return 0


if __name__ == "__main__":
    sys.exit(main())
