#!/usr/bin/env python3
"""Faster-is-slower sweep.

Sweeps the desired speed v0 over several seeds on the room scenario and
reports the median evacuation time per speed. Runs that do not finish within
the simulated horizon are scored at the horizon, so medians stay comparable.
Writes one CSV row per (v0, seed) pair.
"""

import argparse
import csv
import statistics
from pathlib import Path

from crowdsim.cli import _apply_population_override, _build_model, _build_sim
from crowdsim.dynamics import Engine
from crowdsim.scenario_io import parse_scenario

DEFAULT_SCENARIO = Path(__file__).resolve().parent.parent / "scenarios" / "room_evacuation.json"


def evac_time(log, horizon: float) -> float:
    times = log.exit_times()
    if len(times) == log.meta["n_pedestrians"]:
        return max(times.values())
    return horizon


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--scenario", type=Path, default=DEFAULT_SCENARIO)
    ap.add_argument("--v0", type=float, nargs="+", default=[1.0, 1.5, 2.5, 5.0])
    ap.add_argument("--seeds", type=int, nargs="+", default=list(range(1, 11)))
    ap.add_argument("--csv", type=Path, default=Path("faster_is_slower.csv"))
    args = ap.parse_args()

    text = args.scenario.read_text()
    rows = []
    print(f"{'v0':>5} {'median evac':>12}  per-seed evac times")
    for v0 in args.v0:
        times = []
        for seed in args.seeds:
            scenario = parse_scenario(text)
            _apply_population_override(scenario, "v0", v0)
            model = _build_model(scenario)
            sim = _build_sim(scenario, argparse.Namespace(seed=seed))
            log = Engine(scenario, model, sim).run()
            t = evac_time(log, sim.duration)
            times.append(t)
            rows.append({"v0": v0, "seed": seed, "evac_time": f"{t:.2f}"})
        joined = " ".join(f"{t:.0f}" for t in times)
        print(f"{v0:5.2f} {statistics.median(times):11.1f}s  [{joined}]")

    with open(args.csv, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["v0", "seed", "evac_time"])
        writer.writeheader()
        writer.writerows(rows)
    print(f"wrote {args.csv}")


if __name__ == "__main__":
    main()
