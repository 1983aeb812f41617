#!/usr/bin/env python3
"""Run every preferred-velocity variant on one scenario and tabulate metrics.

Deltas are taken against the first variant in the list (default: original).
"""

import argparse
from pathlib import Path

from crowdsim.cli import _build_model, _build_sim
from crowdsim.dynamics import Engine
from crowdsim.metrics import compare_runs, summarize
from crowdsim.preferred_velocity import VARIANTS
from crowdsim.scenario_io import parse_scenario

DEFAULT_SCENARIO = Path(__file__).resolve().parent.parent / "scenarios" / "corridor.json"


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--scenario", type=Path, default=DEFAULT_SCENARIO)
    ap.add_argument("--variants", nargs="+", default=list(VARIANTS))
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--duration", type=float, default=None)
    args = ap.parse_args()

    text = args.scenario.read_text()
    summaries = []
    for variant in args.variants:
        scenario = parse_scenario(text)
        model = _build_model(scenario)
        sim = _build_sim(scenario, argparse.Namespace(
            variant=variant, seed=args.seed, duration=args.duration,
        ))
        summaries.append(summarize(Engine(scenario, model, sim).run()))

    print(f"scenario: {args.scenario.name}, seed: {args.seed}")
    print(f"{'metric':<26} {'variant':<12} {'value':>12} {'delta_abs':>12} {'delta_rel':>10}")
    for row in compare_runs(summaries):
        value = "-" if row["value"] is None else f"{row['value']:.4g}"
        dabs = "-" if row["delta_abs"] is None else f"{row['delta_abs']:+.4g}"
        drel = "-" if row["delta_rel"] is None else f"{row['delta_rel']:+.2%}"
        print(f"{row['metric']:<26} {row['variant']:<12} {value:>12} {dabs:>12} {drel:>10}")


if __name__ == "__main__":
    main()
