"""Command-line entry point: run, sweep, compare, validate.

Config precedence is CLI flags > scenario-file defaults > built-in defaults;
the effective configuration is embedded in every metrics file. Outputs are
written atomically under deterministic names, so re-running an invocation is
idempotent.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import dynamics, metrics, scenario_io
from .contact_forces import ContactParams
from .dynamics import Engine, ModelConfig, NumericalAbort, SimulationConfig
from .preferred_velocity import VARIANTS
from .social_forces import SocialForceParams

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_NUMERICAL = 2

#: sweep axes applied to every population group
_POPULATION_PARAMS = ("f", "D", "p_init", "M", "E", "E_m", "v0", "v_max", "deadline")
#: sweep axes applied to the simulation config
_SIM_PARAMS = ("noise_amplitude", "dt")
SWEEP_PARAMS = _POPULATION_PARAMS + _SIM_PARAMS

_SOCIAL_KEYS = {"A_r", "B_r", "A_att", "B_att", "lambda", "attraction_decay_time"}
_CONTACT_KEYS = {"k", "kappa"}
_MODEL_KEYS = {
    "summary_radius", "visibility_range", "tau_gain", "tau_decay",
    "tau_excite", "speed_avg_window", "capture_radius",
}
_SIM_KEYS = {
    "dt", "duration", "seed", "noise_amplitude", "variant",
    "neighbor_cutoff", "cell_size", "output_interval",
}


class CliError(Exception):
    pass


def _load_scenario(path: str) -> tuple[scenario_io.Scenario, str]:
    p = Path(path)
    if not p.is_file():
        raise CliError(f"scenario file not found: {path}")
    text = p.read_text()
    return scenario_io.parse_scenario(text), text


def _build_model(scenario: scenario_io.Scenario) -> ModelConfig:
    overrides = dict(scenario.defaults.get("model", {}))
    unknown = set(overrides) - _SOCIAL_KEYS - _CONTACT_KEYS - _MODEL_KEYS
    if unknown:
        raise CliError(f"unknown model defaults: {', '.join(sorted(unknown))}")
    social_kwargs = {
        ("lam" if k == "lambda" else k): overrides[k]
        for k in _SOCIAL_KEYS & set(overrides)
    }
    contact_kwargs = {k: overrides[k] for k in _CONTACT_KEYS & set(overrides)}
    model_kwargs = {k: overrides[k] for k in _MODEL_KEYS & set(overrides)}
    return ModelConfig(
        social=SocialForceParams(**social_kwargs),
        contact=ContactParams(**contact_kwargs),
        **model_kwargs,
    )


def _build_sim(scenario: scenario_io.Scenario, args: argparse.Namespace) -> SimulationConfig:
    cfg: dict = {}
    overrides = dict(scenario.defaults.get("simulation", {}))
    unknown = set(overrides) - _SIM_KEYS
    if unknown:
        raise CliError(f"unknown simulation defaults: {', '.join(sorted(unknown))}")
    cfg.update(overrides)
    for flag, key in (
        ("variant", "variant"), ("dt", "dt"), ("duration", "duration"),
        ("seed", "seed"), ("noise", "noise_amplitude"),
    ):
        val = getattr(args, flag, None)
        if val is not None:
            cfg[key] = val
    if getattr(args, "verbose_forces", False):
        cfg["log_forces"] = True
    return SimulationConfig(**cfg)


def _effective_config(model: ModelConfig, sim: SimulationConfig) -> dict:
    doc = dataclasses.asdict(sim)
    doc.update({f"social.{k}": v for k, v in dataclasses.asdict(model.social).items()})
    doc.update({f"contact.{k}": v for k, v in dataclasses.asdict(model.contact).items()})
    for f in dataclasses.fields(model):
        if f.name not in ("social", "contact"):
            doc[f.name] = getattr(model, f.name)
    return doc


def _atomic_write(path: Path, writer) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w", newline="") as fh:
        writer(fh)
    os.replace(tmp, path)


def _out_dir(args: argparse.Namespace) -> Path:
    out = getattr(args, "out", None) or os.environ.get("CROWDSIM_OUT") or "."
    p = Path(out)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _apply_population_override(scenario: scenario_io.Scenario, param: str, value: float) -> None:
    for g in scenario.population:
        if param == "p_init":
            g.p = value
        elif param == "v0":
            g.v0 = value
            hi = g.v_max[1] if isinstance(g.v_max, tuple) else g.v_max
            if hi < value:
                g.v_max = value
        elif param == "v_max":
            g.v_max = value
        else:
            setattr(g, param, value)


def _execute(
    scenario: scenario_io.Scenario, model: ModelConfig, sim: SimulationConfig
) -> tuple[dynamics.TrajectoryLog, metrics.RunSummary]:
    log = Engine(scenario, model, sim).run()
    return log, metrics.summarize(log)


def _write_run_outputs(
    out: Path, stem: str, log, summary, model: ModelConfig, sim: SimulationConfig
) -> tuple[Path, Path]:
    traj = out / f"{stem}.trajectory.csv"
    metr = out / f"{stem}.metrics.json"
    _atomic_write(traj, lambda fh: scenario_io.write_trajectory(log, fh))
    doc = {"config": _effective_config(model, sim)}
    doc.update(summary.to_dict())
    _atomic_write(metr, lambda fh: json.dump(doc, fh, indent=2))
    return traj, metr


# ---------------------------------------------------------------------------
# worker-pool job (must be picklable at module level)

def _pool_job(scenario_text: str, model_defaults_json: str, sim_kwargs: dict,
              population_override: tuple[str, float] | None):
    scenario = scenario_io.parse_scenario(scenario_text)
    scenario.defaults = json.loads(model_defaults_json)
    model = _build_model(scenario)
    if population_override is not None:
        _apply_population_override(scenario, *population_override)
    sim = SimulationConfig(**sim_kwargs)
    _log, summary = _execute(scenario, model, sim)
    return summary


def _run_many(jobs: list[tuple], workers: int) -> list[metrics.RunSummary]:
    if workers <= 1:
        return [_pool_job(*job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_pool_job, *zip(*jobs)))


# ---------------------------------------------------------------------------
# subcommands

def cmd_validate(args: argparse.Namespace) -> int:
    scenario, _ = _load_scenario(args.scenario)
    n = sum(g.count for g in scenario.population)
    print(
        f"ok: {len(scenario.walls)} walls, {len(scenario.exits)} exits, "
        f"{len(scenario.routes)} routes, {n} pedestrians"
    )
    return EXIT_OK


def cmd_run(args: argparse.Namespace) -> int:
    scenario, _ = _load_scenario(args.scenario)
    model = _build_model(scenario)
    sim = _build_sim(scenario, args)
    log, summary = _execute(scenario, model, sim)
    out = _out_dir(args)
    stem = f"{Path(args.scenario).stem}_{sim.variant}_seed{sim.seed}"
    traj, metr = _write_run_outputs(out, stem, log, summary, model, sim)
    print(f"wrote {traj}")
    print(f"wrote {metr}")
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    try:
        param, _, values_text = args.sweep.partition("=")
        values = [float(v) for v in values_text.split(",")] if values_text else []
    except ValueError as exc:
        raise CliError(f"malformed sweep spec {args.sweep!r}: {exc}") from exc
    if param not in SWEEP_PARAMS:
        raise CliError(
            f"unknown sweep parameter {param!r}; valid: {', '.join(SWEEP_PARAMS)}"
        )
    if not values:
        raise CliError("sweep value list is empty")

    scenario, text = _load_scenario(args.scenario)
    _build_model(scenario)  # validate defaults early
    base_sim = _build_sim(scenario, args)

    jobs = []
    for value in values:
        sim_kwargs = dataclasses.asdict(base_sim)
        override = None
        if param in _SIM_PARAMS:
            sim_kwargs[param] = value
        else:
            override = (param, value)
        jobs.append((text, json.dumps(scenario.defaults), sim_kwargs, override))
    summaries = _run_many(jobs, args.workers)

    out = _out_dir(args)
    path = out / f"{Path(args.scenario).stem}_sweep_{param}.csv"

    def write(fh):
        fh.write(
            "param,value,evacuated,completed,evacuation_time_total,"
            "end_time,peak_local_density,contact_impulse_total\n"
        )
        for value, s in zip(values, summaries):
            evac = "" if s.evacuation_time_total is None else format(s.evacuation_time_total, ".9g")
            fh.write(
                f"{param},{value:.9g},{s.evacuated},{int(s.completed)},{evac},"
                f"{s.end_time:.9g},{s.peak_local_density:.9g},"
                f"{s.contact_impulse_total:.9g}\n"
            )

    _atomic_write(path, write)
    print(f"wrote {path}")
    return EXIT_OK


def cmd_compare(args: argparse.Namespace) -> int:
    if len(args.variants) < 2:
        raise CliError("compare needs at least two variants")
    for v in args.variants:
        if v not in VARIANTS:
            raise CliError(f"unknown variant {v!r}; pick from {', '.join(VARIANTS)}")
    scenario, text = _load_scenario(args.scenario)
    _build_model(scenario)
    base_sim = _build_sim(scenario, args)

    jobs = []
    for variant in args.variants:
        sim_kwargs = dataclasses.asdict(base_sim)
        sim_kwargs["variant"] = variant
        jobs.append((text, json.dumps(scenario.defaults), sim_kwargs, None))
    summaries = _run_many(jobs, args.workers)

    rows = metrics.compare_runs(summaries)
    out = _out_dir(args)
    path = out / f"{Path(args.scenario).stem}_compare.csv"
    _atomic_write(path, lambda fh: metrics.write_comparison_csv(rows, fh))
    print(f"wrote {path}")
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="crowdsim", description="Pedestrian crowd simulation"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, with_run_flags: bool = True) -> None:
        p.add_argument("--scenario", required=True, help="scenario JSON file")
        if with_run_flags:
            p.add_argument("--variant", choices=VARIANTS, default=None)
            p.add_argument("--dt", type=float, default=None)
            p.add_argument("--duration", type=float, default=None)
            p.add_argument("--seed", type=int, default=None)
            p.add_argument("--noise", type=float, default=None,
                           help="fluctuation force amplitude, N")
            p.add_argument("--out", default=None,
                           help="output directory (default $CROWDSIM_OUT or .)")
            p.add_argument("--workers", type=int, default=1)

    p_run = sub.add_parser("run", help="simulate one scenario")
    common(p_run)
    p_run.add_argument("--verbose-forces", action="store_true",
                       help="log per-step force decomposition columns")
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep", help="run a one-parameter sweep")
    common(p_sweep)
    p_sweep.add_argument("--sweep", required=True, metavar="param=v1,v2,...",
                         help=f"axis; params: {', '.join(SWEEP_PARAMS)}")
    p_sweep.set_defaults(func=cmd_sweep)

    p_cmp = sub.add_parser("compare", help="compare model variants on one scenario")
    common(p_cmp)
    p_cmp.add_argument("--variants", nargs="+", required=True)
    p_cmp.set_defaults(func=cmd_compare)

    p_val = sub.add_parser("validate", help="validate a scenario file")
    common(p_val, with_run_flags=False)
    p_val.set_defaults(func=cmd_validate)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (CliError, scenario_io.ScenarioError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericalAbort as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
