"""Observables over completed runs: evacuation times, flows, densities.

Pure post-processing over trajectory logs; nothing here feeds back into the
simulation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import IO

import numpy as np


@dataclass
class RunSummary:
    """Aggregate observables of one run, keyed for cross-variant comparison."""

    scenario_hash: str
    seed: int
    variant: str
    n_pedestrians: int
    evacuated: int
    end_time: float
    completed: bool
    evacuation_time_total: float | None  # max exit time; None unless all left
    exit_times: dict[int, float] = field(default_factory=dict)
    mean_flow: dict[str, float] = field(default_factory=dict)  # per exit, 1/s
    peak_local_density: float = 0.0  # 1/m^2
    mean_speed_series: tuple[list[float], list[float]] = ([], [])
    mean_p_series: tuple[list[float], list[float]] = ([], [])
    contact_impulse_total: float = 0.0  # N*s

    def to_dict(self) -> dict:
        doc = {
            "scenario_hash": self.scenario_hash,
            "seed": self.seed,
            "variant": self.variant,
            "n_pedestrians": self.n_pedestrians,
            "evacuated": self.evacuated,
            "end_time": self.end_time,
            "completed": self.completed,
            "evacuation_time_total": self.evacuation_time_total,
            "peak_local_density": self.peak_local_density,
            "contact_impulse_total": self.contact_impulse_total,
            "exit_times": {str(k): v for k, v in sorted(self.exit_times.items())},
            "mean_speed_t": self.mean_speed_series[0],
            "mean_speed": self.mean_speed_series[1],
            "mean_p_t": self.mean_p_series[0],
            "mean_p": self.mean_p_series[1],
        }
        for exit_id, flow in sorted(self.mean_flow.items()):
            doc[f"mean_flow.{exit_id}"] = flow
        return doc


def flow_rate(crossings: list[float], window: float, start: float = 0.0) -> float:
    """Crossings inside the half-open window [start, start + window), per second."""
    if window <= 0.0:
        raise ValueError("window must be positive")
    count = sum(1 for t in crossings if start <= t < start + window)
    return count / window


def flow_rate_series(
    crossings: list[float], window: float, t_end: float, stride: float | None = None
) -> tuple[list[float], list[float]]:
    """Sliding-window flow; returns window start times and rates."""
    if window <= 0.0:
        raise ValueError("window must be positive")
    stride = stride if stride is not None else window
    times = []
    rates = []
    start = 0.0
    while start < t_end:
        times.append(start)
        rates.append(flow_rate(crossings, window, start))
        start += stride
    return times, rates


def local_density_field(
    positions: np.ndarray,
    grid_cell: float,
    bounds: tuple[float, float, float, float],
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-cell pedestrian count over cell area; returns (field, x_edges, y_edges)."""
    if grid_cell <= 0.0:
        raise ValueError("grid_cell must be positive")
    x0, y0, x1, y1 = bounds
    x_edges = np.arange(x0, x1 + grid_cell, grid_cell)
    y_edges = np.arange(y0, y1 + grid_cell, grid_cell)
    positions = np.asarray(positions, dtype=float).reshape(-1, 2)
    counts, _, _ = np.histogram2d(
        positions[:, 0], positions[:, 1], bins=(x_edges, y_edges)
    )
    return counts / (grid_cell * grid_cell), x_edges, y_edges


def _frame_bounds(frames) -> tuple[float, float, float, float] | None:
    xs = [f.pos for f in frames if len(f.ids)]
    if not xs:
        return None
    allpos = np.concatenate(xs, axis=0)
    pad = 0.5
    return (
        float(allpos[:, 0].min()) - pad,
        float(allpos[:, 1].min()) - pad,
        float(allpos[:, 0].max()) + pad,
        float(allpos[:, 1].max()) + pad,
    )


def summarize(log, grid_cell: float = 1.0) -> RunSummary:
    """Reduce a trajectory log to a RunSummary."""
    exit_times = log.exit_times()
    n = log.meta["n_pedestrians"]
    evacuated = len(exit_times)
    evac_total = max(exit_times.values()) if evacuated == n and n > 0 else None

    per_exit: dict[str, list[float]] = {}
    for t, _pid, exit_id in log.exit_events:
        per_exit.setdefault(exit_id, []).append(t)
    horizon = log.end_time if log.end_time > 0 else 1.0
    mean_flow = {eid: len(ts) / horizon for eid, ts in per_exit.items()}

    bounds = _frame_bounds(log.frames)
    peak = 0.0
    if bounds is not None:
        for frame in log.frames:
            if len(frame.ids) == 0:
                continue
            field_vals, _, _ = local_density_field(frame.pos, grid_cell, bounds)
            peak = max(peak, float(field_vals.max()))

    speed_t: list[float] = []
    speed_v: list[float] = []
    p_t: list[float] = []
    p_v: list[float] = []
    for frame in log.frames:
        if len(frame.ids) == 0:
            continue
        speed_t.append(frame.t)
        speed_v.append(float(np.sqrt((frame.vel**2).sum(axis=1)).mean()))
        p_t.append(frame.t)
        p_v.append(float(frame.p.mean()))

    return RunSummary(
        scenario_hash=log.meta["scenario_hash"],
        seed=log.meta["seed"],
        variant=log.meta["variant"],
        n_pedestrians=n,
        evacuated=evacuated,
        end_time=log.end_time,
        completed=log.completed,
        evacuation_time_total=evac_total,
        exit_times=exit_times,
        mean_flow=mean_flow,
        peak_local_density=peak,
        mean_speed_series=(speed_t, speed_v),
        mean_p_series=(p_t, p_v),
        contact_impulse_total=float(log.contact_impulse.sum()),
    )


_COMPARED_METRICS = (
    "evacuation_time_total",
    "evacuated",
    "end_time",
    "peak_local_density",
    "contact_impulse_total",
)


def compare_runs(summaries: list[RunSummary]) -> list[dict]:
    """Tabulate per-metric absolute and relative deltas against the first run.

    All summaries must come from the same scenario content and seed;
    otherwise the comparison is refused with the identifier diff.
    """
    if len(summaries) < 2:
        raise ValueError("need at least two runs to compare")
    base = summaries[0]
    for s in summaries[1:]:
        if s.scenario_hash != base.scenario_hash or s.seed != base.seed:
            raise ValueError(
                "runs are not comparable: "
                f"(scenario {base.scenario_hash}, seed {base.seed}) vs "
                f"(scenario {s.scenario_hash}, seed {s.seed})"
            )
    rows: list[dict] = []
    for metric in _COMPARED_METRICS:
        ref = getattr(base, metric)
        for s in summaries:
            val = getattr(s, metric)
            if val is None or ref is None:
                delta = None
                rel = None
            else:
                delta = val - ref
                rel = delta / abs(ref) if ref != 0 else (0.0 if delta == 0 else math.inf)
            rows.append(
                {
                    "metric": metric,
                    "variant": s.variant,
                    "value": val,
                    "delta_abs": delta,
                    "delta_rel": rel,
                }
            )
    return rows


def write_comparison_csv(rows: list[dict], sink: IO[str] | str) -> None:
    if isinstance(sink, str):
        with open(sink, "w", newline="") as fh:
            write_comparison_csv(rows, fh)
            return
    sink.write("metric,variant,value,delta_abs,delta_rel\n")
    for row in rows:
        vals = [
            row["metric"],
            row["variant"],
            *("" if row[k] is None else format(row[k], ".9g")
              for k in ("value", "delta_abs", "delta_rel")),
        ]
        sink.write(",".join(str(v) for v in vals) + "\n")


def read_trajectory(source: IO[str] | str) -> tuple[list[str], np.ndarray]:
    """Parse a trajectory CSV back into (columns, data matrix)."""
    if isinstance(source, str):
        with open(source) as fh:
            return read_trajectory(fh)
    header: list[str] | None = None
    rows: list[list[float]] = []
    for line in source:
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if header is None:
            header = line.split(",")
            continue
        rows.append([float(v) for v in line.split(",")])
    if header is None:
        raise ValueError("trajectory file has no header row")
    data = np.array(rows, dtype=float).reshape(len(rows), len(header))
    return header, data
