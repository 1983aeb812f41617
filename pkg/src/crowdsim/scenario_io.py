"""Scenario file parsing/validation and trajectory serialization.

Scenarios are JSON documents with top-level sections geometry / exits /
attractors / routes / population / defaults. Every rejection carries a
location (JSON path) and a machine-readable code; malformed fields are never
silently defaulted.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import IO, Iterable

import numpy as np

from .core import Vec2, WallSegment, closest_point_on_segment
from .preferred_velocity import PedestrianState

EXIT_ON_WALL_TOL = 1e-6
MAX_SPAWN_ATTEMPTS = 10_000

TRAJECTORY_FORMAT = "crowdsim-trajectory v1"
_STATE_COLUMNS = ["t", "id", "x", "y", "vx", "vy", "p", "M", "E"]
_FORCE_COLUMNS = [
    f"{name}_{ax}"
    for name in ("fpref", "frep", "fatt", "fpush", "ffric", "fnoise")
    for ax in ("x", "y")
]


class ScenarioError(ValueError):
    """Validation failure with a JSON-path location and an error code."""

    def __init__(self, code: str, location: str, message: str):
        super().__init__(f"{location}: {message} [{code}]")
        self.code = code
        self.location = location
        self.reason = message


@dataclass(frozen=True)
class Exit:
    id: str
    a: Vec2
    b: Vec2

    def midpoint(self) -> Vec2:
        return Vec2(0.5 * (self.a.x + self.b.x), 0.5 * (self.a.y + self.b.y))


Range = float | tuple[float, float]


@dataclass
class PopulationGroup:
    """One population entry: an explicit placement or a seeded spawn region."""

    count: int = 1
    pos: Vec2 | None = None
    region: tuple[float, float, float, float] | None = None
    route: str | None = None
    radius: Range = 0.25
    mass: Range = 80.0
    tau: Range = 0.5
    v0: Range = 1.5
    v_max: Range = 1.5
    deadline: float | None = None
    p: float = 0.0
    M: float = 0.0
    E: float = 0.0
    E_m: float = 1.0
    D: float = 0.0
    f: float = 0.0
    route_target: Vec2 | None = None


@dataclass
class Scenario:
    walls: list[WallSegment] = field(default_factory=list)
    exits: list[Exit] = field(default_factory=list)
    attractors: list[WallSegment] = field(default_factory=list)
    routes: dict[str, list[Vec2]] = field(default_factory=dict)
    population: list[PopulationGroup] = field(default_factory=list)
    defaults: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# parsing helpers

def _require(cond: bool, code: str, loc: str, msg: str) -> None:
    if not cond:
        raise ScenarioError(code, loc, msg)


def _as_point(obj, loc: str) -> Vec2:
    _require(
        isinstance(obj, (list, tuple)) and len(obj) == 2,
        "type", loc, "expected a [x, y] pair",
    )
    x, y = obj
    _require(
        isinstance(x, (int, float)) and isinstance(y, (int, float))
        and math.isfinite(x) and math.isfinite(y),
        "type", loc, "coordinates must be finite numbers",
    )
    return Vec2(float(x), float(y))


def _as_number(obj, loc: str) -> float:
    _require(
        isinstance(obj, (int, float)) and not isinstance(obj, bool)
        and math.isfinite(obj),
        "type", loc, "expected a finite number",
    )
    return float(obj)


def _as_range(obj, loc: str) -> Range:
    if isinstance(obj, (list, tuple)):
        _require(len(obj) == 2, "type", loc, "range must be [lo, hi]")
        lo = _as_number(obj[0], loc + "[0]")
        hi = _as_number(obj[1], loc + "[1]")
        _require(lo <= hi, "range", loc, f"range [{lo}, {hi}] has lo > hi")
        return (lo, hi)
    return _as_number(obj, loc)


def _check_known(obj: dict, allowed: Iterable[str], loc: str) -> None:
    unknown = sorted(set(obj) - set(allowed))
    _require(not unknown, "unknown-field", loc, f"unknown field(s): {', '.join(unknown)}")


def _segment(obj, loc: str, attractive: bool = False) -> WallSegment:
    _require(isinstance(obj, dict), "type", loc, "expected an object with a/b")
    _check_known(obj, ("a", "b"), loc)
    _require("a" in obj and "b" in obj, "missing-field", loc, "segment needs a and b")
    a = _as_point(obj["a"], loc + ".a")
    b = _as_point(obj["b"], loc + ".b")
    _require((b - a).norm() > 0.0, "range", loc, "segment endpoints coincide")
    return WallSegment(a, b, attractive=attractive)


def _unit_fraction(obj, loc: str, name: str) -> float:
    v = _as_number(obj, loc)
    _require(0.0 <= v <= 1.0, "range", loc, f"{name}={v} outside [0, 1]")
    return v


_GROUP_FIELDS = (
    "count", "id", "pos", "region", "route", "radius", "mass", "tau", "v0",
    "v_max", "deadline", "p", "M", "E", "E_m", "D", "f", "route_target",
)


def _parse_group(obj: dict, loc: str, ped_defaults: dict) -> PopulationGroup:
    _require(isinstance(obj, dict), "type", loc, "population entry must be an object")
    _check_known(obj, _GROUP_FIELDS, loc)
    merged = dict(ped_defaults)
    merged.update(obj)
    g = PopulationGroup()
    if "count" in merged:
        c = merged["count"]
        _require(isinstance(c, int) and c >= 1, "range", loc + ".count",
                 "count must be a positive integer")
        g.count = c
    if "pos" in merged:
        g.pos = _as_point(merged["pos"], loc + ".pos")
        _require(g.count == 1, "range", loc, "explicit pos requires count=1")
    if "region" in merged:
        r = merged["region"]
        _require(isinstance(r, (list, tuple)) and len(r) == 4, "type",
                 loc + ".region", "region must be [x0, y0, x1, y1]")
        x0, y0, x1, y1 = (_as_number(v, loc + ".region") for v in r)
        _require(x0 < x1 and y0 < y1, "range", loc + ".region",
                 "region must have positive extent")
        g.region = (x0, y0, x1, y1)
    _require((g.pos is None) != (g.region is None), "missing-field", loc,
             "exactly one of pos or region is required")
    if "route" in merged and merged["route"] is not None:
        _require(isinstance(merged["route"], str), "type", loc + ".route",
                 "route must be a name")
        g.route = merged["route"]
    for name in ("radius", "mass", "tau", "v0", "v_max"):
        if name in merged:
            val = _as_range(merged[name], f"{loc}.{name}")
            lo = val[0] if isinstance(val, tuple) else val
            _require(lo > 0.0, "range", f"{loc}.{name}", f"{name} must be positive")
            setattr(g, name, val)
    if "deadline" in merged and merged["deadline"] is not None:
        dl = _as_number(merged["deadline"], loc + ".deadline")
        _require(dl > 0.0, "range", loc + ".deadline", "deadline must be positive")
        g.deadline = dl
    for name, label in (("p", "nervousness"), ("M", "memory"),
                        ("D", "dependency"), ("f", "familiarity")):
        if name in merged:
            setattr(g, name, _unit_fraction(merged[name], f"{loc}.{name}", label))
    if "E_m" in merged:
        em = _as_number(merged["E_m"], loc + ".E_m")
        _require(em >= 0.0, "range", loc + ".E_m", "E_m must be non-negative")
        g.E_m = em
    if "E" in merged:
        e = _as_number(merged["E"], loc + ".E")
        _require(0.0 <= e <= g.E_m, "range", loc + ".E",
                 f"excitement E={e} outside [0, E_m={g.E_m}]")
        g.E = e
    if "route_target" in merged and merged["route_target"] is not None:
        g.route_target = _as_point(merged["route_target"], loc + ".route_target")
    lo_v0 = g.v0[0] if isinstance(g.v0, tuple) else g.v0
    hi_v0 = g.v0[1] if isinstance(g.v0, tuple) else g.v0
    lo_vm = g.v_max[0] if isinstance(g.v_max, tuple) else g.v_max
    _require(lo_vm >= hi_v0 or g.v_max == g.v0, "range", loc,
             f"v_max ({g.v_max}) must dominate v0 ({g.v0})")
    return g


def _dist_to_walls(p: Vec2, walls: list[WallSegment]) -> float:
    best = math.inf
    for w in walls:
        best = min(best, (p - closest_point_on_segment(p, w.a, w.b)).norm())
    return best


_TOP_FIELDS = ("geometry", "exits", "attractors", "routes", "population", "defaults")


def parse_scenario(text: str) -> Scenario:
    """Parse and fully validate a scenario document."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError("syntax", f"line {exc.lineno}", exc.msg) from exc
    _require(isinstance(doc, dict), "type", "$", "top level must be an object")
    _check_known(doc, _TOP_FIELDS, "$")

    scn = Scenario()
    geometry = doc.get("geometry", {})
    _require(isinstance(geometry, dict), "type", "geometry", "expected an object")
    _check_known(geometry, ("walls",), "geometry")
    for i, w in enumerate(geometry.get("walls", [])):
        scn.walls.append(_segment(w, f"geometry.walls[{i}]"))

    for i, e in enumerate(doc.get("exits", [])):
        loc = f"exits[{i}]"
        _require(isinstance(e, dict), "type", loc, "expected an object")
        _check_known(e, ("id", "a", "b"), loc)
        _require("id" in e and isinstance(e["id"], str), "missing-field", loc,
                 "exit needs a string id")
        seg = _segment({"a": e.get("a"), "b": e.get("b")}, loc)
        for end, pt in (("a", seg.a), ("b", seg.b)):
            _require(
                _dist_to_walls(pt, scn.walls) <= EXIT_ON_WALL_TOL,
                "exit-off-wall", f"{loc}.{end}",
                f"exit endpoint ({pt.x}, {pt.y}) does not touch the wall set",
            )
        scn.exits.append(Exit(e["id"], seg.a, seg.b))

    for i, a in enumerate(doc.get("attractors", [])):
        scn.attractors.append(_segment(a, f"attractors[{i}]", attractive=True))

    routes = doc.get("routes", {})
    _require(isinstance(routes, dict), "type", "routes", "expected an object")
    for name, pts in routes.items():
        loc = f"routes.{name}"
        _require(isinstance(pts, list) and len(pts) >= 1, "type", loc,
                 "route must be a non-empty list of points")
        scn.routes[name] = [_as_point(p, f"{loc}[{j}]") for j, p in enumerate(pts)]

    defaults = doc.get("defaults", {})
    _require(isinstance(defaults, dict), "type", "defaults", "expected an object")
    _check_known(defaults, ("pedestrian", "simulation", "model"), "defaults")
    ped_defaults = defaults.get("pedestrian", {})
    _require(isinstance(ped_defaults, dict), "type", "defaults.pedestrian",
             "expected an object")
    _check_known(ped_defaults, _GROUP_FIELDS, "defaults.pedestrian")
    scn.defaults = defaults

    for i, gobj in enumerate(doc.get("population", [])):
        loc = f"population[{i}]"
        g = _parse_group(gobj, loc, ped_defaults)
        if g.route is not None:
            _require(g.route in scn.routes, "dangling-route", f"{loc}.route",
                     f"route '{g.route}' is not defined")
        scn.population.append(g)

    _check_explicit_overlaps(scn)
    return scn


def _upper(r: Range) -> float:
    return r[1] if isinstance(r, tuple) else r


def _check_explicit_overlaps(scn: Scenario) -> None:
    placed: list[tuple[int, Vec2, float]] = []
    pid = 0
    for g in scn.population:
        if g.pos is not None:
            placed.append((pid, g.pos, _upper(g.radius)))
        pid += g.count
    for i in range(len(placed)):
        for j in range(i + 1, len(placed)):
            ia, pa, ra = placed[i]
            ib, pb, rb = placed[j]
            if (pa - pb).norm() < ra + rb:
                raise ScenarioError(
                    "overlap", "population",
                    f"pedestrians {ia} and {ib} overlap at t=0",
                )


# ---------------------------------------------------------------------------
# serialization

def _point(v: Vec2) -> list[float]:
    return [v.x, v.y]


def _range_out(r: Range):
    return list(r) if isinstance(r, tuple) else r


def scenario_to_dict(scn: Scenario) -> dict:
    doc: dict = {
        "geometry": {"walls": [{"a": _point(w.a), "b": _point(w.b)} for w in scn.walls]},
        "exits": [{"id": e.id, "a": _point(e.a), "b": _point(e.b)} for e in scn.exits],
        "routes": {name: [_point(p) for p in pts] for name, pts in scn.routes.items()},
        "population": [],
    }
    if scn.attractors:
        doc["attractors"] = [
            {"a": _point(w.a), "b": _point(w.b)} for w in scn.attractors
        ]
    if scn.defaults:
        doc["defaults"] = scn.defaults
    base = PopulationGroup()
    for g in scn.population:
        entry: dict = {}
        if g.count != 1:
            entry["count"] = g.count
        if g.pos is not None:
            entry["pos"] = _point(g.pos)
        if g.region is not None:
            entry["region"] = list(g.region)
        if g.route is not None:
            entry["route"] = g.route
        for name in ("radius", "mass", "tau", "v0", "v_max"):
            if getattr(g, name) != getattr(base, name):
                entry[name] = _range_out(getattr(g, name))
        if g.deadline is not None:
            entry["deadline"] = g.deadline
        for name in ("p", "M", "E", "E_m", "D", "f"):
            if getattr(g, name) != getattr(base, name):
                entry[name] = getattr(g, name)
        if g.route_target is not None:
            entry["route_target"] = _point(g.route_target)
        doc["population"].append(entry)
    return doc


def serialize_scenario(scn: Scenario) -> str:
    """Canonical JSON form; parse(serialize(s)) round-trips exactly.

    Serialization drops the pedestrian-defaults section (values were merged
    into the groups at parse time), so re-parsing yields an equal Scenario.
    """
    doc = scenario_to_dict(scn)
    if "defaults" in doc and "pedestrian" in doc["defaults"]:
        defaults = {k: v for k, v in doc["defaults"].items() if k != "pedestrian"}
        if defaults:
            doc["defaults"] = defaults
        else:
            del doc["defaults"]
    return json.dumps(doc, indent=2, sort_keys=True)


def scenario_hash(scn: Scenario) -> str:
    """Content hash used to refuse cross-scenario metric comparisons."""
    return hashlib.sha256(serialize_scenario(scn).encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# population instantiation

def _sample(r: Range, rng: np.random.Generator) -> float:
    if isinstance(r, tuple):
        return float(rng.uniform(r[0], r[1]))
    return r


def instantiate_population(scn: Scenario, seed: int) -> list[PedestrianState]:
    """Materialize the population into concrete pedestrian states.

    Spawn regions use seeded rejection sampling against overlap; explicit
    placements were already overlap-checked at parse time.
    """
    rng = np.random.default_rng(seed)
    peds: list[PedestrianState] = []

    def overlaps(pos: Vec2, radius: float) -> bool:
        return any((pos - q.pos).norm() < radius + q.radius for q in peds)

    pid = 0
    for gi, g in enumerate(scn.population):
        waypoints = list(scn.routes[g.route]) if g.route else []
        route_target = g.route_target
        if route_target is None and waypoints:
            route_target = waypoints[-1]
        for _ in range(g.count):
            radius = _sample(g.radius, rng)
            v0 = _sample(g.v0, rng)
            v_max = max(_sample(g.v_max, rng), v0)
            if g.pos is not None:
                pos = g.pos
                if overlaps(pos, radius):
                    raise ScenarioError(
                        "overlap", f"population[{gi}]",
                        f"pedestrian {pid} overlaps an earlier placement",
                    )
            else:
                x0, y0, x1, y1 = g.region
                for _attempt in range(MAX_SPAWN_ATTEMPTS):
                    pos = Vec2(float(rng.uniform(x0, x1)), float(rng.uniform(y0, y1)))
                    if not overlaps(pos, radius):
                        break
                else:
                    raise ScenarioError(
                        "spawn-failure", f"population[{gi}].region",
                        f"no overlap-free position found in {MAX_SPAWN_ATTEMPTS} attempts",
                    )
            peds.append(
                PedestrianState(
                    id=pid,
                    pos=pos,
                    radius=radius,
                    mass=_sample(g.mass, rng),
                    tau=_sample(g.tau, rng),
                    v0_initial=v0,
                    v_max=v_max,
                    deadline=g.deadline,
                    waypoints=list(waypoints),
                    p=g.p,
                    M=g.M,
                    E=g.E,
                    E_m=g.E_m,
                    D=g.D,
                    f=g.f,
                    route_target=route_target,
                )
            )
            pid += 1
    return peds


# ---------------------------------------------------------------------------
# trajectory output

def _fmt(x: float) -> str:
    return format(x, ".9g")


def write_trajectory(log, sink: IO[str] | str) -> int:
    """Write a trajectory log as CSV; returns the number of bytes written.

    One row per (sample time, pedestrian); force-decomposition columns are
    appended when the log carries them.
    """
    if isinstance(sink, str):
        with open(sink, "w", newline="") as fh:
            return write_trajectory(log, fh)

    lines: list[str] = [f"# {TRAJECTORY_FORMAT}"]
    verbose = bool(log.frames) and log.frames[0].forces is not None
    header = _STATE_COLUMNS + (_FORCE_COLUMNS if verbose else [])
    lines.append(",".join(header))
    for frame in log.frames:
        n = len(frame.ids)
        for k in range(n):
            row = [
                _fmt(frame.t),
                str(int(frame.ids[k])),
                _fmt(frame.pos[k, 0]), _fmt(frame.pos[k, 1]),
                _fmt(frame.vel[k, 0]), _fmt(frame.vel[k, 1]),
                _fmt(frame.p[k]), _fmt(frame.M[k]), _fmt(frame.E[k]),
            ]
            if verbose:
                for comp in ("preferred", "social_rep", "social_att",
                             "pushing", "friction", "noise"):
                    arr = frame.forces[comp]
                    row.append(_fmt(arr[k, 0]))
                    row.append(_fmt(arr[k, 1]))
            lines.append(",".join(row))
    payload = "\n".join(lines) + "\n"
    sink.write(payload)
    return len(payload.encode())
