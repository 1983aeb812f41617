"""Force assembly, neighbor search and deterministic time integration.

Two equivalent force paths exist on purpose:

  * a scalar reference path (`total_force`) built directly from the per-pair
    formulas in core / social_forces / contact_forces / preferred_velocity;
  * a vectorized engine (`Engine`) used for whole runs.

The engine is checked against the scalar path by the test suite, so speed
never silently buys a different model. Runs are bit-deterministic: forces are
reduced in fixed index order and fluctuations come from a counter-based
generator keyed by (seed, step), so scheduling cannot change results.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .core import (
    DegenerateGeometryError,
    InteractionGeometry,
    Vec2,
    ZERO,
    WallSegment,
    fallback_normal,
    ped_pair_geometry,
    segments_intersect,
    view_angle,
    wall_geometry,
    _facing,
)
from .contact_forces import ContactParams, friction_force, pushing_force, wall_friction_force
from .preferred_velocity import (
    NeighborSummary,
    PedestrianState,
    VARIANTS,
    hmfv_preferred,
    lkf_direction,
    familiarity_direction,
    lkf_preferred_velocity,
    preferred_force,
    preferred_speed_original,
    waypoint_direction,
)
from .scenario_io import Exit, Scenario, instantiate_population, scenario_hash
from .social_forces import SocialForceParams, social_attraction, social_repulsion

#: synthetic id offset used to key degenerate-overlap fallbacks against walls
WALL_ID_BASE = 1 << 20

#: use the jitted inner loops when numba is available (tests may disable)
USE_JIT = True

_DEGENERATE_D = 1e-12


class NumericalAbort(RuntimeError):
    """A non-finite force or state was produced; identifies the culprit."""

    def __init__(self, step_index: int, ped_id: int, component: str):
        super().__init__(
            f"non-finite {component} for pedestrian {ped_id} at step {step_index}"
        )
        self.step_index = step_index
        self.ped_id = ped_id
        self.component = component


@dataclass
class ModelConfig:
    """Force-law parameters and the psychological dynamics constants."""

    social: SocialForceParams = field(default_factory=SocialForceParams)
    contact: ContactParams = field(default_factory=ContactParams)
    summary_radius: float = 2.0  # neighborhood for averages and density, m
    visibility_range: float = 25.0  # exit / attractor perception range, m
    tau_gain: float = 0.5  # memory rise time while an exit is visible, s
    tau_decay: float = 10.0  # memory decay time otherwise, s
    tau_excite: float = 2.0  # excitement relaxation time, s
    speed_avg_window: float = 2.0  # moving-average window for achieved speed, s
    capture_radius: float = 0.5  # waypoint arrival distance, m


@dataclass
class SimulationConfig:
    dt: float = 0.01
    duration: float = 60.0
    seed: int = 0
    noise_amplitude: float = 0.0  # fluctuation force scale, N
    variant: str = "original"
    neighbor_cutoff: float = 5.0  # pairwise force cutoff, m
    cell_size: float = 5.0  # spatial hash cell, m
    output_interval: float = 0.1  # trajectory sampling period, s
    log_forces: bool = False
    debug_checks: bool = False  # swept wall-crossing assertion

    def __post_init__(self) -> None:
        if self.dt <= 0.0 or self.duration < 0.0:
            raise ValueError("dt must be > 0 and duration >= 0")
        if not (self.neighbor_cutoff >= self.cell_size > 0.0):
            raise ValueError("need neighbor_cutoff >= cell_size > 0")
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; pick one of {VARIANTS}")


@dataclass
class StepForces:
    """Per-pedestrian force decomposition for one step."""

    preferred: Vec2 = ZERO
    social_rep: Vec2 = ZERO
    social_att: Vec2 = ZERO
    pushing: Vec2 = ZERO
    friction: Vec2 = ZERO
    noise: Vec2 = ZERO

    def total(self) -> Vec2:
        return (
            self.preferred + self.social_rep + self.social_att
            + self.pushing + self.friction + self.noise
        )


# ---------------------------------------------------------------------------
# scalar reference path

@dataclass
class WorldSnapshot:
    """Frozen view of the world for one force evaluation."""

    pedestrians: list[PedestrianState]
    walls: list[WallSegment] = field(default_factory=list)
    exits: list[Exit] = field(default_factory=list)
    t: float = 0.0
    #: (ped_id, attractor_index) -> time since first perception; absent = never seen
    attractor_ages: dict[tuple[int, int], float] = field(default_factory=dict)


def neighbor_summary(
    state: PedestrianState, pedestrians: list[PedestrianState], summary_radius: float
) -> NeighborSummary:
    """Aggregate the pedestrians within summary_radius of `state`."""
    sum_e = ZERO
    sum_v = ZERO
    count = 0
    for other in pedestrians:
        if other.id == state.id:
            continue
        if (other.pos - state.pos).norm() <= summary_radius:
            sum_e = sum_e + waypoint_direction(other)
            sum_v = sum_v + other.vel
            count += 1
    if count == 0:
        return NeighborSummary()
    inv = 1.0 / count
    avg_v = sum_v * inv
    coll = avg_v.unit() if avg_v.norm() >= 1e-12 else ZERO
    rho = min(count * state.radius**2 / summary_radius**2, 1.0)
    return NeighborSummary(
        avg_pref_direction=sum_e * inv,
        avg_velocity=avg_v,
        collective_direction=coll,
        density_tilde=rho,
        count=count,
    )


def door_direction(state: PedestrianState, exits: list[Exit]) -> Vec2:
    """Unit vector toward the nearest exit midpoint; zero without exits."""
    best = None
    best_d = math.inf
    for e in exits:
        d = (e.midpoint() - state.pos).norm()
        if d < best_d:
            best, best_d = e, d
    if best is None or best_d < 1e-12:
        return ZERO
    return (best.midpoint() - state.pos) * (1.0 / best_d)


def preferred_velocity_for(
    state: PedestrianState,
    nbrs: NeighborSummary,
    door_dir: Vec2,
    variant: str,
    t: float,
) -> Vec2:
    """Dispatch to the selected preferred-velocity strategy."""
    if variant == "original":
        return waypoint_direction(state) * preferred_speed_original(state, t)
    if variant == "hmfv":
        speed, direction = hmfv_preferred(state, nbrs)
        return direction * speed
    if variant == "lkf":
        direction = lkf_direction(state, nbrs, door_dir)
        return lkf_preferred_velocity(state, nbrs, direction)
    if variant == "familiarity":
        direction = familiarity_direction(state, nbrs, door_dir)
        return lkf_preferred_velocity(state, nbrs, direction)
    raise ValueError(f"unknown variant {variant!r}")


def _degenerate_pair_geometry(state_i, state_j) -> InteractionGeometry:
    n = fallback_normal(state_i.id, state_j.id)
    t = n.rotate90()
    return InteractionGeometry(
        R=state_i.radius + state_j.radius,
        d=0.0,
        n=n,
        t=t,
        phi=view_angle(_facing(state_i), -n),
        dv_t=(state_j.vel - state_i.vel).dot(t),
    )


def _degenerate_wall_geometry(state_i, wall_index: int) -> InteractionGeometry:
    n = fallback_normal(state_i.id, WALL_ID_BASE + wall_index)
    t = n.rotate90()
    return InteractionGeometry(
        R=state_i.radius,
        d=0.0,
        n=n,
        t=t,
        phi=view_angle(_facing(state_i), -n),
        dv_t=state_i.vel.dot(t),
    )


def total_force(
    state: PedestrianState,
    world: WorldSnapshot,
    model: ModelConfig,
    cfg: SimulationConfig,
    noise: Vec2 = ZERO,
) -> StepForces:
    """Scalar reference force assembly for one pedestrian.

    Sums pairwise forces over neighbors within the cutoff (beyond it they are
    exactly zero) and over all wall segments, plus the preferred force and an
    externally supplied fluctuation.
    """
    rep = ZERO
    att = ZERO
    push = ZERO
    fric = ZERO
    for other in world.pedestrians:
        if other.id == state.id:
            continue
        if (other.pos - state.pos).norm() > cfg.neighbor_cutoff:
            continue
        try:
            geom = ped_pair_geometry(state, other)
        except DegenerateGeometryError:
            geom = _degenerate_pair_geometry(state, other)
        rep = rep + social_repulsion(geom, model.social)
        push = push + pushing_force(geom, model.contact)
        fric = fric + friction_force(geom, model.contact)

    attractor_index = 0
    for wi, wall in enumerate(world.walls):
        try:
            geom = wall_geometry(state, wall)
        except DegenerateGeometryError:
            geom = _degenerate_wall_geometry(state, wi)
        rep = rep + social_repulsion(geom, model.social)
        push = push + pushing_force(geom, model.contact)
        fric = fric + wall_friction_force(geom, model.contact)
        if wall.attractive:
            age = world.attractor_ages.get((state.id, attractor_index))
            if age is not None:
                att = att + social_attraction(geom, model.social, age)
            attractor_index += 1

    nbrs = neighbor_summary(state, world.pedestrians, model.summary_radius)
    pref_vel = preferred_velocity_for(
        state, nbrs, door_direction(state, world.exits), cfg.variant, world.t
    )
    return StepForces(
        preferred=preferred_force(state, pref_vel),
        social_rep=rep,
        social_att=att,
        pushing=push,
        friction=fric,
        noise=noise,
    )


# ---------------------------------------------------------------------------
# trajectory log

@dataclass
class Frame:
    """States of the still-present pedestrians at one sample time."""

    t: float
    ids: np.ndarray
    pos: np.ndarray
    vel: np.ndarray
    p: np.ndarray
    M: np.ndarray
    E: np.ndarray
    forces: dict[str, np.ndarray] | None = None


@dataclass
class TrajectoryLog:
    frames: list[Frame]
    exit_events: list[tuple[float, int, str]]  # (time, ped_id, exit_id)
    contact_impulse: np.ndarray  # per-pedestrian, N*s
    ped_meta: dict[str, np.ndarray]  # static per-pedestrian attributes
    meta: dict
    completed: bool
    end_time: float

    def exit_times(self) -> dict[int, float]:
        return {pid: t for t, pid, _ in self.exit_events}


# ---------------------------------------------------------------------------
# vectorized engine

def _unit_rows(v: np.ndarray, fallback: np.ndarray, eps: float) -> np.ndarray:
    """Normalize rows of v; rows shorter than eps are replaced by fallback."""
    norms = np.sqrt((v * v).sum(axis=1))
    ok = norms >= eps
    safe = np.where(ok, norms, 1.0)
    out = v / safe[:, None]
    out[~ok] = fallback[~ok]
    return out


def _cross_z(ax, ay, bx, by):
    return ax * by - ay * bx


class Engine:
    """Vectorized simulation of one scenario.

    Force evaluation reads a frozen snapshot of the previous step; state
    commits (kinematics, then the psychological update phase) happen after.
    Pedestrians whose centers cross an exit are marked evacuated and drop out
    of all force sums.
    """

    def __init__(
        self,
        scenario: Scenario,
        model: ModelConfig | None = None,
        sim: SimulationConfig | None = None,
    ):
        self.model = model or ModelConfig()
        self.sim = sim or SimulationConfig()
        if self.sim.neighbor_cutoff < self.model.summary_radius:
            raise ValueError("neighbor_cutoff must cover the summary radius")
        self.scenario = scenario
        self._pack(instantiate_population(scenario, self.sim.seed))
        self._pack_geometry(scenario)
        self.t = 0.0
        self.step_index = 0
        self.exit_events: list[tuple[float, int, str]] = []

    # -- setup -------------------------------------------------------------

    def _pack(self, peds: list[PedestrianState]) -> None:
        n = len(peds)
        self.n = n
        self.ids = np.array([p.id for p in peds], dtype=np.int64)
        self.pos = np.array([[p.pos.x, p.pos.y] for p in peds], dtype=float).reshape(n, 2)
        self.vel = np.array([[p.vel.x, p.vel.y] for p in peds], dtype=float).reshape(n, 2)
        self.radius = np.array([p.radius for p in peds], dtype=float)
        self.mass = np.array([p.mass for p in peds], dtype=float)
        self.tau = np.array([p.tau for p in peds], dtype=float)
        self.v0 = np.array([p.v0_initial for p in peds], dtype=float)
        self.v_max = np.array([p.v_max for p in peds], dtype=float)
        self.deadline = np.array(
            [p.deadline if p.deadline is not None else np.nan for p in peds], dtype=float
        )
        self.p = np.array([p.p for p in peds], dtype=float)
        self.M = np.array([p.M for p in peds], dtype=float)
        self.E = np.array([p.E for p in peds], dtype=float)
        self.E_m = np.array([p.E_m for p in peds], dtype=float)
        self.D = np.array([p.D for p in peds], dtype=float)
        self.f = np.array([p.f for p in peds], dtype=float)
        self.vbar = np.array([p.avg_speed for p in peds], dtype=float)
        self.last_dir = np.array(
            [[p.last_direction.x, p.last_direction.y] for p in peds], dtype=float
        ).reshape(n, 2)
        self.route_target = np.array(
            [
                [p.route_target.x, p.route_target.y]
                if p.route_target is not None
                else [np.nan, np.nan]
                for p in peds
            ],
            dtype=float,
        ).reshape(n, 2)
        if self.sim.variant == "familiarity":
            bad = (self.f > 0.0) & ~np.isfinite(self.route_target[:, 0])
            if bad.any():
                raise ValueError(
                    f"pedestrian {int(self.ids[bad.argmax()])}: f > 0 requires a route_target"
                )

        max_w = max((len(p.waypoints) for p in peds), default=0)
        max_w = max(max_w, 1)
        self.wp = np.full((n, max_w, 2), np.nan)
        self.n_way = np.zeros(n, dtype=np.int64)
        self.way_idx = np.zeros(n, dtype=np.int64)
        self.suffix_len = np.zeros((n, max_w))
        for i, p in enumerate(peds):
            k = len(p.waypoints)
            self.n_way[i] = k
            self.way_idx[i] = p.waypoint_index
            for j, w in enumerate(p.waypoints):
                self.wp[i, j] = (w.x, w.y)
            # suffix_len[j] = polyline length from waypoint j to the final one
            acc = 0.0
            for j in range(k - 1, -1, -1):
                self.suffix_len[i, j] = acc
                if j > 0:
                    acc += (p.waypoints[j] - p.waypoints[j - 1]).norm()

        self.active = np.ones(n, dtype=bool)
        self.exit_time = np.full(n, np.nan)
        self.contact_impulse = np.zeros(n)

    def _pack_geometry(self, scenario: Scenario) -> None:
        segs = list(scenario.walls) + list(scenario.attractors)
        s = len(segs)
        self.seg_a = np.array([[w.a.x, w.a.y] for w in segs], dtype=float).reshape(s, 2)
        self.seg_b = np.array([[w.b.x, w.b.y] for w in segs], dtype=float).reshape(s, 2)
        self.seg_attractive = np.array([w.attractive for w in segs], dtype=bool)
        self.n_walls = len(scenario.walls)
        # attractor_index within the attractive subset, -1 for plain walls
        self.attr_index = np.where(
            self.seg_attractive, np.cumsum(self.seg_attractive) - 1, -1
        ).astype(np.int64)
        self.first_seen = np.full((self.n, int(self.seg_attractive.sum())), np.nan)

        x = len(scenario.exits)
        self.exit_a = np.array([[e.a.x, e.a.y] for e in scenario.exits], dtype=float).reshape(x, 2)
        self.exit_b = np.array([[e.b.x, e.b.y] for e in scenario.exits], dtype=float).reshape(x, 2)
        self.exit_mid = 0.5 * (self.exit_a + self.exit_b)
        self.exit_ids = [e.id for e in scenario.exits]

        walls = self.seg_a[: self.n_walls], self.seg_b[: self.n_walls]
        self.wall_a, self.wall_b = walls

    # -- per-step geometry helpers -----------------------------------------

    def _own_direction(self, idx: np.ndarray) -> np.ndarray:
        """Unit direction toward the current waypoint (last_dir fallback)."""
        tgt = self.wp[idx, self.way_idx[idx]]
        delta = tgt - self.pos[idx]
        delta = np.where(np.isfinite(delta), delta, 0.0)
        return _unit_rows(delta, self.last_dir[idx], _DEGENERATE_D)

    def _los_clear(self, origins: np.ndarray, targets: np.ndarray) -> np.ndarray:
        """(n, m) matrix: is the sight line origin->target free of walls?"""
        n = origins.shape[0]
        m = targets.shape[0]
        if m == 0:
            return np.zeros((n, 0), dtype=bool)
        if self.wall_a.shape[0] == 0:
            return np.ones((n, m), dtype=bool)
        p = origins[:, None, None, :]  # (n,1,1,2)
        q = targets[None, :, None, :]  # (1,m,1,2)
        a = self.wall_a[None, None, :, :]  # (1,1,w,2)
        b = self.wall_b[None, None, :, :]
        d1 = _cross_z(b[..., 0] - a[..., 0], b[..., 1] - a[..., 1],
                      p[..., 0] - a[..., 0], p[..., 1] - a[..., 1])
        d2 = _cross_z(b[..., 0] - a[..., 0], b[..., 1] - a[..., 1],
                      q[..., 0] - a[..., 0], q[..., 1] - a[..., 1])
        d3 = _cross_z(q[..., 0] - p[..., 0], q[..., 1] - p[..., 1],
                      a[..., 0] - p[..., 0], a[..., 1] - p[..., 1])
        d4 = _cross_z(q[..., 0] - p[..., 0], q[..., 1] - p[..., 1],
                      b[..., 0] - p[..., 0], b[..., 1] - p[..., 1])
        blocked = ((d1 > 0) != (d2 > 0)) & ((d3 > 0) != (d4 > 0))
        return ~blocked.any(axis=2)

    def _crossed(self, old: np.ndarray, new: np.ndarray,
                 seg_a: np.ndarray, seg_b: np.ndarray) -> np.ndarray:
        """(n, s) matrix: did the move old->new properly cross each segment?"""
        n = old.shape[0]
        s = seg_a.shape[0]
        if s == 0 or n == 0:
            return np.zeros((n, s), dtype=bool)
        a = seg_a[None, :, :]
        b = seg_b[None, :, :]
        p = old[:, None, :]
        q = new[:, None, :]
        d1 = _cross_z(b[..., 0] - a[..., 0], b[..., 1] - a[..., 1],
                      p[..., 0] - a[..., 0], p[..., 1] - a[..., 1])
        d2 = _cross_z(b[..., 0] - a[..., 0], b[..., 1] - a[..., 1],
                      q[..., 0] - a[..., 0], q[..., 1] - a[..., 1])
        d3 = _cross_z(q[..., 0] - p[..., 0], q[..., 1] - p[..., 1],
                      a[..., 0] - p[..., 0], a[..., 1] - p[..., 1])
        d4 = _cross_z(q[..., 0] - p[..., 0], q[..., 1] - p[..., 1],
                      b[..., 0] - p[..., 0], b[..., 1] - p[..., 1])
        return ((d1 > 0) != (d2 > 0)) & ((d3 > 0) != (d4 > 0))

    # -- neighbor search ---------------------------------------------------

    def _cell_blocks(self, pos: np.ndarray):
        """Yield (targets, candidates) index blocks from the spatial hash.

        Cells are iterated in sorted key order and candidate indices are
        ascending, so force reduction order is reproducible.
        """
        cell = self.sim.cell_size
        keys = np.floor(pos / cell).astype(np.int64)
        cells: dict[tuple[int, int], list[int]] = {}
        for i, (cx, cy) in enumerate(keys):
            cells.setdefault((int(cx), int(cy)), []).append(i)
        rings = max(1, int(math.ceil(self.sim.neighbor_cutoff / cell)))
        offsets = [(dx, dy) for dx in range(-rings, rings + 1)
                   for dy in range(-rings, rings + 1)]
        for key in sorted(cells):
            targets = np.array(cells[key], dtype=np.int64)
            cand: list[int] = []
            for dx, dy in offsets:
                cand.extend(cells.get((key[0] + dx, key[1] + dy), ()))
            yield targets, np.sort(np.array(cand, dtype=np.int64))

    # -- force evaluation --------------------------------------------------

    def _compute_forces(self, idx: np.ndarray) -> dict[str, np.ndarray]:
        """Force decomposition for the active subset `idx` (frozen snapshot)."""
        soc = self.model.social
        con = self.model.contact
        pos = self.pos[idx]
        vel = self.vel[idx]
        r = self.radius[idx]
        m = idx.size

        e0 = self._own_direction(idx)
        speed = np.sqrt((vel * vel).sum(axis=1))
        moving = speed >= 1e-6
        facing = np.where(moving[:, None], vel / np.where(moving, speed, 1.0)[:, None], e0)

        att = np.zeros((m, 2))
        use_jit = USE_JIT and _kernels.HAVE_NUMBA
        if use_jit:
            rep, push, fric, nb_count, nb_sum_e, nb_sum_v = _kernels.pair_forces(
                pos, vel, r, e0, facing, self.ids[idx],
                soc.A_r, soc.B_r, soc.lam, con.k, con.kappa,
                self.sim.neighbor_cutoff, self.model.summary_radius,
            )
        else:
            rep, push, fric, nb_count, nb_sum_e, nb_sum_v = self._pair_forces_numpy(
                idx, pos, vel, r, e0, facing
            )

        if self.seg_a.shape[0]:
            if use_jit:
                ages = self._attractor_ages(idx)
                w_rep, w_att, w_push, w_fric = _kernels.segment_forces(
                    pos, vel, r, facing, self.ids[idx],
                    self.seg_a, self.seg_b, self.attr_index, ages,
                    soc.A_r, soc.B_r, soc.A_att, soc.B_att, soc.lam,
                    soc.attraction_decay_time, con.k, con.kappa, WALL_ID_BASE,
                )
            else:
                w_rep, w_att, w_push, w_fric = self._segment_forces(
                    idx, pos, vel, r, facing
                )
            rep = rep + w_rep
            att = att + w_att
            push = push + w_push
            fric = fric + w_fric

        pref_vel, chosen = self._preferred_velocity(
            idx, pos, vel, e0, nb_count, nb_sum_e, nb_sum_v
        )
        pref = (self.mass[idx] / self.tau[idx])[:, None] * (pref_vel - vel)

        if self.sim.noise_amplitude > 0.0:
            noise = self._noise()[idx]
        else:
            noise = np.zeros((m, 2))

        return {
            "preferred": pref,
            "social_rep": rep,
            "social_att": att,
            "pushing": push,
            "friction": fric,
            "noise": noise,
            "chosen_dir": chosen,
        }

    def _attractor_ages(self, idx: np.ndarray) -> np.ndarray:
        """(m, n_attractors) perception ages; -1 marks never-seen."""
        seen = self.first_seen[idx]
        ages = self.t - seen
        return np.where(np.isfinite(seen), ages, -1.0)

    def _pair_forces_numpy(self, idx, pos, vel, r, e0, facing):
        """Spatial-hash numpy fallback for the pairwise force kernel."""
        soc = self.model.social
        con = self.model.contact
        m = idx.size
        rep = np.zeros((m, 2))
        push = np.zeros((m, 2))
        fric = np.zeros((m, 2))
        nb_count = np.zeros(m)
        nb_sum_e = np.zeros((m, 2))
        nb_sum_v = np.zeros((m, 2))

        for tgt, cand in self._cell_blocks(pos):
            dx = pos[tgt][:, None, :] - pos[cand][None, :, :]
            d = np.sqrt((dx * dx).sum(axis=2))
            self_mask = idx[tgt][:, None] == idx[cand][None, :]
            dsafe = np.where(d < _DEGENERATE_D, 1.0, d)
            nvec = dx / dsafe[..., None]
            degen = (d < _DEGENERATE_D) & ~self_mask
            if degen.any():
                for ti, ci in zip(*np.nonzero(degen)):
                    fb = fallback_normal(int(self.ids[idx[tgt[ti]]]),
                                         int(self.ids[idx[cand[ci]]]))
                    nvec[ti, ci] = (fb.x, fb.y)
            within = (d <= self.sim.neighbor_cutoff) & ~self_mask
            R = r[tgt][:, None] + r[cand][None, :]
            cosphi = -(facing[tgt][:, None, :] * nvec).sum(axis=2)
            w = soc.lam + (1.0 - soc.lam) * (1.0 + cosphi) / 2.0
            repmag = soc.A_r * np.exp((R - d) / soc.B_r) * w * within
            ov = np.maximum(R - d, 0.0) * within
            pushmag = con.k * ov
            tvec = np.stack([-nvec[..., 1], nvec[..., 0]], axis=-1)
            dvt = ((vel[cand][None, :, :] - vel[tgt][:, None, :]) * tvec).sum(axis=2)
            fricmag = con.kappa * ov * dvt
            rep[tgt] = (repmag[..., None] * nvec).sum(axis=1)
            push[tgt] = (pushmag[..., None] * nvec).sum(axis=1)
            fric[tgt] = (fricmag[..., None] * tvec).sum(axis=1)
            nbm = (d <= self.model.summary_radius) & ~self_mask
            nb_count[tgt] = nbm.sum(axis=1)
            nb_sum_e[tgt] = (nbm[..., None] * e0[cand][None, :, :]).sum(axis=1)
            nb_sum_v[tgt] = (nbm[..., None] * vel[cand][None, :, :]).sum(axis=1)

        return rep, push, fric, nb_count, nb_sum_e, nb_sum_v

    def _segment_forces(self, idx, pos, vel, r, facing):
        soc = self.model.social
        con = self.model.contact
        a = self.seg_a[None, :, :]
        b = self.seg_b[None, :, :]
        ab = b - a
        ab2 = (ab * ab).sum(axis=2)
        s = ((pos[:, None, :] - a) * ab).sum(axis=2) / ab2
        s = np.clip(s, 0.0, 1.0)
        q = a + s[..., None] * ab
        dxw = pos[:, None, :] - q
        d = np.sqrt((dxw * dxw).sum(axis=2))
        dsafe = np.where(d < _DEGENERATE_D, 1.0, d)
        nvec = dxw / dsafe[..., None]
        degen = d < _DEGENERATE_D
        if degen.any():
            for ti, si in zip(*np.nonzero(degen)):
                fb = fallback_normal(int(self.ids[idx[ti]]), WALL_ID_BASE + int(si))
                nvec[ti, si] = (fb.x, fb.y)
        cosphi = -(facing[:, None, :] * nvec).sum(axis=2)
        w = soc.lam + (1.0 - soc.lam) * (1.0 + cosphi) / 2.0
        surf = r[:, None] - d
        repmag = soc.A_r * np.exp(surf / soc.B_r) * w
        ov = np.maximum(surf, 0.0)
        pushmag = con.k * ov
        tvec = np.stack([-nvec[..., 1], nvec[..., 0]], axis=-1)
        vt = (vel[:, None, :] * tvec).sum(axis=2)
        fricmag = -con.kappa * ov * vt

        attmag = np.zeros_like(repmag)
        if self.seg_attractive.any() and soc.A_att > 0.0:
            cols = np.nonzero(self.seg_attractive)[0]
            ages = self.t - self.first_seen[idx][:, self.attr_index[cols]]
            seen = np.isfinite(ages)
            decay = np.where(seen, np.exp(-np.where(seen, ages, 0.0) / soc.attraction_decay_time), 0.0)
            attmag[:, cols] = soc.A_att * np.exp(surf[:, cols] / soc.B_att) * w[:, cols] * decay

        rep = (repmag[..., None] * nvec).sum(axis=1)
        att = (-attmag[..., None] * nvec).sum(axis=1)
        push = (pushmag[..., None] * nvec).sum(axis=1)
        fric = (fricmag[..., None] * tvec).sum(axis=1)
        return rep, att, push, fric

    def _door_direction(self, pos: np.ndarray) -> np.ndarray:
        if self.exit_mid.shape[0] == 0:
            return np.zeros_like(pos)
        delta = self.exit_mid[None, :, :] - pos[:, None, :]
        d = np.sqrt((delta * delta).sum(axis=2))
        nearest = d.argmin(axis=1)
        rows = np.arange(pos.shape[0])
        best = delta[rows, nearest]
        dist = d[rows, nearest]
        safe = np.where(dist < _DEGENERATE_D, 1.0, dist)
        out = best / safe[:, None]
        out[dist < _DEGENERATE_D] = 0.0
        return out

    def _preferred_velocity(self, idx, pos, vel, e0, nb_count, nb_sum_e, nb_sum_v):
        """Vectorized mirror of preferred_velocity_for; returns (v_pref, dir)."""
        variant = self.sim.variant
        v0 = self.v0[idx]
        has_nb = nb_count > 0
        inv = 1.0 / np.where(has_nb, nb_count, 1.0)
        avg_e = nb_sum_e * inv[:, None]
        avg_v = nb_sum_v * inv[:, None]
        avg_e[~has_nb] = 0.0
        avg_v[~has_nb] = 0.0

        if variant == "original":
            tgt = self.wp[idx, self.way_idx[idx]]
            delta = np.where(np.isfinite(tgt), tgt - pos, 0.0)
            dist = np.sqrt((delta * delta).sum(axis=1))
            remaining = dist + self.suffix_len[idx, self.way_idx[idx]]
            dl = self.deadline[idx]
            denom = np.maximum(dl - self.t, self.tau[idx])
            paced = np.clip(remaining / denom, 0.0, self.v_max[idx])
            spd = np.where(np.isfinite(dl), paced, v0)
            return spd[:, None] * e0, e0

        if variant == "hmfv":
            p = self.p[idx]
            spd = (1.0 - p) * v0 + p * self.v_max[idx]
            blend = (1.0 - p)[:, None] * e0 + p[:, None] * avg_e
            direction = _unit_rows(blend, self.last_dir[idx], _DEGENERATE_D)
            return spd[:, None] * direction, direction

        # lkf and familiarity
        speed = np.sqrt((vel * vel).sum(axis=1))
        vhat = _unit_rows(vel, self.last_dir[idx], 1e-6)
        coll = _unit_rows(avg_v, np.zeros_like(avg_v), 1e-12)
        rho = np.clip(nb_count * self.radius[idx] ** 2 / self.model.summary_radius**2,
                      0.0, 1.0)
        inner = vhat * (1.0 - rho)[:, None] + coll * rho[:, None]
        if variant == "familiarity":
            fam = self.f[idx]
            use = fam > 0.0
            if use.any():
                rdelta = np.where(
                    np.isfinite(self.route_target[idx]),
                    self.route_target[idx] - pos, 0.0,
                )
                rdir = _unit_rows(rdelta, self.last_dir[idx], _DEGENERATE_D)
                blended = inner * (1.0 - fam)[:, None] + rdir * fam[:, None]
                inner = np.where(use[:, None], blended, inner)
        mem = self.M[idx]
        door = self._door_direction(pos)
        raw = inner * (1.0 - mem)[:, None] + door * mem[:, None]
        direction = _unit_rows(raw, self.last_dir[idx], _DEGENERATE_D)
        own = direction * ((1.0 + self.E[idx]) * v0 * (1.0 - self.D[idx]))[:, None]
        return own + avg_v * self.D[idx][:, None], direction

    def _noise(self) -> np.ndarray:
        """Fluctuation forces for this step, keyed by (seed, step index, id).

        Drawn for the full population in id order from a counter-based
        generator, so a pedestrian's stream does not depend on who else is
        still present or on any scheduling.
        """
        bitgen = np.random.Philox(
            key=np.array([self.sim.seed & (2**64 - 1), self.step_index], dtype=np.uint64)
        )
        gen = np.random.Generator(bitgen)
        return self.sim.noise_amplitude * gen.standard_normal((self.n, 2))

    # -- stepping ----------------------------------------------------------

    def step(self) -> dict[str, np.ndarray] | None:
        """Advance one time step; returns the force decomposition (active rows)."""
        dt = self.sim.dt
        idx = np.flatnonzero(self.active)
        if idx.size == 0:
            self.t += dt
            self.step_index += 1
            return None

        forces = self._compute_forces(idx)
        total = (
            forces["preferred"] + forces["social_rep"] + forces["social_att"]
            + forces["pushing"] + forces["friction"] + forces["noise"]
        )
        if not np.isfinite(total).all():
            self._raise_numerical(idx, forces)

        old_pos = self.pos[idx].copy()
        new_vel = self.vel[idx] + total / self.mass[idx][:, None] * dt
        new_pos = old_pos + new_vel * dt
        if not (np.isfinite(new_vel).all() and np.isfinite(new_pos).all()):
            bad = np.nonzero(~np.isfinite(new_pos).all(axis=1))[0]
            ped = int(self.ids[idx[bad[0]]]) if bad.size else int(self.ids[idx[0]])
            raise NumericalAbort(self.step_index, ped, "state")

        if self.sim.debug_checks and self.wall_a.shape[0]:
            hit = self._crossed(old_pos, new_pos, self.wall_a, self.wall_b)
            if hit.any():
                ped = int(self.ids[idx[hit.any(axis=1).argmax()]])
                raise AssertionError(
                    f"pedestrian {ped} tunneled through a wall at step {self.step_index}"
                )

        self.vel[idx] = new_vel
        self.pos[idx] = new_pos

        # evacuation: center crossed an exit segment during this step
        if self.exit_a.shape[0]:
            crossed = self._crossed(old_pos, new_pos, self.exit_a, self.exit_b)
            out_rows = crossed.any(axis=1)
            if out_rows.any():
                for row in np.nonzero(out_rows)[0]:
                    gi = idx[row]
                    which = int(crossed[row].argmax())
                    self.active[gi] = False
                    self.exit_time[gi] = self.t + dt
                    self.exit_events.append(
                        (self.t + dt, int(self.ids[gi]), self.exit_ids[which])
                    )

        self.contact_impulse[idx] += dt * (
            np.sqrt((forces["pushing"] ** 2).sum(axis=1))
            + np.sqrt((forces["friction"] ** 2).sum(axis=1))
        )

        self._update_phase(idx, forces["chosen_dir"])
        self.t += dt
        self.step_index += 1
        return forces

    def _update_phase(self, idx: np.ndarray, chosen_dir: np.ndarray) -> None:
        """Commit psychological state: waypoints, v-bar, p, E, M, perception."""
        dt = self.sim.dt
        still = self.active[idx]
        sub = idx[still]
        if sub.size == 0:
            return
        self.last_dir[idx] = chosen_dir

        # waypoint advancement at the new position
        wi = self.way_idx[sub]
        can_advance = wi < self.n_way[sub] - 1
        tgt = self.wp[sub, wi]
        delta = np.where(np.isfinite(tgt), self.pos[sub] - tgt, 0.0)
        near = np.sqrt((delta * delta).sum(axis=1)) <= self.model.capture_radius
        prev = self.wp[sub, np.maximum(wi - 1, 0)]
        leg = np.where(np.isfinite(prev) & np.isfinite(tgt), tgt - prev, 0.0)
        passed = (wi > 0) & ((delta * leg).sum(axis=1) > 0.0)
        self.way_idx[sub] = wi + ((near | passed) & can_advance)

        # achieved-speed average along the (possibly updated) intent
        e0 = self._own_direction(sub)
        achieved = np.maximum((self.vel[sub] * e0).sum(axis=1), 0.0)
        self.vbar[sub] += (dt / self.model.speed_avg_window) * (achieved - self.vbar[sub])

        shortfall = np.clip(1.0 - self.vbar[sub] / self.v0[sub], 0.0, 1.0)
        self.p[sub] = shortfall
        self.E[sub] = np.clip(
            self.E[sub] + dt * (self.E_m[sub] * shortfall - self.E[sub]) / self.model.tau_excite,
            0.0, self.E_m[sub],
        )

        # exit memory: relax up while any exit is in sight, decay otherwise
        if self.exit_mid.shape[0]:
            clear = self._los_clear(self.pos[sub], self.exit_mid)
            dist = np.sqrt(
                ((self.exit_mid[None, :, :] - self.pos[sub][:, None, :]) ** 2).sum(axis=2)
            )
            visible = (clear & (dist <= self.model.visibility_range)).any(axis=1)
        else:
            visible = np.zeros(sub.size, dtype=bool)
        gained = self.M[sub] + dt * (1.0 - self.M[sub]) / self.model.tau_gain
        decayed = self.M[sub] - dt * self.M[sub] / self.model.tau_decay
        self.M[sub] = np.clip(np.where(visible, gained, decayed), 0.0, 1.0)

        # first perception of attractive objects
        if self.first_seen.shape[1]:
            mids = 0.5 * (self.seg_a[self.seg_attractive] + self.seg_b[self.seg_attractive])
            clear = self._los_clear(self.pos[sub], mids)
            dist = np.sqrt(((mids[None, :, :] - self.pos[sub][:, None, :]) ** 2).sum(axis=2))
            perceived = clear & (dist <= self.model.visibility_range)
            block = self.first_seen[sub]
            fresh = perceived & ~np.isfinite(block)
            block[fresh] = self.t + dt
            self.first_seen[sub] = block

    def _raise_numerical(self, idx: np.ndarray, forces: dict[str, np.ndarray]) -> None:
        for name in ("preferred", "social_rep", "social_att", "pushing", "friction", "noise"):
            bad = ~np.isfinite(forces[name]).all(axis=1)
            if bad.any():
                raise NumericalAbort(
                    self.step_index, int(self.ids[idx[bad.argmax()]]), name
                )
        raise NumericalAbort(self.step_index, int(self.ids[idx[0]]), "total")

    # -- runs --------------------------------------------------------------

    def _frame(
        self,
        forces: dict[str, np.ndarray] | None,
        force_idx: np.ndarray | None = None,
    ) -> Frame:
        idx = np.flatnonzero(self.active)
        packed = None
        if self.sim.log_forces:
            packed = {}
            for name in ("preferred", "social_rep", "social_att", "pushing", "friction", "noise"):
                if forces is None:
                    packed[name] = np.zeros((idx.size, 2))
                else:
                    # keep only rows whose pedestrian is still present
                    keep = self.active[force_idx]
                    packed[name] = forces[name][keep].copy()
        return Frame(
            t=self.t,
            ids=self.ids[idx].copy(),
            pos=self.pos[idx].copy(),
            vel=self.vel[idx].copy(),
            p=self.p[idx].copy(),
            M=self.M[idx].copy(),
            E=self.E[idx].copy(),
            forces=packed,
        )

    def run(self) -> TrajectoryLog:
        """Iterate until the horizon or full evacuation; sample frames."""
        sim = self.sim
        log_every = max(1, int(round(sim.output_interval / sim.dt)))
        frames = [self._frame(None)]
        while self.t < sim.duration - 1e-12 and self.active.any():
            force_idx = np.flatnonzero(self.active)
            forces = self.step()
            done = self.t >= sim.duration - 1e-12 or not self.active.any()
            if self.step_index % log_every == 0 or done:
                frames.append(self._frame(forces, force_idx))
        completed = bool(not self.active.any())
        return TrajectoryLog(
            frames=frames,
            exit_events=list(self.exit_events),
            contact_impulse=self.contact_impulse.copy(),
            ped_meta={
                "id": self.ids.copy(),
                "D": self.D.copy(),
                "f": self.f.copy(),
                "E_m": self.E_m.copy(),
                "radius": self.radius.copy(),
                "v0": self.v0.copy(),
            },
            meta={
                "variant": sim.variant,
                "seed": sim.seed,
                "dt": sim.dt,
                "duration": sim.duration,
                "noise_amplitude": sim.noise_amplitude,
                "scenario_hash": scenario_hash(self.scenario),
                "n_pedestrians": self.n,
            },
            completed=completed,
            end_time=self.t,
        )


def run(
    scenario: Scenario,
    model: ModelConfig | None = None,
    sim: SimulationConfig | None = None,
) -> TrajectoryLog:
    """Build an engine for the scenario and run it to completion."""
    return Engine(scenario, model, sim).run()
