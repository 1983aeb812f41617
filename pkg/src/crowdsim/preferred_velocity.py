"""Preferred-velocity strategies and the velocity-adaptation force.

Four interchangeable strategies decide where a pedestrian wants to go and
how fast:

  original    - constant (or deadline-paced) speed toward the next waypoint
  hmfv        - nervousness blends own intent with herding and amplifies speed
  lkf         - memory / local density / dependency / excitement decision model
  familiarity - lkf extended with a building-knowledge route blend

Direction outputs are always unit vectors (or a documented fallback to the
last used direction); speed and direction are kept separate so strategies
compose cleanly with the adaptation force.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .core import Vec2, ZERO

VARIANTS = ("original", "hmfv", "lkf", "familiarity")

#: distance at which a waypoint counts as reached
WAYPOINT_CAPTURE_RADIUS = 0.5

_REST_SPEED = 1e-6
_ZERO_BLEND = 1e-12


@dataclass
class PedestrianState:
    """Kinematic plus psychological state of one pedestrian.

    The psychological scalars (nervousness p, memory M, excitement E,
    dependency D, familiarity f) each weight one ingredient of the preferred
    velocity; all live in closed ranges enforced at construction.
    """

    id: int
    pos: Vec2
    vel: Vec2 = ZERO
    radius: float = 0.25
    mass: float = 80.0
    tau: float = 0.5
    v0_initial: float = 1.5
    v_max: float = 1.5
    deadline: float | None = None
    waypoints: list[Vec2] = field(default_factory=list)
    waypoint_index: int = 0
    p: float = 0.0
    M: float = 0.0
    E: float = 0.0
    E_m: float = 1.0
    D: float = 0.0
    f: float = 0.0
    route_target: Vec2 | None = None
    avg_speed: float | None = None  # defaults to v0_initial (p starts at 0)
    last_direction: Vec2 = Vec2(1.0, 0.0)

    def __post_init__(self) -> None:
        if not (self.radius > 0.0 and self.mass > 0.0 and self.tau > 0.0):
            raise ValueError(f"pedestrian {self.id}: radius, mass, tau must be > 0")
        if not 0.0 < self.v0_initial <= self.v_max:
            raise ValueError(
                f"pedestrian {self.id}: need 0 < v0_initial <= v_max"
            )
        for name in ("p", "M", "D", "f"):
            val = getattr(self, name)
            if not 0.0 <= val <= 1.0:
                raise ValueError(f"pedestrian {self.id}: {name}={val} outside [0, 1]")
        if not 0.0 <= self.E <= self.E_m:
            raise ValueError(f"pedestrian {self.id}: E={self.E} outside [0, E_m]")
        if self.waypoints and not 0 <= self.waypoint_index < len(self.waypoints):
            raise ValueError(f"pedestrian {self.id}: waypoint_index out of range")
        if self.avg_speed is None:
            self.avg_speed = (1.0 - self.p) * self.v0_initial
        if self.waypoints:
            delta = self.waypoints[self.waypoint_index] - self.pos
            if delta.norm() >= _ZERO_BLEND:
                self.last_direction = delta.unit()

    def preferred_heading(self) -> Vec2:
        """Current intended direction without mutating waypoint progress."""
        return waypoint_direction(self)


@dataclass(frozen=True)
class NeighborSummary:
    """Aggregates over the pedestrians within the summary radius."""

    avg_pref_direction: Vec2 = ZERO  # mean of neighbors' own unit directions
    avg_velocity: Vec2 = ZERO  # mean neighbor velocity, m/s
    collective_direction: Vec2 = ZERO  # unit mean velocity, or zero
    density_tilde: float = 0.0  # crowd density * pedestrian area, in [0, 1]
    count: int = 0


def waypoint_direction(state: PedestrianState) -> Vec2:
    """Unit vector toward the current waypoint; last_direction when on top of it."""
    if not state.waypoints:
        return state.last_direction
    delta = state.waypoints[state.waypoint_index] - state.pos
    if delta.norm() < _ZERO_BLEND:
        if state.waypoint_index + 1 < len(state.waypoints):
            delta = state.waypoints[state.waypoint_index + 1] - state.pos
            if delta.norm() >= _ZERO_BLEND:
                return delta.unit()
        return state.last_direction
    return delta.unit()


def maybe_advance_waypoint(
    state: PedestrianState, capture_radius: float = WAYPOINT_CAPTURE_RADIUS
) -> bool:
    """Advance to the next waypoint when the current one is passed.

    Fires within capture_radius of the target, or once the pedestrian crosses
    the half-plane through the target perpendicular to the incoming leg
    (prevents orbiting a point that was narrowly missed).
    """
    if not state.waypoints or state.waypoint_index >= len(state.waypoints) - 1:
        return False
    wp = state.waypoints[state.waypoint_index]
    if (state.pos - wp).norm() <= capture_radius:
        state.waypoint_index += 1
        return True
    if state.waypoint_index > 0:
        leg = wp - state.waypoints[state.waypoint_index - 1]
        if leg.norm_sq() > 0.0 and (state.pos - wp).dot(leg) > 0.0:
            state.waypoint_index += 1
            return True
    return False


def preferred_direction_waypoint(
    state: PedestrianState, capture_radius: float = WAYPOINT_CAPTURE_RADIUS
) -> Vec2:
    """Advance waypoint progress if due, then return the unit direction."""
    maybe_advance_waypoint(state, capture_radius)
    return waypoint_direction(state)


def remaining_path_length(state: PedestrianState) -> float:
    """Polyline length from the current position through all remaining waypoints."""
    if not state.waypoints:
        return 0.0
    pts = state.waypoints[state.waypoint_index :]
    total = (pts[0] - state.pos).norm()
    for a, b in zip(pts, pts[1:]):
        total += (b - a).norm()
    return total


def preferred_speed_original(state: PedestrianState, t: float) -> float:
    """Uniform pacing: remaining distance over remaining time, capped at v_max.

    Without a deadline the pedestrian simply keeps the initial preferred
    speed. Near or past the deadline the denominator is clamped to tau so the
    speed stays finite.
    """
    if state.deadline is None:
        return state.v0_initial
    remaining = remaining_path_length(state)
    denom = max(state.deadline - t, state.tau)
    return min(max(remaining / denom, 0.0), state.v_max)


def nervousness(state: PedestrianState) -> float:
    """Panic parameter: 1 - (average achieved speed / initial preferred speed)."""
    return min(max(1.0 - state.avg_speed / state.v0_initial, 0.0), 1.0)


def hmfv_preferred(
    state: PedestrianState, nbrs: NeighborSummary
) -> tuple[float, Vec2]:
    """Nervousness-weighted preferred speed and herding-blended direction."""
    p = state.p
    speed = (1.0 - p) * state.v0_initial + p * state.v_max
    own = waypoint_direction(state)
    blend = own * (1.0 - p) + nbrs.avg_pref_direction * p
    if blend.norm() < _ZERO_BLEND:
        return speed, state.last_direction
    return speed, blend.unit()


def _motion_direction(state: PedestrianState) -> Vec2:
    speed = state.vel.norm()
    if speed >= _REST_SPEED:
        return state.vel * (1.0 / speed)
    return state.last_direction


def lkf_direction(
    state: PedestrianState, nbrs: NeighborSummary, door_dir: Vec2
) -> Vec2:
    """Memory/density-governed direction choice.

    With full memory the remembered door wins outright; without it, local
    density arbitrates between own inertia and the collective motion.
    """
    vhat = _motion_direction(state)
    rho = nbrs.density_tilde
    inner = vhat * (1.0 - rho) + nbrs.collective_direction * rho
    raw = inner * (1.0 - state.M) + door_dir * state.M
    if raw.norm() < _ZERO_BLEND:
        return state.last_direction
    return raw.unit()


def familiarity_direction(
    state: PedestrianState, nbrs: NeighborSummary, door_dir: Vec2
) -> Vec2:
    """lkf_direction with the assessed route blended in by familiarity f.

    Reduces exactly to lkf_direction when f = 0.
    """
    vhat = _motion_direction(state)
    rho = nbrs.density_tilde
    inner = vhat * (1.0 - rho) + nbrs.collective_direction * rho
    if state.f > 0.0:
        if state.route_target is None:
            raise ValueError(f"pedestrian {state.id}: f > 0 requires a route_target")
        delta = state.route_target - state.pos
        route_dir = delta.unit() if delta.norm() >= _ZERO_BLEND else state.last_direction
        inner = inner * (1.0 - state.f) + route_dir * state.f
    raw = inner * (1.0 - state.M) + door_dir * state.M
    if raw.norm() < _ZERO_BLEND:
        return state.last_direction
    return raw.unit()


def lkf_preferred_velocity(
    state: PedestrianState, nbrs: NeighborSummary, direction: Vec2
) -> Vec2:
    """Excitement-amplified own intent mixed with the neighbor velocity by D."""
    own = direction * ((1.0 + state.E) * state.v0_initial * (1.0 - state.D))
    return own + nbrs.avg_velocity * state.D


def update_memory(
    M: float, door_visible: bool, dt: float, tau_gain: float, tau_decay: float
) -> float:
    """One Euler step of the exit-memory relaxation, clamped to [0, 1].

    Relaxes toward 1 with time constant tau_gain while an exit is in sight,
    and decays toward 0 with tau_decay otherwise.
    """
    if door_visible:
        M = M + dt * (1.0 - M) / tau_gain
    else:
        M = M + dt * (0.0 - M) / tau_decay
    return min(max(M, 0.0), 1.0)


def update_excitement(
    E: float, avg_speed: float, v0_initial: float, E_m: float, dt: float, tau_E: float
) -> float:
    """One Euler step of the excitement relaxation, clamped to [0, E_m].

    The target is E_m scaled by the relative shortfall between achieved and
    initially preferred speed.
    """
    target = E_m * min(max(1.0 - avg_speed / v0_initial, 0.0), 1.0)
    E = E + dt * (target - E) / tau_E
    return min(max(E, 0.0), E_m)


def update_avg_speed(
    avg_speed: float, vel: Vec2, direction: Vec2, dt: float, window: float
) -> float:
    """Exponential moving average of the speed achieved along the intent."""
    achieved = max(vel.dot(direction), 0.0)
    return avg_speed + (dt / window) * (achieved - avg_speed)


def preferred_force(state: PedestrianState, pref_vel: Vec2) -> Vec2:
    """Velocity-adaptation force (m/tau) * (v_preferred - v_actual)."""
    return (pref_vel - state.vel) * (state.mass / state.tau)
