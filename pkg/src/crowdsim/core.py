"""Planar vector algebra and the interaction geometry shared by all force laws.

Pedestrians are discs in 2D. Every pairwise force (social repulsion,
attraction, pushing, friction) is evaluated from the same geometry bundle:
combined radius, center distance, normal/tangent unit vectors, view angle
and relative tangential speed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


class DegenerateGeometryError(ValueError):
    """Two centers coincide: no interaction normal is defined."""


@dataclass(frozen=True)
class Vec2:
    """Immutable planar vector (meters, m/s or N depending on context)."""

    x: float
    y: float

    def __add__(self, other: "Vec2") -> "Vec2":
        return Vec2(self.x + other.x, self.y + other.y)

    def __sub__(self, other: "Vec2") -> "Vec2":
        return Vec2(self.x - other.x, self.y - other.y)

    def __mul__(self, s: float) -> "Vec2":
        return Vec2(self.x * s, self.y * s)

    __rmul__ = __mul__

    def __neg__(self) -> "Vec2":
        return Vec2(-self.x, -self.y)

    def dot(self, other: "Vec2") -> float:
        return self.x * other.x + self.y * other.y

    def norm_sq(self) -> float:
        return self.x * self.x + self.y * self.y

    def norm(self) -> float:
        return math.hypot(self.x, self.y)

    def unit(self) -> "Vec2":
        n = self.norm()
        if n == 0.0:
            raise DegenerateGeometryError("cannot normalize the zero vector")
        return Vec2(self.x / n, self.y / n)

    def rotate90(self) -> "Vec2":
        """Counter-clockwise quarter turn: (x, y) -> (-y, x)."""
        return Vec2(-self.y, self.x)

    def is_finite(self) -> bool:
        return math.isfinite(self.x) and math.isfinite(self.y)


ZERO = Vec2(0.0, 0.0)


@dataclass(frozen=True)
class WallSegment:
    """Straight obstacle (or attractive object) between two endpoints."""

    a: Vec2
    b: Vec2
    attractive: bool = False

    def __post_init__(self) -> None:
        if (self.b - self.a).norm_sq() == 0.0:
            raise ValueError("wall segment must have positive length")

    def length(self) -> float:
        return (self.b - self.a).norm()

    def midpoint(self) -> Vec2:
        return Vec2(0.5 * (self.a.x + self.b.x), 0.5 * (self.a.y + self.b.y))


@dataclass(frozen=True)
class InteractionGeometry:
    """Geometry bundle consumed by the force formulas.

    R:    combined radius (r_i + r_j for pairs, r_i against walls)
    d:    center distance (to the other center, or to the nearest wall point)
    n:    unit normal pointing toward pedestrian i (away from the source)
    t:    unit tangent, n rotated 90 degrees counter-clockwise
    phi:  view angle between i's facing direction and the vector to the source
    dv_t: tangential speed term ((v_j - v_i) . t for pairs, v_i . t for walls)
    """

    R: float
    d: float
    n: Vec2
    t: Vec2
    phi: float
    dv_t: float


def closest_point_on_segment(p: Vec2, a: Vec2, b: Vec2) -> Vec2:
    """Nearest point to p on the closed segment [a, b]."""
    ab = b - a
    denom = ab.norm_sq()
    s = (p - a).dot(ab) / denom
    s = min(max(s, 0.0), 1.0)
    return a + ab * s


def pair_hash_unit(id_a: int, id_b: int) -> float:
    """Deterministic hash of an unordered id pair, mapped to [0, 1)."""
    lo, hi = (id_a, id_b) if id_a <= id_b else (id_b, id_a)
    h = (lo * 0x9E3779B1 + hi * 0x85EBCA77) & 0xFFFFFFFF
    h ^= h >> 13
    h = (h * 0xC2B2AE35) & 0xFFFFFFFF
    h ^= h >> 16
    return h / 2.0**32


def fallback_normal(id_a: int, id_b: int) -> Vec2:
    """Substitute normal for exactly coincident centers, pointing toward id_a.

    The angle is deterministic in the unordered id pair and the sign follows
    the argument order, so the two bodies of an overlapping pair are pushed
    apart in exactly opposite directions in every run.
    """
    ang = 2.0 * math.pi * pair_hash_unit(id_a, id_b)
    n = Vec2(math.cos(ang), math.sin(ang))
    return n if id_a <= id_b else -n


def cross(o: Vec2, a: Vec2, b: Vec2) -> float:
    """z-component of (a - o) x (b - o)."""
    return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)


def segments_intersect(p: Vec2, q: Vec2, a: Vec2, b: Vec2) -> bool:
    """Proper (interior) intersection of segments pq and ab.

    Touching at a shared endpoint does not count, so a sight line to an exit
    midpoint is not blocked by the wall the exit sits in.
    """
    d1 = cross(a, b, p)
    d2 = cross(a, b, q)
    d3 = cross(p, q, a)
    d4 = cross(p, q, b)
    return ((d1 > 0.0) != (d2 > 0.0)) and ((d3 > 0.0) != (d4 > 0.0))


def _facing(state) -> Vec2:
    """Direction a pedestrian is considered to look toward.

    Uses the actual motion direction; below 1e-6 m/s it falls back to the
    current preferred direction (a facing is undefined at rest).
    """
    speed = state.vel.norm()
    if speed >= 1e-6:
        return state.vel * (1.0 / speed)
    return state.preferred_heading()


def view_angle(facing: Vec2, toward_source: Vec2) -> float:
    """Angle in [0, pi] between the facing direction and a unit vector."""
    c = min(max(facing.dot(toward_source), -1.0), 1.0)
    return math.acos(c)


def ped_pair_geometry(state_i, state_j) -> InteractionGeometry:
    """Interaction geometry of pedestrian i with respect to pedestrian j.

    The normal points from j toward i, i.e. along the repulsion felt by i.
    Raises DegenerateGeometryError for coincident centers; callers substitute
    fallback_normal.
    """
    delta = state_i.pos - state_j.pos
    d = delta.norm()
    if d < 1e-12:
        raise DegenerateGeometryError(
            f"pedestrians {state_i.id} and {state_j.id} coincide"
        )
    n = delta * (1.0 / d)
    t = n.rotate90()
    phi = view_angle(_facing(state_i), -n)
    dv_t = (state_j.vel - state_i.vel).dot(t)
    return InteractionGeometry(
        R=state_i.radius + state_j.radius, d=d, n=n, t=t, phi=phi, dv_t=dv_t
    )


def wall_geometry(state_i, wall: WallSegment) -> InteractionGeometry:
    """Interaction geometry of pedestrian i with respect to a wall segment.

    Distance and normal are taken from the nearest point of the segment;
    dv_t carries v_i . t for the wall friction formula.
    """
    q = closest_point_on_segment(state_i.pos, wall.a, wall.b)
    delta = state_i.pos - q
    d = delta.norm()
    if d < 1e-12:
        raise DegenerateGeometryError(
            f"pedestrian {state_i.id} lies exactly on a wall segment"
        )
    n = delta * (1.0 / d)
    t = n.rotate90()
    phi = view_angle(_facing(state_i), -n)
    dv_t = state_i.vel.dot(t)
    return InteractionGeometry(R=state_i.radius, d=d, n=n, t=t, phi=phi, dv_t=dv_t)
