"""Physical pushing and sliding-friction forces, active only on body contact."""

from __future__ import annotations

from dataclasses import dataclass

from .core import InteractionGeometry, Vec2


@dataclass
class ContactParams:
    k: float = 1.2e5  # body elasticity, N/m
    kappa: float = 2.4e5  # sliding friction coefficient, kg/(m*s)

    def __post_init__(self) -> None:
        if self.k < 0.0 or self.kappa < 0.0:
            raise ValueError("contact parameters must be non-negative")


def eta(x: float) -> float:
    """Contact gate: x for x >= 0, else 0."""
    return x if x > 0.0 else 0.0


def pushing_force(geom: InteractionGeometry, params: ContactParams) -> Vec2:
    """Body-compression counterforce k*eta(R - d) along the normal."""
    return geom.n * (params.k * eta(geom.R - geom.d))


def friction_force(geom: InteractionGeometry, params: ContactParams) -> Vec2:
    """Sliding friction between two bodies in contact.

    dv_t = (v_j - v_i) . t makes the pair forces exactly antisymmetric.
    """
    return geom.t * (params.kappa * eta(geom.R - geom.d) * geom.dv_t)


def wall_friction_force(geom: InteractionGeometry, params: ContactParams) -> Vec2:
    """Sliding friction against a wall, opposing i's tangential motion.

    Expects geom from wall_geometry, where dv_t = v_i . t.
    """
    return geom.t * (-params.kappa * eta(geom.R - geom.d) * geom.dv_t)
