"""Psychic repulsion and attraction forces with anisotropic perception.

Both forces decay exponentially with surface distance and are weighted by
how much of the source lies within the pedestrian's field of view.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .core import InteractionGeometry, Vec2


@dataclass
class SocialForceParams:
    """Strengths, fall-off lengths and perception anisotropy.

    Defaults follow the escape-panic literature; everything is overridable
    from the scenario file.
    """

    A_r: float = 2000.0  # repulsion strength, N
    B_r: float = 0.08  # repulsion fall-off length, m
    A_att: float = 0.0  # attraction strength, N (disabled by default)
    B_att: float = 0.08  # attraction fall-off length, m
    lam: float = 0.2  # perception anisotropy, 0 = strictly frontal, 1 = isotropic
    attraction_decay_time: float = 5.0  # interest half-life scale, s

    def __post_init__(self) -> None:
        if self.B_r <= 0.0 or self.B_att <= 0.0:
            raise ValueError("fall-off lengths must be positive")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError("lambda must lie in [0, 1]")
        if self.A_r < 0.0 or self.A_att < 0.0:
            raise ValueError("force strengths must be non-negative")
        if self.attraction_decay_time <= 0.0:
            raise ValueError("attraction_decay_time must be positive")


def perception_weight(phi: float, lam: float) -> float:
    """Anisotropy weight in [lam, 1]: full ahead (phi=0), lam behind (phi=pi)."""
    return lam + (1.0 - lam) * (1.0 + math.cos(phi)) / 2.0


def social_repulsion(geom: InteractionGeometry, params: SocialForceParams) -> Vec2:
    """Repulsive force on pedestrian i, along +n (away from the source)."""
    mag = (
        params.A_r
        * math.exp((geom.R - geom.d) / params.B_r)
        * perception_weight(geom.phi, params.lam)
    )
    return geom.n * mag


def social_attraction(
    geom: InteractionGeometry, params: SocialForceParams, interest_age: float
) -> Vec2:
    """Attractive force on pedestrian i, along -n (toward the source).

    interest_age is the time since i first perceived the source; the pull
    decays exponentially with it as interest wanes.
    """
    mag = (
        params.A_att
        * math.exp((geom.R - geom.d) / params.B_att)
        * perception_weight(geom.phi, params.lam)
        * math.exp(-interest_age / params.attraction_decay_time)
    )
    return geom.n * (-mag)
