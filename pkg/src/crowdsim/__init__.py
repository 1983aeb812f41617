"""Microscopic pedestrian crowd simulation (social-force family).

Public surface: core geometry, force laws, preferred-velocity strategies,
the simulation engine, scenario I/O and run metrics.
"""

from .core import (
    DegenerateGeometryError,
    InteractionGeometry,
    Vec2,
    WallSegment,
    ped_pair_geometry,
    wall_geometry,
)
from .contact_forces import ContactParams, eta, friction_force, pushing_force, wall_friction_force
from .dynamics import (
    Engine,
    ModelConfig,
    NumericalAbort,
    SimulationConfig,
    StepForces,
    TrajectoryLog,
    WorldSnapshot,
    run,
    total_force,
)
from .metrics import RunSummary, compare_runs, flow_rate, local_density_field, summarize
from .preferred_velocity import (
    NeighborSummary,
    PedestrianState,
    VARIANTS,
    familiarity_direction,
    hmfv_preferred,
    lkf_direction,
    lkf_preferred_velocity,
    nervousness,
    preferred_force,
    preferred_speed_original,
    update_excitement,
    update_memory,
)
from .scenario_io import (
    Exit,
    PopulationGroup,
    Scenario,
    ScenarioError,
    instantiate_population,
    parse_scenario,
    serialize_scenario,
    write_trajectory,
)
from .social_forces import SocialForceParams, perception_weight, social_attraction, social_repulsion

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
