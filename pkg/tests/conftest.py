"""Shared scenario builders for the test suite."""

import json

import pytest

from crowdsim.scenario_io import Scenario, parse_scenario


def room_doc(v0: float = 1.5, v_max: float = 3.0, count: int = 100) -> dict:
    """Square room with a single 1 m door and a spawn region filling most of it."""
    return {
        "geometry": {"walls": [
            {"a": [0, 0], "b": [15, 0]},
            {"a": [0, 0], "b": [0, 15]},
            {"a": [0, 15], "b": [15, 15]},
            {"a": [15, 0], "b": [15, 7]},
            {"a": [15, 8], "b": [15, 15]},
        ]},
        "exits": [{"id": "door", "a": [15, 7], "b": [15, 8]}],
        "routes": {"out": [[14.5, 7.5], [16.5, 7.5]]},
        "population": [{
            "count": count,
            "region": [0.7, 0.7, 12.0, 14.3],
            "route": "out",
            "radius": [0.25, 0.3],
            "v0": v0,
            "v_max": v_max,
        }],
    }


def corridor_doc() -> dict:
    """Ten pedestrians walking a straight corridor; no contact for 10 s."""
    pop = []
    for i in range(5):
        pop.append({"pos": [1.0 + i, 1.2], "route": "east"})
        pop.append({"pos": [1.4 + i, 2.6], "route": "east"})
    return {
        "geometry": {"walls": [
            {"a": [0, 0], "b": [30, 0]},
            {"a": [0, 4], "b": [30, 4]},
            {"a": [30, 0], "b": [30, 1.4]},
            {"a": [30, 2.6], "b": [30, 4]},
        ]},
        "exits": [{"id": "end", "a": [30, 1.4], "b": [30, 2.6]}],
        "routes": {"east": [[28.0, 2.0], [31.0, 2.0]]},
        "population": pop,
    }


def minimal_doc() -> dict:
    """One room, one exit, one pedestrian."""
    return {
        "geometry": {"walls": [
            {"a": [0, 0], "b": [10, 0]},
            {"a": [0, 0], "b": [0, 10]},
            {"a": [0, 10], "b": [10, 10]},
            {"a": [10, 0], "b": [10, 4.5]},
            {"a": [10, 5.5], "b": [10, 10]},
        ]},
        "exits": [{"id": "door", "a": [10, 4.5], "b": [10, 5.5]}],
        "routes": {"out": [[9.5, 5.0], [11.0, 5.0]]},
        "population": [{"pos": [5.0, 5.0], "route": "out"}],
    }


@pytest.fixture
def corridor() -> Scenario:
    return parse_scenario(json.dumps(corridor_doc()))


@pytest.fixture
def minimal() -> Scenario:
    return parse_scenario(json.dumps(minimal_doc()))
