"""Scenario parsing, validation errors, round-trips and trajectory output."""

import io
import json

import numpy as np
import pytest

from crowdsim import metrics
from crowdsim.core import Vec2
from crowdsim.dynamics import Engine, SimulationConfig
from crowdsim.scenario_io import (
    ScenarioError,
    instantiate_population,
    parse_scenario,
    scenario_hash,
    serialize_scenario,
    write_trajectory,
)

from conftest import corridor_doc, minimal_doc


def parse(doc):
    return parse_scenario(json.dumps(doc))


def expect_error(doc, code, location_part):
    with pytest.raises(ScenarioError) as exc:
        parse(doc)
    assert exc.value.code == code
    assert location_part in exc.value.location
    return exc.value


# -- happy path -------------------------------------------------------------

def test_minimal_scenario_counts():
    scn = parse(minimal_doc())
    assert len(scn.walls) == 5
    assert len(scn.exits) == 1
    assert len(scn.routes) == 1
    assert sum(g.count for g in scn.population) == 1


def test_pedestrian_defaults_merge_into_groups():
    doc = minimal_doc()
    doc["defaults"] = {"pedestrian": {"v0": 2.0, "v_max": 2.5, "D": 0.3}}
    scn = parse(doc)
    g = scn.population[0]
    assert g.v0 == 2.0 and g.v_max == 2.5 and g.D == 0.3


def test_group_overrides_beat_defaults():
    doc = minimal_doc()
    doc["defaults"] = {"pedestrian": {"v0": 2.0, "v_max": 4.0}}
    doc["population"][0]["v0"] = 1.0
    assert parse(doc).population[0].v0 == 1.0


# -- structured rejections --------------------------------------------------

def test_syntax_error_carries_line():
    with pytest.raises(ScenarioError) as exc:
        parse_scenario("{ not json")
    assert exc.value.code == "syntax"
    assert "line" in exc.value.location


def test_unknown_top_level_field():
    doc = minimal_doc()
    doc["extra"] = 1
    expect_error(doc, "unknown-field", "$")


def test_unknown_population_field():
    doc = minimal_doc()
    doc["population"][0]["speed"] = 2.0
    expect_error(doc, "unknown-field", "population[0]")


def test_familiarity_out_of_range():
    doc = minimal_doc()
    doc["population"][0]["f"] = 1.3
    err = expect_error(doc, "range", "population[0].f")
    assert "familiarity" in err.reason


def test_overlapping_explicit_placements():
    doc = minimal_doc()
    doc["population"].append({"pos": [5.0, 5.0], "route": "out"})
    err = expect_error(doc, "overlap", "population")
    assert "0" in err.reason and "1" in err.reason


def test_dangling_route():
    doc = minimal_doc()
    doc["population"][0]["route"] = "nowhere"
    expect_error(doc, "dangling-route", "population[0].route")


def test_exit_off_wall():
    doc = minimal_doc()
    doc["exits"][0]["a"] = [3.0, 3.0]
    expect_error(doc, "exit-off-wall", "exits[0].a")


def test_non_finite_coordinate():
    doc = minimal_doc()
    doc["geometry"]["walls"][0]["a"] = [0.0, 1e400]  # json inf
    with pytest.raises(ScenarioError) as exc:
        parse_scenario(json.dumps(doc).replace("Infinity", "1e999"))
    assert exc.value.code == "type"


def test_missing_segment_endpoint():
    doc = minimal_doc()
    del doc["geometry"]["walls"][0]["b"]
    expect_error(doc, "missing-field", "geometry.walls[0]")


def test_pos_and_region_are_exclusive():
    doc = minimal_doc()
    doc["population"][0]["region"] = [0, 0, 1, 1]
    expect_error(doc, "missing-field", "population[0]")


def test_v_max_must_dominate_v0():
    doc = minimal_doc()
    doc["population"][0]["v0"] = 2.0
    doc["population"][0]["v_max"] = 1.0
    expect_error(doc, "range", "population[0]")


def test_descending_range_rejected():
    doc = minimal_doc()
    doc["population"][0]["radius"] = [0.3, 0.2]
    expect_error(doc, "range", "population[0].radius")


# -- round-trip and hashing -------------------------------------------------

def test_serialize_parse_round_trip():
    doc = corridor_doc()
    doc["population"][0]["radius"] = [0.22, 0.28]
    scn = parse(doc)
    text = serialize_scenario(scn)
    again = parse_scenario(text)
    assert serialize_scenario(again) == text
    assert scenario_hash(again) == scenario_hash(scn)


def test_hash_sensitive_to_content():
    a = parse(minimal_doc())
    doc = minimal_doc()
    doc["population"][0]["pos"] = [5.0, 5.1]
    b = parse(doc)
    assert scenario_hash(a) != scenario_hash(b)


# -- population instantiation ----------------------------------------------

def test_instantiation_is_seeded_and_overlap_free():
    doc = minimal_doc()
    doc["population"] = [{
        "count": 40, "region": [1, 1, 9, 9], "route": "out",
        "radius": [0.2, 0.3], "v0": [1.0, 1.5], "v_max": 2.0,
    }]
    scn = parse(doc)
    a = instantiate_population(scn, seed=7)
    b = instantiate_population(scn, seed=7)
    c = instantiate_population(scn, seed=8)
    assert len(a) == 40
    assert all(p.pos == q.pos and p.radius == q.radius for p, q in zip(a, b))
    assert any(p.pos != q.pos for p, q in zip(a, c))
    for i, p in enumerate(a):
        assert 0.2 <= p.radius <= 0.3
        assert 1.0 <= p.v0_initial <= 1.5
        for q in a[:i]:
            assert (p.pos - q.pos).norm() >= p.radius + q.radius


def test_route_target_defaults_to_route_end():
    scn = parse(minimal_doc())
    (p,) = instantiate_population(scn, seed=0)
    assert p.route_target == Vec2(11.0, 5.0)


def test_spawn_failure_in_overfull_region():
    doc = minimal_doc()
    doc["population"] = [{
        "count": 50, "region": [1.0, 1.0, 2.0, 2.0], "route": "out",
        "radius": 0.3,
    }]
    scn = parse(doc)
    with pytest.raises(ScenarioError) as exc:
        instantiate_population(scn, seed=0)
    assert exc.value.code == "spawn-failure"


# -- trajectory output ------------------------------------------------------

def run_minimal(**sim_kwargs):
    scn = parse(minimal_doc())
    sim = SimulationConfig(**sim_kwargs)
    return Engine(scn, None, sim).run()


def test_empty_log_is_header_only():
    from crowdsim.dynamics import TrajectoryLog

    log = TrajectoryLog(
        frames=[], exit_events=[], contact_impulse=np.zeros(0),
        ped_meta={}, meta={}, completed=True, end_time=0.0,
    )
    buf = io.StringIO()
    write_trajectory(log, buf)
    lines = buf.getvalue().strip().split("\n")
    assert lines[0].startswith("#")
    assert lines[1].startswith("t,id,x,y")
    assert len(lines) == 2


def test_duration_zero_logs_only_initial_state():
    log = run_minimal(duration=0.0)
    buf = io.StringIO()
    write_trajectory(log, buf)
    lines = buf.getvalue().strip().split("\n")
    assert len(lines) == 3  # format line, header, one pedestrian at t=0


def test_row_count_matches_samples():
    doc = minimal_doc()
    doc["population"].append({"pos": [3.0, 3.0], "route": "out"})
    scn = parse(doc)
    sim = SimulationConfig(duration=0.2, output_interval=0.1)
    log = Engine(scn, None, sim).run()
    buf = io.StringIO()
    write_trajectory(log, buf)
    rows = [l for l in buf.getvalue().splitlines()
            if l and not l.startswith(("#", "t,"))]
    # 2 pedestrians x 3 sampled times (t = 0, 0.1, 0.2)
    assert len(rows) == 6


def test_byte_count_is_returned():
    log = run_minimal(duration=0.1)
    buf = io.StringIO()
    n = write_trajectory(log, buf)
    assert n == len(buf.getvalue().encode())


def test_trajectory_round_trip_parse_back():
    log = run_minimal(duration=0.5, output_interval=0.1)
    buf = io.StringIO()
    write_trajectory(log, buf)
    buf.seek(0)
    cols, data = metrics.read_trajectory(buf)
    assert cols[:4] == ["t", "id", "x", "y"]
    i = 0
    for frame in log.frames:
        for k in range(len(frame.ids)):
            assert data[i, 0] == float(f"{frame.t:.9g}")
            assert data[i, 1] == frame.ids[k]
            assert np.isclose(data[i, 2], frame.pos[k, 0], rtol=1e-8)
            assert np.isclose(data[i, 5], frame.vel[k, 1], rtol=1e-8, atol=1e-12)
            i += 1
    assert i == data.shape[0]


def test_force_columns_present_when_requested():
    log = run_minimal(duration=0.1, log_forces=True)
    buf = io.StringIO()
    write_trajectory(log, buf)
    header = buf.getvalue().splitlines()[1].split(",")
    assert "fpref_x" in header and "fnoise_y" in header
