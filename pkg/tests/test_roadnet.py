import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from v2xprio.roadnet import (
    SPEED_BAND_MS,
    KinematicState,
    build_default_map,
    distance_matrix,
    pairwise_distance,
    positions_array,
    spawn_vehicles,
    step_mobility,
)


def rng(seed=0):
    return np.random.default_rng(seed)


@pytest.mark.parametrize("k", [1, 2, 3, 4])
def test_template_junction_counts(k):
    g = build_default_map(1000.0, k)
    assert len(g.junctions) == k
    assert g.is_strongly_connected()
    for x, y in g.nodes:
        assert 0 <= x <= 1000 and 0 <= y <= 1000
    for j in g.junctions:
        nbrs = {g.edges[e].dst for e in g.outgoing(j)}
        assert len(nbrs) >= 3


def test_default_map_two_junctions_and_determinism():
    a, b = build_default_map(), build_default_map()
    assert len(a.junctions) == 2
    assert a == b and a.to_json() == b.to_json()


def test_scaled_map_keeps_topology():
    big, small = build_default_map(1000.0, 2), build_default_map(500.0, 2)
    assert max(max(p) for p in small.nodes) <= 500
    assert len(big.nodes) == len(small.nodes) and len(big.edges) == len(small.edges)
    assert small.junctions == big.junctions
    for (x1, y1), (x2, y2) in zip(big.nodes, small.nodes):
        assert x2 == pytest.approx(x1 / 2) and y2 == pytest.approx(y1 / 2)


@pytest.mark.parametrize("k", [0, 5])
def test_unsupported_junction_count(k):
    with pytest.raises(ValueError):
        build_default_map(1000.0, k)


def test_bad_bounds():
    with pytest.raises(ValueError):
        build_default_map(0.0, 2)


def test_map_json_schema():
    g = build_default_map()
    doc = json.loads(g.to_json())
    assert set(doc) == {"bounds_m", "nodes", "edges", "junctions"}
    assert len(doc["nodes"]) == len(g.nodes)
    e = doc["edges"][0]
    assert set(e) == {"id", "src", "dst", "length_m", "lane_width_m", "speed_limit_ms"}
    assert doc["junctions"] == list(g.junctions)


def assert_on_edges(g, states):
    for s in states:
        e = g.edges[s.current_edge]
        assert 0 <= s.edge_offset <= e.length
        assert 0 <= s.speed <= e.speed_limit
        px, py = g.point_on_edge(s.current_edge, s.edge_offset)
        assert s.position == pytest.approx((px, py))


def test_spawn_vehicles():
    g = build_default_map()
    states = spawn_vehicles(g, 100, rng(3))
    assert len(states) == 100
    assert_on_edges(g, states)
    assert all(SPEED_BAND_MS[0] <= s.speed <= SPEED_BAND_MS[1] for s in states)
    assert spawn_vehicles(g, 100, rng(3)) == states
    one = spawn_vehicles(g, 1, rng(4))
    assert len(one) == 1 and 0 <= one[0].edge_offset <= g.edges[one[0].current_edge].length
    with pytest.raises(ValueError):
        spawn_vehicles(g, 0, rng())


def test_spawn_is_uniform_over_length():
    g = build_default_map()
    states = spawn_vehicles(g, 20000, rng(8))
    counts = np.bincount([s.current_edge for s in states], minlength=len(g.edges))
    expected = np.array([e.length for e in g.edges]) / g.total_length * len(states)
    from scipy import stats

    assert stats.chisquare(counts, expected).pvalue > 1e-3


def test_step_kinematics_and_identity():
    g = build_default_map()
    e = next(i for i, ed in enumerate(g.edges) if ed.length > 100)
    st0 = KinematicState(g.point_on_edge(e, 50.0), 10.0, e, 50.0)
    (st1,) = step_mobility(g, [st0], 0.1, rng())
    assert st1.current_edge == e and st1.edge_offset == pytest.approx(51.0, abs=1e-12)
    assert step_mobility(g, [st0], 0.0, rng()) == [st0]
    with pytest.raises(ValueError):
        step_mobility(g, [st0], -0.1, rng())


def test_edge_transition_picks_outgoing_edge():
    g = build_default_map()
    e = 0
    length = g.edges[e].length
    st0 = KinematicState(g.point_on_edge(e, length - 0.5), 10.0, e, length - 0.5)
    seen = set()
    for seed in range(50):
        (st1,) = step_mobility(g, [st0], 0.1, rng(seed))
        assert st1.current_edge in g.outgoing(g.edges[e].dst)
        assert st1.edge_offset == pytest.approx(0.5)
        seen.add(st1.current_edge)
    assert seen == set(g.outgoing(g.edges[e].dst))


def test_long_mobility_sweep_keeps_invariants():
    g = build_default_map()
    states = spawn_vehicles(g, 20, rng(1))
    r = rng(2)
    for _ in range(10**4):
        states = step_mobility(g, states, 0.1, r)
    assert len(states) == 20
    assert_on_edges(g, states)


def test_trajectory_is_deterministic():
    g = build_default_map()

    def run():
        s, r = spawn_vehicles(g, 10, rng(5)), rng(6)
        for _ in range(500):
            s = step_mobility(g, s, 0.1, r)
        return s

    assert run() == run()


def test_pairwise_distance_examples():
    a = KinematicState((0.0, 0.0), 0.0, 0, 0.0)
    b = KinematicState((3.0, 4.0), 0.0, 0, 0.0)
    assert pairwise_distance([a, b], 0, 1) == 5.0
    assert pairwise_distance([a, a], 0, 1) == 0.0
    with pytest.raises(IndexError):
        pairwise_distance([a], 0, 1)


coords = st.tuples(st.floats(0, 1000), st.floats(0, 1000))


@given(st.lists(coords, min_size=3, max_size=3))
def test_distance_symmetry_and_triangle(points):
    s = [KinematicState(p, 0.0, 0, 0.0) for p in points]
    d = lambda i, j: pairwise_distance(s, i, j)  # noqa: E731
    assert d(0, 1) == d(1, 0)
    assert d(0, 2) <= d(0, 1) + d(1, 2) + 1e-9
    assert (d(0, 1) == 0) == (points[0] == points[1])
    m = distance_matrix(positions_array(s))
    assert m[0, 1] == pytest.approx(d(0, 1), abs=1e-9)
    assert math.isclose(m[1, 2], m[2, 1])
