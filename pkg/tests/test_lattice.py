import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wavefield.errors import NonPositiveParameter
from wavefield.lattice import Boundary, DelayTable, build_lattice, delay_steps

from conftest import brute_distance


def test_open_lattice_units_and_distance():
    lat = build_lattice(4, 4, 1.0, 0.2, "open")
    assert lat.n_units == 16
    assert lat.distance((0, 0), (3, 0)) == pytest.approx(3.0)


def test_periodic_wrap_distance():
    lat = build_lattice(4, 4, 1.0, 0.2, "periodic")
    assert lat.distance((0, 0), (3, 0)) == pytest.approx(1.0)


@pytest.mark.parametrize("kw", [dict(spacing=0.0), dict(conduction_velocity=0.0),
                                dict(conduction_velocity=-1.0), dict(width=0), dict(height=-2)])
def test_nonpositive_parameters_rejected(kw):
    args = dict(width=4, height=4, spacing=1.0, conduction_velocity=0.2, boundary="open")
    args.update(kw)
    with pytest.raises(NonPositiveParameter):
        build_lattice(**args)


def test_delay_examples():
    lat = build_lattice(20, 1, 1.0, 0.3)
    assert delay_steps(lat, (0, 0), (3, 0), 1.0) == 10
    assert delay_steps(lat, (5, 0), (5, 0), 1.0) == 0
    lat2 = build_lattice(4, 1, 1.0, 0.2)
    assert delay_steps(lat2, (0, 0), (1, 0), 0.5) == 10


def test_delay_rejects_bad_dt():
    lat = build_lattice(4, 4)
    with pytest.raises(NonPositiveParameter):
        delay_steps(lat, 0, 1, 0.0)


def test_distinct_units_have_at_least_one_step():
    lat = build_lattice(4, 4, spacing=0.01, conduction_velocity=10.0)
    assert delay_steps(lat, (0, 0), (1, 0), 1.0) == 1


def test_index_coords_round_trip():
    lat = build_lattice(7, 5)
    for i in range(lat.n_units):
        assert lat.index(lat.coords(i)) == i
    assert lat.coords(8) == (1, 1)


def test_distance_map_matches_pairwise():
    lat = build_lattice(9, 6, 0.3, boundary=Boundary.PERIODIC)
    dm = lat.distance_map((2, 4))
    for y in range(6):
        for x in range(9):
            assert dm[y, x] == pytest.approx(brute_distance((2, 4), (x, y), 9, 6, 0.3, True))


coords = st.tuples(st.integers(0, 11), st.integers(0, 8))


@settings(max_examples=200, deadline=None)
@given(a=coords, b=coords, c=coords, periodic=st.booleans(),
       dt=st.sampled_from([0.25, 0.5, 1.0, 2.0]))
def test_delay_symmetry_and_monotonicity(a, b, c, periodic, dt):
    lat = build_lattice(12, 9, 0.2, 0.3, "periodic" if periodic else "open")
    assert lat.distance(a, b) == pytest.approx(brute_distance(a, b, 12, 9, 0.2, periodic))
    dab, dac = delay_steps(lat, a, b, dt), delay_steps(lat, a, c, dt)
    assert dab == delay_steps(lat, b, a, dt)
    if lat.distance(a, b) <= lat.distance(a, c):
        assert dab <= dac


@settings(max_examples=100, deadline=None)
@given(a=coords, b=coords)
def test_wrapped_distance_never_exceeds_open(a, b):
    wrapped = build_lattice(12, 9, boundary="periodic")
    flat = build_lattice(12, 9, boundary="open")
    assert wrapped.distance(a, b) <= flat.distance(a, b) + 1e-12


def test_delay_table_invariants():
    lat = build_lattice(16, 16, 0.2, 0.2)
    table = DelayTable.build(lat, 1.0, cutoff_radius=3.0)
    assert table.delay(5, 5) == 0
    dist = np.asarray(table.distances)
    steps = np.asarray(table.steps)
    order = np.argsort(dist, kind="stable")
    assert np.all(np.diff(steps[order]) >= 0)
    assert steps.max() <= table.max_delay_steps
    # isotropy: equal distance means equal delay
    for d in np.unique(np.round(dist, 12)):
        assert len(set(steps[np.isclose(dist, d)])) == 1
    # hand computed: offset (3, 4) units is 1 mm, 5 steps at 0.2 mm/ms
    assert table.delay((0, 0), (3, 4)) == 5
    assert table.delay((0, 0), (3, 4)) == math.floor(1.0 / 0.2 / 1.0 + 0.5)


@settings(max_examples=300, deadline=None)
@given(a=coords, b=coords, c=coords, v=st.sampled_from([0.1, 0.2, 0.25, 0.3, 0.7]),
       periodic=st.booleans())
def test_rounded_up_delays_obey_triangle_inequality(a, b, c, v, periodic):
    # a relay through b can never reach c before the straight path does
    lat = build_lattice(12, 9, 0.2, v, "periodic" if periodic else "open")
    assert delay_steps(lat, a, c, 1.0) <= delay_steps(lat, a, b, 1.0) + delay_steps(lat, b, c, 1.0)


def test_nearest_rounding_lets_relays_arrive_early():
    lat = build_lattice(8, 8, 0.2, 0.2, delay_rounding="nearest")
    # two diagonal hops (1.41 units each, 1 step) beat the 2.83-unit straight path (3 steps)
    assert delay_steps(lat, (0, 0), (1, 1), 1.0) + delay_steps(lat, (1, 1), (2, 2), 1.0) == 2
    assert delay_steps(lat, (0, 0), (2, 2), 1.0) == 3
    up = build_lattice(8, 8, 0.2, 0.2)
    assert delay_steps(up, (0, 0), (1, 1), 1.0) == 2


def test_rounding_rules_agree_on_whole_step_distances():
    for rounding in ("up", "nearest"):
        lat = build_lattice(20, 1, 1.0, 0.3, delay_rounding=rounding)
        assert delay_steps(lat, (0, 0), (3, 0), 1.0) == 10
