import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from hallufault.perception import BearingError, FovConfig, bearing, sense
from hallufault.world import AXIS_X, AXIS_Z, ScenarioConfig, Vec2, VehicleState, WorldState, make_scenario

AV0 = VehicleState("AV", Vec2(0.0, 0.0), 0.0, AXIS_Z)


def world_with(*positions):
    cars = tuple(VehicleState(f"Car{i + 1}", p, 10.0, AXIS_X) for i, p in enumerate(positions))
    return WorldState(0.0, AV0, cars)


def at_bearing(deg, r=50.0):
    # left-positive bearing for an AV heading +z: left is -x
    a = math.radians(deg)
    return Vec2(-r * math.sin(a), r * math.cos(a))


@pytest.mark.parametrize("p,expected", [
    (Vec2(0, 10), 0.0), (Vec2(-10, 0), 90.0), (Vec2(-10, 10), 45.0), (Vec2(10, 0), -90.0), (Vec2(0, -10), 180.0),
])
def test_bearing_examples(p, expected):
    assert bearing(AV0, p) == pytest.approx(expected)


def test_bearing_coincident_point():
    with pytest.raises(BearingError):
        bearing(AV0, Vec2(0, 0))


def test_bearing_for_x_heading():
    av = VehicleState("AV", Vec2(0, 0), 0.0, AXIS_X)
    assert bearing(av, Vec2(0, 10)) == pytest.approx(90.0)


def test_full_fov_sees_all(scenario):
    w = make_scenario(scenario)
    f = sense(w, FovConfig(half_angle=180), 3)
    assert [o.source_id for o in f.objects] == [c.id for c in w.traffic]
    assert [o.position for o in f.objects] == [c.position for c in w.traffic]
    assert f.cycle == 3 and f.time == w.time


def test_car_behind_is_excluded():
    f = sense(world_with(Vec2(0, -30)), FovConfig(half_angle=90), 0)
    assert f.objects == ()


def test_fov_boundary():
    w = world_with(at_bearing(44.9), at_bearing(45.1))
    ids = [o.source_id for o in sense(w, FovConfig(half_angle=45), 0).objects]
    assert ids == ["Car1"]


def test_range_limit():
    w = world_with(Vec2(0, 100), Vec2(0, 20))
    ids = [o.source_id for o in sense(w, FovConfig(range=50), 0).objects]
    assert ids == ["Car2"]


@pytest.mark.parametrize("kw", [{"half_angle": 0}, {"half_angle": 181}, {"range": 0}])
def test_fov_validation(kw):
    with pytest.raises(ValueError):
        FovConfig(**kw)


def test_sense_is_repeatable(scenario):
    w = make_scenario(scenario)
    assert sense(w, FovConfig(), 1) == sense(w, FovConfig(), 1)


coords = st.floats(-300, 300, allow_nan=False)


@given(pts=st.lists(st.tuples(coords, coords), min_size=1, max_size=6),
       a1=st.floats(1, 180), a2=st.floats(1, 180), r1=st.floats(1, 500), r2=st.floats(1, 500))
def test_fov_monotone(pts, a1, a2, r1, r2):
    w = world_with(*(Vec2(x, z) for x, z in pts))
    small = FovConfig(min(a1, a2), min(r1, r2))
    big = FovConfig(max(a1, a2), max(r1, r2))
    seen_small = {o.source_id for o in sense(w, small, 0).objects}
    seen_big = {o.source_id for o in sense(w, big, 0).objects}
    assert seen_small <= seen_big
