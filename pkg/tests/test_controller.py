import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hallufault.controller import (STOP_BUFFER, CandidateWindow, ControlCommand, Controller, OccupancyInterval,
                                   candidate_windows, committed, earliest_arrival, longitudinal_control,
                                   predict_occupancy, select_window, travel_time, window_target)
from hallufault.engine import run
from hallufault.hallucination import HIConfig
from hallufault.perception import PerceivedObject, PerceptionFrame
from hallufault.world import AXIS_X, AXIS_Z, ScenarioConfig, Vec2, VehicleState

G = ScenarioConfig()


def one_car(x, v, t=0.0):
    return PerceptionFrame(0, t, (PerceivedObject("Car1", Vec2(x, 0.0), v, AXIS_X),))


def av_at(z, v):
    return VehicleState("AV", Vec2(0.0, z), v, AXIS_Z)


def _integrate_arrival(distance, v0, accel, vmax, dt=1e-5):
    # crude forward-Euler oracle for the two-phase kinematics
    x, v, t = 0.0, v0, 0.0
    while x < distance:
        a = accel if v < vmax else 0.0
        v_new = min(v + a * dt, vmax)
        x += 0.5 * (v + v_new) * dt
        v = v_new
        t += dt
    return t


class TestOccupancy:
    def test_uniform_motion(self):
        [iv] = predict_occupancy(one_car(-30.0, 15.0), G, margin=0.0)
        assert iv.t_enter == pytest.approx(26 / 15)
        assert iv.t_exit == pytest.approx(34 / 15)
        assert iv.source_id == "Car1"

    def test_margin_widens_both_sides(self):
        [iv] = predict_occupancy(one_car(-30.0, 15.0), G, margin=0.5)
        assert iv.t_enter == pytest.approx(26 / 15 - 0.5)
        assert iv.t_exit == pytest.approx(34 / 15 + 0.5)

    def test_two_phase_from_rest(self):
        [iv] = predict_occupancy(one_car(-270.0, 0.0), G, margin=0.0)
        # 7.5 s ramp covering 56.25 m, then cruise at 15
        assert iv.t_enter == pytest.approx(7.5 + (266 - 56.25) / 15)
        assert iv.t_enter == pytest.approx(_integrate_arrival(266, 0.0, 2.0, 15.0), abs=1e-3)
        assert iv.t_exit == pytest.approx(_integrate_arrival(274, 0.0, 2.0, 15.0), abs=1e-3)

    def test_timestamp_offsets(self):
        [iv] = predict_occupancy(one_car(-30.0, 15.0, t=12.0), G, margin=0.0)
        assert iv.t_enter == pytest.approx(12 + 26 / 15)
        [iv] = predict_occupancy(one_car(-30.0, 15.0, t=12.0), G, margin=0.0, now=20.0)
        assert iv.t_enter == pytest.approx(20 + 26 / 15)

    def test_past_car_is_back_dated(self):
        [iv] = predict_occupancy(one_car(34.0, 15.0, t=10.0), G, margin=0.0)
        assert iv.t_exit == pytest.approx(8.0)
        assert iv.t_enter == pytest.approx(8.0 - 8 / 15)
        assert iv.t_exit < 10.0

    def test_parked_past_car_ignored(self):
        assert predict_occupancy(one_car(30.0, 0.0), G, margin=0.0) == []

    def test_waiting_car_still_arrives(self):
        # a car at rest short of the zone will accelerate, so it still gets an interval
        [iv] = predict_occupancy(one_car(-30.0, 0.0), G, margin=0.0)
        assert iv.t_enter == pytest.approx(math.sqrt(26.0))

    def test_inside_zone_enters_now(self):
        [iv] = predict_occupancy(one_car(0.0, 15.0), G, margin=0.0)
        assert iv.t_enter == 0.0
        assert iv.t_exit == pytest.approx(4 / 15)


@given(d=st.floats(0.1, 500), v0=st.floats(0, 20), a=st.floats(0.1, 5), vmax=st.floats(1, 20))
def test_travel_time_inverts_distance(d, v0, a, vmax):
    t = travel_time(d, v0, a, vmax)
    if v0 >= vmax:
        assert t == pytest.approx(d / v0)
        return
    t_ramp = (vmax - v0) / a
    if t <= t_ramp:
        covered = v0 * t + 0.5 * a * t * t
    else:
        covered = 0.5 * (v0 + vmax) * t_ramp + vmax * (t - t_ramp)
    assert covered == pytest.approx(d, rel=1e-9)


def test_travel_time_edges():
    assert travel_time(0.0, 5.0, 1.0, 10.0) == 0.0
    assert travel_time(10.0, 0.0, 0.0, 10.0) == math.inf
    assert travel_time(10.0, 5.0, 0.0, 10.0) == 2.0


def iv(a, b, src="c"):
    return OccupancyInterval(a, b, src)


class TestWindows:
    def test_no_traffic(self):
        assert candidate_windows([], 60.0, now=3.0) == [CandidateWindow(3.0, 63.0, open_ended=True, open_start=True)]

    def test_complement(self):
        ws = candidate_windows([iv(6, 8), iv(2, 4)], 10.0)
        assert [(w.t_open, w.t_close) for w in ws] == [(0, 2), (4, 6), (8, 10)]
        assert ws[0].open_start and ws[-1].open_ended

    def test_overlap_merges(self):
        ws = candidate_windows([iv(2, 5), iv(4, 7)], 10.0)
        assert [(w.t_open, w.t_close) for w in ws] == [(0, 2), (7, 10)]

    def test_touching_intervals_leave_no_gap(self):
        ws = candidate_windows([iv(2, 4), iv(4, 6)], 10.0)
        assert [(w.t_open, w.t_close) for w in ws] == [(0, 2), (6, 10)]

    def test_past_edge_is_kept(self):
        ws = candidate_windows([iv(-3, -1), iv(5, 6)], 10.0)
        assert ws[0] == CandidateWindow(-1, 5)

    def test_interval_beyond_horizon_ignored(self):
        ws = candidate_windows([iv(12, 13)], 10.0)
        assert len(ws) == 1 and ws[0].open_ended

    def test_bad_horizon(self):
        with pytest.raises(ValueError):
            candidate_windows([], 0.0)


@settings(max_examples=300)
@given(st.lists(st.tuples(st.floats(-20, 80), st.floats(0.01, 10)), max_size=12), st.floats(0, 30))
def test_windows_are_disjoint_sorted_and_free(spans, now):
    occ = [iv(a, a + w) for a, w in spans]
    ws = candidate_windows(occ, 60.0, now)
    for w in ws:
        assert w.t_open < w.t_close
        mid = w.t_center
        assert not any(o.t_enter < mid < o.t_exit for o in occ)
    for a, b in zip(ws, ws[1:]):
        assert a.t_close <= b.t_open


class TestSelect:
    def test_too_early_is_infeasible(self):
        w = CandidateWindow(9.0, 11.0)
        assert select_window([w], av_at(-250, 0.0), G, 1.0) is None
        assert 250 / 16.7 < earliest_arrival(av_at(-250, 0.0), 250, G)

    def test_empty(self):
        assert select_window([], av_at(-250, 0.0), G, 1.0) is None

    def test_earlier_feasible_wins(self):
        a, b = CandidateWindow(30.0, 34.0), CandidateWindow(50.0, 60.0)
        assert select_window([a, b], av_at(-250, 0.0), G, 1.0) is a

    def test_narrow_window_skipped(self):
        a, b = CandidateWindow(30.0, 30.5), CandidateWindow(50.0, 60.0)
        assert select_window([a, b], av_at(-250, 0.0), G, 1.0) is b

    def test_too_late_when_moving_fast_close_in(self):
        # 20 m out at 16 m/s cannot brake to a stop before the zone, so a far window is not reachable
        w = CandidateWindow(30.0, 40.0)
        assert select_window([w], av_at(-20, 16.0), G, 1.0) is None


def test_window_target_rules():
    assert window_target(CandidateWindow(4.0, 8.0), 1.0, 0.0) == 6.0
    assert window_target(CandidateWindow(4.0, 64.0, open_ended=True), 1.0, 0.0) == 4.5
    assert window_target(CandidateWindow(4.0, 64.0, open_ended=True), 1.0, 20.0) == 20.0
    assert window_target(CandidateWindow(0.0, 8.0, open_start=True), 1.0, 0.0) == 7.5
    assert window_target(CandidateWindow(0.0, 60.0, open_ended=True, open_start=True), 1.0, 17.0) == 17.0


class TestControlLaw:
    def test_zero_error_is_neutral(self):
        av = av_at(-100.0, 10.0)
        w = CandidateWindow(5.0, 15.0)
        assert longitudinal_control(av, w, G) == ControlCommand()

    def test_speed_up(self):
        cmd = longitudinal_control(av_at(-100.0, 5.0), CandidateWindow(5.0, 15.0), G)
        assert cmd.throttle > 0 and cmd.brake == 0
        assert cmd.throttle == pytest.approx(min(5.0 / G.av_accel_max, 1.0))

    def test_slow_down(self):
        cmd = longitudinal_control(av_at(-100.0, 12.0), CandidateWindow(5.0, 15.0), G)
        assert cmd.brake == pytest.approx(2.0 / G.av_brake_max)
        assert cmd.throttle == 0

    def test_no_target_brakes(self):
        cmd = longitudinal_control(av_at(-100.0, 8.0), None, G)
        assert cmd.brake > 0 and cmd.throttle == 0

    def test_no_target_at_rest_holds(self):
        assert longitudinal_control(av_at(-100.0, 0.0), None, G) == ControlCommand(brake=1.0)

    def test_stale_target_means_stop(self):
        cmd = longitudinal_control(av_at(-100.0, 8.0), CandidateWindow(1.0, 3.0), G, now=5.0)
        assert cmd.brake > 0

    def test_committed_goes_full_throttle(self):
        av = av_at(-G.zone_half - 2.25 + 0.01, 3.0)
        assert committed(av, G)
        assert longitudinal_control(av, None, G) == ControlCommand(throttle=1.0)

    def test_halt_stops_short_of_the_zone(self):
        from hallufault.world import step_vehicle
        av = av_at(-60.0, 12.0)
        for _ in range(600):
            cmd = longitudinal_control(av, None, G)
            av = step_vehicle(av, -cmd.brake * G.av_brake_max, G.dt, G.av_vmax)
            assert av.position.z + av.length / 2 < -G.zone_half
        assert av.speed < 1e-3
        assert av.position.z + av.length / 2 <= -G.zone_half - STOP_BUFFER + 1e-9


@pytest.mark.parametrize("kw", [dict(throttle=1.1), dict(brake=-0.1), dict(throttle=0.2, brake=0.2),
                                dict(steering=2.0)])
def test_command_rejects(kw):
    with pytest.raises(ValueError):
        ControlCommand(**kw)


@settings(max_examples=500)
@given(z=st.floats(-300, 20), v=st.floats(0, 16.7), now=st.floats(0, 100),
       xs=st.lists(st.tuples(st.floats(-400, 60), st.floats(0, 17)), max_size=6))
def test_fuzzed_commands_are_valid_and_pure(z, v, now, xs):
    frame = PerceptionFrame(0, now, tuple(PerceivedObject(f"Car{i + 1}", Vec2(x, 0.0), s, AXIS_X)
                                          for i, (x, s) in enumerate(xs)))
    av = av_at(z, v)
    a = Controller(G).step(frame, av, now)
    b = Controller(G).step(frame, av, now)
    assert a == b
    assert 0 <= a.throttle <= 1 and 0 <= a.brake <= 1 and a.throttle * a.brake == 0 and a.steering == 0


def test_single_car_plan_is_safe():
    # perfect beliefs: one car, no cruise-speed changes; the AV must never share
    # the zone with the car's margin-widened occupancy
    cfg = ScenarioConfig(n_traffic=1, speed_change_rate=0.0, vmax_jitter=0.0)
    h, m = cfg.zone_half, cfg.controller.margin
    violations = 0
    for seed in range(60):
        res = run(cfg, HIConfig.off(), seed)
        rows = res.log.rows
        car_in = [r[0] / 1000 for r in rows if -h <= r[7] <= h]
        if not car_in:
            continue
        lo, hi = min(car_in) - m, max(car_in) + m
        for r in rows:
            t, z_av = r[0] / 1000, r[2]
            if -h <= z_av <= h and lo <= t <= hi:
                violations += 1
                break
    assert violations == 0
