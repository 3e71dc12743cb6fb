"""
Rule-based driving: route following with intelligent-driver-model gap keeping, braking for crossing pedestrians
and all-way-stop yielding by arrival order. Drives the background traffic and, with action noise, the synthetic
expert CAVs.
"""
import numpy as np

from rsurl.math2 import wrap_angle
from rsurl.env.config import A_MIN, A_MAX, STEER_MAX, clamp_action
from rsurl.env.routes import routes_conflict
from rsurl.env.state import WorldState, Vehicle

APPROACH_DISTANCE = 15.0  # m before the box, arrival order is taken when entering this zone
STOP_MARGIN = 0.5  # m, stop line before the box edge
COMMITTED = 0.5  # m past the box edge, a vehicle this far in never yields

# Intelligent driver model
IDM_HEADWAY = 2.0  # s
IDM_S0 = 2.0  # m
IDM_ACC = 2.0  # m/s^2
IDM_DEC = 3.0  # m/s^2
IDM_DELTA = 4

CURVE_SPEED_FACTOR = 0.9  # v <= factor * STEER_MAX * R keeps the heading rate feasible
CURVE_LOOKAHEAD = 30.0  # m
CURVE_DEC = 2.0  # m/s^2

LEADER_RANGE = 40.0  # m
LEADER_LATERAL = 1.8  # m

PED_CORRIDOR = 1.5  # m next to the vehicle
PED_MARGIN = 6.0  # m on top of the braking distance


def progress(veh: Vehicle) -> float:
    return veh.route.project(veh.xy)[0]


def in_approach(veh: Vehicle, s=None) -> bool:
    s = progress(veh) if s is None else s
    return veh.route.s_box_in - APPROACH_DISTANCE <= s < veh.route.s_box_in


def has_cleared(veh: Vehicle, s=None) -> bool:
    s = progress(veh) if s is None else s
    return not veh.active or s > veh.route.s_box_out


def update_approach_times(state: WorldState):
    for v in state.active_vehicles():
        if v.id not in state.approach_time and progress(v) >= v.route.s_box_in - APPROACH_DISTANCE:
            state.approach_time[v.id] = state.time


def priority(state: WorldState, veh: Vehicle):
    return state.approach_time.get(veh.id, np.inf), veh.id


def must_yield(state: WorldState, veh: Vehicle) -> bool:
    """
    A vehicle in the approach zone waits at the stop line while a conflicting vehicle is committed inside the box
    or arrived earlier (ties by lower id) and has not cleared the box yet.
    """
    s = progress(veh)
    if not in_approach(veh, s=s):
        return False

    key = priority(state, veh)
    for other in state.active_vehicles():
        if other.id == veh.id or not routes_conflict(veh.route, other.route, state.geom):
            continue
        so = progress(other)
        if has_cleared(other, s=so):
            continue
        if so >= other.route.s_box_in + COMMITTED:
            return True
        if other.id in state.approach_time and priority(state, other) < key:
            return True
    return False


def leader(state: WorldState, veh: Vehicle, s=None):
    """(bumper gap, speed along the route) of the nearest vehicle ahead on the route, (inf, None) if none."""
    s = progress(veh) if s is None else s
    heading = veh.route.heading_at(s)
    gap, v_lead = np.inf, None
    for other in state.active_vehicles():
        if other.id == veh.id or np.linalg.norm(other.xy - veh.xy) > LEADER_RANGE:
            continue
        so, lat = veh.route.project(other.xy)
        if so <= s or abs(lat) > LEADER_LATERAL:
            continue
        g = so - s - veh.half_extents[0] - other.half_extents[0]
        if g < gap:
            gap = g
            v_lead = float(other.speed * np.cos(other.heading - heading))
    return gap, v_lead


def pedestrian_conflict(state: WorldState, veh: Vehicle, s=None, pedestrians=None) -> bool:
    """One of the crossing pedestrians (default: all) stands on the route ahead within braking distance plus margin."""
    s = progress(veh) if s is None else s
    pedestrians = state.pedestrians if pedestrians is None else pedestrians
    reach = veh.speed**2 / (2 * IDM_DEC) + PED_MARGIN + veh.half_extents[0]
    for p in pedestrians:
        if not p.crossing:
            continue
        if np.linalg.norm(p.xy - veh.xy) > reach + PED_CORRIDOR + veh.half_extents[0]:
            continue
        sp, lat = veh.route.project(p.xy)
        if -veh.half_extents[0] < sp - s < reach and abs(lat) < veh.half_extents[1] + PED_CORRIDOR:
            return True
    return False


def desired_speed(state: WorldState, veh: Vehicle, s) -> float:
    """v_target, reduced ahead of curves so the heading-rate bound can follow the centerline."""
    r = veh.route
    v0 = state.config.v_target
    i = (r.cum >= s) & (r.cum <= s + CURVE_LOOKAHEAD) & (r.curvature > 1e-9)
    if np.any(i):
        v_lim = CURVE_SPEED_FACTOR * STEER_MAX / r.curvature[i]
        v_reach = np.sqrt(v_lim**2 + 2 * CURVE_DEC * (r.cum[i] - s))
        v0 = min(v0, float(v_reach.min()))
    return max(v0, 0.5)


def idm_acceleration(v, v0, gap=np.inf, v_lead=None):
    free = 1 - (v / v0)**IDM_DELTA
    if not np.isfinite(gap):
        return IDM_ACC * free
    if gap <= 0:
        return A_MIN

    dv = 0. if v_lead is None else v - v_lead
    s_star = IDM_S0 + max(0., v * IDM_HEADWAY + v * dv / (2 * np.sqrt(IDM_ACC * IDM_DEC)))
    return IDM_ACC * (free - (s_star / gap)**2)


def pure_pursuit(veh: Vehicle, s) -> float:
    lookahead = 2.0 + 0.5 * veh.speed
    target = veh.route.point(s + lookahead)
    d = target - veh.xy
    alpha = wrap_angle(np.arctan2(d[1], d[0]) - veh.heading)
    return float(np.clip(2 * veh.speed * np.sin(alpha) / lookahead, -STEER_MAX, STEER_MAX))


def scripted_action(state: WorldState, veh: Vehicle) -> np.ndarray:
    """Yield-and-go: the rule set every scripted vehicle follows, (acc, heading rate) in physical units."""
    s = progress(veh)
    steer = pure_pursuit(veh, s)

    if pedestrian_conflict(state, veh, s=s):
        return clamp_action([A_MIN, steer])

    v0 = desired_speed(state, veh, s)
    gap, v_lead = leader(state, veh, s=s)
    if must_yield(state, veh):
        gap_stop = veh.route.s_box_in - STOP_MARGIN - s - veh.half_extents[0]
        if gap_stop < gap:
            gap, v_lead = gap_stop, 0.

    acc = idm_acceleration(veh.speed, v0, gap=gap, v_lead=v_lead)
    return clamp_action([float(np.clip(acc, A_MIN, A_MAX)), steer])


def background_controller(state: WorldState, veh: Vehicle) -> np.ndarray:
    if veh.kind != "background":
        raise ValueError(f"Vehicle {veh.id} is a '{veh.kind}', the background controller drives background vehicles")
    return scripted_action(state, veh)
