"""
Per-step CAV reward r = sum_k w_k r_k with the components

    safety      -max(0, 1 - min_ttc/ttc_horizon) - max(0, 1 - d_nearest/safe_distance)
    efficiency  clip(v/v_target - 1, -1, 0)
    comfort     -|d acc|/acc_range - |d steer|/steer_range, change of the realized action
    task        +1 on reaching the goal, +1 to every CAV on the step that completes the episode's success
    yielding    +0.1 while slowing down with a conflicting agent in the junction box
    coop        -0.05 while a CAV pair with conflicting routes is stuck at the junction
    penalty     -1 on the terminal collision or timeout step

Everything is evaluated on the pre-step state s and the successor s_next alone, so rewards relabelled from
trajectory logs equal the live ones.
"""
import numpy as np

from rsurl.math2 import wrap_angle
from rsurl.env import geometry
from rsurl.env.config import ACTION_RANGE, COMPONENTS
from rsurl.env.routes import routes_conflict
from rsurl.env.state import WorldState, Vehicle, RUNNING, ARRIVED, COLLIDED
from rsurl.env import background

BLOCKED_SPEED = 0.3  # m/s
YIELD_BONUS = 0.1
COOP_PENALTY = -0.05


def _present_vehicles(state: WorldState, veh: Vehicle):
    return [v for v in state.vehicles if v.id != veh.id and v.status in (RUNNING, COLLIDED)]


def min_ttc(state: WorldState, veh: Vehicle) -> float:
    t = np.inf
    for v in _present_vehicles(state, veh):
        t = min(t, geometry.ttc_discs(veh.xy, veh.velocity, veh.radius, v.xy, v.velocity, v.radius))
    for p in state.active_pedestrians():
        t = min(t, geometry.ttc_discs(veh.xy, veh.velocity, veh.radius, p.xy, p.velocity, p.radius))
    return t


def nearest_distance(state: WorldState, veh: Vehicle) -> float:
    """Centre distance to the nearest other vehicle or pedestrian."""
    xy = [v.xy for v in _present_vehicles(state, veh)] + [p.xy for p in state.active_pedestrians()]
    if len(xy) == 0:
        return np.inf
    return float(np.linalg.norm(np.asarray(xy) - veh.xy, axis=-1).min())


def min_pairwise_ttc(state: WorldState) -> float:
    vehicles = state.active_vehicles()
    t = np.inf
    for i, a in enumerate(vehicles):
        for b in vehicles[i+1:]:
            t = min(t, geometry.ttc_discs(a.xy, a.velocity, a.radius, b.xy, b.velocity, b.radius))
        for p in state.active_pedestrians():
            t = min(t, geometry.ttc_discs(a.xy, a.velocity, a.radius, p.xy, p.velocity, p.radius))
    return t


def effective_action(prev: Vehicle, cur: Vehicle, dt) -> np.ndarray:
    """The action realized between two states, equal to the clamped command unless the speed bounds bind."""
    return np.array([(cur.speed - prev.speed) / dt, wrap_angle(cur.heading - prev.heading) / dt])


def conflicting_agent_in_box(state: WorldState, veh: Vehicle) -> bool:
    box = state.geom.box_half
    for v in state.active_vehicles():
        if v.id != veh.id and np.all(np.abs(v.xy) <= box) and routes_conflict(veh.route, v.route, state.geom):
            return True
    in_box = [p for p in state.pedestrians if np.all(np.abs(p.xy) <= box)]
    return background.pedestrian_conflict(state, veh, pedestrians=in_box)


def _stuck_at_junction(v: Vehicle):
    s = background.progress(v)
    return v.speed < BLOCKED_SPEED and v.route.s_box_in - background.APPROACH_DISTANCE <= s <= v.route.s_box_out


def mutually_blocked(state: WorldState) -> bool:
    cavs = [v for v in state.cavs() if _stuck_at_junction(v)]
    for i, a in enumerate(cavs):
        for b in cavs[i+1:]:
            if routes_conflict(a.route, b.route, state.geom):
                return True
    return False


def compute_reward(s: WorldState, a, s_next: WorldState, agent):
    """
    Reward of the CAV agent for the transition s -> s_next.
    a is the commanded action; comfort and yielding use the realized action, which also makes the reward a
    function of the two states only.
    Returns (r, components) with components in the order of config.COMPONENTS.
    """
    del a
    cfg = s_next.config
    prev, cur = s.vehicle(agent), s_next.vehicle(agent)

    r = dict.fromkeys(COMPONENTS, 0.0)
    success_now = s.outcome is None and s_next.outcome == "success"

    if prev.status == ARRIVED:
        # parked at its goal, only the shared success bonus reaches it
        r["task"] = 1.0 if success_now else 0.0
        return float(cfg.weights.task * r["task"]), r

    ttc = min_ttc(s_next, cur)
    d = nearest_distance(s_next, cur)
    r["safety"] = -max(0., 1 - ttc / cfg.ttc_horizon) - max(0., 1 - d / cfg.safe_distance)

    r["efficiency"] = float(np.clip(cur.speed / cfg.v_target - 1, -1, 0))

    eff = effective_action(prev, cur, cfg.dt)
    r["comfort"] = float(-(np.abs(eff - prev.last_action) / ACTION_RANGE).sum())

    if prev.status == RUNNING and cur.status == ARRIVED:
        r["task"] = 1.0
    if success_now:
        r["task"] += 1.0

    if cur.speed < prev.speed and conflicting_agent_in_box(s_next, cur):
        r["yielding"] = YIELD_BONUS

    if mutually_blocked(s_next):
        r["coop"] = COOP_PENALTY

    if s.outcome is None and s_next.outcome in ("collision", "timeout") and not s.penalized:
        r["penalty"] = -1.0

    w = cfg.weights
    total = float(sum(getattr(w, k) * r[k] for k in COMPONENTS))
    return total, r
