import numpy as np

from rsurl.math2 import wrap_angle
from rsurl.env import geometry
from rsurl.env.config import ScenarioConfig, PED_SPEED_MAX, clamp_action
from rsurl.env.routes import ARMS, MANEUVERS, SPAWN_RANGE, ARM_DIRECTION, get_route, in_map
from rsurl.env.state import (WorldState, Vehicle, Pedestrian, SpawnError, UnknownAgentError,
                             ARRIVED, EXITED, DESPAWNED, COLLIDED, WAITING, CROSSING, DONE)
from rsurl.env.background import background_controller, update_approach_times
from rsurl.env.reward import compute_reward, min_ttc

SPAWN_SPEED = (4.0, 8.0)  # m/s
SPAWN_CLEARANCE = 0.5  # m between spawned rectangles
PED_SPEED = (1.0, 1.6)  # m/s
PED_DELAY = 8.0  # s, latest start of a crossing
CROSSWALK_OFFSET = 2.0  # m outside the box edge
CROSSWALK_CLEAR = 10.0  # m, a pedestrian only starts when no vehicle is this close to the crosswalk
PED_STANDOFF = 0.5  # m kept clear of a vehicle rectangle while crossing
BOUNDARY = -1  # collision partner id for a CAV leaving the map

DONE_FLAGS = ("collision", "timeout", "success", "running")


class StepResult:
    __slots__ = ("reward", "components", "done", "info")

    def __init__(self, reward, components, done, info):
        self.reward = reward
        self.components = components
        self.done = done  # one of DONE_FLAGS
        self.info = info  # min_ttc, junction_occupancy

    @property
    def terminal(self):
        return self.done != "running"

    def __repr__(self):
        return f"StepResult(r={self.reward:.4f}, {self.done})"


# Spawning
# ----------------------------------------------------------------------------------------------------------------------
def _distance_before_box(v: Vehicle):
    return v.route.s_box_in - v.route.project(v.xy)[0]


def _spawn_ok(state: WorldState, v: Vehicle) -> bool:
    d = _distance_before_box(v)
    for o in state.vehicles:
        if geometry.rectangle_rectangle(v.xy, v.heading, v.half_extents, o.xy, o.heading, o.half_extents,
                                        eps=SPAWN_CLEARANCE / 2):
            return False
        if o.route.entry == v.route.entry and abs(_distance_before_box(o) - d) < state.config.spawn_gap:
            return False
    return True


def _spawn_vehicles(state: WorldState):
    cfg = state.config
    rng = state.rng
    geom = cfg.map
    cav_arms = [ARMS[i] for i in rng.permutation(len(ARMS))[:cfg.n_cav]]

    for i in range(cfg.n_vehicles):
        kind = "cav" if i < cfg.n_cav else "background"
        for _ in range(cfg.spawn_retries):
            arm = cav_arms[i] if kind == "cav" else ARMS[int(rng.integers(len(ARMS)))]
            maneuver = MANEUVERS[int(rng.integers(len(MANEUVERS)))]
            d = geom.arm_length * rng.uniform(*SPAWN_RANGE)
            speed = rng.uniform(*SPAWN_SPEED)
            route = get_route(arm, maneuver, geom)
            xy, heading = route.spawn_pose(d)
            v = Vehicle(id=i, kind=kind, route=route, xy=xy, heading=heading, speed=speed,
                        half_extents=cfg.half_extents, spawn_time=0.0)
            if _spawn_ok(state, v):
                state.vehicles.append(v)
                break
        else:
            raise SpawnError(f"Could not place vehicle {i} ({kind}) without overlap after {cfg.spawn_retries} tries "
                             f"(seed {state.seed}, {cfg.n_vehicles} vehicles on map '{geom.name}')")

    # followers never start faster than the vehicle ahead in their lane
    for arm in ARMS:
        lane = sorted([v for v in state.vehicles if v.route.entry == arm], key=_distance_before_box)
        for ahead, behind in zip(lane[:-1], lane[1:]):
            behind.speed = min(behind.speed, ahead.speed)


def crosswalk(arm, geom):
    """(centre, unit vector across the arm, half length) of the crosswalk on an arm."""
    u = ARM_DIRECTION[arm]
    centre = u * (geom.box_half + CROSSWALK_OFFSET)
    return centre, geometry.rot90(u, +1), geom.lane_width + 1.0


def _spawn_pedestrians(state: WorldState):
    cfg = state.config
    rng = state.rng
    n0 = cfg.n_vehicles
    for j in range(cfg.n_pedestrians):
        arm = ARMS[int(rng.integers(len(ARMS)))]
        centre, n, half = crosswalk(arm, cfg.map)
        side = 1.0 if rng.uniform() < 0.5 else -1.0
        start, goal = centre + side * half * n, centre - side * half * n
        heading = float(np.arctan2(*(goal - start)[::-1]))
        speed = float(rng.uniform(*PED_SPEED))
        start_step = int(rng.integers(0, int(round(PED_DELAY / cfg.dt)) + 1))
        state.pedestrians.append(Pedestrian(id=n0 + j, xy=start, heading=heading, walk_speed=speed,
                                            radius=cfg.ped_radius, start_step=start_step, arm=arm, goal=goal))


def reset(config: ScenarioConfig, seed) -> WorldState:
    """Deterministic initial state: CAVs on distinct arms, background traffic and pedestrians per config."""
    config.validate()
    state = WorldState(config=config, seed=seed)
    _spawn_vehicles(state)
    _spawn_pedestrians(state)
    update_approach_times(state)
    return state


def from_entities(config: ScenarioConfig, vehicles, pedestrians=(), seed=0, step=0) -> WorldState:
    """World with hand-placed entities, for scripted scenarios and log reconstruction."""
    state = WorldState(config=config, seed=seed)
    state.vehicles = list(vehicles)
    state.pedestrians = list(pedestrians)
    state.step = step
    state.time = step * config.dt
    update_approach_times(state)
    return state


# Collisions
# ----------------------------------------------------------------------------------------------------------------------
def collide(a, b) -> bool:
    """Overlap of two entities; rectangles for vehicles, discs for pedestrians. Symmetric."""
    if isinstance(a, Pedestrian) and isinstance(b, Pedestrian):
        return False
    if isinstance(a, Pedestrian):
        a, b = b, a
    if isinstance(b, Pedestrian):
        return geometry.disc_rectangle(b.xy, b.radius, a.xy, a.heading, a.half_extents)
    return geometry.rectangle_rectangle(a.xy, a.heading, a.half_extents, b.xy, b.heading, b.half_extents)


def detect_collision(state: WorldState):
    """Sorted id pairs (i < j) of overlapping running vehicles and non-finished pedestrians."""
    entities = state.active_vehicles() + [p for p in state.pedestrians if p.status == CROSSING]
    pairs = []
    for i, a in enumerate(entities):
        for b in entities[i+1:]:
            if np.linalg.norm(a.xy - b.xy) > a.radius + b.radius:
                continue
            if collide(a, b):
                pairs.append((min(a.id, b.id), max(a.id, b.id)))
    return sorted(pairs)


# Dynamics
# ----------------------------------------------------------------------------------------------------------------------
def apply_kinematics(v: Vehicle, action, cfg: ScenarioConfig):
    """v' = clamp(v + a dt), theta' = wrap(theta + omega dt), position advanced with v' and theta'."""
    acc, steer = action
    speed = min(max(v.speed + acc * cfg.dt, 0.0), cfg.v_max)
    heading = wrap_angle(v.heading + steer * cfg.dt)
    xy = v.xy + speed * cfg.dt * np.array([np.cos(heading), np.sin(heading)])

    v.last_action = np.array([(speed - v.speed) / cfg.dt, wrap_angle(heading - v.heading) / cfg.dt])
    v.speed, v.heading, v.xy = speed, heading, xy


def _crosswalk_clear(state: WorldState, p: Pedestrian):
    centre, n, half = crosswalk(p.arm, state.geom)
    for v in state.active_vehicles():
        if geometry.distance_point_segment(v.xy, centre - half * n, centre + half * n) < CROSSWALK_CLEAR:
            return False
    return True


def advance_pedestrians(state: WorldState):
    cfg = state.config
    vehicles = state.active_vehicles()
    for p in state.pedestrians:
        if p.status == WAITING:
            if state.step >= p.start_step and _crosswalk_clear(state, p):
                p.status = CROSSING
            else:
                continue
        if p.status != CROSSING:
            continue

        d = p.goal - p.xy
        dist = float(np.linalg.norm(d))
        walk = min(p.walk_speed, PED_SPEED_MAX)
        xy = p.xy + d / max(dist, 1e-12) * min(cfg.dt * walk, dist)
        if any(geometry.disc_rectangle(xy, p.radius + PED_STANDOFF, v.xy, v.heading, v.half_extents)
               for v in vehicles):
            p.speed = 0.0  # holds until the vehicle has passed
            continue
        p.xy = xy
        p.speed = walk
        if dist <= cfg.dt * walk:
            p.xy = p.goal.copy()
            p.speed = 0.0
            p.status = DONE


def _check_actions(state: WorldState, actions: dict):
    ids = {v.id for v in state.cavs()}
    checked = {}
    for k, a in actions.items():
        if k not in ids:
            raise UnknownAgentError(f"Action for unknown or inactive agent {k}, controlled agents are {sorted(ids)}")
        a = np.asarray(a, dtype=float)
        if a.shape != (2,):
            raise ValueError(f"Action for agent {k} must have shape (2,), got {a.shape}")
        if not np.all(np.isfinite(a)):
            raise ValueError(f"Non-finite action {a} for agent {k}")
        checked[k] = clamp_action(a)

    missing = ids - set(checked)
    if missing:
        raise ValueError(f"Missing actions for agents {sorted(missing)}")
    return checked


def step(state: WorldState, actions: dict):
    """
    Advance the world by dt in place. actions maps every running CAV id to (acc, heading rate), physical units,
    clamped to the action bounds. Returns (state, {id: StepResult}) for the CAVs that were running before the step.
    On the step that completes the episode's success the CAVs already parked at their goal get a result too, it
    carries their share of the success bonus.
    """
    if state.done:
        raise RuntimeError(f"Episode already ended with '{state.outcome}', call reset")

    cfg = state.config
    commands = _check_actions(state, actions)
    prev = state.light_copy()

    for v in state.active_vehicles():
        if not v.is_cav:
            commands[v.id] = background_controller(prev, prev.vehicle(v.id))
    for v in state.active_vehicles():
        apply_kinematics(v, commands[v.id], cfg)
    advance_pedestrians(state)

    state.step += 1
    state.time = state.step * cfg.dt

    _resolve_events(state)
    update_approach_times(state)

    results = step_results(prev, state, actions)

    if state.outcome in ("collision", "timeout"):
        state.penalized = True

    if cfg.debug:
        check_physical_bounds(state)

    return state, results


def step_results(prev: WorldState, state: WorldState, actions: dict) -> dict:
    """{id: StepResult} of the transition prev -> state, for the CAVs step() reports on."""
    results = {}
    success_now = prev.outcome is None and state.outcome == "success"
    for v in prev.cavs(active_only=False):
        if not (v.active or (success_now and v.status == ARRIVED)):
            continue
        r, components = compute_reward(prev, actions.get(v.id), state, v.id)
        cur = state.vehicle(v.id)
        if state.outcome in ("collision", "timeout"):
            done = state.outcome
        elif cur.status == ARRIVED:
            done = "success"
        else:
            done = "running"
        results[v.id] = StepResult(reward=r, components=components, done=done,
                                   info=dict(min_ttc=min_ttc(state, cur),
                                             junction_occupancy=state.junction_occupancy()))
    return results


def _resolve_events(state: WorldState):
    cfg = state.config
    pairs = detect_collision(state)
    for v in state.cavs():
        if not in_map(v.xy, state.geom):
            pairs.append((BOUNDARY, v.id))
    state.collisions = pairs

    by_id = {v.id: v for v in state.vehicles}
    by_id.update({p.id: p for p in state.pedestrians})

    cav_pairs = [pq for pq in pairs if any(i in by_id and isinstance(by_id[i], Vehicle) and by_id[i].is_cav
                                           for i in pq)]
    if cav_pairs:
        state.outcome = "collision"
        for pq in cav_pairs:
            for i in pq:
                if i in by_id and isinstance(by_id[i], Vehicle):
                    by_id[i].status = COLLIDED
        return

    for pq in pairs:
        for i in pq:
            e = by_id[i]
            if isinstance(e, Vehicle):
                e.status = DESPAWNED
            else:
                e.status = DONE

    for v in state.active_vehicles():
        if v.is_cav:
            if v.route.in_goal(v.xy):
                v.status = ARRIVED
                v.arrival_time = state.time
        elif not in_map(v.xy, state.geom) or v.route.project(v.xy)[0] >= v.route.length - 1.0:
            v.status = EXITED

    cavs = [v for v in state.vehicles if v.is_cav]
    if cavs and all(v.status == ARRIVED for v in cavs):
        state.outcome = "success"
    elif state.step >= cfg.max_steps:
        state.outcome = "timeout"


def check_physical_bounds(state: WorldState):
    cfg = state.config
    for v in state.vehicles:
        assert 0 <= v.speed <= cfg.v_max, v
        assert -np.pi < v.heading <= np.pi, v
        assert np.all(v.half_extents > 0), v
    for p in state.pedestrians:
        assert 0 <= p.speed <= PED_SPEED_MAX, p
    assert state.time == state.step * cfg.dt


# Episodes
# ----------------------------------------------------------------------------------------------------------------------
def replay(config: ScenarioConfig, seed, action_log):
    """Re-run an episode from its seed with a recorded list of per-step action dicts; returns the snapshots."""
    state = reset(config, seed)
    snapshots = [state.snapshot()]
    for actions in action_log:
        if state.done:
            break
        state, _ = step(state, actions)
        snapshots.append(state.snapshot())
    return snapshots


def run_episode(state: WorldState, policy, on_step=None):
    """
    Roll out policy(state) -> {id: action} until the episode ends.
    on_step(state, actions, results) is called after every step, on_step(state, None, None) once before the first.
    Returns the per-CAV summed rewards.
    """
    returns = {v.id: 0.0 for v in state.cavs(active_only=False)}
    if on_step is not None:
        on_step(state, None, None)
    while not state.done:
        actions = policy(state)
        state, results = step(state, actions)
        for k, res in results.items():
            returns[k] += res.reward
        if on_step is not None:
            on_step(state, actions, results)
    return returns
