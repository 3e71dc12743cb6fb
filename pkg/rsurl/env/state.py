import copy

import numpy as np

from rsurl.object2 import CopyableObject
from rsurl.env import geometry
from rsurl.env.config import ScenarioConfig
from rsurl.env.routes import Route

KINDS = ("cav", "background")
# Vehicle status; only "running" vehicles move, collide and are observed
RUNNING, ARRIVED, EXITED, DESPAWNED, COLLIDED = "running", "arrived", "exited", "despawned", "collided"
# Pedestrian status
WAITING, CROSSING, DONE = "waiting", "crossing", "done"

OUTCOMES = ("success", "collision", "timeout")


class SpawnError(RuntimeError):
    pass


class UnknownAgentError(KeyError):
    pass


class Vehicle(CopyableObject):
    __slots__ = ("id", "kind", "route", "xy", "heading", "speed", "half_extents",
                 "status", "last_action", "spawn_time", "arrival_time")

    def __init__(self, id, kind, route: Route, xy, heading, speed, half_extents, spawn_time=0.0):  # noqa: shadows id
        if kind not in KINDS:
            raise ValueError(f"Unknown vehicle kind '{kind}', expected one of {KINDS}")
        self.id = int(id)
        self.kind = kind
        self.route = route
        self.xy = np.array(xy, dtype=float)
        self.heading = float(heading)
        self.speed = float(speed)
        self.half_extents = np.array(half_extents, dtype=float)
        self.status = RUNNING
        self.last_action = np.zeros(2)  # effective (acc, heading rate) of the previous step
        self.spawn_time = float(spawn_time)
        self.arrival_time = None

    @property
    def role(self):
        return self.route.maneuver

    @property
    def is_cav(self):
        return self.kind == "cav"

    @property
    def active(self):
        return self.status == RUNNING

    @property
    def velocity(self):
        return self.speed * geometry.heading2v(self.heading)

    @property
    def radius(self):
        return geometry.half_diagonal(self.half_extents)

    @property
    def travel_time(self):
        if self.arrival_time is None:
            return None
        return self.arrival_time - self.spawn_time

    def corners(self):
        return geometry.rectangle_corners(self.xy, self.heading, self.half_extents)

    def __repr__(self):
        return (f"Vehicle({self.id}, {self.kind}, {self.route}, xy=({self.xy[0]:.2f}, {self.xy[1]:.2f}), "
                f"v={self.speed:.2f}, {self.status})")


class Pedestrian(CopyableObject):
    __slots__ = ("id", "xy", "heading", "speed", "walk_speed", "radius", "status", "start_step", "arm", "goal")

    def __init__(self, id, xy, heading, walk_speed, radius, start_step, arm, goal):  # noqa: shadows id
        self.id = int(id)
        self.xy = np.array(xy, dtype=float)
        self.heading = float(heading)
        self.speed = 0.0  # current speed, 0 while waiting or held up by a vehicle
        self.walk_speed = float(walk_speed)
        self.radius = float(radius)
        self.status = WAITING
        self.start_step = int(start_step)
        self.arm = arm
        self.goal = np.array(goal, dtype=float)

    @property
    def crossing(self):
        return self.status == CROSSING

    @property
    def active(self):
        return self.status != DONE

    @property
    def velocity(self):
        return self.speed * geometry.heading2v(self.heading)

    def __repr__(self):
        return f"Pedestrian({self.id}, {self.arm}, xy=({self.xy[0]:.2f}, {self.xy[1]:.2f}), {self.status})"


class WorldState(CopyableObject):
    """
    Full simulator state, the RSU's ground-truth picture of the junction.
    time == step * dt holds after every step.
    """
    __slots__ = ("config", "seed", "step", "time", "vehicles", "pedestrians",
                 "rng", "obs_rng",
                 "approach_time",     # id -> time the vehicle entered the approach zone, for arrival-order yielding
                 "outcome",           # None while running, else one of OUTCOMES
                 "penalized",         # terminal penalty already applied
                 "collisions")        # collision pairs of the last step

    def __init__(self, config: ScenarioConfig, seed, rng=None, obs_rng=None):
        self.config = config
        self.seed = seed
        self.step = 0
        self.time = 0.0
        self.vehicles = []
        self.pedestrians = []
        ss = np.random.SeedSequence(seed)
        ss_world, ss_obs = ss.spawn(2)
        self.rng = np.random.default_rng(ss_world) if rng is None else rng
        self.obs_rng = np.random.default_rng(ss_obs) if obs_rng is None else obs_rng
        self.approach_time = {}
        self.outcome = None
        self.penalized = False
        self.collisions = []

    @property
    def geom(self):
        return self.config.map

    @property
    def done(self):
        return self.outcome is not None

    def vehicle(self, id):  # noqa: shadows id
        for v in self.vehicles:
            if v.id == id:
                return v
        raise UnknownAgentError(f"No vehicle with id {id}")

    def cavs(self, active_only=True):
        return [v for v in self.vehicles if v.is_cav and (v.active or not active_only)]

    def active_vehicles(self):
        return [v for v in self.vehicles if v.active]

    def active_pedestrians(self):
        return [p for p in self.pedestrians if p.active]

    def junction_occupancy(self):
        """Number of active vehicles whose centre lies inside the junction box."""
        return sum(1 for v in self.active_vehicles() if np.all(np.abs(v.xy) <= self.geom.box_half))

    def light_copy(self):
        """
        Copy of the entity lists with shallow entity copies, sharing config and rngs.
        Valid as a pre-step view because step() rebinds entity arrays instead of writing into them.
        """
        s = copy.copy(self)
        s.vehicles = [copy.copy(v) for v in self.vehicles]
        s.pedestrians = [copy.copy(p) for p in self.pedestrians]
        s.approach_time = dict(self.approach_time)
        s.collisions = list(self.collisions)
        return s

    def snapshot(self) -> np.ndarray:
        """Flat float array of the dynamic state, for bitwise comparisons."""
        rows = [[self.step, self.time]]
        for v in self.vehicles:
            rows.append([v.id, v.xy[0], v.xy[1], v.heading, v.speed, *v.last_action,
                         ("running", "arrived", "exited", "despawned", "collided").index(v.status)])
        for p in self.pedestrians:
            rows.append([p.id, p.xy[0], p.xy[1], p.heading, p.speed, ("waiting", "crossing", "done").index(p.status)])
        return np.concatenate([np.asarray(r, dtype=float) for r in rows])
