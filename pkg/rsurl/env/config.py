import numpy as np

from rsurl.object2 import SlotsObject

# Action space, physical units: longitudinal acceleration [m/s^2], heading rate [rad/s]
A_MIN, A_MAX = -6.0, 3.0
STEER_MAX = 0.6
ACTION_LOW = np.array([A_MIN, -STEER_MAX])
ACTION_HIGH = np.array([A_MAX, +STEER_MAX])
ACTION_RANGE = ACTION_HIGH - ACTION_LOW

PED_SPEED_MAX = 2.0


def clamp_action(action):
    return np.clip(np.asarray(action, dtype=float), ACTION_LOW, ACTION_HIGH)


class MapGeometry(SlotsObject):
    __slots__ = ("name",
                 "arm_length",  # m, from the junction box edge to the end of each arm
                 "lane_width",  # m, one inbound and one outbound lane per arm
                 "box_half")    # m, the junction box is [-box_half, box_half]^2

    def __init__(self, name="default", arm_length=40.0, lane_width=3.5, box_half=7.0):
        self.name = name
        self.arm_length = arm_length
        self.lane_width = lane_width
        self.box_half = box_half

    @property
    def extent(self):
        return self.box_half + self.arm_length

    def validate(self):
        if self.arm_length <= 0 or self.lane_width <= 0 or self.box_half <= 0:
            raise ValueError(f"Map geometry must be positive, got {self}")
        if self.lane_width > self.box_half:
            raise ValueError(f"lane_width {self.lane_width} does not fit into the junction box (half {self.box_half})")
        return self


class RewardWeights(SlotsObject):
    __slots__ = ("safety", "efficiency", "comfort", "task", "yielding", "coop", "penalty")

    def __init__(self, safety=2.0, efficiency=0.5, comfort=0.2, task=3.0, yielding=0.3, coop=0.5, penalty=5.0):
        self.safety = safety
        self.efficiency = efficiency
        self.comfort = comfort
        self.task = task
        self.yielding = yielding
        self.coop = coop
        self.penalty = penalty

    def as_array(self):
        return np.array([getattr(self, k) for k in COMPONENTS])


# Reward component names, in the order of RewardWeights
COMPONENTS = ("safety", "efficiency", "comfort", "task", "yielding", "coop", "penalty")
# max |r_k| per component
COMPONENT_BOUNDS = dict(safety=2.0, efficiency=1.0, comfort=2.0, task=2.0, yielding=0.1, coop=0.05, penalty=1.0)


def reward_bound(weights: RewardWeights) -> float:
    """Upper bound on the per-step |r|, 15.955 for the default weights."""
    return float(sum(abs(getattr(weights, k)) * COMPONENT_BOUNDS[k] for k in COMPONENTS))


class ScenarioConfig(SlotsObject):
    __slots__ = ("n_cav",           # controlled vehicles, also the curriculum stage
                 "n_vehicles",      # total, CAVs included
                 "n_pedestrians",
                 "k_veh", "k_ped",  # observation slots
                 "sense_veh", "sense_ped",  # m
                 "obs_noise",       # m and m/s, std of the noise on relative positions/velocities
                 "dt", "v_max", "v_target", "max_steps",
                 "vehicle_length", "vehicle_width", "ped_radius",
                 "spawn_retries", "spawn_gap",
                 "ttc_horizon", "safe_distance",
                 "debug",
                 "map", "weights")

    def __init__(self):
        self.n_cav = 1
        self.n_vehicles = 5
        self.n_pedestrians = 2
        self.k_veh = 4
        self.k_ped = 3
        self.sense_veh = 30.0
        self.sense_ped = 20.0
        self.obs_noise = 0.0
        self.dt = 0.1
        self.v_max = 12.0
        self.v_target = 6.0
        self.max_steps = 300
        self.vehicle_length = 4.5
        self.vehicle_width = 1.8
        self.ped_radius = 0.3
        self.spawn_retries = 100
        self.spawn_gap = 6.5  # m between centres on one arm, a lone vehicle never blocks its arm
        self.ttc_horizon = 3.0
        self.safe_distance = 4.0
        self.debug = False
        self.map = MapGeometry()
        self.weights = RewardWeights()

    def validate(self):
        if not 1 <= self.n_cav <= 3:
            raise ValueError(f"n_cav must be in [1, 3], got {self.n_cav}")
        if self.n_vehicles < self.n_cav:
            raise ValueError(f"n_vehicles {self.n_vehicles} < n_cav {self.n_cav}")
        if not 0 <= self.n_pedestrians <= 3:
            raise ValueError(f"n_pedestrians must be in [0, 3], got {self.n_pedestrians}")
        if self.k_veh < 1 or self.k_ped < 1:
            raise ValueError(f"Observation slots must be positive, got k_veh={self.k_veh}, k_ped={self.k_ped}")
        if self.dt <= 0 or self.max_steps < 1:
            raise ValueError(f"Invalid time discretization dt={self.dt}, max_steps={self.max_steps}")
        if not 0 < self.v_target <= self.v_max:
            raise ValueError(f"Need 0 < v_target <= v_max, got {self.v_target}, {self.v_max}")
        if self.obs_noise < 0:
            raise ValueError(f"obs_noise must be >= 0, got {self.obs_noise}")
        if self.vehicle_length <= 0 or self.vehicle_width <= 0 or self.ped_radius <= 0:
            raise ValueError("Entity extents must be positive")
        self.map.validate()
        return self

    @property
    def half_extents(self):
        return np.array([self.vehicle_length / 2, self.vehicle_width / 2])
