from .config import (ScenarioConfig, MapGeometry, RewardWeights, COMPONENTS, reward_bound,  # noqa
                     A_MIN, A_MAX, STEER_MAX, ACTION_LOW, ACTION_HIGH, ACTION_RANGE, clamp_action)
from .state import (WorldState, Vehicle, Pedestrian, SpawnError, UnknownAgentError, OUTCOMES,  # noqa
                    RUNNING, ARRIVED, EXITED, DESPAWNED, COLLIDED, WAITING, CROSSING, DONE)
from .routes import ARMS, ROLES, MANEUVERS, Route, get_route, routes_conflict, role_one_hot  # noqa
from .geometry import ttc_discs  # noqa
from .observation import ObsLayout, build_observation  # noqa
from .reward import compute_reward, min_ttc, min_pairwise_ttc  # noqa
from .background import background_controller, scripted_action  # noqa
from .world import (StepResult, reset, step, step_results, from_entities, collide, detect_collision,  # noqa
                    replay, run_episode)
from .log import TrajectoryLog  # noqa


def ttc(veh_a: Vehicle, veh_b: Vehicle) -> float:
    """Time to collision of the bounding discs (half-diagonal radius) under constant velocities."""
    return ttc_discs(veh_a.xy, veh_a.velocity, veh_a.radius, veh_b.xy, veh_b.velocity, veh_b.radius)
