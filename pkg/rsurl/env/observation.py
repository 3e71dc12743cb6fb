"""
Per-agent observation vector, concatenation of

    o_core  [speed/v_max, x/extent, y/extent, heading/pi, dist_to_center/extent, in_junction]
    o_veh   k_veh slots x [valid, dx/sense_veh, dy/sense_veh, dvx/v_max, dvy/v_max]   (ego frame)
    o_ped   k_ped slots x [valid, distance/sense_ped, relative_angle/pi]
    o_role  one-hot (left, straight, right)
    o_ctx   one-hot curriculum stage (1, 2, 3 CAVs)

extent = box_half + arm_length. Slots are sorted by distance (ties by lower id); invalid slots are zero.
"""
import numpy as np

from rsurl.math2 import wrap_angle
from rsurl.env import geometry
from rsurl.env.routes import role_one_hot
from rsurl.env.state import WorldState, Vehicle

N_CORE = 6
VEH_WIDTH = 5
PED_WIDTH = 3
N_ROLE = 3
N_CTX = 3
N_TOKEN_TYPES = 3


class ObsLayout:
    """Index bookkeeping for the observation vector and its split into entity tokens."""

    def __init__(self, k_veh=4, k_ped=3):
        self.k_veh = int(k_veh)
        self.k_ped = int(k_ped)

        self.core = slice(0, N_CORE)
        self.veh = slice(self.core.stop, self.core.stop + VEH_WIDTH * self.k_veh)
        self.ped = slice(self.veh.stop, self.veh.stop + PED_WIDTH * self.k_ped)
        self.role = slice(self.ped.stop, self.ped.stop + N_ROLE)
        self.ctx = slice(self.role.stop, self.role.stop + N_CTX)
        self.n_obs = self.ctx.stop

        self.ego_width = N_CORE + N_ROLE + N_CTX
        self.token_width = max(self.ego_width, VEH_WIDTH, PED_WIDTH)
        self.token_dim = self.token_width + N_TOKEN_TYPES
        self.n_tokens = 1 + self.k_veh + self.k_ped

    def __eq__(self, other):
        return isinstance(other, ObsLayout) and (self.k_veh, self.k_ped) == (other.k_veh, other.k_ped)

    def __repr__(self):
        return f"ObsLayout(k_veh={self.k_veh}, k_ped={self.k_ped}, n_obs={self.n_obs})"

    def to_dict(self):
        return dict(k_veh=self.k_veh, k_ped=self.k_ped)

    def check(self, obs):
        obs = np.asarray(obs, dtype=float)
        if obs.shape[-1] != self.n_obs:
            raise ValueError(f"Observation length {obs.shape[-1]} does not match the layout ({self.n_obs})")
        return obs

    def veh_slots(self, obs):
        return obs[..., self.veh].reshape(obs.shape[:-1] + (self.k_veh, VEH_WIDTH))

    def ped_slots(self, obs):
        return obs[..., self.ped].reshape(obs.shape[:-1] + (self.k_ped, PED_WIDTH))

    def valid(self, obs):
        """Validity [..., n_tokens], the ego token is always valid."""
        obs = self.check(obs)
        ego = np.ones(obs.shape[:-1] + (1,), dtype=bool)
        return np.concatenate([ego, self.veh_slots(obs)[..., 0] > 0.5, self.ped_slots(obs)[..., 0] > 0.5], axis=-1)

    def mask(self, obs):
        """Copy of obs with every feature of an invalid slot set to zero."""
        obs = self.check(obs).copy()
        veh = self.veh_slots(obs)
        veh[veh[..., 0] <= 0.5] = 0.
        ped = self.ped_slots(obs)
        ped[ped[..., 0] <= 0.5] = 0.
        obs[..., self.veh] = veh.reshape(obs.shape[:-1] + (-1,))
        obs[..., self.ped] = ped.reshape(obs.shape[:-1] + (-1,))
        return obs

    def tokens(self, obs):
        """
        Entity tokens [..., n_tokens, token_dim] and their validity [..., n_tokens].
        Token 0 is the ego (core, role, ctx), then one token per vehicle and pedestrian slot.
        Features are zero-padded to token_width and followed by a one-hot of the token type.
        """
        obs = self.mask(obs)
        shape = obs.shape[:-1]
        tokens = np.zeros(shape + (self.n_tokens, self.token_dim))

        tokens[..., 0, :N_CORE] = obs[..., self.core]
        tokens[..., 0, N_CORE:N_CORE+N_ROLE] = obs[..., self.role]
        tokens[..., 0, N_CORE+N_ROLE:self.ego_width] = obs[..., self.ctx]
        tokens[..., 0, self.token_width + 0] = 1.

        i_veh = slice(1, 1 + self.k_veh)
        tokens[..., i_veh, :VEH_WIDTH] = self.veh_slots(obs)
        tokens[..., i_veh, self.token_width + 1] = 1.

        i_ped = slice(1 + self.k_veh, self.n_tokens)
        tokens[..., i_ped, :PED_WIDTH] = self.ped_slots(obs)
        tokens[..., i_ped, self.token_width + 2] = 1.

        return tokens, self.valid(obs)


def stage_one_hot(n_cav):
    return np.eye(N_CTX)[int(np.clip(n_cav, 1, N_CTX)) - 1]


def build_observation(state: WorldState, agent) -> np.ndarray:
    """
    Observation of the CAV agent (id or Vehicle).
    Only entities inside the sensing radii enter a slot; with obs_noise > 0 the relative positions and velocities
    are perturbed with draws from state.obs_rng.
    """
    cfg = state.config
    ego = agent if isinstance(agent, Vehicle) else state.vehicle(agent)
    layout = ObsLayout(k_veh=cfg.k_veh, k_ped=cfg.k_ped)
    extent = state.geom.extent
    sigma = cfg.obs_noise

    obs = np.zeros(layout.n_obs)
    obs[layout.core] = [ego.speed / cfg.v_max,
                        ego.xy[0] / extent,
                        ego.xy[1] / extent,
                        ego.heading / np.pi,
                        np.linalg.norm(ego.xy) / extent,
                        float(np.all(np.abs(ego.xy) <= state.geom.box_half))]

    # vehicles
    others = [v for v in state.active_vehicles() if v.id != ego.id]
    if others:
        d = np.array([np.linalg.norm(v.xy - ego.xy) for v in others])
        ids = np.array([v.id for v in others])
        order = np.lexsort((ids, d))
        order = [i for i in order if d[i] <= cfg.sense_veh][:layout.k_veh]
        slots = layout.veh_slots(obs)
        for j, i in enumerate(order):
            v = others[i]
            dp = v.xy - ego.xy
            dv = v.velocity - ego.velocity
            if sigma > 0:
                dp = dp + state.obs_rng.normal(scale=sigma, size=2)
                dv = dv + state.obs_rng.normal(scale=sigma, size=2)
            dp = geometry.rotate(dp, -ego.heading)
            dv = geometry.rotate(dv, -ego.heading)
            slots[j] = [1., dp[0] / cfg.sense_veh, dp[1] / cfg.sense_veh, dv[0] / cfg.v_max, dv[1] / cfg.v_max]
        obs[layout.veh] = slots.reshape(-1)

    # pedestrians
    peds = state.active_pedestrians()
    if peds:
        d = np.array([np.linalg.norm(p.xy - ego.xy) for p in peds])
        ids = np.array([p.id for p in peds])
        order = np.lexsort((ids, d))
        order = [i for i in order if d[i] <= cfg.sense_ped][:layout.k_ped]
        slots = layout.ped_slots(obs)
        for j, i in enumerate(order):
            dp = peds[i].xy - ego.xy
            if sigma > 0:
                dp = dp + state.obs_rng.normal(scale=sigma, size=2)
            angle = wrap_angle(np.arctan2(dp[1], dp[0]) - ego.heading)
            slots[j] = [1., np.linalg.norm(dp) / cfg.sense_ped, angle / np.pi]
        obs[layout.ped] = slots.reshape(-1)

    obs[layout.role] = role_one_hot(ego.role)
    obs[layout.ctx] = stage_one_hot(cfg.n_cav)
    return obs
