"""
Role-specific Gaussian policies. Actions live in the normalized space u in [-1, 1]^2, mapped to
(acceleration, heading rate) by to_physical; samples outside the box are clamped by the simulator.
"""
import numpy as np

from rsurl import random2, tensor as tn
from rsurl.tensor import Tensor, DimensionError
from rsurl.math2 import normalize11, denormalize11
from rsurl.env.config import ACTION_LOW, ACTION_HIGH
from rsurl.env.observation import ObsLayout
from rsurl.env.routes import ROLES, role2index
from rsurl.nets.layers import Module, Mlp
from rsurl.nets.attention import ObsEncoder

ACTION_DIM = 2
LOG_STD_MIN, LOG_STD_MAX = -5.0, 2.0
LOG_STD_INIT = -1.0
LOG_2PI = float(np.log(2 * np.pi))


def to_physical(u):
    return denormalize11(np.asarray(u, dtype=float), ACTION_LOW, ACTION_HIGH)


def to_normalized(a):
    return normalize11(np.asarray(a, dtype=float), ACTION_LOW, ACTION_HIGH)


def default_arch(layout: ObsLayout = None, hidden=(128, 128), use_attention=False, n_heads=4, d_model=64, d_k=16):
    layout = ObsLayout() if layout is None else layout
    return dict(k_veh=layout.k_veh, k_ped=layout.k_ped, hidden=list(hidden), use_attention=bool(use_attention),
                n_heads=n_heads, d_model=d_model, d_k=d_k)


class Actor(Module):
    __slots__ = ("role", "arch")

    def __init__(self, role, rng: np.random.Generator, arch: dict = None):
        super().__init__()
        role2index(role)
        self.role = role
        self.arch = default_arch() if arch is None else dict(arch)
        layout = ObsLayout(k_veh=self.arch["k_veh"], k_ped=self.arch["k_ped"])

        self.add_module("encoder", ObsEncoder(layout=layout, rng=rng, use_attention=self.arch["use_attention"],
                                              n_heads=self.arch["n_heads"], d_model=self.arch["d_model"],
                                              d_k=self.arch["d_k"]))
        self.add_module("trunk", Mlp([layout.n_obs] + list(self.arch["hidden"]) + [ACTION_DIM], rng=rng))
        self.add_param("log_std", np.full(ACTION_DIM, LOG_STD_INIT))

    @property
    def encoder(self) -> ObsEncoder:
        return self.modules["encoder"]

    @property
    def layout(self) -> ObsLayout:
        return self.encoder.layout

    def add_attention(self, rng: np.random.Generator):
        self.encoder.add_attention(rng=rng, n_heads=self.arch["n_heads"], d_model=self.arch["d_model"],
                                   d_k=self.arch["d_k"])
        self.arch["use_attention"] = True
        return self

    def std(self) -> Tensor:
        return tn.exp(tn.clamp(self.params["log_std"], LOG_STD_MIN, LOG_STD_MAX))

    def forward(self, obs):
        """(mean [B, 2], std [2]) in the normalized action space."""
        return self.modules["trunk"](self.encoder(obs)), self.std()

    def act(self, obs, rng: np.random.Generator = None) -> np.ndarray:
        """Mean action, or a sample if rng is given; normalized, [B, 2]."""
        mean, std = self.forward(obs)
        if rng is None:
            return mean.data.copy()
        return mean.data + std.data * rng.standard_normal(mean.shape)

    def __repr__(self):
        return f"Actor({self.role}, attention={self.arch['use_attention']}, n_parameters={self.n_parameters()})"


class RoleActorSet:
    """One actor per driving role; the role of a CAV picks its policy."""

    def __init__(self, actors: dict):
        for role in actors:
            role2index(role)
        self.actors = dict(actors)

    @classmethod
    def new(cls, seed, arch: dict = None, roles=ROLES):
        ss = random2.spawn(seed, len(ROLES))
        return cls({r: Actor(r, rng=np.random.default_rng(ss[role2index(r)]), arch=arch) for r in roles})

    def __getitem__(self, role) -> Actor:
        role2index(role)
        if role not in self.actors:
            raise ValueError(f"No actor for role '{role}', available: {sorted(self.actors)}")
        return self.actors[role]

    def __contains__(self, role):
        return role in self.actors

    def __iter__(self):
        return iter(self.actors)

    def __len__(self):
        return len(self.actors)

    def items(self):
        return self.actors.items()

    def copy(self):
        return RoleActorSet({r: a.copy() for r, a in self.actors.items()})

    def parameters(self):
        return [p for a in self.actors.values() for p in a.parameters()]


def actor_forward(obs, role, actors: RoleActorSet):
    return actors[role](obs)


def log_prob_and_entropy(mean, std, action):
    """
    Diagonal Gaussian log-density of action and entropy sum_i 0.5 ln(2 pi e sigma_i^2).
    mean [B, 2], std [2] or [B, 2], action [B, 2]; returns (logp [B], entropy [] or [B]) as Tensors.
    """
    mean, std = tn.as_tensor(mean), tn.as_tensor(std)
    action = tn.as_tensor(action)
    if np.any(std.data <= 0) or not np.all(np.isfinite(std.data)):
        raise ValueError(f"Standard deviation must be positive and finite, got {std.data}")
    if action.shape != mean.shape:
        raise DimensionError(f"Action {action.shape} and mean {mean.shape} disagree")

    log_std = tn.log(std)
    z = tn.div(tn.sub(action, mean), std)
    logp = tn.sum(tn.sub(tn.mul(tn.square(z), -0.5), tn.add(log_std, 0.5 * LOG_2PI)), axis=-1)
    entropy = tn.sum(tn.add(log_std, 0.5 * (LOG_2PI + 1)), axis=-1)
    return logp, entropy
