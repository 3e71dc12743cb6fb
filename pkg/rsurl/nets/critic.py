import numpy as np

from rsurl import tensor as tn
from rsurl.tensor import Tensor, DimensionError
from rsurl.env.observation import ObsLayout
from rsurl.nets.layers import Module, Mlp, Normalizer
from rsurl.nets.attention import ObsEncoder
from rsurl.nets.actor import ACTION_DIM, default_arch


class QNet(Module):
    """Q(o, u) from the normalized observation concatenated with the normalized action."""
    __slots__ = ()

    def __init__(self, n_obs, hidden, rng: np.random.Generator):
        super().__init__()
        self.add_module("mlp", Mlp([n_obs + ACTION_DIM] + list(hidden) + [1], rng=rng, final_scale=1.0))

    def forward(self, x: Tensor, u: Tensor):
        y = self.modules["mlp"](tn.concat([x, u], axis=-1))
        return tn.reshape(y, y.shape[:-1])


class TwinCritic(Module):
    """Two independent Q networks with soft-updated target copies."""
    __slots__ = ("layout", "arch")

    def __init__(self, rng: np.random.Generator, arch: dict = None):
        super().__init__()
        self.arch = default_arch() if arch is None else dict(arch)
        self.layout = ObsLayout(k_veh=self.arch["k_veh"], k_ped=self.arch["k_ped"])
        hidden = self.arch["hidden"]
        self.add_module("normalizer", Normalizer(self.layout.n_obs))
        self.add_module("q1", QNet(self.layout.n_obs, hidden, rng=rng))
        self.add_module("q2", QNet(self.layout.n_obs, hidden, rng=rng))
        self.add_module("q1_target", self.modules["q1"].copy())
        self.add_module("q2_target", self.modules["q2"].copy())

    @property
    def normalizer(self) -> Normalizer:
        return self.modules["normalizer"]

    def online_parameters(self):
        return self.modules["q1"].parameters() + self.modules["q2"].parameters()

    def _inputs(self, obs, u):
        obs = np.atleast_2d(self.layout.check(obs))
        if not isinstance(u, Tensor):  # a Tensor keeps the graph to the actor
            u = Tensor(np.atleast_2d(np.asarray(u, dtype=float)))
        if u.shape != (len(obs), ACTION_DIM):
            raise DimensionError(f"Actions {u.shape} do not match observations {obs.shape}")
        return Tensor(self.normalizer(self.layout.mask(obs))), u

    def forward(self, obs, u):
        """(q1 [B], q2 [B]) of the online networks; u is the normalized action."""
        x, u = self._inputs(obs, u)
        return self.modules["q1"](x, u), self.modules["q2"](x, u)

    def target(self, obs, u) -> np.ndarray:
        """min_j Q_j'(o, u), no graph."""
        x, u = self._inputs(obs, u)
        x = x.detach()
        return np.minimum(self.modules["q1_target"](x, u).data, self.modules["q2_target"](x, u).data)

    def update_targets(self, tau):
        soft_update(self.modules["q1_target"], self.modules["q1"], tau=tau)
        soft_update(self.modules["q2_target"], self.modules["q2"], tau=tau)


def twin_q_forward(obs, action, critic: TwinCritic):
    return critic(obs, action)


class ValueNet(Module):
    """Shared state-value critic V(o) on the per-agent observation."""
    __slots__ = ("arch",)

    def __init__(self, rng: np.random.Generator, arch: dict = None):
        super().__init__()
        self.arch = default_arch() if arch is None else dict(arch)
        layout = ObsLayout(k_veh=self.arch["k_veh"], k_ped=self.arch["k_ped"])
        self.add_module("encoder", ObsEncoder(layout=layout, rng=rng, use_attention=self.arch["use_attention"],
                                              n_heads=self.arch["n_heads"], d_model=self.arch["d_model"],
                                              d_k=self.arch["d_k"]))
        self.add_module("mlp", Mlp([layout.n_obs] + list(self.arch["hidden"]) + [1], rng=rng, final_scale=1.0))

    @property
    def encoder(self) -> ObsEncoder:
        return self.modules["encoder"]

    def forward(self, obs):
        y = self.modules["mlp"](self.encoder(obs))
        return tn.reshape(y, y.shape[:-1])


def soft_update(target: Module, online: Module, tau):
    """target <- tau * online + (1 - tau) * target for every parameter."""
    if not 0 < tau <= 1:
        raise ValueError(f"tau must be in (0, 1], got {tau}")
    pt, po = target.named_parameters(), online.named_parameters()
    if pt.keys() != po.keys() or any(pt[k].shape != po[k].shape for k in pt):
        raise DimensionError("Target and online networks do not mirror each other")

    for k, p in pt.items():
        if tau == 1:
            p.data = po[k].data.copy()
        else:
            p.data = tau * po[k].data + (1 - tau) * p.data
