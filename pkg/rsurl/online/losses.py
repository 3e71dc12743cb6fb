"""
MAPPO objectives on importance-weighted minibatches.

    L_V     = mean[w (V(o) - R)^2]
    r       = exp(log pi_new(a|o) - log pi_old(a|o))
    L_CLIP  = min(r A, clip(r, 1 - eps, 1 + eps) A)
    L_pi    = mean[w (-L_CLIP - c2 S[pi](o))]
"""
import numpy as np

from rsurl import tensor as tn
from rsurl.tensor import Tensor
from rsurl.nets.actor import Actor, log_prob_and_entropy
from rsurl.nets.critic import ValueNet


class OnlineBatch:
    __slots__ = ("obs", "actions", "logp", "advantages", "returns", "weights", "roles", "rewards", "next_obs",
                 "dones", "indices")

    def __init__(self, obs, actions, logp, advantages, returns, weights, roles,
                 rewards=None, next_obs=None, dones=None, indices=None):
        self.obs = np.asarray(obs, dtype=float)
        self.actions = np.asarray(actions, dtype=float)
        self.logp = np.asarray(logp, dtype=float)
        self.advantages = np.asarray(advantages, dtype=float)
        self.returns = np.asarray(returns, dtype=float)
        self.weights = np.ones(len(self.obs)) if weights is None else np.asarray(weights, dtype=float)
        self.roles = np.asarray(roles)
        self.rewards = rewards
        self.next_obs = next_obs
        self.dones = dones
        self.indices = indices  # into the replay buffer

    @classmethod
    def from_entries(cls, entries, weights=None, indices=None):
        return cls(obs=np.stack([e.obs for e in entries]), actions=np.stack([e.action for e in entries]),
                   logp=[e.logp for e in entries], advantages=[e.advantage for e in entries],
                   returns=[e.ret for e in entries], weights=weights, roles=[e.role for e in entries],
                   rewards=np.array([e.reward for e in entries]), next_obs=np.stack([e.next_obs for e in entries]),
                   dones=np.array([e.done for e in entries], dtype=bool), indices=indices)

    def __len__(self):
        return len(self.obs)

    def select(self, mask):
        def sub(x):
            return None if x is None else x[mask]

        return OnlineBatch(obs=self.obs[mask], actions=self.actions[mask], logp=self.logp[mask],
                           advantages=self.advantages[mask], returns=self.returns[mask],
                           weights=self.weights[mask], roles=self.roles[mask], rewards=sub(self.rewards),
                           next_obs=sub(self.next_obs), dones=sub(self.dones), indices=sub(self.indices))

    def for_role(self, role):
        return self.select(self.roles == role)


def clipped_surrogate(ratio, advantages, clip):
    """Elementwise min(r A, clip(r, 1 - eps, 1 + eps) A), numpy."""
    ratio, advantages = np.asarray(ratio, dtype=float), np.asarray(advantages, dtype=float)
    return np.minimum(ratio * advantages, np.clip(ratio, 1 - clip, 1 + clip) * advantages)


def critic_loss(batch: OnlineBatch, value: ValueNet) -> Tensor:
    v = value(batch.obs)
    return tn.mean(tn.mul(tn.square(tn.sub(v, batch.returns)), batch.weights))


def actor_loss(batch: OnlineBatch, actor: Actor, clip, c2) -> Tensor:
    if np.any(batch.roles != actor.role):
        raise ValueError(f"Batch for the '{actor.role}' actor contains roles {sorted(set(batch.roles.tolist()))}")
    if len(batch) == 0:
        raise ValueError(f"Empty batch for the '{actor.role}' actor")

    mean, std = actor(batch.obs)
    logp, entropy = log_prob_and_entropy(mean, std, batch.actions)
    ratio = tn.exp(tn.sub(logp, batch.logp))
    l_clip = tn.minimum(tn.mul(ratio, batch.advantages),
                        tn.mul(tn.clamp(ratio, 1 - clip, 1 + clip), batch.advantages))
    per_sample = tn.sub(tn.neg(l_clip), tn.mul(entropy, c2))
    return tn.mean(tn.mul(per_sample, batch.weights))
