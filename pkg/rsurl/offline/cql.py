"""
Conservative Q-learning for the twin critic and a behaviour-cloned actor.

    y        = r + gamma (1 - d) min_j Q'_j(o', pi(o'))
    L_Q_j    = 1/2 mean[(Q_j(o, a) - y)^2] + alpha [mean(logsumexp_m Q_j(o, u_m)) - mean(Q_j(o, a))]
    L_pi     = mean[-min_j Q_j(o, pi(o))] + lambda mean[||pi(o) - a||^2]

u_m are n_samples actions drawn uniformly from the normalized action box plus the current policy action,
pi(o) is the actor's mean action. All actions are normalized.
"""
import numpy as np

from rsurl import tensor as tn
from rsurl.object2 import SlotsObject
from rsurl.nets.actor import Actor, ACTION_DIM
from rsurl.nets.critic import TwinCritic
from rsurl.offline.dataset import Batch


class CqlBcConfig(SlotsObject):
    __slots__ = ("alpha_cql", "lambda_bc", "gamma", "tau",
                 "batch_size", "n_steps", "lr_actor", "lr_critic", "n_samples",
                 "max_grad_norm",
                 "hidden",
                 "log_every", "eval_every")

    def __init__(self):
        self.alpha_cql = 1.0
        self.lambda_bc = 1.0
        self.gamma = 0.99
        self.tau = 0.005
        self.batch_size = 256
        self.n_steps = 20000
        self.lr_actor = 3e-4
        self.lr_critic = 3e-4
        self.n_samples = 10  # uniform actions in the conservative penalty, the policy action comes on top
        self.max_grad_norm = 10.0
        self.hidden = (128, 128)
        self.log_every = 1000
        self.eval_every = 0  # steps between reward-improvement evaluations, 0: only after the last step

    def validate(self):
        if self.alpha_cql < 0 or self.lambda_bc < 0:
            raise ValueError(f"alpha_cql and lambda_bc must be >= 0, got {self.alpha_cql}, {self.lambda_bc}")
        if not 0 < self.gamma < 1:
            raise ValueError(f"gamma must be in (0, 1), got {self.gamma}")
        if not 0 < self.tau <= 1:
            raise ValueError(f"tau must be in (0, 1], got {self.tau}")
        if self.batch_size < 1 or self.n_steps < 0 or self.n_samples < 1:
            raise ValueError(f"Invalid batch_size {self.batch_size}, n_steps {self.n_steps} "
                             f"or n_samples {self.n_samples}")
        if self.lr_actor < 0 or self.lr_critic < 0:
            raise ValueError(f"Learning rates must be >= 0, got {self.lr_actor}, {self.lr_critic}")
        if self.max_grad_norm is not None and self.max_grad_norm <= 0:
            raise ValueError(f"max_grad_norm must be positive or None, got {self.max_grad_norm}")
        return self


def td_target(batch: Batch, critic: TwinCritic, actor: Actor, gamma) -> np.ndarray:
    u_next = actor(batch.next_obs)[0].data
    q_next = critic.target(batch.next_obs, u_next)
    return batch.rewards + gamma * (1.0 - batch.dones) * q_next


def sample_penalty_actions(rng: np.random.Generator, u_pi, n_samples) -> np.ndarray:
    """[B, n_samples + 1, 2]: uniform draws from the action box, then the policy action."""
    u_rand = rng.uniform(-1, 1, size=(len(u_pi), n_samples, ACTION_DIM))
    return np.concatenate([u_rand, u_pi[:, np.newaxis, :]], axis=1)


def cql_critic_loss(batch: Batch, critic: TwinCritic, actor: Actor, cfg: CqlBcConfig, rng: np.random.Generator):
    """(loss of Q1, loss of Q2); gradients reach the online critics only."""
    y = td_target(batch, critic=critic, actor=actor, gamma=cfg.gamma)
    q1, q2 = critic(batch.obs, batch.actions)

    b = len(batch)
    u = sample_penalty_actions(rng, u_pi=actor(batch.obs)[0].data, n_samples=cfg.n_samples)
    m = u.shape[1]
    q1_all, q2_all = critic(np.repeat(batch.obs, m, axis=0), u.reshape(-1, ACTION_DIM))

    losses = []
    for q, q_all in ((q1, q1_all), (q2, q2_all)):
        td = tn.mul(tn.mean(tn.square(tn.sub(q, y))), 0.5)
        penalty = tn.sub(tn.mean(tn.logsumexp(tn.reshape(q_all, (b, m)), axis=-1)), tn.mean(q))
        losses.append(tn.add(td, tn.mul(penalty, cfg.alpha_cql)))
    return tuple(losses)


def bc_actor_loss(batch: Batch, actor: Actor, critic: TwinCritic, cfg: CqlBcConfig):
    mean, _ = actor(batch.obs)
    q1, q2 = critic(batch.obs, mean)
    q_term = tn.mean(tn.neg(tn.minimum(q1, q2)))
    bc_term = tn.mean(tn.sum(tn.square(tn.sub(mean, batch.actions)), axis=-1))
    return tn.add(q_term, tn.mul(bc_term, cfg.lambda_bc))


def bc_error(batch: Batch, actor: Actor) -> float:
    """Mean squared error of the mean action per action dimension, normalized units."""
    return float(np.mean((actor.act(batch.obs) - batch.actions)**2))
