import numpy as np

ADV_STD_MIN = 1e-8


def compute_gae(rewards, values, dones, gamma, lam, last_value=0.0):
    """
    Generalized advantage estimates of one agent's consecutive transitions.

        delta_t = r_t + gamma (1 - d_t) V(o_{t+1}) - V(o_t)
        A_t     = delta_t + gamma lam (1 - d_t) A_{t+1}
        R_t     = A_t + V(o_t)

    values[t] = V(o_t); V(o_T) = last_value bootstraps a trajectory cut by the rollout horizon, it is ignored
    after a terminal transition. A terminal transition in the middle of the arrays starts a new episode.
    Returns (advantages, returns, deltas).
    """
    rewards = np.asarray(rewards, dtype=float)
    values = np.asarray(values, dtype=float)
    dones = np.asarray(dones, dtype=bool)
    if not (rewards.shape == values.shape == dones.shape) or rewards.ndim != 1:
        raise ValueError(f"rewards {rewards.shape}, values {values.shape} and dones {dones.shape} must be aligned "
                         f"1D arrays")

    n = len(rewards)
    not_done = 1.0 - dones
    next_values = np.append(values[1:], last_value)
    deltas = rewards + gamma * not_done * next_values - values

    advantages = np.zeros(n)
    a = 0.0
    for t in reversed(range(n)):
        a = deltas[t] + gamma * lam * not_done[t] * a
        advantages[t] = a
    return advantages, advantages + values, deltas


def standardize(x):
    """Zero mean and unit standard deviation; a constant batch only gets centered."""
    x = np.asarray(x, dtype=float)
    if len(x) == 0:
        return x
    std = x.std()
    return (x - x.mean()) / (std if std > ADV_STD_MIN else 1.0)
