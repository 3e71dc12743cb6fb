"""
Prioritized replay: P(t) = p_t^alpha / sum_k p_k^alpha with p_t = |delta_t| + eps, importance weights
w_t = (B P(t))^-beta with B the number of stored entries.
"""
import numpy as np

EPS_PER = 1e-4


class SumTree:
    """
    Complete binary tree over a power-of-two number of leaves stored in one array: node i has the children
    2i+1 and 2i+2, the leaves start at n_leaves - 1. A parent always holds the exact sum of its two children.
    """
    __slots__ = ("capacity", "n_leaves", "depth", "tree")

    def __init__(self, capacity):
        if capacity < 1:
            raise ValueError(f"capacity must be positive, got {capacity}")
        self.capacity = int(capacity)
        self.depth = int(np.ceil(np.log2(self.capacity))) if self.capacity > 1 else 0
        self.n_leaves = 2 ** self.depth
        self.tree = np.zeros(2 * self.n_leaves - 1)

    @property
    def total(self):
        return float(self.tree[0])

    def leaves(self):
        return self.tree[self.n_leaves - 1:self.n_leaves - 1 + self.capacity]

    def __getitem__(self, i):
        return self.tree[self.n_leaves - 1 + i]

    def set(self, i, value):
        if not 0 <= i < self.capacity:
            raise IndexError(f"Leaf {i} outside [0, {self.capacity})")
        j = self.n_leaves - 1 + i
        self.tree[j] = value
        while j > 0:
            j = (j - 1) // 2
            self.tree[j] = self.tree[2 * j + 1] + self.tree[2 * j + 2]

    def find(self, u):
        """Leaf indices whose prefix-sum interval contains each value of u, vectorized over u."""
        u = np.array(u, dtype=float, ndmin=1)
        j = np.zeros(len(u), dtype=int)
        for _ in range(self.depth):
            left = 2 * j + 1
            right = u >= self.tree[left]
            u = np.where(right, u - self.tree[left], u)
            j = np.where(right, left + 1, left)
        return j - (self.n_leaves - 1)

    def clear(self):
        self.tree[:] = 0.0


class TransitionEntry:
    """One agent step as collected, plus what the update phase attaches to it."""
    __slots__ = ("env", "agent", "episode", "step", "role",
                 "obs", "action", "reward", "next_obs", "done",
                 "value", "logp",
                 "priority", "delta", "advantage", "ret")

    def __init__(self, env, agent, episode, step, role, obs, action, reward, next_obs, done, value, logp):
        if not np.isfinite(logp):
            raise ValueError(f"Non-finite behaviour log-probability {logp} of agent {agent}, env {env}")
        self.env = env
        self.agent = agent
        self.episode = episode
        self.step = step
        self.role = role
        self.obs = obs
        self.action = action  # normalized Gaussian sample before clamping
        self.reward = reward
        self.next_obs = next_obs
        self.done = done
        self.value = value
        self.logp = logp
        self.priority = None
        self.delta = None
        self.advantage = None
        self.ret = None

    def __repr__(self):
        return (f"TransitionEntry(env={self.env}, agent={self.agent}, step={self.step}, {self.role}, "
                f"reward={self.reward:.3f}, done={self.done})")


class PerBuffer:
    """Fixed-capacity store with FIFO eviction; sampling is proportional to priority^alpha."""

    def __init__(self, capacity, alpha=0.6, eps=EPS_PER):
        if eps <= 0:
            raise ValueError(f"eps must be positive, got {eps}")
        self.alpha = alpha
        self.eps = eps
        self.tree = SumTree(capacity)
        self.entries = [None] * self.tree.capacity
        self.size = 0
        self.next = 0

    @property
    def capacity(self):
        return self.tree.capacity

    def __len__(self):
        return self.size

    def __getitem__(self, i) -> TransitionEntry:
        return self.entries[i]

    def _priority(self, delta):
        delta = float(delta)
        if not np.isfinite(delta):
            raise ValueError(f"Non-finite TD error {delta}")
        return abs(delta) + self.eps

    def insert(self, entry: TransitionEntry, delta) -> int:
        i = self.next
        entry.priority = self._priority(delta)
        self.entries[i] = entry
        self.tree.set(i, entry.priority ** self.alpha)
        self.next = (self.next + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)
        return i

    def update(self, indices, deltas):
        for i, d in zip(np.asarray(indices, dtype=int), np.asarray(deltas, dtype=float)):
            if not 0 <= i < self.size:
                raise IndexError(f"Index {i} not stored, size {self.size}")
            self.entries[i].priority = self._priority(d)
            self.tree.set(i, self.entries[i].priority ** self.alpha)

    def probabilities(self) -> np.ndarray:
        leaves = self.tree.leaves()[:self.size]
        return leaves / leaves.sum()

    def sample(self, rng: np.random.Generator, batch_size, beta, normalize=True):
        """
        batch_size indices drawn independently with probability P(t), with replacement, and their importance
        weights (B P(t))^-beta, divided by the batch maximum if normalize.
        """
        if self.size == 0:
            raise ValueError("Cannot sample from an empty buffer")
        total = self.tree.total
        u = rng.uniform(0.0, total, size=batch_size)
        idx = self.tree.find(u)
        idx = np.minimum(idx, self.size - 1)  # rounding can step past the last stored leaf

        p = self.tree.leaves()[idx] / total
        w = raw_weights(p, n=self.size, beta=beta)
        if normalize:
            w = w / w.max()
        return idx, w

    def clear(self):
        self.tree.clear()
        self.entries = [None] * self.capacity
        self.size = 0
        self.next = 0


def raw_weights(p, n, beta):
    return (n * np.asarray(p, dtype=float)) ** (-beta)


def per_insert(buffer: PerBuffer, entry: TransitionEntry, delta):
    return buffer.insert(entry, delta)


def per_update(buffer: PerBuffer, indices, deltas):
    buffer.update(indices, deltas)


def per_sample(buffer: PerBuffer, batch_size, beta, rng: np.random.Generator, normalize=True):
    return buffer.sample(rng, batch_size=batch_size, beta=beta, normalize=normalize)
