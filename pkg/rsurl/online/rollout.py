"""
Rollout collection over a pool of simulators. Every running CAV acts with its role's actor; the recorded tuple
per agent step is (o_t, a_t, r_{t+1}, V(o_t), log pi(a_t|o_t)) plus the successor observation and done flag.
Finished episodes are summarized and their simulator is reset in place with the env's next episode seed.
"""
import numpy as np

from rsurl import random2
from rsurl.env.config import ScenarioConfig
from rsurl.env.routes import ROLES
from rsurl.env.state import WorldState
from rsurl.env.observation import build_observation
from rsurl.env.world import reset, step
from rsurl.nets.actor import RoleActorSet, log_prob_and_entropy, to_physical
from rsurl.nets.critic import ValueNet
from rsurl.online.per import TransitionEntry


def episode_summary(state: WorldState, returns: dict) -> dict:
    """Per-episode metrics: mean CAV return, outcome flags and mean travel time of the arrived CAVs."""
    cavs = state.cavs(active_only=False)
    times = [v.travel_time for v in cavs if v.travel_time is not None]
    return dict(seed=state.seed, reward=float(np.mean(list(returns.values()))) if returns else 0.0,
                success=state.outcome == "success", collision=state.outcome == "collision",
                timeout=state.outcome == "timeout", travel_time=float(np.mean(times)) if times else np.nan,
                n_steps=state.step, stage=state.config.n_cav)


class EnvPool:
    """
    n_envs simulators with independent episode seed streams spawned from seed. The k-th episode of env i always
    gets the same seed, whatever happens in the other envs.
    """

    def __init__(self, config: ScenarioConfig, seed, n_envs):
        if n_envs < 1:
            raise ValueError(f"n_envs must be positive, got {n_envs}")
        self.config = config.validate()
        self.streams = random2.spawn(seed, n_envs)
        self.states = [None] * n_envs
        self.returns = [None] * n_envs
        self.episode_ids = [None] * n_envs
        self.n_started = 0
        self.finished = []  # episode summaries in completion order
        for i in range(n_envs):
            self.reset_env(i)

    def __len__(self):
        return len(self.states)

    def _next_seed(self, i):
        return int(self.streams[i].spawn(1)[0].generate_state(1)[0])

    def reset_env(self, i):
        self.states[i] = reset(self.config, self._next_seed(i))
        self.returns[i] = {v.id: 0.0 for v in self.states[i].cavs(active_only=False)}
        self.episode_ids[i] = self.n_started
        self.n_started += 1

    def set_config(self, config: ScenarioConfig):
        """Switch every env to config, e.g. the next curriculum stage; running episodes are dropped."""
        self.config = config.validate()
        for i in range(len(self)):
            self.reset_env(i)

    def pop_finished(self) -> list:
        finished, self.finished = self.finished, []
        return finished

    def step_env(self, i, actions: dict):
        state = self.states[i]
        try:
            state, results = step(state, actions)
        except Exception as e:
            context = f"env {i}, episode {self.episode_ids[i]}, seed {state.seed}, step {state.step}"
            try:
                err = type(e)(f"{e} ({context})")
            except TypeError:
                raise e
            raise err from e
        for k, res in results.items():
            self.returns[i][k] += res.reward
        return state, results

    def finish_if_done(self, i):
        state = self.states[i]
        if not state.done:
            return False
        self.finished.append(dict(episode_summary(state, self.returns[i]), env=i))
        self.reset_env(i)
        return True


class Rollout:
    """Per-agent trajectories of one collection phase, keyed by (env, episode, agent), in step order."""

    def __init__(self):
        self.trajectories = {}
        self.bootstrap = {}  # key -> V(o_T) of trajectories cut by the horizon
        self.episodes = []

    def add(self, entry: TransitionEntry):
        self.trajectories.setdefault((entry.env, entry.episode, entry.agent), []).append(entry)

    def entries(self) -> list:
        return [e for k in sorted(self.trajectories) for e in self.trajectories[k]]

    def __len__(self):
        return sum(len(t) for t in self.trajectories.values())


def sample_actions(actors: RoleActorSet, obs, roles, rng: np.random.Generator):
    """Gaussian samples (normalized, not clamped) and their log-probabilities; draws role by role in fixed order."""
    obs = np.atleast_2d(obs)
    roles = np.asarray(roles)
    u = np.zeros((len(obs), 2))
    logp = np.zeros(len(obs))
    for role in ROLES:
        i = np.nonzero(roles == role)[0]
        if len(i) == 0:
            continue
        mean, std = actors[role](obs[i])
        u[i] = mean.data + std.data * rng.standard_normal((len(i), 2))
        logp[i] = log_prob_and_entropy(mean.data, std.data, u[i])[0].data
    return u, logp


def recompute_log_probs(entries, actors: RoleActorSet) -> np.ndarray:
    obs = np.stack([e.obs for e in entries])
    roles = np.array([e.role for e in entries])
    u = np.stack([e.action for e in entries])
    logp = np.zeros(len(entries))
    for role in ROLES:
        i = np.nonzero(roles == role)[0]
        if len(i) > 0:
            mean, std = actors[role](obs[i])
            logp[i] = log_prob_and_entropy(mean.data, std.data, u[i])[0].data
    return logp


def collect_rollout(pool: EnvPool, actors: RoleActorSet, value: ValueNet, horizon, rng: np.random.Generator):
    """
    horizon steps in every env of the pool with frozen networks. Actions are sampled from the role's Gaussian,
    clamped to [-1, 1] and mapped to physical units. Returns a Rollout whose episodes are the summaries of the
    episodes finished during collection.
    """
    rollout = Rollout()
    for _ in range(horizon):
        agents = [(i, v.id, v.role) for i, state in enumerate(pool.states) for v in state.cavs()]
        obs = np.stack([build_observation(pool.states[i], k) for i, k, _ in agents])
        u, logp = sample_actions(actors, obs, [r for _, _, r in agents], rng=rng)
        values = value(obs).data

        for i in range(len(pool)):
            j = [n for n, (ie, _, _) in enumerate(agents) if ie == i]
            actions = {agents[n][1]: to_physical(np.clip(u[n], -1, 1)) for n in j}
            episode, t = pool.episode_ids[i], pool.states[i].step
            state, results = pool.step_env(i, actions)
            for n in j:
                k, role = agents[n][1], agents[n][2]
                res = results[k]
                rollout.add(TransitionEntry(env=i, agent=k, episode=episode, step=t, role=role, obs=obs[n],
                                            action=u[n], reward=res.reward, next_obs=build_observation(state, k),
                                            done=res.terminal, value=values[n], logp=logp[n]))
            for k in sorted(results.keys() - actions.keys()):
                # a CAV parked at its goal: the success bonus goes to its arrival transition
                tr = rollout.trajectories.get((i, episode, k))
                if tr:
                    tr[-1].reward += results[k].reward
            pool.finish_if_done(i)

    open_ = [k for k, tr in rollout.trajectories.items() if not tr[-1].done]
    if open_:
        v = value(np.stack([rollout.trajectories[k][-1].next_obs for k in open_])).data
        rollout.bootstrap = dict(zip(open_, v.tolist()))
    rollout.episodes = pool.pop_finished()
    return rollout
