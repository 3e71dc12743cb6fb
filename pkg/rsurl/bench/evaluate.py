"""
Deterministic-policy evaluation: failure rate split into collisions and timeouts, and the spawn-to-goal travel
time of the CAVs in successful episodes.
"""
import os

import numpy as np
import pandas as pd

from rsurl import files, mp2, random2
from rsurl.printing import print2, progress_bar
from rsurl.object2 import SlotsObject
from rsurl.env.config import ScenarioConfig
from rsurl.env.routes import ROLES
from rsurl.env.observation import ObsLayout
from rsurl.env.background import scripted_action
from rsurl.env.world import reset, run_episode
from rsurl.nets.actor import RoleActorSet
from rsurl.rsu.link import LinkConfig
from rsurl.rsu.coordinator import RsuConfig
from rsurl.rsu.loop import run_rsu_episode

POLICIES = ("learned", "scripted")
EPISODE_COLUMNS = ("episode", "seed", "outcome", "reward", "travel_time", "n_steps")
RUNNING_COLUMNS = ("episode", "failure", "travel_time", "failure_rate", "mean_travel_time")

SUMMARY = "summary.json"
EPISODES = "episodes.csv"
RUNNING = "running.csv"


class EvalSummary(SlotsObject):
    __slots__ = ("n_episodes",
                 "failure", "collision", "timeout",  # % of the episodes
                 "travel_time",                       # s, mean over the CAVs of successful episodes
                 "travel_time_per_agent",             # s, per CAV in spawn order
                 "n_cav", "map", "policy", "seed", "config_hash")

    def __init__(self):
        self.n_episodes = 0
        self.failure = 0.0
        self.collision = 0.0
        self.timeout = 0.0
        self.travel_time = np.nan
        self.travel_time_per_agent = ()
        self.n_cav = 1
        self.map = "default"
        self.policy = "learned"
        self.seed = None
        self.config_hash = None

    def validate(self):
        if not np.isclose(self.collision + self.timeout, self.failure, rtol=0, atol=1e-9):
            raise ValueError(f"collision {self.collision}% + timeout {self.timeout}% != failure {self.failure}%")
        times = [self.travel_time, *self.travel_time_per_agent]
        if any(np.isfinite(t) and t <= 0 for t in times):
            raise ValueError(f"Travel times must be positive, got {times}")
        return self

    def __str__(self):
        return (f"{self.map} map, {self.n_cav} CAV(s), {self.policy} policy, {self.n_episodes} episodes: "
                f"failure {self.failure:.2f}% (collision {self.collision:.2f}%, timeout {self.timeout:.2f}%), "
                f"travel time {self.travel_time:.2f} s")


def check_compatible(actors: RoleActorSet, config: ScenarioConfig):
    """The checkpoint has to cover every role and match the scenario's observation layout."""
    missing = [r for r in ROLES if r not in actors]
    if missing:
        raise ValueError(f"Checkpoint has no actor for the role(s) {missing}")
    layout = ObsLayout(k_veh=config.k_veh, k_ped=config.k_ped)
    for role, actor in actors.items():
        if actor.layout != layout:
            raise ValueError(f"Actor '{role}' expects {actor.layout}, the scenario produces {layout}")


def scripted_policy(state):
    return {v.id: scripted_action(state, v) for v in state.cavs()}


def evaluate_episode(config: ScenarioConfig, seed, policy="learned", actors: RoleActorSet = None,
                     link: LinkConfig = None, rsu_config: RsuConfig = None) -> dict:
    """
    One episode; a learned policy runs through the RSU loop, the scripted one or any callable
    state -> {id: action} runs in-process.
    """
    if policy == "learned":
        state, returns, *_ = run_rsu_episode(config, seed, actors=actors, link=link, rsu_config=rsu_config)
    else:
        state = reset(config, seed)
        returns = run_episode(state, scripted_policy if policy == "scripted" else policy)

    cavs = sorted(state.cavs(active_only=False), key=lambda v: v.id)
    times = [v.travel_time for v in cavs]
    success = state.outcome == "success"
    return dict(seed=seed, outcome=state.outcome, reward=float(np.mean(list(returns.values()))),
                travel_time=float(np.mean(times)) if success else np.nan,
                travel_time_per_agent=times if success else [np.nan] * len(cavs), n_steps=state.step)


def summarize(rows, n_cav, **kwargs) -> EvalSummary:
    n = len(rows)
    outcomes = np.array([r["outcome"] for r in rows], dtype=object)
    success = outcomes == "success"

    s = EvalSummary().update(n_episodes=n, n_cav=n_cav, **kwargs)
    if n > 0:
        s.collision = 100 * np.count_nonzero(outcomes == "collision") / n
        s.timeout = 100 * np.count_nonzero(outcomes == "timeout") / n
        s.failure = 100 * np.count_nonzero(~success) / n
    if np.any(success):
        per_agent = np.array([r["travel_time_per_agent"] for r, ok in zip(rows, success) if ok])
        s.travel_time = float(per_agent.mean())
        s.travel_time_per_agent = tuple(float(t) for t in per_agent.mean(axis=0))
    else:
        s.travel_time_per_agent = (np.nan,) * n_cav
    return s.validate()


def episodes_frame(rows) -> pd.DataFrame:
    return pd.DataFrame([[i] + [r[c] for c in EPISODE_COLUMNS[1:]] for i, r in enumerate(rows)],
                        columns=list(EPISODE_COLUMNS))


def running_frame(rows) -> pd.DataFrame:
    """Failure rate (%) and mean travel time of the successful episodes after each episode."""
    failure = np.array([r["outcome"] != "success" for r in rows], dtype=float)
    tt = np.array([r["travel_time"] for r in rows], dtype=float)
    ok = np.isfinite(tt)
    n_ok = np.cumsum(ok)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean_tt = np.where(n_ok > 0, np.cumsum(np.where(ok, tt, 0.0)) / n_ok, np.nan)
    return pd.DataFrame(dict(episode=np.arange(len(rows)), failure=failure, travel_time=tt,
                             failure_rate=100 * np.cumsum(failure) / np.arange(1, len(rows) + 1),
                             mean_travel_time=mean_tt), columns=list(RUNNING_COLUMNS))


def evaluate(config: ScenarioConfig, n_episodes, seed=0, actors: RoleActorSet = None, policy="learned",
             link: LinkConfig = None, rsu_config: RsuConfig = None, n_processes=1, config_hash=None, verbose=None):
    """
    Evaluate n_episodes episodes with per-episode seeds spawned from seed; the result does not depend on
    n_processes. Returns (EvalSummary, per-episode rows).
    """
    config.validate()
    if isinstance(policy, str) and policy not in POLICIES:
        raise ValueError(f"Unknown policy '{policy}', expected one of {POLICIES} or a callable")
    if policy == "learned":
        if actors is None:
            raise ValueError("The learned policy needs actors")
        check_compatible(actors, config)

    seeds = random2.spawn_ints(seed, n_episodes)

    def fun(seeds_):
        res = []
        for i, s in enumerate(seeds_):
            res.append(evaluate_episode(config, s, policy=policy, actors=actors, link=link,
                                        rsu_config=rsu_config))
            if n_processes == 1:
                progress_bar(i=i, n=len(seeds_), prefix="evaluate", verbose=verbose)
        return res

    rows = mp2.mp_wrapper(seeds, fun=fun, n_processes=n_processes)
    summary = summarize(rows, n_cav=config.n_cav, map=config.map.name,
                        policy=policy if isinstance(policy, str) else "custom", seed=seed, config_hash=config_hash)
    print2(str(summary), verbose=verbose)
    return summary, rows


def save_evaluation(directory, summary: EvalSummary, rows):
    files.save_json(summary.to_dict(), os.path.join(directory, SUMMARY))
    for name, df in ((EPISODES, episodes_frame(rows)), (RUNNING, running_frame(rows))):
        files.save_csv(df, os.path.join(directory, name), seed=summary.seed, config_hash=summary.config_hash)


def load_summary(directory) -> EvalSummary:
    return EvalSummary.from_dict(files.load_json(os.path.join(directory, SUMMARY)))
