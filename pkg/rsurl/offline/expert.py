"""
Synthetic pre-training corpus: the scripted yield-and-go controller drives the CAVs, with Gaussian action noise.
A fraction of the episodes is degraded (larger noise and random hesitation), so the corpus mixes expert and
mediocre behaviour like a recorded dataset does.
"""
import os

import numpy as np
import pandas as pd

from rsurl import files, random2
from rsurl.printing import print2, progress_bar
from rsurl.env.config import ScenarioConfig, ACTION_RANGE, A_MIN, clamp_action
from rsurl.env.state import WorldState
from rsurl.env.background import scripted_action
from rsurl.env.world import reset, run_episode
from rsurl.env.log import TrajectoryLog, concat

EXPERT_NOISE = 0.1  # std as fraction of the action range
DEGRADED_NOISE = 0.4
DEGRADED_FRACTION = 0.3
HESITATION_RATE = 0.03  # per step and CAV
HESITATION_STEPS = (5, 20)
HESITATION_ACC = A_MIN / 2

TRAJECTORIES = "trajectories.csv"
EPISODES = "episodes.csv"


class ExpertPolicy:
    """Noisy scripted controller for all CAVs; draws only from its own rng, never from the world's."""
    __slots__ = ("rng", "noise", "hesitation_rate", "hesitating")

    def __init__(self, rng: np.random.Generator, noise=EXPERT_NOISE, hesitation_rate=0.0):
        self.rng = rng
        self.noise = noise
        self.hesitation_rate = hesitation_rate
        self.hesitating = {}  # id -> remaining steps

    def __call__(self, state: WorldState) -> dict:
        actions = {}
        for v in state.cavs():
            a = scripted_action(state, v)
            if self.hesitation_rate > 0:
                n = self.hesitating.get(v.id, 0)
                if n == 0 and self.rng.uniform() < self.hesitation_rate:
                    n = int(self.rng.integers(*HESITATION_STEPS))
                if n > 0:
                    a[0] = min(a[0], HESITATION_ACC)
                    self.hesitating[v.id] = n - 1
            a = a + random2.noise(self.rng, shape=2, scale=self.noise * ACTION_RANGE)
            actions[v.id] = clamp_action(a)
        return actions


def episode_seeds(seed, n_episodes):
    """(scene seed, SeedSequence of the policy noise) per episode, and the degraded mask."""
    ss_split, ss_episodes = random2.spawn(seed, 2)
    children = ss_episodes.spawn(n_episodes)
    seeds = [int(c.generate_state(1)[0]) for c in children]
    noise = [c.spawn(1)[0] for c in children]
    return seeds, noise, random2.rng(ss_split)


def generate_corpus(config: ScenarioConfig, n_episodes, seed=0,
                    degraded_fraction=DEGRADED_FRACTION, expert_noise=EXPERT_NOISE, degraded_noise=DEGRADED_NOISE,
                    verbose=None):
    """
    Roll out n_episodes scripted episodes. Exactly round(degraded_fraction * n_episodes) of them are degraded.
    Returns (trajectory log frame, per-episode frame with episode, seed, degraded, outcome, reward, n_steps).
    """
    config.validate()
    if not 0 <= degraded_fraction <= 1:
        raise ValueError(f"degraded_fraction must be in [0, 1], got {degraded_fraction}")

    seeds, noise, rng_split = episode_seeds(seed=seed, n_episodes=n_episodes)
    degraded = np.zeros(n_episodes, dtype=bool)
    degraded[rng_split.permutation(n_episodes)[:int(round(degraded_fraction * n_episodes))]] = True

    frames, rows = [], []
    for e in range(n_episodes):
        rng = np.random.default_rng(noise[e])
        if degraded[e]:
            policy = ExpertPolicy(rng=rng, noise=degraded_noise, hesitation_rate=HESITATION_RATE)
        else:
            policy = ExpertPolicy(rng=rng, noise=expert_noise)

        state = reset(config, seeds[e])
        log = TrajectoryLog()
        returns = run_episode(state, policy, on_step=log.on_step(episode=e))
        frames.append(log.to_frame())
        rows.append(dict(episode=e, seed=seeds[e], degraded=bool(degraded[e]), outcome=state.outcome,
                         reward=float(np.mean(list(returns.values()))), n_steps=state.step))
        progress_bar(i=e, n=n_episodes, prefix="corpus", verbose=verbose)

    info = pd.DataFrame(rows, columns=["episode", "seed", "degraded", "outcome", "reward", "n_steps"])
    if n_episodes > 0:
        print2(f"Corpus: {n_episodes} episodes, {int(degraded.sum())} degraded, "
               f"success rate {np.mean(info.outcome == 'success'):.3f}", verbose=verbose)
    return concat(frames), info


def save_corpus(directory, frame, info, seed=None, config_hash=None):
    files.save_csv(frame, os.path.join(directory, TRAJECTORIES), seed=seed, config_hash=config_hash)
    files.save_csv(info, os.path.join(directory, EPISODES), seed=seed, config_hash=config_hash)
    return os.path.join(directory, TRAJECTORIES)
