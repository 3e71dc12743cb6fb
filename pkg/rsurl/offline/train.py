import os
import tempfile

import numpy as np
import pandas as pd

from rsurl import DivergenceError, mp2, random2
from rsurl.printing import print2
from rsurl.time2 import tic, toc
from rsurl.math2 import ratio_or_nan
from rsurl.env.config import ScenarioConfig
from rsurl.env.routes import ROLES, role2index
from rsurl.env.observation import ObsLayout, build_observation
from rsurl.env.background import scripted_action
from rsurl.env.world import run_episode
from rsurl.nets.actor import Actor, RoleActorSet, default_arch, to_physical
from rsurl.nets.critic import TwinCritic
from rsurl.nets.optimizer import Adam, NonFiniteGradientError
from rsurl.nets.io import save_run
from rsurl.offline.dataset import OfflineDataset
from rsurl.offline.cql import CqlBcConfig, cql_critic_loss, bc_actor_loss, bc_error

METRIC_COLUMNS = ("step", "q1_loss", "q2_loss", "actor_loss", "bc_mse", "reward_improvement")


# Reward improvement
# ----------------------------------------------------------------------------------------------------------------------
def dataset_policy(actors: RoleActorSet, record):
    """
    Mean action of the role's actor for CAVs whose role has one, the logged action for the others; a CAV that
    outlives its log falls back to the scripted controller.
    """
    def policy(state):
        actions = {}
        for v in state.cavs():
            if v.role in actors:
                actions[v.id] = to_physical(actors[v.role].act(build_observation(state, v.id)))[0]
            elif state.step < len(record.action_log) and v.id in record.action_log[state.step]:
                actions[v.id] = record.action_log[state.step][v.id]
            else:
                actions[v.id] = scripted_action(state, v)
        return actions

    return policy


def reward_improvement(actors: RoleActorSet, dataset: OfflineDataset, config: ScenarioConfig) -> dict:
    """
    The policy's mean episodic reward against the dataset's mean relabelled episodic reward, both over the CAVs of
    the dataset's role in every dataset episode:
        percent = 100 + 100 * (policy - dataset) / |dataset|
    100 is on par and a better policy scores above 100 whatever the sign of the rewards; for a positive dataset mean
    this is 100 * policy / dataset. NaN if the dataset's mean is 0.
    Each episode is re-simulated from its initial scene; numerator (policy) and denominator (dataset) are reported raw.
    """
    numerator, denominator = [], []
    for e in sorted(dataset.episodes):
        record = dataset.episodes[e]
        ids = [i for i, r in record.roles.items() if r == dataset.role]
        returns = run_episode(record.initial_state(config), dataset_policy(actors, record))
        numerator.append(np.mean([returns[i] for i in ids]))
        denominator.append(np.mean([record.returns[i] for i in ids]))

    if not denominator:
        return dict(percent=np.nan, numerator=np.nan, denominator=np.nan, n_episodes=0)
    num, den = float(np.mean(numerator)), float(np.mean(denominator))
    percent = 100 + 100 * ratio_or_nan(num - den, abs(den))
    return dict(percent=percent, numerator=num, denominator=den, n_episodes=len(denominator))


# Training
# ----------------------------------------------------------------------------------------------------------------------
def new_networks(role, dataset: OfflineDataset, cfg: CqlBcConfig, layout: ObsLayout, seed):
    """Actor and twin critic with normalizers set to the dataset statistics."""
    ss_actor, ss_critic = random2.spawn(seed, 2)
    arch = default_arch(layout=layout, hidden=cfg.hidden)
    actor = Actor(role, rng=np.random.default_rng(ss_actor), arch=arch)
    critic = TwinCritic(rng=np.random.default_rng(ss_critic), arch=arch)
    for nz in (actor.encoder.normalizer, critic.normalizer):
        nz.buffers["mean"] = dataset.mean.copy()
        nz.buffers["std"] = dataset.std.copy()
    return actor, critic


def _diverged(role, step, actor, critic, directory, seed):
    directory = tempfile.mkdtemp(prefix=f"rsurl-diverged-{role}-") if directory is None else directory
    seed = int(seed) if isinstance(seed, (int, np.integer)) else None
    save_run(directory, RoleActorSet({role: actor}), phase="offline", seed=seed, critic=critic)
    raise DivergenceError(f"Offline training of '{role}' diverged at step {step}, "
                          f"last finite state saved to '{directory}'", checkpoint=directory)


def train_role(dataset: OfflineDataset, cfg: CqlBcConfig, seed=0, layout: ObsLayout = None,
               scenario: ScenarioConfig = None, directory=None, verbose=None):
    """
    Alternate CQL critic and BC actor steps on one role's dataset, soft-updating the target critics every step.
    Returns (actor, critic, metrics frame with one row per gradient step). reward_improvement is evaluated every
    cfg.eval_every steps and after the last one if a scenario is given, NaN otherwise.
    """
    cfg.validate()
    role = dataset.role
    if len(dataset) == 0:
        raise ValueError(f"The '{role}' dataset is empty")
    layout = ObsLayout() if layout is None else layout
    layout.check(dataset.obs)

    ss_nets, ss_batches = random2.spawn(seed, 2)
    actor, critic = new_networks(role, dataset, cfg=cfg, layout=layout, seed=ss_nets)
    rng = np.random.default_rng(ss_batches)
    opt_critic = Adam(critic.online_parameters(), lr=cfg.lr_critic, max_norm=cfg.max_grad_norm, verbose=verbose)
    opt_actor = Adam(actor.parameters(), lr=cfg.lr_actor, max_norm=cfg.max_grad_norm, verbose=verbose)
    batch_size = min(cfg.batch_size, len(dataset))

    rows = []
    tic(f"offline-{role}")
    for i in range(cfg.n_steps):
        batch = dataset.sample(rng, batch_size)

        opt_critic.zero_grad()
        l1, l2 = cql_critic_loss(batch, critic=critic, actor=actor, cfg=cfg, rng=rng)
        if not (np.isfinite(l1.item()) and np.isfinite(l2.item())):
            _diverged(role, i, actor=actor, critic=critic, directory=directory, seed=seed)
        (l1 + l2).backward()
        try:
            opt_critic.step()
        except NonFiniteGradientError:
            pass

        opt_actor.zero_grad()
        la = bc_actor_loss(batch, actor=actor, critic=critic, cfg=cfg)
        if not np.isfinite(la.item()):
            _diverged(role, i, actor=actor, critic=critic, directory=directory, seed=seed)
        la.backward()
        try:
            opt_actor.step()
        except NonFiniteGradientError:
            pass

        critic.update_targets(cfg.tau)

        ri = np.nan
        last = i == cfg.n_steps - 1
        if scenario is not None and (last or (cfg.eval_every > 0 and (i + 1) % cfg.eval_every == 0)):
            ri = reward_improvement(RoleActorSet({role: actor}), dataset, config=scenario)["percent"]
        rows.append((i, l1.item(), l2.item(), la.item(), bc_error(batch, actor), ri))

        if cfg.log_every > 0 and (i % cfg.log_every == 0 or last):
            print2(f"{role:>8} step {i:>6}: q1 {rows[-1][1]:.4f}, q2 {rows[-1][2]:.4f}, actor {rows[-1][3]:.4f}, "
                   f"bc_mse {rows[-1][4]:.4f}", verbose=verbose)

    toc(f"offline-{role}", verbose=verbose)
    n_skipped = opt_critic.n_skipped + opt_actor.n_skipped
    if n_skipped > 0:
        print2(f"{role}: {n_skipped} optimizer steps skipped on non-finite gradients", verbose=verbose)
    return actor, critic, pd.DataFrame(rows, columns=list(METRIC_COLUMNS))


def train_offline(datasets: dict, cfg: CqlBcConfig = None, seed=0, scenario: ScenarioConfig = None,
                  n_processes=1, directory=None, verbose=None):
    """
    Train one actor and twin critic per role, independently. The per-role seeds are spawned from seed, so the
    result does not depend on n_processes.
    Returns (RoleActorSet, {role: TwinCritic}, {role: metrics frame}).
    """
    cfg = CqlBcConfig() if cfg is None else cfg
    cfg.validate()
    for role in ROLES:
        if role not in datasets or len(datasets[role]) == 0:
            raise ValueError(f"Offline training needs a non-empty dataset for every role, '{role}' has none")

    layout = None if scenario is None else ObsLayout(k_veh=scenario.k_veh, k_ped=scenario.k_ped)
    seeds = random2.spawn(seed, len(ROLES))

    def fun(roles):
        res = []
        for role in roles:
            try:
                actor, critic, metrics = train_role(datasets[role], cfg=cfg, seed=seeds[role2index(role)],
                                                    layout=layout, scenario=scenario,
                                                    directory=None if directory is None else
                                                    os.path.join(directory, f"diverged_{role}"),
                                                    verbose=verbose)
                res.append((role, (actor.state_dict(), actor.arch, critic.state_dict()), metrics))
            except DivergenceError as e:
                res.append((role, e, None))
        return res

    actors, critics, metrics = {}, {}, {}
    for role, res, m in mp2.mp_wrapper(list(ROLES), fun=fun, n_processes=n_processes):
        if isinstance(res, DivergenceError):
            raise res
        actor_state, arch, critic_state = res
        rng = np.random.default_rng(0)  # replaced by the trained parameters
        actors[role] = Actor(role, rng=rng, arch=arch).load_state_dict(actor_state)
        critics[role] = TwinCritic(rng=rng, arch=arch).load_state_dict(critic_state)
        metrics[role] = m

    return RoleActorSet(actors), critics, metrics
