import collections
import tempfile

import numpy as np
import pandas as pd

from rsurl import DivergenceError, random2
from rsurl.printing import print2
from rsurl.time2 import Stopwatch, tic, toc
from rsurl.env.config import ScenarioConfig
from rsurl.env.routes import ROLES
from rsurl.env.observation import ObsLayout
from rsurl.nets.actor import RoleActorSet, default_arch
from rsurl.nets.critic import ValueNet
from rsurl.nets.optimizer import Adam, NonFiniteGradientError
from rsurl.nets.io import save_run
from rsurl.online.config import MappoConfig
from rsurl.online.gae import compute_gae, standardize
from rsurl.online.per import PerBuffer
from rsurl.online.rollout import EnvPool, Rollout, collect_rollout
from rsurl.online.losses import OnlineBatch, critic_loss, actor_loss

CURVE_COLUMNS = ("episode", "reward", "success", "stage", "wall_time")
ARMS = ("offline", "scratch")


class Curriculum:
    """Advances to the next CAV count once the rolling success rate of the current stage reaches the threshold."""

    def __init__(self, stages=(1, 2, 3), threshold=0.85, window=200):
        self.stages = tuple(stages)
        self.threshold = threshold
        self.window = window
        self.i = 0
        self.history = collections.deque(maxlen=window)

    @property
    def stage(self):
        return self.stages[self.i]

    @property
    def final(self):
        return self.i == len(self.stages) - 1

    def success_rate(self):
        return float(np.mean(self.history)) if self.history else np.nan

    def record(self, success) -> bool:
        """Count one episode of the current stage; True if this advanced the stage."""
        self.history.append(bool(success))
        if self.final or len(self.history) < self.window or self.success_rate() < self.threshold:
            return False
        self.i += 1
        self.history.clear()
        return True


def stage_config(scenario: ScenarioConfig, n_cav) -> ScenarioConfig:
    return scenario.copy().update(n_cav=n_cav, n_vehicles=max(scenario.n_vehicles, n_cav))


def new_online_networks(cfg: MappoConfig, scenario: ScenarioConfig, seed, init: RoleActorSet = None):
    """
    Actors (copied from init if given, else fresh) with an attention front-end added when cfg.use_attention,
    and a freshly initialized shared value net. Both ablation arms therefore have the same architecture.
    """
    layout = ObsLayout(k_veh=scenario.k_veh, k_ped=scenario.k_ped)
    arch = default_arch(layout=layout, hidden=cfg.hidden, n_heads=cfg.n_heads, d_model=cfg.d_model, d_k=cfg.d_k)
    ss_actors, ss_attention, ss_value = random2.spawn(seed, 3)

    if init is None:
        actors = RoleActorSet.new(seed=ss_actors, arch=arch)
    else:
        missing = [r for r in ROLES if r not in init]
        if missing:
            raise ValueError(f"Initial actors are missing the roles {missing}")
        actors = init.copy()
        for role, actor in actors.items():
            if actor.layout != layout:
                raise ValueError(f"The '{role}' actor expects {actor.layout}, the scenario produces {layout}")

    if cfg.use_attention:
        rngs = [np.random.default_rng(s) for s in random2.spawn(ss_attention, len(ROLES))]
        for rng, role in zip(rngs, ROLES):
            actors[role].add_attention(rng=rng)

    value = ValueNet(rng=np.random.default_rng(ss_value), arch=dict(arch, use_attention=cfg.use_attention))
    return actors, value


def compute_advantages(rollout: Rollout, cfg: MappoConfig) -> list:
    """GAE per agent trajectory; sets advantage, ret and delta on every entry and returns the entries in order."""
    for key, tr in rollout.trajectories.items():
        adv, ret, delta = compute_gae(rewards=[e.reward for e in tr], values=[e.value for e in tr],
                                      dones=[e.done for e in tr], gamma=cfg.gamma, lam=cfg.lam,
                                      last_value=rollout.bootstrap.get(key, 0.0))
        for e, a, r, d in zip(tr, adv, ret, delta):
            e.advantage, e.ret, e.delta = a, r, d

    entries = rollout.entries()
    if cfg.standardize_advantages:
        for e, a in zip(entries, standardize([e.advantage for e in entries])):
            e.advantage = a
    return entries


def td_errors(batch: OnlineBatch, value: ValueNet, gamma) -> np.ndarray:
    return batch.rewards + gamma * (1.0 - batch.dones) * value(batch.next_obs).data - value(batch.obs).data


def _minibatches(buffer: PerBuffer, cfg: MappoConfig, beta, rng: np.random.Generator):
    """Index sets and IS weights for one epoch: prioritized draws, or a shuffled partition without PER."""
    n = len(buffer)
    n_minibatches = int(np.ceil(n / cfg.minibatch_size))
    if cfg.use_per:
        for _ in range(n_minibatches):
            yield buffer.sample(rng, batch_size=min(cfg.minibatch_size, n), beta=beta,
                                normalize=cfg.normalize_weights)
    else:
        perm = rng.permutation(n)
        for i in range(n_minibatches):
            idx = perm[i * cfg.minibatch_size:(i + 1) * cfg.minibatch_size]
            yield idx, np.ones(len(idx))


class Learner:
    """Optimizers of the shared critic and the role actors; single writer of the parameters."""

    def __init__(self, actors: RoleActorSet, value: ValueNet, cfg: MappoConfig, verbose=None):
        self.actors = actors
        self.value = value
        self.cfg = cfg
        self.opt_value = Adam(value.parameters(), lr=cfg.lr_critic, max_norm=cfg.max_grad_norm, verbose=verbose)
        self.opt_actors = {r: Adam(actors[r].parameters(), lr=cfg.lr_actor, max_norm=cfg.max_grad_norm,
                                   verbose=verbose)
                           for r in ROLES if r in actors}

    @property
    def n_skipped(self):
        return self.opt_value.n_skipped + sum(o.n_skipped for o in self.opt_actors.values())

    @staticmethod
    def _apply(opt: Adam, loss):
        opt.zero_grad()
        loss.backward()
        try:
            opt.step()
        except NonFiniteGradientError:
            pass

    def update(self, entries, beta, rng: np.random.Generator) -> dict:
        """
        Fill a one-cycle replay buffer with the rollout, then n_epochs of minibatch updates: critic first, then
        each role's actor on its own transitions only. Priorities are refreshed with the updated critic.
        Returns mean losses; a non-finite loss returns early with diverged=True, before it is applied.
        """
        cfg = self.cfg
        if not np.all(np.isfinite([e.delta for e in entries])):
            return dict(diverged=True)
        buffer = PerBuffer(capacity=max(len(entries), 1), alpha=cfg.alpha_per, eps=cfg.eps_per)
        for e in entries:
            buffer.insert(e, e.delta)

        losses = dict(value=[], **{r: [] for r in self.opt_actors})
        for _ in range(cfg.n_epochs):
            for idx, w in _minibatches(buffer, cfg=cfg, beta=beta, rng=rng):
                batch = OnlineBatch.from_entries([buffer[i] for i in idx], weights=w, indices=idx)

                lv = critic_loss(batch, self.value)
                if not np.isfinite(lv.item()):
                    return dict(diverged=True)
                self._apply(self.opt_value, lv)
                losses["value"].append(lv.item())

                for role, opt in self.opt_actors.items():
                    b = batch.for_role(role)
                    if len(b) == 0:
                        continue
                    la = actor_loss(b, self.actors[role], clip=cfg.clip, c2=cfg.c2)
                    if not np.isfinite(la.item()):
                        return dict(diverged=True)
                    self._apply(opt, la)
                    losses[role].append(la.item())

                buffer.update(idx, td_errors(batch, self.value, gamma=cfg.gamma))

        return dict(diverged=False, **{k: float(np.mean(v)) if v else np.nan for k, v in losses.items()})


def _diverged(actors, value, directory, seed, init, n_episodes):
    directory = tempfile.mkdtemp(prefix="rsurl-diverged-online-") if directory is None else directory
    seed = int(seed) if isinstance(seed, (int, np.integer)) else None
    save_run(directory, actors, phase="online", seed=seed, init=init, value=value)
    raise DivergenceError(f"Online training diverged after {n_episodes} episodes, last finite state saved to "
                          f"'{directory}'", checkpoint=directory)


def train_online(cfg: MappoConfig = None, scenario: ScenarioConfig = None, init: RoleActorSet = None, seed=0,
                 directory=None, verbose=None):
    """
    Interact-learn loop over the curriculum stages until cfg.n_episodes episodes have finished.
    Returns (actors, value net, curves with one row per episode, per-rollout history).
    """
    cfg = MappoConfig() if cfg is None else cfg
    scenario = ScenarioConfig() if scenario is None else scenario
    cfg.validate()
    scenario.validate()
    init_tag = "scratch" if init is None else "offline"

    ss_nets, ss_envs, ss_update = random2.spawn(seed, 3)
    actors, value = new_online_networks(cfg, scenario, seed=ss_nets, init=init)
    learner = Learner(actors, value, cfg=cfg, verbose=verbose)
    rng = np.random.default_rng(ss_update)

    curriculum = Curriculum(stages=cfg.stages, threshold=cfg.success_threshold, window=cfg.success_window)
    pool = EnvPool(stage_config(scenario, curriculum.stage), seed=ss_envs, n_envs=cfg.n_envs)

    curves, history = [], []
    clock = Stopwatch()
    tic("online")
    while len(curves) < cfg.n_episodes:
        rollout = collect_rollout(pool, actors, value, horizon=cfg.horizon, rng=rng)
        for ep in rollout.episodes:
            if len(curves) >= cfg.n_episodes:
                break
            curves.append((len(curves), ep["reward"], ep["success"], ep["stage"], clock()))
            if ep["stage"] == curriculum.stage and curriculum.record(ep["success"]):
                print2(f"Curriculum: stage {curriculum.stage} CAVs after {len(curves)} episodes", verbose=verbose)
                pool.set_config(stage_config(scenario, curriculum.stage))

        entries = compute_advantages(rollout, cfg)
        if not entries:
            continue
        res = learner.update(entries, beta=cfg.beta(len(curves) / max(cfg.n_episodes, 1)), rng=rng)
        if res.pop("diverged"):
            _diverged(actors, value, directory=directory, seed=seed, init=init_tag, n_episodes=len(curves))

        history.append(dict(n_episodes=len(curves), stage=curriculum.stage, n_transitions=len(entries),
                            success_rate=curriculum.success_rate(), **res))
        if cfg.log_every > 0 and len(history) % cfg.log_every == 0:
            print2(f"online: {len(curves):>6} episodes, stage {curriculum.stage}, "
                   f"success {curriculum.success_rate():.3f}, value loss {res['value']:.4f}", verbose=verbose)

    toc("online", verbose=verbose)
    if learner.n_skipped > 0:
        print2(f"online: {learner.n_skipped} optimizer steps skipped on non-finite gradients", verbose=verbose)
    return actors, value, pd.DataFrame(curves, columns=list(CURVE_COLUMNS)), pd.DataFrame(history)


def ablation(init: RoleActorSet, cfg: MappoConfig = None, scenario: ScenarioConfig = None, seeds=(0,),
             verbose=None) -> dict:
    """
    Offline-initialized against scratch fine-tuning with paired seeds: for each seed both arms see the same
    episode seeds and get the same attention and value-net initialization.
    Returns {arm: [curves per seed]}.
    """
    curves = {arm: [] for arm in ARMS}
    for seed in seeds:
        for arm in ARMS:
            print2(f"ablation: arm {arm}, seed {seed}", verbose=verbose)
            _, _, c, _ = train_online(cfg=cfg, scenario=scenario, init=init if arm == "offline" else None, seed=seed,
                                      verbose=verbose)
            curves[arm].append(c)
    return curves
