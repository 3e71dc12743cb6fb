"""
Offline datasets from trajectory logs.

Tracks are read from files in the trajectory log schema (rsurl.env.log) and the CAV actions are estimated from
consecutive states. A logged episode whose seed reproduces it is replayed through the simulator; any other log
(hand-written, recorded elsewhere, or from another scenario config) is rebuilt frame by frame from its rows.
Either way the observations are rebuilt and the rewards relabelled with the online reward function.
"""
import numpy as np
import pandas as pd

from rsurl import files, ltd
from rsurl.printing import print2
from rsurl.math2 import wrap_angle
from rsurl.env.config import ScenarioConfig, clamp_action
from rsurl.env.routes import ARMS, ROLES, MANEUVERS, get_route
from rsurl.env.log import COLUMNS, PEDESTRIAN
from rsurl.env.state import (KINDS, WorldState, Vehicle, Pedestrian, SpawnError, RUNNING, ARRIVED, EXITED, DESPAWNED,
                             COLLIDED, WAITING, CROSSING, DONE)
from rsurl.env.observation import ObsLayout, build_observation
from rsurl.env.world import reset, step, step_results, from_entities
from rsurl.nets.actor import to_normalized
from rsurl.nets.layers import STD_MIN

INT_COLUMNS = ("episode", "seed", "step", "id")
FLOAT_COLUMNS = ("time", "x", "y", "heading", "speed")
OPTIONAL_FLOAT_COLUMNS = ("a_acc", "a_steer")
STR_COLUMNS = ("kind", "maneuver", "entry", "status")

REPLAY_TOLERANCE = 1e-6  # m, logged vs. replayed CAV position
TIME_TOLERANCE = 1e-6  # s, logged time vs. frame * dt
VEHICLE_STATUSES = (RUNNING, ARRIVED, EXITED, DESPAWNED, COLLIDED)
PEDESTRIAN_STATUSES = (WAITING, CROSSING, DONE)


class SchemaError(ValueError):
    pass


class DataError(ValueError):
    pass


class TrajectoryRecord:
    __slots__ = ("episode", "seed", "track", "frame", "time", "kind", "maneuver", "entry", "status",
                 "x", "y", "heading", "speed", "a_acc", "a_steer", "line")

    def __init__(self, episode, seed, track, frame, time, kind, maneuver, entry, status,
                 x, y, heading, speed, a_acc=np.nan, a_steer=np.nan, line=None):
        self.episode = episode
        self.seed = seed
        self.track = track
        self.frame = frame
        self.time = time
        self.kind = kind
        self.maneuver = maneuver
        self.entry = entry
        self.status = status
        self.x = x
        self.y = y
        self.heading = heading
        self.speed = speed
        self.a_acc = a_acc
        self.a_steer = a_steer
        self.line = line  # in the source file, for error messages

    def __repr__(self):
        return (f"TrajectoryRecord(episode={self.episode}, track={self.track}, frame={self.frame}, "
                f"{self.maneuver}, xy=({self.x:.2f}, {self.y:.2f}))")


class Track:
    """The frame-sorted records of one entity in one episode."""
    __slots__ = ("records",)

    def __init__(self, records):
        self.records = list(records)

    def __len__(self):
        return len(self.records)

    def __getitem__(self, i):
        return self.records[i]

    def __iter__(self):
        return iter(self.records)

    @property
    def episode(self):
        return self.records[0].episode

    @property
    def seed(self):
        return self.records[0].seed

    @property
    def id(self):
        return self.records[0].track

    @property
    def kind(self):
        return self.records[0].kind

    @property
    def maneuver(self):
        return self.records[0].maneuver

    @property
    def entry(self):
        return self.records[0].entry

    @property
    def frames(self):
        return np.array([r.frame for r in self.records], dtype=int)

    @property
    def speed(self):
        return np.array([r.speed for r in self.records])

    @property
    def heading(self):
        return np.array([r.heading for r in self.records])

    @property
    def xy(self):
        return np.array([[r.x, r.y] for r in self.records])

    def __repr__(self):
        return f"Track(episode={self.episode}, id={self.id}, {self.kind}, {self.maneuver}, n={len(self)})"


# Ingestion
# ----------------------------------------------------------------------------------------------------------------------
def _n_leading_comments(file):
    n = 0
    with open(file, "r") as f:
        for line in f:
            if not line.startswith(files.COMMENT):
                break
            n += 1
    return n


def _parse_column(values, lines, fun, optional=False):
    res, bad = [], []
    for v, line in zip(values, lines):
        if not isinstance(v, str) or v == "":
            if optional:
                res.append(np.nan)
                continue
            bad.append(line)
            res.append(None)
            continue
        try:
            res.append(fun(v))
        except ValueError:
            bad.append(line)
            res.append(None)
    return res, bad


def _to_int(s):
    f = float(s)
    if not np.isfinite(f) or f != int(f):
        raise ValueError(s)
    return int(f)


def _to_finite(s):
    f = float(s)
    if not np.isfinite(f):
        raise ValueError(s)
    return f


def ingest_trajectories(file, strict=True, verbose=None) -> list:
    """
    Read a trajectory log into tracks grouped by (episode, id), in order of first appearance.
    Malformed rows raise DataError naming their line numbers; with strict=False they are skipped and reported.
    """
    df = files.load_csv(file, dtype=str)
    missing = [c for c in COLUMNS if c not in df.columns]
    if missing:
        raise SchemaError(f"'{file}' lacks the columns {missing}, expected {list(COLUMNS)}")

    first = _n_leading_comments(file) + 2  # 1-based line of the first data row
    lines = list(range(first, first + len(df)))

    parsed, bad = {}, set()
    for c in INT_COLUMNS:
        parsed[c], b = _parse_column(df[c], lines, _to_int)
        bad.update(b)
    for c in FLOAT_COLUMNS:
        parsed[c], b = _parse_column(df[c], lines, _to_finite)
        bad.update(b)
    for c in OPTIONAL_FLOAT_COLUMNS:
        parsed[c], b = _parse_column(df[c], lines, float, optional=True)
        bad.update(b)
    for c in STR_COLUMNS:
        parsed[c], b = _parse_column(df[c], lines, str)
        bad.update(b)
    for i, k in enumerate(parsed["kind"]):
        if k is not None and k not in KINDS + (PEDESTRIAN,):
            bad.add(lines[i])

    if bad:
        message = f"Malformed rows in '{file}' at lines {sorted(bad)[:20]}{' ...' if len(bad) > 20 else ''}"
        if strict:
            raise DataError(message)
        print2(message + f", {len(bad)} rows skipped", verbose=verbose)

    records = []
    for i, line in enumerate(lines):
        if line in bad:
            continue
        records.append(TrajectoryRecord(episode=parsed["episode"][i], seed=parsed["seed"][i], track=parsed["id"][i],
                                        frame=parsed["step"][i], time=parsed["time"][i], kind=parsed["kind"][i],
                                        maneuver=parsed["maneuver"][i], entry=parsed["entry"][i],
                                        status=parsed["status"][i], x=parsed["x"][i], y=parsed["y"][i],
                                        heading=parsed["heading"][i], speed=parsed["speed"][i],
                                        a_acc=parsed["a_acc"][i], a_steer=parsed["a_steer"][i], line=line))

    tracks = []
    for (episode, id_), group in ltd.group_by(records, key=lambda r: (r.episode, r.track)).items():
        for a, b in zip(group[:-1], group[1:]):
            if b.frame <= a.frame:
                raise DataError(f"Track {id_} of episode {episode}: frame {b.frame} at line {b.line} "
                                f"does not follow frame {a.frame} at line {a.line}")
        labels = {(r.kind, r.maneuver, r.seed) for r in group}
        if len(labels) > 1:
            raise DataError(f"Track {id_} of episode {episode} changes kind, maneuver or seed: {sorted(labels)}")
        tracks.append(Track(group))
    return tracks


def select_tracks(tracks, kind="cav", maneuver=None):
    return [t for t in tracks if t.kind == kind and (maneuver is None or t.maneuver == maneuver)]


# Actions
# ----------------------------------------------------------------------------------------------------------------------
def estimate_actions(track, dt, clamp=True) -> np.ndarray:
    """
    Finite-difference actions between consecutive frames, [n-1, 2]:
        a_acc = (v[t+1] - v[t]) / dt,  a_steer = wrap(theta[t+1] - theta[t]) / dt
    clamped to the action bounds unless clamp=False.
    """
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    track = track if isinstance(track, Track) else Track(track)
    if len(track) < 2:
        raise ValueError(f"Action estimation needs at least 2 frames, got {len(track)}")
    if np.any(np.diff(track.frames) != 1):
        raise DataError(f"Track {track.id} of episode {track.episode} skips frames, dt is not uniform")

    a = np.stack([np.diff(track.speed) / dt, wrap_angle(np.diff(track.heading)) / dt], axis=-1)
    return clamp_action(a) if clamp else a


# Datasets
# ----------------------------------------------------------------------------------------------------------------------
class Batch:
    __slots__ = ("obs", "actions", "rewards", "next_obs", "dones")

    def __init__(self, obs, actions, rewards, next_obs, dones):
        self.obs = obs
        self.actions = actions  # normalized, [-1, 1]
        self.rewards = rewards
        self.next_obs = next_obs
        self.dones = dones

    def __len__(self):
        return len(self.rewards)


class EpisodeRecord:
    """What reward_improvement needs to re-simulate a logged episode."""
    __slots__ = ("episode", "seed", "roles", "action_log", "returns", "outcome", "scene")

    def __init__(self, episode, seed, roles, action_log, returns, outcome, scene=None):
        self.episode = episode
        self.seed = seed
        self.roles = roles            # CAV id -> role
        self.action_log = action_log  # per step {CAV id: estimated action, physical units}
        self.returns = returns        # CAV id -> relabelled episodic reward
        self.outcome = outcome
        self.scene = scene            # frame 0 rebuilt from the log, None if the seed reproduces the episode

    def initial_state(self, config: ScenarioConfig) -> WorldState:
        return reset(config, self.seed) if self.scene is None else self.scene.copy()


class OfflineDataset:
    """Transitions of one role, with per-feature observation statistics of exactly these transitions."""
    __slots__ = ("role", "obs", "actions", "rewards", "next_obs", "dones",
                 "episode", "step", "agent",
                 "mean", "std", "episodes")

    def __init__(self, role, obs, actions, rewards, next_obs, dones, episode=None, step=None, agent=None,
                 episodes=None):
        self.role = role
        self.obs = np.asarray(obs, dtype=float)
        self.actions = np.asarray(actions, dtype=float).reshape(-1, 2)
        self.rewards = np.asarray(rewards, dtype=float)
        self.next_obs = np.asarray(next_obs, dtype=float)
        self.dones = np.asarray(dones, dtype=bool)
        n = len(self.rewards)
        self.episode = np.full(n, -1) if episode is None else np.asarray(episode, dtype=int)
        self.step = np.arange(n) if step is None else np.asarray(step, dtype=int)
        self.agent = np.full(n, -1) if agent is None else np.asarray(agent, dtype=int)
        self.episodes = {} if episodes is None else episodes

        if not (len(self.obs) == len(self.actions) == len(self.next_obs) == len(self.dones) == n):
            raise ValueError(f"Inconsistent transition arrays: obs {self.obs.shape}, actions {self.actions.shape}, "
                             f"rewards {self.rewards.shape}, next_obs {self.next_obs.shape}, dones {self.dones.shape}")
        if n > 0 and (np.any(np.abs(self.actions) > 1)):
            raise DataError("Normalized actions outside [-1, 1]")

        if n == 0:
            self.mean, self.std = np.zeros(self.obs.shape[-1]), np.ones(self.obs.shape[-1])
        else:
            std = self.obs.std(axis=0)
            self.mean, self.std = self.obs.mean(axis=0), np.where(std < STD_MIN, 1.0, std)

    @classmethod
    def empty(cls, role, n_obs):
        return cls(role, np.zeros((0, n_obs)), np.zeros((0, 2)), np.zeros(0), np.zeros((0, n_obs)), np.zeros(0))

    def __len__(self):
        return len(self.rewards)

    @property
    def n_tracks(self):
        return len(set(zip(self.episode.tolist(), self.agent.tolist())))

    def batch(self, idx) -> Batch:
        return Batch(obs=self.obs[idx], actions=self.actions[idx], rewards=self.rewards[idx],
                     next_obs=self.next_obs[idx], dones=self.dones[idx])

    def sample(self, rng: np.random.Generator, batch_size) -> Batch:
        """Uniform minibatch with replacement."""
        if len(self) == 0:
            raise ValueError(f"Cannot sample from the empty '{self.role}' dataset")
        return self.batch(rng.integers(0, len(self), size=batch_size))

    def __repr__(self):
        return f"OfflineDataset({self.role}, n={len(self)}, tracks={self.n_tracks}, episodes={len(self.episodes)})"


class _ReplayMismatch(DataError):
    """The seed does not reproduce the logged episode, the frames are rebuilt from the log instead."""


def _check_times(tracks, dt):
    for t in tracks:
        for r in t:
            if abs(r.time - r.frame * dt) > TIME_TOLERANCE:
                raise DataError(f"Line {r.line}: time {r.time} s at frame {r.frame} does not match dt = {dt} s, "
                                f"check the scenario config")


def _replayed_steps(tracks, actions, config: ScenarioConfig, seed):
    """(step, actions, obs, successor, results) of the episode re-simulated from its seed."""
    try:
        state = reset(config, seed)
    except SpawnError as e:
        raise _ReplayMismatch(str(e))
    if {v.id for v in state.cavs()} != set(tracks):
        raise _ReplayMismatch(f"seed {seed} spawns the CAVs {sorted(v.id for v in state.cavs())}")
    for i, t in tracks.items():
        v = state.vehicle(i)
        if (t.maneuver, t.entry) != (v.role, v.route.entry) or np.linalg.norm(v.xy - t.xy[0]) > REPLAY_TOLERANCE:
            raise _ReplayMismatch(f"seed {seed} spawns {v}, the log starts track {i} at line {t[0].line}")

    while not state.done:
        t = state.step
        a = {}
        for v in state.cavs():
            if t >= len(actions[v.id]):
                raise _ReplayMismatch(f"track {v.id} ends at frame {t} while the replayed vehicle is running")
            a[v.id] = actions[v.id][t]
        obs = {i: build_observation(state, i) for i in a}
        state, results = step(state, a)
        for i in a:
            logged = tracks[i].records[t + 1]
            if np.linalg.norm(state.vehicle(i).xy - (logged.x, logged.y)) > REPLAY_TOLERANCE:
                raise _ReplayMismatch(f"vehicle {i} deviates from line {logged.line} at frame {t + 1}")
        yield t, a, obs, state, results


def _vehicle_from_row(track, k, config: ScenarioConfig):
    r = track[k]
    if r.entry not in ARMS or r.maneuver not in MANEUVERS or r.status not in VEHICLE_STATUSES:
        raise DataError(f"Line {r.line}: vehicle row with entry '{r.entry}', maneuver '{r.maneuver}' and status "
                        f"'{r.status}'")
    v = Vehicle(id=r.track, kind=r.kind, route=get_route(r.entry, r.maneuver, config.map), xy=(r.x, r.y),
                heading=r.heading, speed=r.speed, half_extents=config.half_extents, spawn_time=track[0].time)
    v.status = r.status
    if k > 0:
        p = track[k - 1]
        v.last_action = np.array([(r.speed - p.speed) / config.dt, wrap_angle(r.heading - p.heading) / config.dt])
    arrived = [q for q in track.records[:k + 1] if q.status == ARRIVED]
    if arrived:
        v.arrival_time = arrived[0].time
    return v


def _pedestrian_from_row(track, k, config: ScenarioConfig):
    r = track[k]
    if r.entry not in ARMS or r.status not in PEDESTRIAN_STATUSES:
        raise DataError(f"Line {r.line}: pedestrian row with entry '{r.entry}' and status '{r.status}'")
    started = [q.frame for q in track if q.status != WAITING]
    p = Pedestrian(id=r.track, xy=(r.x, r.y), heading=r.heading, walk_speed=float(track.speed.max()),
                   radius=config.ped_radius, start_step=started[0] if started else 0, arm=r.entry,
                   goal=track.xy[-1])
    p.speed = r.speed
    p.status = r.status
    return p


def _logged_outcome(state: WorldState):
    cavs = state.cavs(active_only=False)
    if any(v.status == COLLIDED for v in state.vehicles):
        return "collision"
    if cavs and all(v.status == ARRIVED for v in cavs):
        return "success"
    if state.step >= state.config.max_steps:
        return "timeout"
    return None


def rebuild_frames(tracks, config: ScenarioConfig, seed=0) -> list:
    """
    One WorldState per logged frame of an episode, from all of its tracks (CAVs, background and pedestrians).
    Vehicles stay in the scene with their last row once they stop running, as in the simulator; the outcome of
    a frame follows from the logged statuses. The frames share one observation noise stream.
    """
    indexed = [(t, t.frames) for t in tracks]
    n_frames = max(ff[-1] for _, ff in indexed) + 1
    frames = []
    for f in range(n_frames):
        vehicles, pedestrians = [], []
        for t, ff in indexed:
            k = int(np.searchsorted(ff, f, side="right")) - 1
            if k < 0:
                continue
            r = t[k]
            if t.kind == PEDESTRIAN:
                if r.frame == f:
                    pedestrians.append(_pedestrian_from_row(t, k, config))
            elif r.frame == f or r.status != RUNNING:
                vehicles.append(_vehicle_from_row(t, k, config))
        state = from_entities(config, vehicles, pedestrians, seed=seed, step=f)
        if frames:
            state.obs_rng = frames[0].obs_rng
        state.outcome = _logged_outcome(state)
        state.penalized = state.outcome in ("collision", "timeout")
        frames.append(state)
    return frames


def _rebuilt_steps(tracks, actions, frames):
    """(step, actions, obs, successor, results) of consecutive rebuilt frames, up to the logged outcome."""
    for state, successor in zip(frames[:-1], frames[1:]):
        if state.done:
            return
        t = state.step
        a = {}
        for v in state.cavs():
            if t >= len(actions[v.id]):
                raise DataError(f"Track {v.id} of episode {tracks[v.id].episode} ends at frame {t} while the "
                                f"vehicle is running")
            a[v.id] = actions[v.id][t]
        obs = {i: build_observation(state, i) for i in a}
        yield t, a, obs, successor, step_results(state, successor, a)

def _label(tracks, steps):
    transitions, action_log, outcome = [], [], None
    returns = dict.fromkeys(tracks, 0.0)
    last = {}  # CAV id -> index of its newest transition
    for t, a, obs, state, results in steps:
        action_log.append(a)
        for i, res in results.items():
            returns[i] += res.reward
            if i not in a:
                # parked at its goal, the success bonus goes to the arrival transition
                if i in last:
                    transitions[last[i]]["reward"] += res.reward
                continue
            last[i] = len(transitions)
            transitions.append(dict(role=tracks[i].maneuver, agent=i, step=t, obs=obs[i], action=a[i],
                                    reward=res.reward, next_obs=build_observation(state, i), done=res.terminal))
        outcome = state.outcome
    return transitions, action_log, returns, outcome


def relabel(tracks, config: ScenarioConfig, context=()):
    """
    Relabel one logged episode from its CAV tracks, with the background and pedestrian tracks as context.
    The episode is replayed from its seed with the estimated actions if the seed reproduces the logged CAV poses,
    otherwise every frame is rebuilt from the logged rows (rebuild_frames) and rewarded from consecutive frames.
    Returns (transitions, EpisodeRecord); a transition is a dict with role, agent, step, obs, action, reward,
    next_obs, done, the reward being the one compute_reward gives for the replayed or rebuilt states.
    """
    tracks = {t.id: t for t in tracks}
    context = list(context)
    first = next(iter(tracks.values()))
    episode, seed = first.episode, first.seed
    if (any(t.episode != episode for t in list(tracks.values()) + context)
            or any(t.seed != seed for t in tracks.values())):
        raise ValueError("relabel expects the tracks of a single episode")
    _check_times(list(tracks.values()) + context, config.dt)

    actions = {}
    for i, t in tracks.items():
        if t.frames[0] != 0:
            raise DataError(f"Track {i} of episode {episode} starts at frame {t.frames[0]}, not 0")
        actions[i] = estimate_actions(t, config.dt)

    scene = None
    try:
        transitions, action_log, returns, outcome = _label(tracks, _replayed_steps(tracks, actions, config, seed))
    except _ReplayMismatch:
        frames = rebuild_frames(list(tracks.values()) + context, config, seed=seed)
        transitions, action_log, returns, outcome = _label(tracks, _rebuilt_steps(tracks, actions, frames))
        scene = frames[0].copy()

    record = EpisodeRecord(episode=episode, seed=seed, roles={i: t.maneuver for i, t in tracks.items()},
                           action_log=action_log, returns=returns, outcome=outcome, scene=scene)
    return transitions, record


def partition_by_role(tracks, config: ScenarioConfig, verbose=None) -> dict:
    """
    Split the CAV tracks into one OfflineDataset per role. Background and pedestrian tracks are scene context,
    used when an episode has to be rebuilt from the log instead of replayed from its seed.
    """
    tracks = list(tracks)
    for t in select_tracks(tracks, kind="cav"):
        if t.maneuver not in ROLES:
            raise DataError(f"Track {t.id} of episode {t.episode} has no role label ('{t.maneuver}')")

    transitions = {r: [] for r in ROLES}
    episodes = {r: {} for r in ROLES}
    by_episode = {e: group for e, group in ltd.group_by(tracks, key=lambda t: t.episode).items()
                  if select_tracks(group, kind="cav")}
    n_rebuilt = 0
    for e, group in by_episode.items():
        res, record = relabel(select_tracks(group, kind="cav"), config,
                              context=[t for t in group if t.kind != "cav"])
        n_rebuilt += record.scene is not None
        for tr in res:
            transitions[tr["role"]].append(dict(tr, episode=e))
        for role in set(record.roles.values()):
            episodes[role][e] = record

    n_obs = ObsLayout(k_veh=config.k_veh, k_ped=config.k_ped).n_obs
    datasets = {}
    for role in ROLES:
        tt = transitions[role]
        if not tt:
            datasets[role] = OfflineDataset.empty(role, n_obs)
            continue
        datasets[role] = OfflineDataset(role=role,
                                        obs=np.stack([t["obs"] for t in tt]),
                                        actions=np.clip(to_normalized(np.stack([t["action"] for t in tt])), -1, 1),
                                        rewards=[t["reward"] for t in tt],
                                        next_obs=np.stack([t["next_obs"] for t in tt]),
                                        dones=[t["done"] for t in tt],
                                        episode=[t["episode"] for t in tt], step=[t["step"] for t in tt],
                                        agent=[t["agent"] for t in tt], episodes=episodes[role])
    n_cav_tracks = sum(len(select_tracks(g, kind="cav")) for g in by_episode.values())
    print2(f"Partitioned {n_cav_tracks} CAV tracks of {len(by_episode)} episodes "
           f"({n_rebuilt} rebuilt from the log): "
           + ", ".join(f"{r} {datasets[r].n_tracks} tracks / {len(datasets[r])} transitions" for r in ROLES),
           verbose=verbose)
    return datasets


def datasets_summary(datasets: dict) -> pd.DataFrame:
    return pd.DataFrame([dict(role=r, tracks=d.n_tracks, transitions=len(d), episodes=len(d.episodes),
                              mean_reward=d.rewards.mean() if len(d) else np.nan) for r, d in datasets.items()])
