"""
Trajectory log: one row per (step, entity), the shared schema of simulator logs and offline dataset files.

a_acc and a_steer hold the clamped command applied to a CAV from this step to the next; they are NaN for
background vehicles, pedestrians and the last row of every CAV.
"""
import numpy as np
import pandas as pd

from rsurl import files
from rsurl.env.config import clamp_action
from rsurl.env.state import WorldState

COLUMNS = ("episode", "seed", "step", "time", "id", "kind", "maneuver", "entry", "status",
           "x", "y", "heading", "speed", "a_acc", "a_steer")

DTYPES = dict(episode=np.int64, seed=np.int64, step=np.int64, time=np.float64, id=np.int64,
              kind=str, maneuver=str, entry=str, status=str,
              x=np.float64, y=np.float64, heading=np.float64, speed=np.float64,
              a_acc=np.float64, a_steer=np.float64)

PEDESTRIAN = "pedestrian"
NO_MANEUVER = "-"


class TrajectoryLog:
    def __init__(self):
        self.rows = []
        self._last = {}  # id -> index of the newest row of the entity

    def __len__(self):
        return len(self.rows)

    def record(self, state: WorldState, episode=0, actions=None):
        """
        Append one row per entity of state. actions ({id: action}) is the command applied to state, it can also
        be attached later with set_actions.
        """
        self._last = {}
        for v in state.vehicles:
            self._last[v.id] = len(self.rows)
            self.rows.append([episode, state.seed, state.step, state.time, v.id, v.kind, v.route.maneuver,
                              v.route.entry, v.status, v.xy[0], v.xy[1], v.heading, v.speed, np.nan, np.nan])
        for p in state.pedestrians:
            self.rows.append([episode, state.seed, state.step, state.time, p.id, PEDESTRIAN, NO_MANEUVER,
                              p.arm, p.status, p.xy[0], p.xy[1], p.heading, p.speed, np.nan, np.nan])
        if actions is not None:
            self.set_actions(actions)

    def set_actions(self, actions: dict):
        """Fill in the applied commands of the CAVs of the newest recorded step."""
        for k, a in actions.items():
            i = self._last[k]
            self.rows[i][-2:] = clamp_action(np.asarray(a, dtype=float)).tolist()

    def on_step(self, episode=0):
        """Callback for world.run_episode that records the initial state and every successor."""
        def fun(state, actions, results):
            del results
            if actions is not None:
                self.set_actions(actions)
            self.record(state, episode=episode)

        return fun

    def to_frame(self) -> pd.DataFrame:
        df = pd.DataFrame(self.rows, columns=list(COLUMNS))
        return df.astype(DTYPES)

    def save(self, file, seed=None, config_hash=None):
        files.save_csv(self.to_frame(), file=file, seed=seed, config_hash=config_hash)

    @staticmethod
    def load(file) -> pd.DataFrame:
        return files.load_csv(file, dtype=dict(kind=str, maneuver=str, entry=str, status=str))


def concat(frames) -> pd.DataFrame:
    frames = [f for f in frames if len(f) > 0]
    if not frames:
        return pd.DataFrame(columns=list(COLUMNS)).astype(DTYPES)
    return pd.concat(frames, ignore_index=True)
