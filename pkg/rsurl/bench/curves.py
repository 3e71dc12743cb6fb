"""
Plot-ready curve files from the metric logs of a run directory. The raw logs are only read; the smoothed copies
go to <run>/curves/.
"""
import os

import numpy as np
import pandas as pd

from rsurl import files
from rsurl.printing import print2
from rsurl.env.routes import ROLES
from rsurl.offline.train import METRIC_COLUMNS
from rsurl.online.train import ARMS

WINDOW = 50
CURVES = "curves"

OFFLINE_LOG = os.path.join("offline", "metrics_{role}.csv")
ONLINE_LOG = os.path.join("online_{arm}", "curves.csv")
EVAL_LOG = os.path.join("eval_<map>_<n>cav_<policy>", "running.csv")


def rolling_mean(x, window=WINDOW) -> np.ndarray:
    """Trailing mean over the last `window` samples, shorter windows at the start. NaNs are skipped."""
    if window < 1:
        raise ValueError(f"window must be positive, got {window}")
    x = np.asarray(x, dtype=float)
    if window == 1:
        return x.copy()
    return pd.Series(x).rolling(window=window, min_periods=1).mean().to_numpy()


def smooth_frame(df: pd.DataFrame, x, columns, window=WINDOW) -> pd.DataFrame:
    """x and the raw columns, each followed by its smoothed version <column>_smooth."""
    res = pd.DataFrame({x: df[x].to_numpy()})
    for c in columns:
        res[c] = df[c].to_numpy(dtype=float)
        res[f"{c}_smooth"] = rolling_mean(df[c], window=window)
    return res


def episodes_to_threshold(success, threshold=0.8, window=WINDOW):
    """Number of episodes until the success rate over a full window first reaches threshold, None if never."""
    s = pd.Series(np.asarray(success, dtype=float)).rolling(window=window, min_periods=window).mean()
    hit = np.nonzero(s.to_numpy() >= threshold)[0]
    return None if len(hit) == 0 else int(hit[0]) + 1


def ablation_summary(curves: dict, threshold=0.8, window=WINDOW, n_early=50) -> pd.DataFrame:
    """
    One row per arm and seed: episodes to the success threshold and the mean reward of the first n_early episodes.
    curves maps arm -> list of curve frames, one per seed.
    """
    rows = []
    for arm, frames in curves.items():
        for i, c in enumerate(frames):
            n = episodes_to_threshold(c["success"], threshold=threshold, window=window)
            rows.append(dict(arm=arm, run=i, episodes_to_threshold=np.nan if n is None else n,
                             early_reward=float(c["reward"].iloc[:n_early].mean()), n_episodes=len(c)))
    return pd.DataFrame(rows, columns=["arm", "run", "episodes_to_threshold", "early_reward", "n_episodes"])


def _expected(run_dir):
    return ([os.path.join(run_dir, OFFLINE_LOG.format(role=r)) for r in ROLES] +
            [os.path.join(run_dir, ONLINE_LOG.format(arm=a)) for a in ARMS] +
            [os.path.join(run_dir, EVAL_LOG)])


def emit_curves(run_dir, window=WINDOW, verbose=None) -> list:
    """
    Smooth every metric log found in run_dir: offline losses and reward improvement per role, online reward and
    success per ablation arm, running evaluation metrics per map. Every output carries the provenance of its log.
    Returns the written files.
    """
    if not os.path.isdir(run_dir):
        raise FileNotFoundError(f"Run directory '{run_dir}' does not exist")
    out = os.path.join(run_dir, CURVES)
    written = []

    def write(df, name, log):
        p = files.read_provenance(log)
        file = os.path.join(out, name)
        files.save_csv(df, file, seed=p.get("seed"), config_hash=p.get("config_hash"))
        written.append(file)

    for role in ROLES:
        log = os.path.join(run_dir, OFFLINE_LOG.format(role=role))
        if not os.path.isfile(log):
            continue
        df = files.load_csv(log)
        write(smooth_frame(df, x="step", columns=METRIC_COLUMNS[1:5], window=window), f"offline_losses_{role}.csv",
              log)
        ri = df[np.isfinite(df["reward_improvement"])]
        write(ri[["step", "reward_improvement"]], f"offline_reward_improvement_{role}.csv", log)

    online = {}
    for arm in ARMS:
        log = os.path.join(run_dir, ONLINE_LOG.format(arm=arm))
        if not os.path.isfile(log):
            continue
        online[arm] = files.load_csv(log)
        write(smooth_frame(online[arm], x="episode", columns=("reward", "success"), window=window),
              f"online_{arm}.csv", log)
    if online:
        log = os.path.join(run_dir, ONLINE_LOG.format(arm=next(iter(online))))
        write(ablation_summary({a: [c] for a, c in online.items()}, window=window), "ablation.csv", log)

    for d in sorted(os.listdir(run_dir)):
        log = os.path.join(run_dir, d, "running.csv")
        if d.startswith("eval_") and os.path.isfile(log):
            df = files.load_csv(log)
            write(smooth_frame(df, x="episode", columns=("failure", "travel_time"), window=window),
                  f"{d}.csv", log)

    if not written:
        raise FileNotFoundError(f"No metric logs in '{run_dir}', expected at least one of: "
                                + ", ".join(_expected(run_dir)))
    print2(f"Wrote {len(written)} curve files to '{out}'", verbose=verbose)
    return written
