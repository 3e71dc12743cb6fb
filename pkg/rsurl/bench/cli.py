"""
Command-line surface:

    rsurl gen-data       --scenario scenarios/default.json --directory runs/a --n_episodes 200
    rsurl train-offline  --directory runs/a
    rsurl train-online   --directory runs/a --from-offline    (or --scratch)
    rsurl evaluate       --directory runs/a --n_episodes 1000 [--policy scripted] [--n_cav 3]
    rsurl generalize     --directory runs/a                   (evaluate on the alt-geometry map)
    rsurl emit-curves    --directory runs/a

Layout of a run directory:
    trajectories.csv, episodes.csv             gen-data
    offline/                                   checkpoint and metrics_<role>.csv
    online_offline/, online_scratch/           checkpoint, curves.csv, history.csv
    eval_<map>_<n>cav_<policy>/                summary.json, episodes.csv, running.csv
    curves/                                    smoothed copies of the logs
    run_<command>.json                         the resolved configuration of the last call of each command

Every csv starts with a '# rsurl seed=.. config_hash=..' row, summaries and manifests carry both as fields.
"""
import os

import fire

from rsurl import files
from rsurl.hash2 import config_hash
from rsurl.printing import print2, print_dict, check_verbosity
from rsurl.object2 import SlotsObject
from rsurl.env.config import ScenarioConfig, MapGeometry
from rsurl.env.routes import ROLES
from rsurl.offline.cql import CqlBcConfig
from rsurl.offline.dataset import ingest_trajectories, partition_by_role
from rsurl.offline.expert import generate_corpus, save_corpus, TRAJECTORIES
from rsurl.offline.train import train_offline
from rsurl.online.config import MappoConfig
from rsurl.online.train import train_online
from rsurl.nets.io import save_run, load_run, save_module
from rsurl.rsu.link import LinkConfig
from rsurl.rsu.coordinator import RsuConfig
from rsurl.bench.evaluate import POLICIES, evaluate, save_evaluation, check_compatible
from rsurl.bench.curves import WINDOW, emit_curves

COMMANDS = ("gen-data", "train-offline", "train-online", "evaluate", "generalize", "emit-curves")
INITS = ("offline", "scratch")
DEFAULT_MAP = "default"
ALT_MAP = "alt-geometry"
DIRECTORY = "runs"

OFFLINE = "offline"
ONLINE = "online_{init}"

# Run fields that change the outputs, the others (directory, verbosity, parallelism) do not enter the hash
HASHED = ("command", "n_episodes", "map", "policy", "init", "n_steps", "n_cav")


# Configuration
# ----------------------------------------------------------------------------------------------------------------------
class Experiment(SlotsObject):
    """
    Everything a scenario file configures. The file holds the ScenarioConfig keys (with the nested `map` and
    `weights` sections) and the optional sections `link`, `rsu`, `maps`, `offline` and `online`:

        {"n_vehicles": 5, "map": {"arm_length": 40.0}, "link": {"latency_mean": 20.0},
         "maps": {"alt-geometry": {"arm_length": 25.0, "lane_width": 3.2}}, "online": {"n_episodes": 3000}}
    """
    __slots__ = ("scenario", "link", "rsu", "maps", "offline", "online")

    def __init__(self):
        self.scenario = ScenarioConfig()
        self.link = LinkConfig()
        self.rsu = RsuConfig()
        self.maps = {DEFAULT_MAP: self.scenario.map,
                     ALT_MAP: MapGeometry(name=ALT_MAP, arm_length=25.0, lane_width=3.2)}
        self.offline = CqlBcConfig()
        self.online = MappoConfig()

    def validate(self):
        self.scenario.validate()
        self.link.validate()
        self.rsu.validate()
        self.offline.validate()
        self.online.validate()
        for m in self.maps.values():
            m.validate()
        return self

    def scenario_for(self, map_name=DEFAULT_MAP, n_cav=None) -> ScenarioConfig:
        if map_name not in self.maps:
            raise ValueError(f"Unknown map '{map_name}', the scenario defines {sorted(self.maps)}")
        config = self.scenario.copy()
        config.map = self.maps[map_name].copy()
        config.map.name = map_name
        if n_cav is not None:
            config.n_cav = int(n_cav)
            config.n_vehicles = max(config.n_vehicles, config.n_cav)
        return config.validate()


def load_scenario(file=None) -> Experiment:
    """Defaults updated with the scenario file; unknown keys raise ValueError."""
    exp = Experiment()
    if file is None:
        return exp.validate()

    if not os.path.isfile(file):
        raise FileNotFoundError(f"Scenario file '{file}' does not exist")
    d = files.load_json(file)
    if not isinstance(d, dict):
        raise ValueError(f"Scenario file '{file}' must hold a JSON object")

    for key in ("link", "rsu", "offline", "online"):
        if key in d:
            getattr(exp, key).update(d.pop(key))
    maps = d.pop("maps", {})
    exp.scenario.update(d)
    exp.maps[DEFAULT_MAP] = exp.scenario.map
    for name, m in maps.items():
        if name == DEFAULT_MAP:
            exp.scenario.map.update(m)
        else:
            exp.maps[name] = MapGeometry(name=name).update(m)
    return exp.validate()


class RunConfig(SlotsObject):
    __slots__ = ("command",
                 "scenario",     # path of the scenario file, None for the defaults
                 "seed",
                 "directory",
                 "n_episodes",   # corpus, online training or evaluation episodes, per command
                 "map",
                 "policy",       # learned | scripted
                 "init",         # offline | scratch
                 "checkpoint",
                 "n_steps",      # offline gradient steps, None keeps the scenario's
                 "n_cav",        # None keeps the scenario's
                 "n_processes",
                 "verbose")

    def __init__(self):
        self.command = "evaluate"
        self.scenario = None
        self.seed = 0
        self.directory = DIRECTORY
        self.n_episodes = None
        self.map = DEFAULT_MAP
        self.policy = "learned"
        self.init = "offline"
        self.checkpoint = None
        self.n_steps = None
        self.n_cav = None
        self.n_processes = 1
        self.verbose = None

    def validate(self):
        if self.command not in COMMANDS:
            raise ValueError(f"Unknown command '{self.command}', expected one of {COMMANDS}")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ValueError(f"seed must be a non-negative integer, got {self.seed!r}")
        if self.n_episodes is not None and self.n_episodes < 0:
            raise ValueError(f"n_episodes must be >= 0, got {self.n_episodes}")
        if self.policy not in POLICIES:
            raise ValueError(f"Unknown policy '{self.policy}', expected one of {POLICIES}")
        if self.init not in INITS:
            raise ValueError(f"Unknown init '{self.init}', expected one of {INITS}")
        if self.n_processes < 1:
            raise ValueError(f"n_processes must be positive, got {self.n_processes}")
        if not self.directory:
            raise ValueError("An output directory is required")
        return self

    def digest(self, exp: Experiment) -> str:
        d = self.to_dict()
        return config_hash(dict(experiment=exp.to_dict(), run={k: d[k] for k in HASHED}))


def _start(run: RunConfig):
    """Validate, create the output directory, and record the resolved configuration."""
    run.validate()
    exp = load_scenario(run.scenario)
    h = run.digest(exp)
    files.mkdirs(run.directory)
    files.save_json(dict(run=run.to_dict(), experiment=exp.to_dict(), config_hash=h),
                    os.path.join(run.directory, f"run_{run.command}.json"))
    print2(f"rsurl {run.command}: seed {run.seed}, config hash {h}, directory '{run.directory}'", verbose=run.verbose)
    if check_verbosity(run.verbose, threshold=1):
        print_dict(run.to_dict(), verbose=(1, 1))
    return exp, h


def _check_checkpoint(directory, phase=None):
    if not os.path.isdir(directory):
        raise FileNotFoundError(f"No checkpoint directory '{directory}'")
    actors, _, value, manifest = load_run(directory)
    if phase is not None and manifest["phase"] != phase:
        raise ValueError(f"'{directory}' holds a '{manifest['phase']}' checkpoint, expected '{phase}'")
    return actors, value, manifest


# Commands
# ----------------------------------------------------------------------------------------------------------------------
def cmd_gen_data(scenario=None, seed=0, directory=DIRECTORY, n_episodes=200, map=DEFAULT_MAP,  # noqa: shadows map
                 n_cav=None, verbose=None):
    """Scripted-expert corpus in the trajectory log schema."""
    run = RunConfig().update(command="gen-data", scenario=scenario, seed=seed, directory=directory,
                             n_episodes=n_episodes, map=map, n_cav=n_cav, verbose=verbose)
    exp, h = _start(run)
    config = exp.scenario_for(map, n_cav=n_cav)
    frame, info = generate_corpus(config, n_episodes=n_episodes, seed=seed, verbose=verbose)
    return save_corpus(directory, frame, info, seed=seed, config_hash=h)


def cmd_train_offline(scenario=None, seed=0, directory=DIRECTORY, n_steps=None, map=DEFAULT_MAP,  # noqa: shadows map
                      n_cav=None, n_processes=1, verbose=None):
    """Per-role CQL+BC pre-training on the corpus in directory."""
    run = RunConfig().update(command="train-offline", scenario=scenario, seed=seed, directory=directory,
                             n_steps=n_steps, map=map, n_cav=n_cav, n_processes=n_processes, verbose=verbose)
    exp, h = _start(run)
    file = os.path.join(directory, TRAJECTORIES)
    if not os.path.isfile(file):
        raise FileNotFoundError(f"No corpus '{file}', run gen-data first")

    config = exp.scenario_for(map, n_cav=n_cav)
    cfg = exp.offline.copy()
    if n_steps is not None:
        cfg.n_steps = int(n_steps)

    datasets = partition_by_role(ingest_trajectories(file, verbose=verbose), config, verbose=verbose)
    out = os.path.join(directory, OFFLINE)
    actors, critics, metrics = train_offline(datasets, cfg=cfg, seed=seed, scenario=config, n_processes=n_processes,
                                             directory=out, verbose=verbose)

    manifest = save_run(out, actors, phase="offline", config_hash=h, seed=seed)
    for role in ROLES:
        save_module(os.path.join(out, f"critic_{role}.msgpack"), critics[role],
                    meta=dict(kind="critic", arch=critics[role].arch, phase="offline", config_hash=h, seed=seed))
        files.save_csv(metrics[role], os.path.join(out, f"metrics_{role}.csv"), seed=seed, config_hash=h)
    return manifest


def cmd_train_online(scenario=None, seed=0, directory=DIRECTORY, from_offline=False, scratch=False, n_episodes=None,
                     map=DEFAULT_MAP, verbose=None):  # noqa: shadows map
    """
    MAPPO fine-tuning over the curriculum, from the offline actors or from scratch. Both arms spawn their
    environment seeds from seed alone, so runs with the same seed form a paired ablation.
    """
    if bool(from_offline) == bool(scratch):
        raise ValueError("Pass exactly one of --from-offline and --scratch")
    init = "offline" if from_offline else "scratch"
    run = RunConfig().update(command="train-online", scenario=scenario, seed=seed, directory=directory,
                             n_episodes=n_episodes, map=map, init=init, verbose=verbose)
    exp, h = _start(run)
    config = exp.scenario_for(map)
    cfg = exp.online.copy()
    if n_episodes is not None:
        cfg.n_episodes = int(n_episodes)

    actors = None
    if init == "offline":
        actors, _, _ = _check_checkpoint(os.path.join(directory, OFFLINE), phase="offline")
        check_compatible(actors, config)

    out = os.path.join(directory, ONLINE.format(init=init))
    actors, value, curves, history = train_online(cfg=cfg, scenario=config, init=actors, seed=seed,
                                                  directory=os.path.join(out, "diverged"), verbose=verbose)
    manifest = save_run(out, actors, phase="online", config_hash=h, seed=seed, init=init, value=value)
    files.save_csv(curves, os.path.join(out, "curves.csv"), seed=seed, config_hash=h)
    files.save_csv(history, os.path.join(out, "history.csv"), seed=seed, config_hash=h)
    return manifest


def _evaluation(command, scenario, seed, directory, checkpoint, n_episodes, map_name, policy, n_cav, n_processes,
                verbose):
    checkpoint = os.path.join(directory, ONLINE.format(init="offline")) if checkpoint is None else checkpoint
    run = RunConfig().update(command=command, scenario=scenario, seed=seed, directory=directory,
                             checkpoint=checkpoint, n_episodes=n_episodes, map=map_name, policy=policy, n_cav=n_cav,
                             n_processes=n_processes, verbose=verbose)
    exp, h = _start(run)
    config = exp.scenario_for(map_name, n_cav=n_cav)
    actors = _check_checkpoint(checkpoint)[0] if policy == "learned" else None

    summary, rows = evaluate(config, n_episodes=n_episodes, seed=seed, actors=actors, policy=policy, link=exp.link,
                             rsu_config=exp.rsu, n_processes=n_processes, config_hash=h, verbose=verbose)
    save_evaluation(os.path.join(directory, f"eval_{map_name}_{config.n_cav}cav_{policy}"), summary, rows)
    return summary.to_dict()


def cmd_evaluate(scenario=None, seed=0, directory=DIRECTORY, checkpoint=None, n_episodes=1000,
                 map=DEFAULT_MAP, policy="learned", n_cav=None, n_processes=1, verbose=None):  # noqa: shadows map
    """
    Deterministic evaluation through the RSU loop, with the links of the scenario file. The checkpoint defaults
    to the offline-initialized online run in directory.
    """
    return _evaluation("evaluate", scenario=scenario, seed=seed, directory=directory, checkpoint=checkpoint,
                       n_episodes=n_episodes, map_name=map, policy=policy, n_cav=n_cav, n_processes=n_processes,
                       verbose=verbose)


def cmd_generalize(scenario=None, seed=0, directory=DIRECTORY, checkpoint=None, n_episodes=1000, map=ALT_MAP,
                   policy="learned", n_cav=None, n_processes=1, verbose=None):  # noqa: shadows map
    """The evaluation on an unseen map geometry, without retraining."""
    return _evaluation("generalize", scenario=scenario, seed=seed, directory=directory, checkpoint=checkpoint,
                       n_episodes=n_episodes, map_name=map, policy=policy, n_cav=n_cav, n_processes=n_processes,
                       verbose=verbose)


def cmd_emit_curves(directory=DIRECTORY, window=WINDOW, verbose=None):
    """Smoothed curve files next to the raw logs."""
    return emit_curves(directory, window=window, verbose=verbose)


def main():
    fire.Fire({"gen-data": cmd_gen_data,
               "train-offline": cmd_train_offline,
               "train-online": cmd_train_online,
               "evaluate": cmd_evaluate,
               "generalize": cmd_generalize,
               "emit-curves": cmd_emit_curves})


if __name__ == "__main__":
    main()
