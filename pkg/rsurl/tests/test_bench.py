import os
import tempfile
from unittest import TestCase

import numpy as np
import pandas as pd

import rsurl
from rsurl import files
from rsurl.math2 import rolling_mean_brute
from rsurl.env.config import ScenarioConfig, A_MIN
from rsurl.env.routes import ROLES
from rsurl.nets import RoleActorSet, default_arch
from rsurl.nets.io import load_manifest
from rsurl.offline import ingest_trajectories, partition_by_role
from rsurl.online import CURVE_COLUMNS
from rsurl.bench import (EvalSummary, evaluate, summarize, running_frame, save_evaluation, load_summary,
                         check_compatible, scripted_policy, rolling_mean, smooth_frame, episodes_to_threshold,
                         ablation_summary, emit_curves, Experiment, RunConfig, load_scenario, cmd_gen_data,
                         cmd_train_offline, cmd_train_online, cmd_evaluate, cmd_generalize, cmd_emit_curves)

DEFAULT_SCENARIO = os.path.join(os.path.dirname(os.path.dirname(rsurl.__file__)), "scenarios", "default.json")


def _lone_cav(max_steps=20):
    return ScenarioConfig().update(n_cav=1, n_vehicles=1, n_pedestrians=0, max_steps=max_steps)


def _stop_policy(state):
    return {v.id: np.array([A_MIN, 0.0]) for v in state.cavs()}


def _row(outcome, times):
    ok = outcome == "success"
    return dict(seed=0, outcome=outcome, reward=0.0, travel_time=float(np.mean(times)) if ok else np.nan,
                travel_time_per_agent=times if ok else [np.nan] * len(times), n_steps=10)


def _scenario_file(directory, **kwargs):
    d = dict(n_cav=1, n_vehicles=2, n_pedestrians=0, max_steps=40)
    d.update(kwargs)
    file = os.path.join(directory, "scenario.json")
    files.save_json(d, file)
    return file


class Test(TestCase):

    # Curves
    def test_rolling_mean_window_one(self):
        x = np.random.default_rng(0).normal(size=100)
        self.assertTrue(np.array_equal(rolling_mean(x, window=1), x))

    def test_rolling_mean_constant(self):
        x = np.full(300, 0.37)
        for window in (2, 50, 1000):
            self.assertTrue(np.allclose(rolling_mean(x, window=window), 0.37, rtol=0, atol=1e-12))

    def test_rolling_mean_brute(self):
        rng = np.random.default_rng(1)
        for window in (1, 3, 50, 500):
            x = rng.uniform(-10, 10, size=400)
            self.assertTrue(np.allclose(rolling_mean(x, window=window), rolling_mean_brute(x, window=window),
                                        rtol=0, atol=1e-12))

        with self.assertRaises(ValueError):
            rolling_mean(np.ones(3), window=0)

    def test_episodes_to_threshold(self):
        success = [0] * 10 + [1] * 100
        self.assertEqual(episodes_to_threshold(success, threshold=0.75, window=10), 18)
        self.assertIsNone(episodes_to_threshold(np.zeros(100), threshold=0.75, window=10))
        self.assertIsNone(episodes_to_threshold(np.ones(5), threshold=0.75, window=10))

    def test_ablation_summary(self):
        fast = pd.DataFrame(dict(episode=np.arange(60), reward=np.full(60, 2.0), success=np.ones(60)))
        slow = pd.DataFrame(dict(episode=np.arange(60), reward=np.arange(60, dtype=float), success=np.zeros(60)))
        df = ablation_summary(dict(offline=[fast], scratch=[slow]), window=10, n_early=10)
        self.assertEqual(df.arm.tolist(), ["offline", "scratch"])
        self.assertEqual(df.episodes_to_threshold.iloc[0], 10)
        self.assertTrue(np.isnan(df.episodes_to_threshold.iloc[1]))
        self.assertEqual(df.early_reward.tolist(), [2.0, 4.5])

    def test_smooth_frame(self):
        df = pd.DataFrame(dict(step=np.arange(5), loss=[1., 2., 3., 4., 5.]))
        res = smooth_frame(df, x="step", columns=["loss"], window=2)
        self.assertEqual(list(res.columns), ["step", "loss", "loss_smooth"])
        self.assertTrue(np.allclose(res.loss_smooth, [1., 1.5, 2.5, 3.5, 4.5]))
        self.assertTrue(np.array_equal(res.loss, df.loss))

    # Evaluation bookkeeping
    def test_summarize(self):
        rows = [_row("success", [4.0, 6.0]), _row("collision", [0, 0]), _row("timeout", [0, 0]),
                _row("success", [5.0, 7.0])]
        s = summarize(rows, n_cav=2, map="default", policy="scripted", seed=3, config_hash="abc")
        self.assertEqual((s.n_episodes, s.failure, s.collision, s.timeout), (4, 50.0, 25.0, 25.0))
        self.assertEqual(s.travel_time, 5.5)
        self.assertEqual(s.travel_time_per_agent, (4.5, 6.5))
        self.assertEqual((s.map, s.seed, s.config_hash), ("default", 3, "abc"))

        s = summarize([], n_cav=1)
        self.assertEqual((s.n_episodes, s.failure, s.collision, s.timeout), (0, 0.0, 0.0, 0.0))
        self.assertTrue(np.isnan(s.travel_time))

        with self.assertRaises(ValueError):
            EvalSummary().update(failure=10.0, collision=5.0, timeout=4.0).validate()
        with self.assertRaises(ValueError):
            EvalSummary().update(travel_time=-1.0).validate()

    def test_running_frame(self):
        rows = [_row("timeout", [0]), _row("success", [4.0]), _row("collision", [0]), _row("success", [6.0])]
        df = running_frame(rows)
        self.assertTrue(np.allclose(df.failure_rate, [100., 50., 200 / 3, 50.]))
        self.assertTrue(np.isnan(df.mean_travel_time.iloc[0]))
        self.assertTrue(np.allclose(df.mean_travel_time.iloc[1:], [4.0, 4.0, 5.0]))

    def test_evaluate_stop_policy(self):
        summary, rows = evaluate(_lone_cav(), n_episodes=5, seed=0, policy=_stop_policy, verbose=0)
        self.assertEqual((summary.failure, summary.timeout, summary.collision), (100.0, 100.0, 0.0))
        self.assertTrue(np.isnan(summary.travel_time))
        self.assertEqual(summary.policy, "custom")
        self.assertTrue(all(r["n_steps"] == 20 for r in rows))

    def test_evaluate_scripted(self):
        config = _lone_cav(max_steps=300)
        summary, rows = evaluate(config, n_episodes=6, seed=4, policy="scripted", verbose=0)
        self.assertAlmostEqual(summary.collision + summary.timeout, summary.failure)
        self.assertEqual(len(summary.travel_time_per_agent), 1)
        self.assertTrue(all(r["travel_time"] > 0 for r in rows if r["outcome"] == "success"))

        summary2, rows2 = evaluate(config, n_episodes=6, seed=4, policy="scripted", n_processes=2, verbose=0)
        self.assertEqual([r["seed"] for r in rows], [r["seed"] for r in rows2])
        self.assertEqual([r["outcome"] for r in rows], [r["outcome"] for r in rows2])
        self.assertEqual(summary.failure, summary2.failure)

        _, rows3 = evaluate(config, n_episodes=6, seed=4, policy=scripted_policy, verbose=0)
        self.assertEqual([r["outcome"] for r in rows], [r["outcome"] for r in rows3])

    def test_evaluate_learned(self):
        config = ScenarioConfig().update(n_cav=2, n_vehicles=3, n_pedestrians=1, max_steps=30)
        actors = RoleActorSet.new(seed=0, arch=default_arch(hidden=(8,)))
        summary, rows = evaluate(config, n_episodes=3, seed=1, actors=actors, verbose=0)
        self.assertEqual(summary.n_episodes, 3)
        self.assertAlmostEqual(summary.collision + summary.timeout, summary.failure)

        _, rows2 = evaluate(config, n_episodes=3, seed=1, actors=actors, verbose=0)
        self.assertEqual([(r["outcome"], r["reward"], r["n_steps"]) for r in rows],
                         [(r["outcome"], r["reward"], r["n_steps"]) for r in rows2])

        with self.assertRaises(ValueError):
            evaluate(config, n_episodes=1, actors=None, verbose=0)
        with self.assertRaises(ValueError):
            evaluate(config, n_episodes=1, policy="greedy", verbose=0)

    def test_check_compatible(self):
        config = ScenarioConfig()
        actors = RoleActorSet.new(seed=0, arch=default_arch(hidden=(8,)))
        check_compatible(actors, config)
        with self.assertRaises(ValueError):
            check_compatible(RoleActorSet({r: actors[r] for r in ROLES[:2]}), config)
        with self.assertRaises(ValueError):
            check_compatible(actors, ScenarioConfig().update(k_veh=2))

    def test_save_evaluation(self):
        directory = tempfile.mkdtemp()
        summary, rows = evaluate(_lone_cav(), n_episodes=3, seed=2, policy=_stop_policy, config_hash="h0",
                                 verbose=0)
        save_evaluation(directory, summary, rows)
        loaded = load_summary(directory)
        self.assertEqual((loaded.failure, loaded.timeout, loaded.n_episodes, loaded.config_hash),
                         (100.0, 100.0, 3, "h0"))
        for name in ("episodes.csv", "running.csv"):
            p = files.read_provenance(os.path.join(directory, name))
            self.assertEqual((p["seed"], p["config_hash"]), ("2", "h0"))
        self.assertEqual(len(files.load_csv(os.path.join(directory, "running.csv"))), 3)

    # Configuration
    def test_load_scenario(self):
        exp = load_scenario()
        self.assertEqual(sorted(exp.maps), ["alt-geometry", "default"])
        alt = exp.scenario_for("alt-geometry")
        self.assertEqual((alt.map.arm_length, alt.map.lane_width, alt.map.name), (25.0, 3.2, "alt-geometry"))
        self.assertEqual(exp.scenario_for("default").map.arm_length, 40.0)

        self.assertEqual(load_scenario(DEFAULT_SCENARIO), Experiment().validate())

        directory = tempfile.mkdtemp()
        file = _scenario_file(directory, map=dict(arm_length=30.0), link=dict(latency_mean=10.0),
                              maps={"short": dict(arm_length=20.0)}, online=dict(n_episodes=7))
        exp = load_scenario(file)
        self.assertEqual(exp.scenario.n_vehicles, 2)
        self.assertEqual(exp.scenario_for("default").map.arm_length, 30.0)
        self.assertEqual(exp.scenario_for("short").map.arm_length, 20.0)
        self.assertEqual(exp.link.latency_mean, 10.0)
        self.assertEqual(exp.online.n_episodes, 7)
        self.assertEqual(exp.scenario_for("default", n_cav=3).n_vehicles, 3)

        with self.assertRaises(ValueError):
            exp.scenario_for("campus")
        with self.assertRaises(ValueError):
            load_scenario(_scenario_file(directory, horizon=3))
        with self.assertRaises(ValueError):
            load_scenario(_scenario_file(directory, link=dict(bandwidth=3)))
        with self.assertRaises(ValueError):
            load_scenario(_scenario_file(directory, link=dict(drop_prob=1.0)))
        with self.assertRaises(FileNotFoundError):
            load_scenario(os.path.join(directory, "missing.json"))

    def test_run_config(self):
        run = RunConfig().update(command="gen-data", seed=3)
        exp = load_scenario()
        self.assertEqual(run.validate().digest(exp), RunConfig().update(command="gen-data", seed=4,
                                                                        directory="elsewhere").digest(exp))
        self.assertNotEqual(run.digest(exp), RunConfig().update(command="gen-data", n_episodes=5).digest(exp))
        for kw in (dict(command="plot"), dict(seed=-1), dict(policy="greedy"), dict(init="warm"),
                   dict(n_episodes=-1), dict(n_processes=0)):
            with self.assertRaises(ValueError):
                RunConfig().update(**kw).validate()

    # Commands
    def test_gen_data_empty(self):
        directory = tempfile.mkdtemp()
        file = cmd_gen_data(scenario=_scenario_file(directory), seed=5, directory=directory, n_episodes=0,
                            verbose=0)
        with open(file) as f:
            lines = f.read().splitlines()
        self.assertEqual(len(lines), 2)
        self.assertTrue(lines[0].startswith("# rsurl seed=5 config_hash="))
        self.assertTrue(lines[1].startswith("episode,seed,step,time,id"))

    def test_gen_data_deterministic(self):
        a, b = tempfile.mkdtemp(), tempfile.mkdtemp()
        scenario = _scenario_file(tempfile.mkdtemp())
        for directory in (a, b):
            cmd_gen_data(scenario=scenario, seed=1, directory=directory, n_episodes=2, verbose=0)
        for name in ("trajectories.csv", "episodes.csv"):
            self.assertTrue(files.are_files_identical(os.path.join(a, name), os.path.join(b, name)))

        tracks = ingest_trajectories(os.path.join(a, "trajectories.csv"))
        datasets = partition_by_role(tracks, load_scenario(scenario).scenario_for(), verbose=0)
        self.assertEqual(sum(d.n_tracks for d in datasets.values()), 2)

    def test_command_errors(self):
        directory = tempfile.mkdtemp()
        with self.assertRaises(ValueError):
            cmd_train_online(directory=directory, verbose=0)
        with self.assertRaises(ValueError):
            cmd_train_online(directory=directory, from_offline=True, scratch=True, verbose=0)
        with self.assertRaises(FileNotFoundError):
            cmd_train_online(directory=directory, from_offline=True, verbose=0)
        with self.assertRaises(FileNotFoundError):
            cmd_train_offline(directory=directory, verbose=0)
        with self.assertRaises(FileNotFoundError):
            cmd_evaluate(directory=directory, n_episodes=1, verbose=0)
        with self.assertRaises(FileNotFoundError):
            cmd_emit_curves(directory=directory, verbose=0)
        with self.assertRaises(ValueError):
            cmd_evaluate(directory=directory, n_episodes=1, map="campus", policy="scripted", verbose=0)

    def test_evaluate_generalize_scripted(self):
        directory = tempfile.mkdtemp()
        scenario = _scenario_file(tempfile.mkdtemp(), n_vehicles=1, max_steps=300)
        s = cmd_evaluate(scenario=scenario, directory=directory, n_episodes=3, policy="scripted", verbose=0)
        g = cmd_generalize(scenario=scenario, directory=directory, n_episodes=3, policy="scripted", verbose=0)
        self.assertEqual((s["map"], g["map"]), ("default", "alt-geometry"))
        self.assertEqual(s["seed"], 0)
        self.assertEqual(len(s["config_hash"]), 16)
        self.assertNotEqual(s["config_hash"], g["config_hash"])
        self.assertEqual(files.load_json(os.path.join(directory, "run_generalize.json"))["run"]["map"],
                         "alt-geometry")

        raw = os.path.join(directory, "eval_default_1cav_scripted", "running.csv")
        with open(raw) as f:
            before = f.read()
        written = cmd_emit_curves(directory=directory, window=2, verbose=0)
        self.assertEqual(sorted(os.path.basename(w) for w in written),
                         ["eval_alt-geometry_1cav_scripted.csv", "eval_default_1cav_scripted.csv"])
        with open(raw) as f:
            self.assertEqual(f.read(), before)
        self.assertEqual(files.read_provenance(written[0])["seed"], "0")

    def test_pipeline(self):
        directory = tempfile.mkdtemp()
        scenario = _scenario_file(tempfile.mkdtemp(), n_cav=3, n_vehicles=4, n_pedestrians=0, max_steps=40,
                                  offline=dict(n_steps=2, batch_size=8, hidden=[8], log_every=0),
                                  online=dict(horizon=10, n_envs=1, minibatch_size=8, n_epochs=1, n_episodes=2,
                                              hidden=[8], use_attention=False, log_every=0))
        cmd_gen_data(scenario=scenario, seed=0, directory=directory, n_episodes=10, verbose=0)
        manifest = cmd_train_offline(scenario=scenario, seed=0, directory=directory, verbose=0)
        self.assertEqual(sorted(manifest["roles"]), sorted(ROLES))
        self.assertEqual(manifest["phase"], "offline")
        for role in ROLES:
            metrics = files.load_csv(os.path.join(directory, "offline", f"metrics_{role}.csv"))
            self.assertEqual(len(metrics), 2)

        for flags in (dict(from_offline=True), dict(scratch=True)):
            manifest = cmd_train_online(scenario=scenario, seed=0, directory=directory, verbose=0, **flags)
            self.assertEqual(manifest["init"], "offline" if "from_offline" in flags else "scratch")
        for arm in ("offline", "scratch"):
            curves = files.load_csv(os.path.join(directory, f"online_{arm}", "curves.csv"))
            self.assertEqual(list(curves.columns), list(CURVE_COLUMNS))
            self.assertEqual(len(curves), 2)
            self.assertEqual(load_manifest(os.path.join(directory, f"online_{arm}"))["seed"], 0)

        s = cmd_evaluate(scenario=scenario, directory=directory, n_episodes=2, verbose=0)
        self.assertEqual(s["n_cav"], 3)
        self.assertAlmostEqual(s["collision"] + s["timeout"], s["failure"])

        written = emit_curves(directory, verbose=0)
        names = {os.path.basename(w) for w in written}
        self.assertTrue({"offline_losses_left.csv", "online_offline.csv", "online_scratch.csv", "ablation.csv",
                         "eval_default_3cav_learned.csv"} <= names)
