import os
import tempfile
from unittest import TestCase

import numpy as np

from rsurl import env
from rsurl.env import geometry, background, world
from rsurl.env.config import ScenarioConfig, A_MIN, reward_bound
from rsurl.env.log import TrajectoryLog, COLUMNS
from rsurl.env.observation import ObsLayout
from rsurl.env.routes import get_route, routes_conflict
from rsurl.env.state import Vehicle, Pedestrian, CROSSING


def _vehicle(i, arm, maneuver, xy, heading, speed, kind="background", cfg=None):
    cfg = ScenarioConfig() if cfg is None else cfg
    return Vehicle(id=i, kind=kind, route=get_route(arm, maneuver, cfg.map), xy=xy, heading=heading, speed=speed,
                   half_extents=cfg.half_extents)


def _scripted_policy(state):
    return {v.id: background.scripted_action(state, v) for v in state.cavs()}


class Test(TestCase):

    def test_reset_determinism(self):
        cfg = ScenarioConfig()
        a = env.reset(cfg, seed=11)
        b = env.reset(cfg, seed=11)
        self.assertTrue(np.array_equal(a.snapshot(), b.snapshot()))

        c = env.reset(cfg, seed=12)
        self.assertFalse(np.array_equal(a.snapshot(), c.snapshot()))

    def test_reset_counts(self):
        cfg = ScenarioConfig().update(n_cav=3, n_pedestrians=3)
        state = env.reset(cfg, seed=0)
        cavs = [v for v in state.vehicles if v.kind == "cav"]
        self.assertEqual(len(cavs), 3)
        self.assertEqual(len(state.vehicles), 5)
        self.assertEqual(len({v.route.entry for v in cavs}), 3)
        self.assertEqual([p.id for p in state.pedestrians], [5, 6, 7])

        with self.assertRaises(ValueError):
            env.reset(ScenarioConfig().update(n_cav=4), seed=0)

    def test_reset_no_overlap(self):
        cfg = ScenarioConfig().update(n_cav=2)
        for seed in range(300):
            state = env.reset(cfg, seed=seed)
            vehicles = state.vehicles
            for i, a in enumerate(vehicles):
                for b in vehicles[i+1:]:
                    self.assertFalse(env.collide(a, b), msg=f"seed {seed}: {a} {b}")
            self.assertEqual(env.detect_collision(state), [])

    def test_spawn_error(self):
        cfg = ScenarioConfig().update(n_vehicles=13, spawn_retries=5)
        with self.assertRaises(env.SpawnError):
            env.reset(cfg, seed=0)

    def test_step_kinematics(self):
        cfg = ScenarioConfig()
        cav = _vehicle(0, "W", "straight", xy=(-30, -1.75), heading=0., speed=0., kind="cav")
        state = world.from_entities(cfg, [cav])
        xy0 = cav.xy.copy()
        state, res = env.step(state, {0: [0., 0.]})
        self.assertTrue(np.array_equal(state.vehicle(0).xy, xy0))
        self.assertEqual(state.vehicle(0).speed, 0.)
        self.assertEqual(res[0].done, "running")

        cav = _vehicle(0, "W", "straight", xy=(-30, -1.75), heading=0., speed=5., kind="cav")
        state = world.from_entities(cfg, [cav])
        state, _ = env.step(state, {0: [10., 0.]})
        self.assertAlmostEqual(state.vehicle(0).speed, 5.3, places=12)
        self.assertAlmostEqual(state.vehicle(0).xy[0], -30 + 0.53, places=12)
        self.assertAlmostEqual(state.time, 0.1, places=15)
        self.assertTrue(np.allclose(state.vehicle(0).last_action, [3., 0.]))

        # the speed clamp binds: the realized action differs from the command
        cav = _vehicle(0, "W", "straight", xy=(-30, -1.75), heading=0., speed=0.2, kind="cav")
        state = world.from_entities(cfg, [cav])
        state, _ = env.step(state, {0: [-6., 0.]})
        self.assertEqual(state.vehicle(0).speed, 0.)
        self.assertTrue(np.allclose(state.vehicle(0).last_action, [-2., 0.]))

    def test_step_errors(self):
        cfg = ScenarioConfig()
        state = env.reset(cfg, seed=0)
        cav = state.cavs()[0].id

        with self.assertRaises(env.UnknownAgentError):
            env.step(state, {cav: [0., 0.], 99: [0., 0.]})
        with self.assertRaises(env.UnknownAgentError):
            env.step(state, {state.vehicles[-1].id: [0., 0.]})
        with self.assertRaises(ValueError):
            env.step(state, {cav: [np.nan, 0.]})
        with self.assertRaises(ValueError):
            env.step(state, {})
        self.assertEqual(state.step, 0)

    def test_replay(self):
        cfg = ScenarioConfig().update(n_cav=2, obs_noise=0.1)
        for seed in range(3):
            state = env.reset(cfg, seed=seed)
            noise = np.random.default_rng(seed)
            action_log = []
            snapshots = [state.snapshot()]
            while not state.done:
                actions = _scripted_policy(state)
                actions = {k: a + noise.normal(scale=0.2, size=2) for k, a in actions.items()}
                env.build_observation(state, state.cavs()[0])
                action_log.append(actions)
                state, _ = env.step(state, actions)
                snapshots.append(state.snapshot())

            replayed = env.replay(cfg, seed, action_log)
            self.assertEqual(len(replayed), len(snapshots))
            for a, b in zip(snapshots, replayed):
                self.assertTrue(np.array_equal(a, b))

    def test_episode_termination_and_reward_bound(self):
        cfg = ScenarioConfig().update(n_cav=2, debug=True)
        bound = reward_bound(cfg.weights)
        self.assertAlmostEqual(bound, 15.955, places=12)

        for seed in range(4):
            state = env.reset(cfg, seed=seed)
            n_penalty = 0
            while not state.done:
                state, results = env.step(state, _scripted_policy(state))
                for res in results.values():
                    self.assertLessEqual(abs(res.reward), bound)
                    self.assertIn(res.done, world.DONE_FLAGS)
                    n_penalty += res.components["penalty"] != 0
            self.assertIn(state.outcome, env.OUTCOMES)
            self.assertLessEqual(state.step, cfg.max_steps)
            # every CAV running at the terminal step gets the penalty once
            self.assertLessEqual(n_penalty, cfg.n_cav)
            if state.outcome == "success":
                self.assertEqual(n_penalty, 0)

            with self.assertRaises(RuntimeError):
                env.step(state, {})

    def test_observation_lone(self):
        cfg = ScenarioConfig()
        cav = _vehicle(0, "N", "left", xy=(1.75, -30), heading=np.pi / 2, speed=4., kind="cav")
        state = world.from_entities(cfg, [cav])
        layout = ObsLayout(k_veh=cfg.k_veh, k_ped=cfg.k_ped)

        obs = env.build_observation(state, 0)
        self.assertEqual(obs.shape, (41,))
        self.assertEqual(layout.n_obs, 41)
        self.assertTrue(np.all(obs[layout.veh] == 0))
        self.assertTrue(np.all(obs[layout.ped] == 0))
        self.assertEqual(obs[layout.role].tolist(), [1., 0., 0.])
        self.assertEqual(obs[layout.ctx].tolist(), [1., 0., 0.])
        self.assertAlmostEqual(obs[0], 4 / 12)
        self.assertAlmostEqual(obs[4], np.hypot(1.75, 30) / 47, places=12)
        self.assertEqual(obs[5], 0.)

    def test_observation_nearest(self):
        cfg = ScenarioConfig()
        ego = _vehicle(0, "W", "straight", xy=(-30, -1.75), heading=0.3, speed=5., kind="cav")
        offsets = np.array([[5, 3], [8, -4], [-6, 2], [12, 5], [-15, -3], [20, 1]], dtype=float)
        others = [_vehicle(i+1, "W", "straight", xy=ego.xy + o, heading=0., speed=3.) for i, o in enumerate(offsets)]
        state = world.from_entities(cfg, [ego] + others)

        obs = env.build_observation(state, 0)
        layout = ObsLayout(k_veh=cfg.k_veh, k_ped=cfg.k_ped)
        slots = layout.veh_slots(obs)
        self.assertTrue(np.all(slots[:, 0] == 1))

        d_oracle = np.sort(np.linalg.norm(offsets, axis=-1))[:4]
        d_slots = np.linalg.norm(slots[:, 1:3], axis=-1) * cfg.sense_veh
        self.assertTrue(np.allclose(d_slots, d_oracle, rtol=0, atol=1e-12))

        # ego frame: the relative position is rotated by -heading
        dp = geometry.rotate(offsets[0], -0.3) / cfg.sense_veh
        self.assertTrue(np.allclose(slots[0, 1:3], dp))

        # entities beyond the sensing radius never change a slot
        ego = _vehicle(0, "W", "straight", xy=(-30, -1.75), heading=0.3, speed=5., kind="cav")
        far = _vehicle(1, "W", "straight", xy=(-30 + 35, -1.75), heading=0., speed=3.)
        ped = Pedestrian(id=2, xy=(-30, 22), heading=0., walk_speed=1., radius=0.3, start_step=0, arm="W",
                         goal=(-30, 30))
        a = env.build_observation(world.from_entities(cfg, [ego]), 0)
        b = env.build_observation(world.from_entities(cfg, [ego.copy(), far], [ped]), 0)
        self.assertTrue(np.array_equal(a, b))

    def test_observation_tokens(self):
        layout = ObsLayout(k_veh=4, k_ped=3)
        self.assertEqual((layout.token_width, layout.token_dim, layout.n_tokens), (12, 15, 8))
        obs = np.random.default_rng(0).uniform(-1, 1, size=(2, 41))
        obs[:, layout.veh.start:layout.veh.stop:5] = 0.
        obs[:, layout.ped.start:layout.ped.stop:3] = 0.
        obs[0, layout.veh.start] = 1.
        tokens, valid = layout.tokens(obs)
        self.assertEqual(tokens.shape, (2, 8, 15))
        self.assertEqual(valid[0].tolist(), [True, True, False, False, False, False, False, False])
        self.assertEqual(valid[1, 1], False)
        self.assertTrue(np.all(tokens[1, 1, :5] == 0))

    def test_ttc(self):
        self.assertAlmostEqual(geometry.ttc_discs([0, 0], [2.5, 0], 1., [10, 0], [-2.5, 0], 1.), 1.6, places=12)
        self.assertEqual(geometry.ttc_discs([0, 0], [-1, 0], 1., [10, 0], [1, 0], 1.), np.inf)
        self.assertEqual(geometry.ttc_discs([0, 0], [0, 0], 1., [1, 0], [1, 0], 1.), 0.)

        cfg = ScenarioConfig()
        a = _vehicle(0, "W", "straight", xy=(-30, -1.75), heading=0., speed=6.)
        b = _vehicle(1, "W", "straight", xy=(-10, -1.75), heading=np.pi, speed=4.)
        r = np.linalg.norm(cfg.half_extents)
        self.assertAlmostEqual(env.ttc(a, b), (20 - 2 * r) / 10, places=9)

        rng = np.random.default_rng(3)
        t = np.arange(0, 10, 1e-3)
        for _ in range(100):
            p_a, p_b = rng.uniform(-20, 20, size=(2, 2))
            v_a, v_b = rng.uniform(-6, 6, size=(2, 2))
            r_a, r_b = rng.uniform(0.5, 2.5, size=2)
            ttc = geometry.ttc_discs(p_a, v_a, r_a, p_b, v_b, r_b)

            d = np.linalg.norm((p_b - p_a) + t[:, np.newaxis] * (v_b - v_a), axis=-1)
            hit = np.nonzero(d <= r_a + r_b)[0]
            if len(hit) == 0:
                grazing = d.min() - (r_a + r_b) < 1e-2
                self.assertTrue(ttc >= 10 - 0.01 or grazing)
            else:
                self.assertLess(abs(ttc - t[hit[0]]), 0.01)

    def test_detect_collision(self):
        cfg = ScenarioConfig()
        a = _vehicle(0, "W", "straight", xy=(-40, -1.75), heading=0., speed=0.)
        b = _vehicle(1, "E", "straight", xy=(10, 1.75), heading=np.pi, speed=0.)
        self.assertEqual(env.detect_collision(world.from_entities(cfg, [a, b])), [])

        b = _vehicle(1, "W", "straight", xy=(-40, -1.75), heading=0., speed=0.)
        self.assertEqual(env.detect_collision(world.from_entities(cfg, [b, a])), [(0, 1)])

        p = Pedestrian(id=2, xy=(-38.0, -1.75), heading=0., walk_speed=1., radius=0.3, start_step=0, arm="W",
                       goal=(-38.0, 5.))
        p.status = CROSSING
        self.assertEqual(env.detect_collision(world.from_entities(cfg, [a], [p])), [(0, 2)])
        self.assertTrue(env.collide(a, p) and env.collide(p, a))

    def test_detect_collision_long_vehicles(self):
        cfg = ScenarioConfig().update(vehicle_length=20.)
        a = _vehicle(0, "W", "straight", xy=(-40, -1.75), heading=0., speed=0., cfg=cfg)
        b = _vehicle(1, "W", "straight", xy=(-30.5, -1.75), heading=0., speed=0., cfg=cfg)
        self.assertEqual(env.detect_collision(world.from_entities(cfg, [a, b])), [(0, 1)])

        p = Pedestrian(id=2, xy=(-30.2, -1.75), heading=0., walk_speed=1., radius=0.3, start_step=0, arm="W",
                       goal=(-30.2, 5.))
        p.status = CROSSING
        self.assertEqual(env.detect_collision(world.from_entities(cfg, [a], [p])), [(0, 2)])

        b = _vehicle(1, "W", "straight", xy=(-19.5, -1.75), heading=0., speed=0., cfg=cfg)
        self.assertEqual(env.detect_collision(world.from_entities(cfg, [a, b])), [])

    def test_rectangle_oracle(self):
        rng = np.random.default_rng(4)
        half = np.array([2.25, 0.9])
        grid = np.stack(np.meshgrid(np.arange(-half[0], half[0] + 1e-9, 0.1),
                                    np.arange(-half[1], half[1] + 1e-9, 0.1), indexing="ij"), axis=-1).reshape(-1, 2)
        n_checked = 0
        for _ in range(2000):
            xy_a, xy_b = rng.uniform(-4, 4, size=(2, 2))
            th_a, th_b = rng.uniform(-np.pi, np.pi, size=2)
            sat = geometry.rectangle_rectangle(xy_a, th_a, half, xy_b, th_b, half)
            self.assertEqual(sat, geometry.rectangle_rectangle(xy_b, th_b, half, xy_a, th_a, half))

            points = geometry.rotate(grid, th_a) + xy_a
            local = np.abs(geometry.to_local(points, origin=xy_b, theta=th_b))
            oracle = bool(np.any(np.all(local <= half + 1e-6, axis=-1)))

            shrunk = geometry.rectangle_rectangle(xy_a, th_a, half - 0.2, xy_b, th_b, half - 0.2)
            grown = geometry.rectangle_rectangle(xy_a, th_a, half + 0.2, xy_b, th_b, half + 0.2)
            if shrunk:
                self.assertTrue(sat and oracle)
                n_checked += 1
            if not grown:
                self.assertFalse(sat or oracle)
                n_checked += 1
            if oracle:
                self.assertTrue(sat)
        self.assertGreater(n_checked, 500)

    def test_reward_cruising(self):
        cfg = ScenarioConfig()
        cav = _vehicle(0, "W", "straight", xy=(-40, -1.75), heading=0., speed=cfg.v_target, kind="cav")
        state = world.from_entities(cfg, [cav])
        state, res = env.step(state, {0: [0., 0.]})
        c = res[0].components
        self.assertEqual((c["safety"], c["comfort"], c["efficiency"]), (0., 0., 0.))
        self.assertEqual(res[0].reward, 0.)

    def test_reward_near_miss(self):
        cfg = ScenarioConfig()
        cav = _vehicle(0, "W", "straight", xy=(-30, -1.75), heading=0., speed=6., kind="cav")
        bg = _vehicle(1, "W", "straight", xy=(-20, -1.75), heading=0., speed=4.)
        state = world.from_entities(cfg, [cav, bg])
        state, res = env.step(state, {0: [0., 0.]})

        # hand-stepped: the background vehicle runs free-road IDM toward v_target = 6
        acc = 2 * (1 - (4 / 6)**4)
        v_bg = 4 + acc * 0.1
        x_bg = -20 + v_bg * 0.1
        x_cav = -30 + 6 * 0.1
        d = x_bg - x_cav
        r = np.hypot(2.25, 0.9)
        ttc = (d - 2 * r) / (6 - v_bg)
        safety = -max(0, 1 - ttc / 3) - max(0, 1 - d / 4)

        c = res[0].components
        self.assertAlmostEqual(state.vehicle(1).speed, v_bg, delta=1e-9)
        self.assertAlmostEqual(c["safety"], safety, delta=1e-9)
        self.assertLess(c["safety"], 0)
        self.assertEqual(c["efficiency"], 0.)
        self.assertEqual(c["comfort"], 0.)
        self.assertEqual(c["yielding"], 0.)
        self.assertEqual(c["task"], 0.)
        self.assertAlmostEqual(res[0].reward, 2.0 * safety, delta=1e-9)

    def test_reward_collision(self):
        cfg = ScenarioConfig()
        cav = _vehicle(0, "W", "straight", xy=(-30, -1.75), heading=0., speed=6., kind="cav")
        bg = _vehicle(1, "W", "straight", xy=(-26, -1.75), heading=0., speed=0.)
        state = world.from_entities(cfg, [cav, bg])
        state, res = env.step(state, {0: [0., 0.]})
        self.assertEqual(state.outcome, "collision")
        self.assertEqual(res[0].done, "collision")
        self.assertTrue(res[0].terminal)
        self.assertEqual(res[0].components["penalty"], -1.)
        self.assertEqual(state.vehicle(0).status, env.COLLIDED)
        self.assertEqual(state.vehicle(1).status, env.COLLIDED)

    def test_reward_task_shared_success(self):
        cfg = ScenarioConfig().update(n_cav=2)
        early = _vehicle(0, "W", "straight", xy=(14, -1.75), heading=0., speed=6., kind="cav")
        late = _vehicle(1, "E", "straight", xy=(0, 1.75), heading=np.pi, speed=6., kind="cav")
        state = world.from_entities(cfg, [early, late])

        task = {0: 0., 1: 0.}
        arrived_at = {}
        while not state.done:
            state, results = env.step(state, _scripted_policy(state))
            for k, res in results.items():
                task[k] += res.components["task"]
                if res.done == "success" and k not in arrived_at:
                    arrived_at[k] = state.step
                    self.assertEqual(res.components["task"], 2. if state.done else 1.)
            if not state.done and 0 in arrived_at and arrived_at[0] < state.step:
                self.assertNotIn(0, results)

        self.assertEqual(state.outcome, "success")
        self.assertLess(arrived_at[0], arrived_at[1])
        self.assertEqual(task, {0: 2., 1: 2.})

        # the parked CAV is credited the shared bonus alone, on the step that completes the success
        self.assertEqual(set(results), {0, 1})
        c = results[0].components
        self.assertEqual(results[0].done, "success")
        self.assertEqual(c["task"], 1.)
        self.assertEqual(sum(abs(v) for k, v in c.items() if k != "task"), 0.)
        self.assertEqual(results[0].reward, cfg.weights.task)

    def test_reward_task_single_arrival(self):
        cfg = ScenarioConfig()
        cav = _vehicle(0, "W", "straight", xy=(16.8, -1.75), heading=0., speed=6., kind="cav")
        state = world.from_entities(cfg, [cav])
        state, res = env.step(state, {0: [0., 0.]})
        self.assertEqual(state.outcome, "success")
        self.assertEqual(state.vehicle(0).status, env.ARRIVED)
        self.assertEqual(res[0].components["task"], 2.)
        self.assertEqual(res[0].reward, 2 * cfg.weights.task)

    def test_reward_yielding(self):
        cfg = ScenarioConfig()

        def yielding(acc, other_xy):
            cav = _vehicle(0, "W", "straight", xy=(-12, -1.75), heading=0., speed=5., kind="cav")
            bg = _vehicle(1, "S", "straight", xy=other_xy, heading=-np.pi / 2, speed=3.)
            self.assertTrue(routes_conflict(cav.route, bg.route, cfg.map))
            state, res = env.step(world.from_entities(cfg, [cav, bg]), {0: [acc, 0.]})
            return res[0].components["yielding"]

        self.assertEqual(yielding(-2., other_xy=(-1.75, 3.)), 0.1)
        self.assertEqual(yielding(0., other_xy=(-1.75, 3.)), 0.)
        self.assertEqual(yielding(1., other_xy=(-1.75, 3.)), 0.)
        self.assertEqual(yielding(-2., other_xy=(-1.75, 20.)), 0.)

    def test_reward_yielding_pedestrian(self):
        cfg = ScenarioConfig()

        def yielding(cav_x, ped_x):
            cav = _vehicle(0, "W", "straight", xy=(cav_x, -1.75), heading=0., speed=5., kind="cav")
            p = Pedestrian(id=1, xy=(ped_x, -1.75), heading=np.pi / 2, walk_speed=1.2, radius=0.3, start_step=0,
                           arm="W", goal=(ped_x, 2.75))
            p.status = CROSSING
            state, res = env.step(world.from_entities(cfg, [cav], [p]), {0: [-2., 0.]})
            self.assertIsNone(state.outcome)
            self.assertTrue(background.pedestrian_conflict(state, state.vehicle(0)))
            return res[0].components["yielding"]

        # on the crosswalk, outside the junction box
        self.assertEqual(yielding(cav_x=-16., ped_x=-9.), 0.)
        # inside the box
        self.assertEqual(yielding(cav_x=-12., ped_x=-5.), 0.1)

    def test_reward_coop(self):
        cfg = ScenarioConfig().update(n_cav=2)

        def coop(speed):
            a = _vehicle(0, "W", "straight", xy=(-9, -1.75), heading=0., speed=speed, kind="cav")
            b = _vehicle(1, "S", "straight", xy=(-1.75, 9), heading=-np.pi / 2, speed=0., kind="cav")
            self.assertTrue(routes_conflict(a.route, b.route, cfg.map))
            state, res = env.step(world.from_entities(cfg, [a, b]), {0: [0., 0.], 1: [0., 0.]})
            return res[0].components["coop"], res[1].components["coop"]

        self.assertEqual(coop(0.), (-0.05, -0.05))
        self.assertEqual(coop(0.2), (-0.05, -0.05))
        self.assertEqual(coop(4.), (0., 0.))

    def test_background_collision_despawns(self):
        cfg = ScenarioConfig()
        cav = _vehicle(0, "W", "straight", xy=(-40, -1.75), heading=0., speed=0., kind="cav")
        a = _vehicle(1, "E", "straight", xy=(30, 1.75), heading=np.pi, speed=0.)
        b = _vehicle(2, "E", "straight", xy=(27, 1.75), heading=np.pi, speed=0.)
        state = world.from_entities(cfg, [cav, a, b])
        state, res = env.step(state, {0: [0., 0.]})
        self.assertIsNone(state.outcome)
        self.assertEqual(res[0].done, "running")
        self.assertEqual([v.status for v in state.vehicles], [env.RUNNING, env.DESPAWNED, env.DESPAWNED])

    def test_background_free_road(self):
        cfg = ScenarioConfig()
        bg = _vehicle(0, "W", "straight", xy=(-46, -1.75), heading=0., speed=2.)
        state = world.from_entities(cfg, [bg])
        speeds = [2.]
        for _ in range(100):
            state, _ = env.step(state, {})
            speeds.append(state.vehicle(0).speed)
        speeds = np.array(speeds)
        self.assertTrue(np.all(np.diff(speeds) >= 0))
        self.assertTrue(np.all(speeds <= cfg.v_target + 1e-9))
        self.assertGreater(speeds[-1], 5.5)

    def test_background_pedestrian(self):
        cfg = ScenarioConfig()
        bg = _vehicle(0, "W", "straight", xy=(-25, -1.75), heading=0., speed=5.)
        p = Pedestrian(id=1, xy=(-18, -1.75), heading=np.pi / 2, walk_speed=1.2, radius=0.3, start_step=0, arm="W",
                       goal=(-18, 2.75))
        p.status = CROSSING
        state = world.from_entities(cfg, [bg], [p])
        self.assertEqual(env.background_controller(state, bg)[0], A_MIN)

        with self.assertRaises(ValueError):
            env.background_controller(state, _vehicle(2, "W", "straight", xy=(-40, -1.75), heading=0., speed=0.,
                                                      kind="cav"))

    def test_background_arrival_order(self):
        cfg = ScenarioConfig()
        a = _vehicle(0, "W", "straight", xy=(-12, -1.75), heading=0., speed=5.)
        b = _vehicle(1, "S", "straight", xy=(-1.75, 12), heading=-np.pi / 2, speed=5.)
        self.assertTrue(routes_conflict(a.route, b.route, cfg.map))

        state = world.from_entities(cfg, [a, b])
        state.approach_time = {0: 0.0, 1: 1.0}
        self.assertTrue(background.must_yield(state, state.vehicle(1)))
        self.assertFalse(background.must_yield(state, state.vehicle(0)))

        entered = {}
        for _ in range(200):
            state, _ = env.step(state, {})
            for v in state.vehicles:
                if v.id not in entered and background.progress(v) >= v.route.s_box_in:
                    entered[v.id] = state.step
            self.assertEqual(env.detect_collision(state), [])
        self.assertIn(0, entered)
        self.assertIn(1, entered)
        self.assertLess(entered[0], entered[1])

    def test_trajectory_log(self):
        cfg = ScenarioConfig()
        state = env.reset(cfg, seed=5)
        log = TrajectoryLog()
        env.run_episode(state, _scripted_policy, on_step=log.on_step(episode=3))
        df = log.to_frame()

        self.assertEqual(tuple(df.columns), COLUMNS)
        self.assertEqual(len(df), (state.step + 1) * (cfg.n_vehicles + cfg.n_pedestrians))
        self.assertTrue(np.all(df["episode"] == 3))
        self.assertTrue(np.all(df["seed"] == 5))

        cav = df[df["kind"] == "cav"]
        self.assertTrue(np.all(np.isfinite(cav["a_acc"].values[:-1])))
        self.assertTrue(np.isnan(cav["a_acc"].values[-1]))
        self.assertTrue(np.all(np.isnan(df[df["kind"] != "cav"]["a_acc"])))
        self.assertTrue(np.all(df[df["kind"] == "pedestrian"]["maneuver"] == "-"))

        with tempfile.TemporaryDirectory() as directory:
            file = os.path.join(directory, "log.csv")
            log.save(file, seed=5, config_hash="abc")
            loaded = TrajectoryLog.load(file)
        self.assertEqual(tuple(loaded.columns), COLUMNS)
        for c in ("x", "y", "heading", "speed", "time"):
            self.assertTrue(np.array_equal(loaded[c].values, df[c].values))
        self.assertTrue(np.array_equal(loaded["status"].values, df["status"].values))
