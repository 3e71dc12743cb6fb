import tempfile
from unittest import TestCase

import numpy as np
from scipy import integrate

from rsurl import testing
from rsurl import tensor as tn
from rsurl.env.observation import ObsLayout
from rsurl.nets import (MultiHeadSelfAttention, mhsa_forward, Actor, RoleActorSet, actor_forward, TwinCritic,
                        twin_q_forward, ValueNet, Linear, Normalizer, log_prob_and_entropy, soft_update, adam_step,
                        AdamState, grad_clip, Adam, NonFiniteGradientError, default_arch, save_run, load_run,
                        to_physical, to_normalized)


def _attention_oracle(tokens, valid, mhsa):
    """Per-head explicit loops."""
    p = {k: v.data for k, v in mhsa.params.items()}
    x = tokens @ p["w_embed"]
    n = len(tokens)
    heads = []
    for i in range(mhsa.n_heads):
        q, k, v = x @ p[f"w_q{i}"], x @ p[f"w_k{i}"], x @ p[f"w_v{i}"]
        out = np.zeros((n, mhsa.d_k))
        for r in range(n):
            scores = [q[r] @ k[c] / np.sqrt(mhsa.d_k) for c in range(n)]
            m = max(s for s, ok in zip(scores, valid) if ok)
            e = [np.exp(s - m) if ok else 0. for s, ok in zip(scores, valid)]
            total = sum(e)
            for c in range(n):
                out[r] += e[c] / total * v[c]
        heads.append(out)
    return np.concatenate(heads, axis=-1) @ p["w_o"]


def _small_arch(use_attention):
    return default_arch(hidden=(8,), use_attention=use_attention, n_heads=2, d_model=8, d_k=4)


def _random_obs(rng, n, layout: ObsLayout):
    obs = rng.uniform(-1, 1, size=(n, layout.n_obs))
    obs[:, layout.veh.start:layout.veh.stop:5] = rng.integers(0, 2, size=(n, layout.k_veh))
    obs[:, layout.ped.start:layout.ped.stop:3] = rng.integers(0, 2, size=(n, layout.k_ped))
    return obs


class Test(TestCase):

    def test_mhsa_single_token(self):
        rng = np.random.default_rng(0)
        mhsa = MultiHeadSelfAttention(feature_dim=5, rng=rng, n_heads=2, d_model=6, d_k=3)
        tokens = rng.normal(size=(1, 5))
        y, w = mhsa(tokens, return_weights=True)
        self.assertEqual(w[0, :, 0, 0].tolist(), [1., 1.])

        p = {k: v.data for k, v in mhsa.params.items()}
        x = tokens @ p["w_embed"]
        oracle = np.concatenate([x @ p["w_v0"], x @ p["w_v1"]], axis=-1) @ p["w_o"]
        self.assertTrue(np.allclose(y.data, oracle, rtol=0, atol=1e-12))

        tokens = rng.normal(size=(4, 5))
        _, w = mhsa(tokens, valid=[False, True, False, False], return_weights=True)
        self.assertTrue(np.all(w[0, :, :, 1] == 1.))
        self.assertTrue(np.all(w[0, :, :, [0, 2, 3]] == 0.))

    def test_mhsa_oracle(self):
        rng = np.random.default_rng(1)
        for _ in range(5):
            mhsa = MultiHeadSelfAttention(feature_dim=4, rng=rng, n_heads=2, d_model=6, d_k=3)
            tokens = rng.normal(size=(3, 4))
            valid = np.array([True, rng.uniform() < 0.5, True])
            y, w = mhsa(tokens, valid=valid, return_weights=True)
            self.assertTrue(np.allclose(y.data, _attention_oracle(tokens, valid, mhsa), rtol=0, atol=1e-10))
            self.assertTrue(np.array_equal(mhsa_forward(tokens, mhsa, valid=valid).data, y.data))
            self.assertTrue(np.allclose(w.sum(axis=-1), 1, rtol=0, atol=1e-12))
            self.assertTrue(np.all(w[..., ~valid] == 0))

    def test_mhsa_permutation(self):
        rng = np.random.default_rng(2)
        mhsa = MultiHeadSelfAttention(feature_dim=15, rng=rng, n_heads=4, d_model=16, d_k=4)
        tokens = rng.normal(size=(2, 6, 15))
        valid = rng.uniform(size=(2, 6)) < 0.7
        valid[:, 0] = True
        perm = rng.permutation(6)
        y = mhsa(tokens, valid=valid).data
        y_perm = mhsa(tokens[:, perm], valid=valid[:, perm]).data
        self.assertTrue(np.allclose(y[:, perm], y_perm, rtol=0, atol=1e-10))

    def test_mhsa_errors(self):
        rng = np.random.default_rng(3)
        mhsa = MultiHeadSelfAttention(feature_dim=5, rng=rng, n_heads=2, d_model=6, d_k=3)
        with self.assertRaises(ValueError):
            mhsa(rng.normal(size=(3, 5)), valid=[False, False, False])
        with self.assertRaises(tn.DimensionError):
            mhsa(rng.normal(size=(3, 4)))
        mhsa.params["w_o"].data = np.zeros((5, 6))
        with self.assertRaises(tn.DimensionError):
            mhsa(rng.normal(size=(3, 5)))

    def test_actor_zero_final_layer(self):
        rng = np.random.default_rng(4)
        actor = Actor("left", rng=rng)
        last = actor.modules["trunk"].layers[-1]
        last.params["w"].data = np.zeros_like(last.params["w"].data)
        last.params["b"].data = np.zeros_like(last.params["b"].data)
        mean, std = actor(_random_obs(rng, 5, actor.layout))
        self.assertTrue(np.all(mean.data == 0))
        self.assertTrue(np.allclose(std.data, np.exp(-1)))

    def test_actor_std_bounds(self):
        actor = Actor("right", rng=np.random.default_rng(5))
        actor.params["log_std"].data = np.array([10., -10.])
        _, std = actor(np.zeros(41))
        self.assertTrue(np.allclose(std.data, [np.exp(2), np.exp(-5)], rtol=0, atol=1e-15))

    def test_actor_masked_slots(self):
        rng = np.random.default_rng(6)
        for use_attention in (False, True):
            actor = Actor("straight", rng=rng, arch=_small_arch(use_attention))
            if use_attention:
                actor.encoder.params["w_back"].data = rng.normal(size=actor.encoder.params["w_back"].shape)
            layout = actor.layout
            obs = _random_obs(rng, 4, layout)
            obs[:, layout.veh.start + 5] = 0.  # second vehicle slot invalid
            other = obs.copy()
            other[:, layout.veh.start + 6:layout.veh.start + 10] = rng.normal(size=(4, 4))
            self.assertTrue(np.array_equal(actor(obs)[0].data, actor(other)[0].data))

    def test_actor_manual_forward(self):
        rng = np.random.default_rng(7)
        actor = Actor("left", rng=rng, arch=_small_arch(False))
        layout = actor.layout
        actor.encoder.normalizer.fit(_random_obs(rng, 50, layout))
        obs = _random_obs(rng, 3, layout)

        nz = actor.encoder.normalizer.buffers
        x = (layout.mask(obs) - nz["mean"]) / nz["std"]
        for i, layer in enumerate(actor.modules["trunk"].layers):
            x = x @ layer.params["w"].data + layer.params["b"].data
            if i == 0:
                x = np.tanh(x)
        self.assertTrue(np.allclose(actor(obs)[0].data, x, rtol=0, atol=1e-10))

    def test_role_actor_set(self):
        actors = RoleActorSet.new(seed=0, arch=_small_arch(False))
        self.assertEqual(sorted(actors), ["left", "right", "straight"])
        obs = np.zeros((1, actors["left"].layout.n_obs))
        mean, std = actor_forward(obs, "left", actors)
        self.assertTrue(np.array_equal(mean.data, actors["left"](obs)[0].data))
        self.assertTrue(np.all(std.data > 0))
        with self.assertRaises(ValueError):
            _ = actors["u-turn"]
        with self.assertRaises(ValueError):
            Actor("u-turn", rng=np.random.default_rng(0))

        a = to_physical([[-1., 1.], [1., -1.]])
        self.assertTrue(np.allclose(a, [[-6., 0.6], [3., -0.6]]))
        self.assertTrue(np.allclose(to_normalized(a), [[-1., 1.], [1., -1.]]))

    def test_log_prob_and_entropy(self):
        logp, entropy = log_prob_and_entropy(np.array([[0.3, -0.2]]), np.ones(2), np.array([[0.3, -0.2]]))
        self.assertAlmostEqual(logp.item(), -np.log(2 * np.pi), places=12)
        self.assertAlmostEqual(entropy.item(), np.log(2 * np.pi * np.e), places=12)

        with self.assertRaises(ValueError):
            log_prob_and_entropy(np.zeros((1, 2)), np.array([1., 0.]), np.zeros((1, 2)))
        with self.assertRaises(ValueError):
            log_prob_and_entropy(np.zeros((1, 2)), np.array([1., -1.]), np.zeros((1, 2)))

        mean, std = np.array([0.4, -0.7]), np.array([0.6, 1.3])

        def density(y, x):
            return np.exp(log_prob_and_entropy(mean[np.newaxis], std, np.array([[x, y]]))[0].item())

        lim = [(m - 8 * s, m + 8 * s) for m, s in zip(mean, std)]
        mass, _ = integrate.dblquad(density, *lim[0], *lim[1], epsabs=1e-10)
        self.assertAlmostEqual(mass, 1., delta=1e-6)

        h, _ = integrate.dblquad(lambda y, x: -density(y, x) * np.log(density(y, x)), *lim[0], *lim[1],
                                 epsabs=1e-10)
        _, entropy = log_prob_and_entropy(mean[np.newaxis], std, mean[np.newaxis])
        self.assertAlmostEqual(entropy.item(), h, delta=1e-6)

        x = np.array([[0.9, 0.1]])
        logp, _ = log_prob_and_entropy(mean[np.newaxis], std, x)
        oracle = np.sum(-0.5 * ((x - mean) / std)**2 - np.log(std * np.sqrt(2 * np.pi)))
        self.assertAlmostEqual(logp.item(), oracle, places=12)

    def test_twin_critic(self):
        rng = np.random.default_rng(8)
        critic = TwinCritic(rng=rng, arch=_small_arch(False))
        obs = _random_obs(rng, 4, critic.layout)
        u = rng.uniform(-1, 1, size=(4, 2))

        q1, q2 = critic(obs, u)
        self.assertEqual(q1.shape, (4,))
        self.assertTrue(np.array_equal(twin_q_forward(obs, u, critic)[1].data, q2.data))
        self.assertFalse(np.allclose(q1.data, q2.data))

        critic.modules["q2"].load_state_dict(critic.modules["q1"].state_dict())
        q1, q2 = critic(obs, u)
        self.assertTrue(np.array_equal(q1.data, q2.data))

        # manual forward
        x = np.concatenate([critic.layout.mask(obs), u], axis=-1)
        for i, layer in enumerate(critic.modules["q1"].modules["mlp"].layers):
            x = x @ layer.params["w"].data + layer.params["b"].data
            if i == 0:
                x = np.tanh(x)
        self.assertTrue(np.allclose(q1.data, x[:, 0], rtol=0, atol=1e-10))

        with self.assertRaises(tn.DimensionError):
            critic(obs, u[:3])

        target = critic.target(obs, u)
        self.assertEqual(target.shape, (4,))

    def test_soft_update(self):
        rng = np.random.default_rng(9)
        online, target = Linear(1, 1, rng=rng), Linear(1, 1, rng=rng)
        online.params["w"].data = np.ones((1, 1))
        target.params["w"].data = np.zeros((1, 1))
        soft_update(target, online, tau=0.005)
        self.assertEqual(target.params["w"].data.item(), 0.005)

        with self.assertRaises(ValueError):
            soft_update(target, online, tau=0.)
        with self.assertRaises(ValueError):
            soft_update(target, online, tau=1.5)

        critic = TwinCritic(rng=rng, arch=_small_arch(False))
        q1, q1t = critic.modules["q1"], critic.modules["q1_target"]
        for p in q1.parameters():
            p.data = p.data + rng.normal(size=p.shape)

        def distance():
            return np.sqrt(sum(np.sum((a.data - b.data)**2) for a, b in zip(q1t.parameters(), q1.parameters())))

        d0 = distance()
        critic.update_targets(tau=0.1)
        self.assertLessEqual(distance(), 0.9 * d0 * (1 + 1e-12))

        snapshot = q1t.state_dict()
        soft_update(q1t, q1t.copy(), tau=0.3)
        for k, v in q1t.state_dict().items():
            self.assertTrue(np.allclose(v, snapshot[k], rtol=1e-14, atol=1e-15))

        critic.update_targets(tau=1.)
        for a, b in zip(q1t.parameters(), q1.parameters()):
            self.assertTrue(np.array_equal(a.data, b.data))

    def test_adam(self):
        p = tn.Tensor([1.5], requires_grad=True)
        state = AdamState([p])
        adam_step([p], [np.zeros(1)], state, lr=0.1)
        self.assertEqual(p.data.tolist(), [1.5])

        # hand-evaluated recurrence
        p = tn.Tensor([1.], requires_grad=True)
        state = AdamState([p])
        lr, b1, b2, eps = 0.01, 0.9, 0.999, 1e-8
        x, m, v = 1., 0., 0.
        for t, g in enumerate([0.5, -1.0, 2.0], start=1):
            adam_step([p], [np.array([g])], state, lr=lr, beta1=b1, beta2=b2, eps=eps)
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * g * g
            x = x - lr * (m / (1 - b1**t)) / (np.sqrt(v / (1 - b2**t)) + eps)
            self.assertAlmostEqual(p.data[0], x, delta=1e-12)

        with self.assertRaises(NonFiniteGradientError):
            adam_step([p], [np.array([np.nan])], state, lr=lr, verbose=0)
        self.assertAlmostEqual(p.data[0], x, delta=1e-12)
        self.assertEqual(state.n_skipped, 1)
        self.assertEqual(state.n_steps, 3)

    def test_grad_clip(self):
        grads = [np.array([6., 0.]), np.array([[8.]])]
        n = grad_clip(grads, max_norm=5)
        self.assertEqual(n, 10.)
        self.assertAlmostEqual(np.sqrt(sum(np.sum(g**2) for g in grads)), 5., delta=1e-12)

        grads = [np.array([0.3, 0.4])]
        grad_clip(grads, max_norm=5)
        self.assertEqual(grads[0].tolist(), [0.3, 0.4])

    def test_adam_class_trains(self):
        rng = np.random.default_rng(10)
        layer = Linear(3, 1, rng=rng)
        x = rng.normal(size=(32, 3))
        y = x @ np.array([[1.], [-2.], [0.5]])
        opt = Adam(layer.parameters(), lr=0.05, max_norm=10.)
        losses = []
        for _ in range(200):
            opt.zero_grad()
            loss = tn.mean(tn.square(tn.sub(layer(x), y)))
            loss.backward()
            opt.step()
            losses.append(loss.item())
        self.assertLess(losses[-1], 0.01 * losses[0])

    def test_gradients_through_attention(self):
        rng = np.random.default_rng(11)
        actor = Actor("left", rng=rng, arch=_small_arch(True))
        actor.encoder.params["w_back"].data = rng.normal(scale=0.3, size=actor.encoder.params["w_back"].shape)
        obs = _random_obs(rng, 3, actor.layout)
        u = rng.uniform(-1, 1, size=(3, 2))

        def actor_loss():
            mean, std = actor(obs)
            logp, entropy = log_prob_and_entropy(mean, std, u)
            return tn.sub(tn.mean(tn.neg(logp)), tn.mul(entropy, 0.01))

        self.assertTrue(testing.check_gradients(actor_loss, actor.parameters()))

        value = ValueNet(rng=rng, arch=_small_arch(True))
        value.encoder.params["w_back"].data = rng.normal(scale=0.3, size=value.encoder.params["w_back"].shape)
        returns = rng.normal(size=3)

        def value_loss():
            return tn.mean(tn.square(tn.sub(value(obs), returns)))

        self.assertEqual(value(obs).shape, (3,))
        self.assertTrue(testing.check_gradients(value_loss, value.parameters()))

    def test_normalizer(self):
        x = np.array([[1., 5.], [3., 5.], [5., 5.]])
        nz = Normalizer(2).fit(x)
        self.assertEqual(nz.buffers["std"][1], 1.)
        self.assertTrue(np.allclose(nz(x)[:, 0], [-1.2247448713915890, 0., 1.2247448713915890]))
        self.assertTrue(np.all(nz(x)[:, 1] == 0))

    def test_save_load_run(self):
        rng = np.random.default_rng(12)
        actors = RoleActorSet.new(seed=1, arch=_small_arch(False))
        actors["left"].add_attention(rng=rng)
        critic = TwinCritic(rng=rng, arch=_small_arch(False))
        value = ValueNet(rng=rng, arch=_small_arch(True))
        obs = _random_obs(rng, 2, critic.layout)

        with tempfile.TemporaryDirectory() as directory:
            save_run(directory, actors, phase="online", config_hash="abc", seed=3, init="offline",
                     critic=critic, value=value)
            actors2, critic2, value2, manifest = load_run(directory)

        self.assertEqual(manifest["phase"], "online")
        self.assertEqual(manifest["init"], "offline")
        for role, actor in actors.items():
            self.assertEqual(actor.arch, actors2[role].arch)
            for k, v in actor.state_dict().items():
                self.assertTrue(np.array_equal(v, actors2[role].state_dict()[k]))
            self.assertTrue(np.array_equal(actor(obs)[0].data, actors2[role](obs)[0].data))
        self.assertTrue(np.array_equal(critic(obs, np.zeros((2, 2)))[0].data, critic2(obs, np.zeros((2, 2)))[0].data))
        self.assertTrue(np.array_equal(value(obs).data, value2(obs).data))

        with self.assertRaises(ValueError):
            save_run(tempfile.gettempdir(), actors, phase="warmup")
