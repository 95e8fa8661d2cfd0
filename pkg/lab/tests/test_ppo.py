import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase, tag
from hypothesis import given, settings, strategies as st

from lab.env import SecureIsacEnv
from lab.neural import AdamState, init_critic, init_policy, load_checkpoint, mlp_forward
from lab.ppo import (
    HybridSettings,
    collect_rollout,
    clipped_objective,
    compute_gae,
    evaluate,
    ppo_update,
    probability_ratios,
    train,
)
from lab.scenario import spawn_streams, tiny_scenario


def brute_force_gae(rewards, values, boundaries, gamma, lam):
    advantages = np.zeros(len(rewards))
    for t in range(len(rewards)):
        for k in range(t, len(rewards)):
            following = 0.0 if boundaries[k] or k + 1 == len(rewards) else values[k + 1]
            delta = rewards[k] + gamma * following - values[k]
            advantages[t] += (gamma * lam) ** (k - t) * delta
            if boundaries[k]:
                break
    return advantages


def small_setup(seed=0, **hyperparams):
    config = tiny_scenario().with_hyperparams(hidden_sizes=(16,), **hyperparams)
    rng = np.random.default_rng(seed)
    policy = init_policy(config.observation_dim, config.action_dim, (16,), rng)
    critic = init_critic(config.observation_dim, (16,), rng)
    return config, policy, critic


class AdvantageTestCase(SimpleTestCase):
    @settings(max_examples=50, deadline=None)
    @given(st.integers(min_value=1, max_value=30), st.integers(min_value=0, max_value=2 ** 32 - 1),
           st.floats(min_value=0.0, max_value=1.0), st.floats(min_value=0.0, max_value=1.0))
    def test_matches_brute_force(self, length, seed, gamma, lam):
        rng = np.random.default_rng(seed)
        rewards, values = rng.standard_normal(length), rng.standard_normal(length)
        boundaries = rng.random(length) < 0.2
        boundaries[-1] = True
        advantages, returns = compute_gae(rewards, values, boundaries, gamma, lam)
        np.testing.assert_allclose(advantages, brute_force_gae(rewards, values, boundaries, gamma, lam),
                                   atol=1e-10)
        np.testing.assert_allclose(returns, advantages + values)

    def test_zero_lambda_is_one_step_error(self):
        rewards, values = np.array([1.0, 2.0, 3.0]), np.array([0.5, 0.1, -0.2])
        boundaries = np.array([False, False, True])
        advantages, _ = compute_gae(rewards, values, boundaries, 0.9, 0.0)
        np.testing.assert_allclose(advantages, [1.0 + 0.9 * 0.1 - 0.5, 2.0 - 0.9 * 0.2 - 0.1, 3.2])

    def test_bootstrap_values_at_a_cut(self):
        rewards, values = np.array([1.0, 1.0]), np.array([0.0, 0.0])
        boundaries = np.array([False, True])
        advantages, _ = compute_gae(rewards, values, boundaries, 0.5, 1.0,
                                    next_values=np.array([0.0, 4.0]))
        np.testing.assert_allclose(advantages, [1.0 + 0.5 * 3.0, 3.0])


class ClippedObjectiveTestCase(SimpleTestCase):
    def test_hand_cases(self):
        advantage = 2.0
        self.assertAlmostEqual(float(clipped_objective(1.5, advantage, 0.2)), 1.2 * advantage)
        self.assertAlmostEqual(float(clipped_objective(0.5, advantage, 0.2)), 0.5 * advantage)
        self.assertAlmostEqual(float(clipped_objective(0.5, -advantage, 0.2)), -0.8 * advantage)
        self.assertAlmostEqual(float(clipped_objective(1.5, -advantage, 0.2)), -1.5 * advantage)
        self.assertAlmostEqual(float(clipped_objective(1.0, advantage, 0.2)), advantage)

    def test_vectorized(self):
        np.testing.assert_allclose(clipped_objective([1.5, 0.5], [1.0, -1.0], 0.2), [1.2, -0.8])


class RolloutTestCase(SimpleTestCase):
    def setUp(self):
        self.config, self.policy, self.critic = small_setup()
        self.env = SecureIsacEnv(self.config)

    def test_buffer_layout(self):
        buffer = collect_rollout(self.env, self.policy, self.critic, 50, np.random.default_rng(1))
        n_slots = self.config.n_slots
        self.assertTrue(buffer.full)
        self.assertEqual(len(buffer.episodes), 50 // n_slots)
        expected = np.zeros(50, dtype=bool)
        expected[n_slots - 1::n_slots] = True
        expected[-1] = True
        np.testing.assert_array_equal(buffer.boundaries, expected)
        inner = ~buffer.boundaries[:-1]
        np.testing.assert_array_equal(buffer.next_values[:-1][inner], buffer.values[1:][inner])
        values, _ = mlp_forward(self.critic, buffer.observations)
        np.testing.assert_allclose(buffer.values, values[:, 0])

    def test_unfinished_episode_is_continued(self):
        rng = np.random.default_rng(1)
        collect_rollout(self.env, self.policy, self.critic, 15, rng)
        self.assertEqual(self.env.state.slot, 15)
        buffer = collect_rollout(self.env, self.policy, self.critic, 15, rng)
        self.assertEqual(len(buffer.episodes), 1)
        self.assertTrue(buffer.boundaries[4])

    def test_first_ratio_is_one(self):
        buffer = collect_rollout(self.env, self.policy, self.critic, 40, np.random.default_rng(2))
        ratios = probability_ratios(self.policy, buffer.observations, buffer.actions, buffer.log_probs)
        np.testing.assert_allclose(ratios, 1.0, atol=1e-10)


class UpdateTestCase(SimpleTestCase):
    def update(self, algorithm='ppo', **hyperparams):
        config, policy, critic = small_setup(batch_size=40, minibatch_size=10, **hyperparams)
        hp = config.rl_hyperparams
        buffer = collect_rollout(SecureIsacEnv(config), policy, critic, hp.batch_size,
                                 np.random.default_rng(3))
        actor_optimizer = AdamState.for_params(policy.arrays(), hp.actor_lr)
        critic_optimizer = AdamState.for_params(critic.arrays(), hp.critic_lr)
        before = [array.copy() for array in policy.arrays() + critic.arrays()]
        stats = ppo_update(buffer, policy, critic, actor_optimizer, critic_optimizer, hp,
                           np.random.default_rng(4), algorithm)
        after = policy.arrays() + critic.arrays()
        return stats, before, after, actor_optimizer

    def test_zero_learning_rate_keeps_parameters(self):
        stats, before, after, _ = self.update(actor_lr=0.0, critic_lr=0.0)
        for old, new in zip(before, after):
            np.testing.assert_array_equal(old, new)
        self.assertLess(stats.initial_ratio_deviation, 1e-10)
        self.assertEqual(stats.clip_fraction, 0.0)

    def test_ppo_runs_every_epoch(self):
        stats, before, after, optimizer = self.update(update_epochs=3)
        self.assertEqual(optimizer.step, 3 * 4)
        self.assertTrue(any(not np.array_equal(old, new) for old, new in zip(before, after)))
        self.assertTrue(np.isfinite(stats.actor_loss) and np.isfinite(stats.critic_loss))

    def test_a2c_runs_one_epoch(self):
        stats, _, _, optimizer = self.update('a2c', update_epochs=3)
        self.assertEqual(optimizer.step, 4)
        self.assertEqual(stats.clip_fraction, 0.0)

    def test_unknown_algorithm_is_rejected(self):
        with self.assertRaises(ValueError):
            self.update('sac')


class TrainTestCase(SimpleTestCase):
    def test_zero_episodes(self):
        config = tiny_scenario().with_hyperparams(episodes=0, hidden_sizes=(8,))
        with tempfile.TemporaryDirectory() as directory:
            path = Path(directory) / 'policy.npz'
            report = train(config, checkpoint_path=path)
            policy, critic = load_checkpoint(path)
        self.assertEqual(report.episodes, 0)
        self.assertEqual(report.best_return, float('-inf'))
        np.testing.assert_array_equal(policy.mean.weights[0], report.policy.mean.weights[0])
        self.assertIsNotNone(critic)

    def test_same_seed_same_returns(self):
        config = tiny_scenario().with_hyperparams(
            episodes=3, batch_size=40, minibatch_size=20, hidden_sizes=(8,), update_epochs=2)
        first, second = train(config), train(config)
        self.assertEqual(first.episodes, 3)
        self.assertEqual(first.episode_returns, second.episode_returns)
        self.assertEqual(len(first.actor_losses), 3)
        self.assertEqual(first.best_return, max(
            np.mean(first.episode_returns[:2]), first.episode_returns[2]))

    def test_a2c_trains(self):
        config = tiny_scenario().with_hyperparams(
            episodes=2, batch_size=40, minibatch_size=20, hidden_sizes=(8,))
        report = train(config, algorithm='a2c')
        self.assertEqual(report.algorithm, 'a2c')
        self.assertEqual(report.episodes, 2)

    def test_unknown_algorithm(self):
        with self.assertRaises(ValueError):
            train(tiny_scenario(), algorithm='dqn')

    @tag('slow')
    def test_learning_smoke(self):
        rising = beats_a2c = beats_untrained = 0
        for seed in range(5):
            config = tiny_scenario().replace(seed=seed)
            hp = config.rl_hyperparams
            report = train(config)
            self.assertEqual(report.episodes, hp.episodes)
            self.assertTrue(np.all(np.isfinite(report.episode_returns)))
            returns = np.asarray(report.episode_returns)
            rising += returns[-50:].mean() > returns[:50].mean()

            a2c = train(config, algorithm='a2c')
            beats_a2c += returns[-50:].mean() > np.mean(a2c.episode_returns[-50:])

            untrained = init_policy(config.observation_dim, config.action_dim, hp.hidden_sizes,
                                    spawn_streams(seed)['init'], hp.log_std_init)
            trained = evaluate(report.policy, SecureIsacEnv(config), 1, seed=seed)
            baseline = evaluate(untrained, SecureIsacEnv(config), 1, seed=seed)
            beats_untrained += trained.mean_return > baseline.mean_return

        self.assertGreaterEqual(rising, 4)
        self.assertGreaterEqual(beats_a2c, 3)
        self.assertGreaterEqual(beats_untrained, 3)


class EvaluateTestCase(SimpleTestCase):
    def setUp(self):
        self.config, self.policy, _ = small_setup()

    def test_digital_evaluation(self):
        beams = []
        report = evaluate(self.policy, SecureIsacEnv(self.config), 2, seed=0, beam_log=beams)
        self.assertEqual(report.episodes, 2)
        self.assertEqual(report.slots, 2 * self.config.n_slots)
        self.assertEqual(len(beams), report.slots)
        self.assertEqual(len(report.per_uav_secrecy), self.config.n_legit)
        self.assertAlmostEqual(report.mean_sum_secrecy, sum(report.per_uav_secrecy))
        self.assertTrue(0.0 <= report.sensing_violation_rate <= 1.0)
        self.assertFalse(report.hybrid)

    def test_evaluation_is_deterministic(self):
        first = evaluate(self.policy, SecureIsacEnv(self.config), 1, seed=5)
        second = evaluate(self.policy, SecureIsacEnv(self.config), 1, seed=5)
        self.assertEqual(first.as_dict(), second.as_dict())

    def test_hybrid_evaluation(self):
        report = evaluate(self.policy, SecureIsacEnv(self.config), 1, seed=0,
                          hybrid=HybridSettings(n_rf_chains=2))
        self.assertTrue(report.hybrid)
        self.assertTrue(np.isfinite(report.mean_sum_secrecy))
        self.assertEqual(report.as_dict()['slots'], self.config.n_slots)

    def test_zero_episodes(self):
        report = evaluate(self.policy, SecureIsacEnv(self.config), 0)
        self.assertEqual(report.slots, 0)
        self.assertEqual(report.per_uav_secrecy, [0.0])
