import numpy as np
from django.test import SimpleTestCase
from hypothesis import given, settings, strategies as st

from lab.channel import complex_normal
from lab.exceptions import DimensionError, NumericalError
from lab.hbf import (
    decompose,
    init_analog,
    normalize_power,
    objective,
    update_analog,
    update_digital,
)
from lab.metrics import DigitalBeamformers, HybridBeamformers, effective_digital, total_power


def random_target(rng, n_antennas, n_users, power=10.0):
    beams = DigitalBeamformers(complex_normal(rng, (n_antennas, n_users)),
                               complex_normal(rng, n_antennas))
    beams = beams.scaled(np.sqrt(power / total_power(beams)))
    return beams.precoders, beams.an_vector


class DecomposeTestCase(SimpleTestCase):
    def test_full_rf_chains_reconstruct_exactly(self):
        rng = np.random.default_rng(0)
        f_opt, w_opt = random_target(rng, 16, 4)
        result = decompose(f_opt, w_opt, 16, 10.0, rng=rng)
        digital = effective_digital(result.hybrid)
        self.assertLess(np.linalg.norm(digital.precoders - f_opt), 1e-10)
        self.assertLess(np.linalg.norm(digital.an_vector - w_opt), 1e-10)
        self.assertTrue(result.converged)
        self.assertEqual(result.iterations, 1)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(min_value=0, max_value=2 ** 32 - 1), st.integers(min_value=5, max_value=8))
    def test_invariants(self, seed, n_rf):
        rng = np.random.default_rng(seed)
        f_opt, w_opt = random_target(rng, 16, 4)
        result = decompose(f_opt, w_opt, n_rf, 10.0, max_iter=30, rng=rng)

        np.testing.assert_allclose(np.abs(result.hybrid.analog), 1 / 4.0, rtol=1e-12)
        self.assertAlmostEqual(total_power(effective_digital(result.hybrid)), 10.0, places=9)
        trace = np.array(result.residual_trace)
        self.assertTrue(np.all(np.diff(trace) <= 1e-12 * trace[0]))
        self.assertLessEqual(result.iterations, 30)
        self.assertEqual(len(trace), result.iterations)
        self.assertEqual(result.residual, trace[-1])

    def test_full_size_array(self):
        rng = np.random.default_rng(64)
        f_opt, w_opt = random_target(rng, 64, 4)
        result = decompose(f_opt, w_opt, 8, 10.0, rng=rng)

        trace = np.array(result.residual_trace)
        self.assertTrue(np.all(np.diff(trace) <= 1e-12 * trace[0]))
        self.assertLessEqual(result.iterations, 50)
        np.testing.assert_allclose(np.abs(result.hybrid.analog), 1 / 8.0, rtol=1e-12)
        self.assertEqual(result.hybrid.analog.shape, (64, 8))
        self.assertAlmostEqual(total_power(effective_digital(result.hybrid)), 10.0, places=9)

    def test_zero_target_converges_at_once(self):
        result = decompose(np.zeros((8, 2)), np.zeros(8), 4, 10.0, rng=np.random.default_rng(1))
        self.assertTrue(result.converged)
        self.assertEqual(result.iterations, 1)
        self.assertEqual(result.residual_trace, [0.0])
        np.testing.assert_array_equal(result.hybrid.digital, 0.0)
        self.assertEqual(total_power(effective_digital(result.hybrid)), 0.0)

    def test_same_rng_same_result(self):
        f_opt, w_opt = random_target(np.random.default_rng(2), 16, 2)
        first = decompose(f_opt, w_opt, 4, 10.0, rng=np.random.default_rng(9))
        second = decompose(f_opt, w_opt, 4, 10.0, rng=np.random.default_rng(9))
        np.testing.assert_array_equal(first.hybrid.analog, second.hybrid.analog)
        self.assertEqual(first.residual_trace, second.residual_trace)

    def test_more_rf_chains_than_antennas(self):
        with self.assertRaises(DimensionError):
            decompose(np.ones((4, 1)), np.ones(4), 5, 1.0)


class StepTestCase(SimpleTestCase):
    def setUp(self):
        self.rng = np.random.default_rng(7)
        self.f_opt, self.w_opt = random_target(self.rng, 8, 2)
        self.analog = init_analog(8, 3, self.rng)

    def test_initial_analog(self):
        self.assertEqual(self.analog.shape, (8, 3))
        np.testing.assert_allclose(np.abs(self.analog), 1 / np.sqrt(8))
        self.assertEqual(np.linalg.matrix_rank(self.analog), 3)
        with self.assertRaises(DimensionError):
            init_analog(2, 3, self.rng)

    def test_digital_solves_normal_equations(self):
        f_bb, w = update_digital(self.analog, self.f_opt, self.w_opt)
        gram = self.analog.conj().T @ self.analog
        np.testing.assert_allclose(gram @ f_bb, self.analog.conj().T @ self.f_opt, atol=1e-12)
        np.testing.assert_allclose(gram @ w, self.analog.conj().T @ self.w_opt, atol=1e-12)

    def test_digital_shape_mismatch(self):
        with self.assertRaises(DimensionError):
            update_digital(self.analog, self.f_opt, np.ones(5))

    def test_analog_phase_matches_scalar_loop(self):
        f_bb, w = update_digital(self.analog, self.f_opt, self.w_opt)
        analog = update_analog(self.f_opt, f_bb, self.w_opt, w, 8)
        for i in range(8):
            for j in range(3):
                correlation = sum(self.f_opt[i, l] * np.conj(f_bb[j, l]) for l in range(2))
                correlation += self.w_opt[i] * np.conj(w[j])
                self.assertAlmostEqual(analog[i, j], np.exp(1j * np.angle(correlation)) / np.sqrt(8))

    def test_zero_correlation_holds_previous_phase(self):
        f_bb, w = update_digital(self.analog, self.f_opt, self.w_opt)
        f_bb[1], w[1] = 0.0, 0.0
        analog = update_analog(self.f_opt, f_bb, self.w_opt, w, 8, previous=self.analog)
        np.testing.assert_allclose(analog[:, 1], self.analog[:, 1])

    def test_objective(self):
        f_bb, w = update_digital(self.analog, self.f_opt, self.w_opt)
        expected = (np.linalg.norm(self.f_opt - self.analog @ f_bb) ** 2
                    + np.linalg.norm(self.w_opt - self.analog @ w) ** 2)
        self.assertAlmostEqual(objective(self.f_opt, self.w_opt, self.analog, f_bb, w), expected)


class NormalizePowerTestCase(SimpleTestCase):
    def test_scales_digital_parts(self):
        analog = np.eye(4, 2, dtype=complex)
        hybrid = HybridBeamformers(analog, np.full((2, 1), 2.0 + 0j), np.array([4.0, 4.0j]))
        self.assertAlmostEqual(total_power(effective_digital(hybrid)), 40.0)
        normalized = normalize_power(hybrid, 10.0)
        np.testing.assert_allclose(normalized.digital, 0.5 * hybrid.digital)
        np.testing.assert_allclose(normalized.an_digital, 0.5 * hybrid.an_digital)
        np.testing.assert_array_equal(normalized.analog, analog)

    def test_zero_power_is_rejected(self):
        hybrid = HybridBeamformers(np.eye(4, 2, dtype=complex), np.zeros((2, 1)), np.zeros(2))
        with self.assertRaises(NumericalError):
            normalize_power(hybrid, 10.0)
