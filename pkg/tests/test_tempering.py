import math
import unittest

import numpy as np
import numpy.testing as npt

from rtmlib import (
    EmptyEnsembleError,
    NumericalError,
    ParameterError,
    TemperTrace,
    ess,
    incremental_weights,
    multinomial_resample,
    next_phi,
    select_phi,
)
from rtmlib.tempering import machine_precision_cap, weights_from_log


class WeightsTestCase(unittest.TestCase):
    def test_incremental_weights(self):
        weights = incremental_weights(np.array([0.0, -2.0]), 0.0, 0.5)
        npt.assert_allclose(weights.log_weights, [0.0, -1.0])
        a = math.exp(-1.0)
        npt.assert_allclose(weights.normalized_weights, [1 / (1 + a), a / (1 + a)])
        self.assertAlmostEqual(weights.normalized_weights.sum(), 1.0)

    def test_base_weights_are_added(self):
        base = np.log(np.array([0.25, 0.75]))
        weights = incremental_weights(np.zeros(2), 0.0, 1.0, base)
        npt.assert_allclose(weights.normalized_weights, [0.25, 0.75])

    def test_ess(self):
        self.assertAlmostEqual(ess(weights_from_log(np.zeros(10))), 10.0)
        self.assertAlmostEqual(
            ess(weights_from_log(np.array([0.0, -np.inf, -np.inf]))), 1.0
        )

    def test_failed_particles_get_zero_weight(self):
        weights = incremental_weights(np.array([-1.0, -np.inf, -3.0]), 0.0, 0.5)
        self.assertEqual(weights.normalized_weights[1], 0.0)
        self.assertAlmostEqual(weights.normalized_weights.sum(), 1.0)

    def test_bad_log_likelihoods(self):
        with self.assertRaises(EmptyEnsembleError):
            incremental_weights(np.zeros(0), 0.0, 1.0)
        with self.assertRaises(NumericalError):
            incremental_weights(np.array([0.0, np.nan]), 0.0, 1.0)
        with self.assertRaises(NumericalError):
            incremental_weights(np.array([-np.inf, -np.inf]), 0.0, 1.0)
        with self.assertRaises(ParameterError):
            incremental_weights(np.zeros(2), 0.5, 0.5)


class SelectPhiTestCase(unittest.TestCase):
    def test_two_particle_threshold(self):
        # ESS = (1 + a)^2 / (1 + a^2) with a = exp(-2 φ) reaches 1.6 at a = 1/3.
        selection = select_phi(np.array([0.0, -2.0]), 0.0, 1.6)
        self.assertAlmostEqual(selection.phi, math.log(3.0) / 2.0, places=8)
        self.assertAlmostEqual(selection.ess, 1.6, places=6)
        self.assertFalse(selection.nonmonotone)
        self.assertIsNone(selection.cap)

    def test_first_crossing_of_a_nonmonotone_ess(self):
        # Carried weights make the ESS dip below the threshold and recover by φ = 1.
        base = np.array([0.06, 2.95, -2.9, 2.25, -0.26, 3.39])
        loglik = np.array([-6.99, -16.35, -1.92, -18.27, -16.94, -8.39])
        threshold = 1.742
        with self.assertLogs("rtmlib.tempering", "WARNING"):
            selection = select_phi(loglik, 0.0, threshold, base_log_weights=base)
        self.assertTrue(selection.nonmonotone)
        self.assertLess(selection.phi, 0.2)
        self.assertAlmostEqual(selection.ess, threshold, delta=1e-6)
        for phi in np.linspace(1e-4, selection.phi - 1e-6, 200):
            weights = incremental_weights(loglik, 0.0, phi, base)
            self.assertGreater(ess(weights), threshold)
        at_one = ess(incremental_weights(loglik, 0.0, 1.0, base))
        self.assertGreater(at_one, threshold)

    def test_monotone_ess_is_not_flagged(self):
        selection = select_phi(np.array([0.0, -1.0, -3.0, -6.0]), 0.0, 2.0)
        self.assertFalse(selection.nonmonotone)
        self.assertLess(selection.phi, 1.0)

    def test_jumps_to_one_when_ess_stays_high(self):
        self.assertEqual(next_phi(np.array([0.0, -0.01, -0.02]), 0.0, 1.5), 1.0)

    def test_equal_log_likelihoods(self):
        selection = select_phi(np.full(4, -7.0), 0.3, 2.0)
        self.assertEqual(selection.phi, 1.0)
        self.assertEqual(selection.ess, 4.0)

    def test_ess_of_selected_phi_meets_threshold(self):
        rng = np.random.default_rng(0)
        loglik = -0.5 * rng.chisquare(20, 300) * 10.0
        phi_prev = 0.0
        steps = 0
        while phi_prev < 1.0:
            phi = next_phi(loglik, phi_prev, 100.0)
            self.assertGreater(phi, phi_prev)
            if phi < 1.0:
                weights = incremental_weights(loglik, phi_prev, phi)
                self.assertAlmostEqual(ess(weights), 100.0, delta=1e-3)
            phi_prev = phi
            steps += 1
        self.assertGreater(steps, 1)

    def test_linear_space_safeguard(self):
        loglik = np.array([-1e6, -2e6])
        cap = machine_precision_cap(loglik, 0.0)
        # exp(-1e6 φ) underflows past φ of about 7.45e-4.
        self.assertGreater(cap, 7e-4)
        self.assertLess(cap, 8e-4)
        selection = select_phi(loglik, 0.0, 1.5, linear_space_safeguard=True)
        self.assertEqual(selection.cap, cap)
        self.assertLessEqual(selection.phi, cap)
        self.assertEqual(machine_precision_cap(np.array([-1.0, -2.0]), 0.0), 1.0)

    def test_invalid_arguments(self):
        with self.assertRaises(ParameterError):
            select_phi(np.zeros(3), 1.0, 2.0)
        with self.assertRaises(ParameterError):
            select_phi(np.zeros(3), 0.0, 4.0)
        with self.assertRaises(ParameterError):
            select_phi(np.zeros(3), 0.0, 0.5)


class ResampleTestCase(unittest.TestCase):
    def test_indices_are_sorted_and_complete(self):
        weights = weights_from_log(np.log(np.array([0.1, 0.2, 0.3, 0.4])))
        indices = multinomial_resample(weights, np.random.default_rng(1))
        self.assertEqual(indices.shape, (4,))
        self.assertTrue(np.all(np.diff(indices) >= 0))

    def test_zero_weight_particles_are_dropped(self):
        weights = weights_from_log(np.array([0.0, -np.inf, -np.inf]))
        indices = multinomial_resample(weights, np.random.default_rng(2))
        npt.assert_array_equal(indices, [0, 0, 0])

    def test_counts_follow_weights(self):
        weights = weights_from_log(np.log(np.array([0.2, 0.8])))
        rng = np.random.default_rng(3)
        ones = [
            np.count_nonzero(multinomial_resample(weights, rng)) for _ in range(1000)
        ]
        self.assertAlmostEqual(np.mean(ones) / 2.0, 0.8, delta=0.04)


class TemperTraceTestCase(unittest.TestCase):
    def test_record(self):
        trace = TemperTrace()
        trace.record(1, 0.25, 30.0)
        trace.record(1, 1.0, 40.0)
        trace.record(2, 1.0, 50.0)
        self.assertEqual(trace.phis(1), [0.25, 1.0])
        npt.assert_allclose(trace.alphas(1), [4.0, 4.0 / 3.0])
        self.assertEqual(trace.counts(2), (2, 1))
        self.assertEqual(trace.times(), [1, 2])
        self.assertEqual(trace.inverse_alpha_sum(1), 1.0)
        self.assertTrue(trace.is_complete(1))
        self.assertEqual(trace.steps[1].r, 2)

    def test_inverse_alpha_sum_is_exact(self):
        trace = TemperTrace()
        for phi in (0.1, 0.3, 0.7, 0.9999999, 1.0):
            trace.record(1, phi, 2.0)
        self.assertEqual(trace.inverse_alpha_sum(1), 1.0)
        trace.record(2, 1.0 / 3.0, 2.0)
        self.assertEqual(trace.inverse_alpha_sum(2), 1.0 / 3.0)

    def test_phi_must_increase(self):
        trace = TemperTrace()
        trace.record(1, 0.5, 3.0)
        with self.assertRaises(ParameterError):
            trace.record(1, 0.5, 3.0)
        with self.assertRaises(ParameterError):
            trace.record(2, 1.5, 3.0)
        self.assertFalse(trace.is_complete(1))

    def test_frame_round_trip(self):
        trace = TemperTrace()
        trace.record(1, 0.5, 3.0, nonmonotone=True)
        trace.record(1, 1.0, 2.0)
        frame = trace.to_frame()
        self.assertEqual(list(frame.columns), list(TemperTrace.COLUMNS))
        loaded = TemperTrace.from_frame(frame)
        self.assertEqual(loaded.steps, trace.steps)
        legacy = frame.drop(columns=["nonmonotone"])
        self.assertFalse(TemperTrace.from_frame(legacy).steps[0].nonmonotone)
