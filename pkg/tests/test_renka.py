import dataclasses
import math
import unittest

import numpy as np
import numpy.testing as npt

from rtmlib import (
    DegenerateEnsembleError,
    Grid1D,
    MaternParams,
    ObservationRecord,
    ParameterError,
    RenkaConfig,
    kalman_update,
    renka_cost,
    run_renka,
)
from rtmlib.forward1d import ForwardBatch
from rtmlib.impl.pool import INLINE
from rtmlib.observation import ObservationVector, Restriction
from rtmlib.prior import build_prior
from rtmlib.renka import empirical_covariances, stage_costs

SCALAR_PRIOR = build_prior(Grid1D(1), MaternParams())
RECORDS = (
    ObservationRecord(index=1, time=0.1, y_front=1.0, gamma_front=0.5),
    ObservationRecord(index=2, time=0.2, y_front=1.0, gamma_front=0.5),
)
CONFIG = RenkaConfig(ensemble_size=4000, seed=1)


@dataclasses.dataclass(frozen=True)
class IdentityModel:
    fail_above: float = math.inf

    @property
    def num_sensors(self) -> int:
        return 0

    def evaluate(self, fields, times, pool=INLINE) -> ForwardBatch:
        fields = np.atleast_2d(fields)
        times = np.asarray(times, dtype=float)
        values = fields[:, 0]
        failed = values > self.fail_above
        fronts = np.repeat(values[:, None], times.size, axis=1)
        fronts[failed] = np.nan
        size = fields.shape[0]
        return ForwardBatch(
            times=times,
            fronts=fronts,
            pressures=np.zeros((size, times.size, 0)),
            filling_times=np.full(size, np.nan),
            failed_steps=np.where(failed, 0, -1),
        )


class KalmanUpdateTestCase(unittest.TestCase):
    def setUp(self):
        rng = np.random.default_rng(0)
        self.fields = rng.normal(0.0, math.sqrt(0.5), (20000, 1))
        self.observed = ObservationVector(np.array([1.0]), np.array([0.5]))

    def test_linear_gaussian_update(self):
        updated = kalman_update(
            self.fields, self.fields, self.observed, 1.0, np.random.default_rng(1)
        )
        self.assertAlmostEqual(updated.mean(), 0.5, delta=0.02)
        self.assertAlmostEqual(updated.var(), 0.25, delta=0.02)

    def test_inflated_update_moves_less(self):
        updated = kalman_update(
            self.fields, self.fields, self.observed, 4.0, np.random.default_rng(1)
        )
        # Gain 0.5 / (0.5 + 2).
        self.assertAlmostEqual(updated.mean(), 0.2, delta=0.02)

    def test_no_data_leaves_fields_alone(self):
        empty = ObservationVector(np.zeros(0), np.zeros(0))
        updated = kalman_update(
            self.fields, np.zeros((20000, 0)), empty, 1.0, np.random.default_rng(1)
        )
        npt.assert_array_equal(updated, self.fields)

    def test_invalid_arguments(self):
        rng = np.random.default_rng(2)
        with self.assertRaises(ParameterError):
            kalman_update(self.fields, self.fields, self.observed, 0.5, rng)
        with self.assertRaises(ParameterError):
            kalman_update(self.fields, np.zeros((20000, 2)), self.observed, 1.0, rng)

    def test_empirical_covariances(self):
        fields = np.array([[0.0, 1.0], [2.0, 3.0]])
        outputs = np.array([[1.0], [3.0]])
        pieces = empirical_covariances(fields, outputs)
        npt.assert_allclose(pieces.cross, [[2.0], [2.0]])
        npt.assert_allclose(pieces.output, [[2.0]])
        with self.assertRaises(DegenerateEnsembleError):
            empirical_covariances(fields[:1], outputs[:1])


class RenkaConfigTestCase(unittest.TestCase):
    def test_validation(self):
        self.assertAlmostEqual(RenkaConfig().resolved_threshold, 1000 / 3)
        with self.assertRaises(ParameterError):
            RenkaConfig(ensemble_size=1)
        with self.assertRaises(ParameterError):
            RenkaConfig(inflation_schedule=(2.0, 3.0))
        with self.assertRaises(ParameterError):
            RenkaConfig(inflation_schedule=(0.5, -1.0))
        RenkaConfig(inflation_schedule=(2.0, 4.0, 4.0))


class RunRenkaTestCase(unittest.TestCase):
    def test_gaussian_posteriors(self):
        result = run_renka(CONFIG, SCALAR_PRIOR, IdentityModel(), RECORDS)
        self.assertEqual(result.num_times, 2)
        for n, mean, variance in ((1, 0.5, 0.25), (2, 2.0 / 3.0, 1.0 / 6.0)):
            values = result.ensembles[n][:, 0]
            self.assertAlmostEqual(values.mean(), mean, delta=0.03)
            self.assertAlmostEqual(values.var(), variance, delta=0.15 * variance)

    def test_bookkeeping(self):
        result = run_renka(CONFIG, SCALAR_PRIOR, IdentityModel(), RECORDS)
        for n in (1, 2):
            self.assertEqual(result.trace.inverse_alpha_sum(n), 1.0)
            self.assertEqual(result.evaluations[n - 1], 4000 * result.trace.count(n))
        self.assertEqual(result.substitutions, (0, 0))
        self.assertEqual(result.ensembles[0].shape, (4000, 1))

    def test_inflation_schedule(self):
        config = dataclasses.replace(CONFIG, inflation_schedule=(2.0, 4.0, 4.0))
        result = run_renka(config, SCALAR_PRIOR, IdentityModel(), RECORDS)
        for n in (1, 2):
            npt.assert_allclose(result.trace.alphas(n), [2.0, 4.0, 4.0])
            npt.assert_allclose(result.trace.phis(n), [0.5, 0.75, 1.0])
        self.assertAlmostEqual(result.ensembles[2][:, 0].mean(), 2.0 / 3.0, delta=0.03)

    def test_same_seed_same_ensembles(self):
        first = run_renka(CONFIG, SCALAR_PRIOR, IdentityModel(), RECORDS[:1])
        second = run_renka(CONFIG, SCALAR_PRIOR, IdentityModel(), RECORDS[:1])
        npt.assert_array_equal(first.ensembles[1], second.ensembles[1])

    def test_failed_solves_are_substituted(self):
        with self.assertLogs("rtmlib.renka", level="WARNING"):
            result = run_renka(
                CONFIG, SCALAR_PRIOR, IdentityModel(fail_above=1.0), RECORDS
            )
        self.assertGreater(sum(result.substitutions), 0)
        self.assertTrue(np.all(np.isfinite(result.ensembles[2])))

    def test_front_restriction_ignores_pressures(self):
        records = (
            ObservationRecord(
                index=1,
                time=0.1,
                y_front=1.0,
                gamma_front=0.5,
                y_pressure=np.array([5.0]),
                gamma_pressure=np.array([1.0]),
            ),
        )
        result = run_renka(
            CONFIG,
            SCALAR_PRIOR,
            IdentityModel(),
            records,
            restrict=Restriction.FRONT,
        )
        self.assertAlmostEqual(result.ensembles[1][:, 0].mean(), 0.5, delta=0.03)

    def test_costs(self):
        result = run_renka(CONFIG, SCALAR_PRIOR, IdentityModel(), RECORDS)
        q = result.trace.counts(2)
        costs = stage_costs(result.trace, CONFIG, (0.5, 1.0))
        self.assertEqual(costs, (4000 * q[0] * 0.5, 4000 * q[1] * 1.0))
        self.assertAlmostEqual(renka_cost(result.trace, CONFIG, (0.5, 1.0)), sum(costs))
