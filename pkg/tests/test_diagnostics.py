import math
import unittest

import numpy as np
import numpy.testing as npt

from rtmlib import (
    DegenerateEnsembleError,
    DomainError,
    Grid1D,
    LogPermField,
    MetricReport,
    ParameterError,
    metric_report,
    moving_domain_error,
    mutation_quality,
    summarize,
    truth_error,
    variance_ratio,
)
from rtmlib.diagnostics import benchmark_errors, restrict_truth

GRID = Grid1D(10)


class SummaryTestCase(unittest.TestCase):
    def setUp(self):
        self.fields = np.arange(5.0)[:, None] * np.ones((1, 3))

    def test_statistics(self):
        summary = summarize(self.fields)
        npt.assert_allclose(summary.mean, 2.0)
        npt.assert_allclose(summary.variance, 2.5)
        npt.assert_allclose(summary.percentile(0.5), 2.0)
        npt.assert_allclose(summary.percentile(0.25), 1.0)
        npt.assert_allclose(summary.percentile(0.02), 0.08)
        with self.assertRaises(ParameterError):
            summary.percentile(0.1)

    def test_needs_two_particles(self):
        with self.assertRaises(DegenerateEnsembleError):
            summarize(self.fields[:1])

    def test_long_frame(self):
        frame = summarize(self.fields).to_frame(2, np.array([0.1, 0.5, 0.9]))
        self.assertEqual(list(frame.columns), ["n", "x", "statistic", "value"])
        self.assertEqual(len(frame), 3 * 7)
        self.assertEqual(
            list(frame["statistic"].unique()),
            ["mean", "variance", "p0.02", "p0.25", "p0.5", "p0.75", "p0.98"],
        )
        self.assertTrue((frame["n"] == 2).all())


class ErrorMetricsTestCase(unittest.TestCase):
    def setUp(self):
        self.truth = LogPermField.constant(GRID, 1.0)

    def test_truth_error(self):
        self.assertEqual(truth_error(np.ones(10), self.truth), 0.0)
        self.assertAlmostEqual(truth_error(np.zeros(10), self.truth), 1.0)
        with self.assertRaises(ParameterError):
            truth_error(np.zeros(9), self.truth)

    def test_moving_domain_error(self):
        error = moving_domain_error(np.zeros(10), self.truth, 0.5)
        self.assertAlmostEqual(error, math.sqrt(0.5) / 0.5)
        # Only the covered part of the cell counts.
        error = moving_domain_error(np.zeros(10), self.truth, 0.05)
        self.assertAlmostEqual(error, math.sqrt(0.05) / 0.05)
        mean = np.concatenate([np.ones(5), np.zeros(5)])
        self.assertAlmostEqual(moving_domain_error(mean, self.truth, 0.5), 0.0)
        with self.assertRaises(DomainError):
            moving_domain_error(np.zeros(10), self.truth, 1.5)
        with self.assertRaises(DomainError):
            moving_domain_error(np.zeros(10), self.truth, 0.0)

    def test_variance_ratio(self):
        self.assertAlmostEqual(variance_ratio(np.full(4, 2.0), np.ones(4)), 2.0)
        with self.assertRaises(ParameterError):
            variance_ratio(np.ones(4), np.zeros(4))

    def test_benchmark_errors(self):
        rng = np.random.default_rng(0)
        benchmark = summarize(rng.normal(1.0, 1.0, (50, 10)))
        self.assertEqual(benchmark_errors(benchmark, benchmark), (0.0, 0.0))
        other = summarize(rng.normal(1.0, 1.0, (50, 10)))
        mean_error, variance_error = benchmark_errors(other, benchmark)
        self.assertGreater(mean_error, 0.0)
        self.assertGreater(variance_error, 0.0)


class MutationQualityTestCase(unittest.TestCase):
    def test_swapped_particles(self):
        before = np.array([[0.0], [2.0]])
        quality = mutation_quality(before, before[::-1])
        npt.assert_allclose(quality.per_mode, [1.0])
        self.assertEqual(quality.mean, 1.0)

    def test_modes_without_spread_are_skipped(self):
        before = np.array([[0.0, 1.0], [2.0, 1.0]])
        after = np.array([[1.0, 1.0], [2.0, 1.0]])
        with self.assertLogs("rtmlib.diagnostics", level="WARNING"):
            quality = mutation_quality(before, after)
        self.assertAlmostEqual(quality.per_mode[0], 0.25)
        self.assertTrue(quality.skipped[1])
        self.assertAlmostEqual(quality.max, 0.25)

    def test_all_skipped(self):
        before = np.ones((3, 2))
        with self.assertLogs("rtmlib.diagnostics", level="WARNING"):
            quality = mutation_quality(before, before)
        self.assertTrue(math.isnan(quality.mean))

    def test_shape_mismatch(self):
        with self.assertRaises(ParameterError):
            mutation_quality(np.zeros((3, 2)), np.zeros((3, 3)))


class RestrictTruthTestCase(unittest.TestCase):
    def test_sampling_takes_the_cell_containing_each_center(self):
        rng = np.random.default_rng(2)
        truth = LogPermField(Grid1D(60), rng.normal(size=60))
        restricted = restrict_truth(truth, Grid1D(20))
        npt.assert_array_equal(restricted.values, truth.values[1::3])
        same = restrict_truth(truth, Grid1D(60))
        npt.assert_array_equal(same.values, truth.values)

    def test_centers_on_edges_sample_the_right_cell(self):
        rng = np.random.default_rng(1)
        truth = LogPermField(Grid1D(120), rng.normal(size=120))
        sampled = restrict_truth(truth, Grid1D(60))
        averaged = restrict_truth(truth, Grid1D(60), averaging=True)
        npt.assert_array_equal(sampled.values, truth.values[1::2])
        self.assertGreater(np.max(np.abs(sampled.values - averaged.values)), 0.1)

    def test_linear_field(self):
        fine = Grid1D(120)
        coarse = Grid1D(60)
        truth = LogPermField(fine, np.asarray(fine.cell_centers).copy())
        averaged = restrict_truth(truth, coarse, averaging=True)
        npt.assert_allclose(averaged.values, coarse.cell_centers, atol=1e-12)
        sampled = restrict_truth(truth, coarse)
        npt.assert_allclose(
            sampled.values, np.asarray(coarse.cell_centers) + 1 / 240, atol=1e-12
        )

    def test_averages_preserve_the_integral(self):
        rng = np.random.default_rng(1)
        fine = Grid1D(120)
        truth = LogPermField(fine, rng.normal(size=120))
        restricted = restrict_truth(truth, Grid1D(60), averaging=True)
        self.assertAlmostEqual(
            restricted.values.sum() * (1 / 60), truth.values.sum() * (1 / 120)
        )
        npt.assert_allclose(
            restricted.values, truth.values.reshape(60, 2).mean(axis=1), atol=1e-12
        )

    def test_rejects_other_domains(self):
        truth = LogPermField.constant(Grid1D(120), 0.0)
        with self.assertRaises(ParameterError):
            restrict_truth(truth, Grid1D(60, domain_length=2.0))


class MetricReportTestCase(unittest.TestCase):
    def setUp(self):
        rng = np.random.default_rng(2)
        self.truth = LogPermField.constant(GRID, 1.0)
        self.summaries = [
            summarize(rng.normal(1.0, 0.5, (100, 10))),
            summarize(rng.normal(1.0, 0.2, (100, 10))),
        ]

    def test_rows(self):
        report = metric_report(
            (0.1, 0.2),
            self.summaries,
            np.full(10, 0.5),
            self.truth,
            true_fronts=(0.3, 1.4),
            tempering_steps=(3, 2),
            stage_costs=(10.0, 5.0),
            acceptance=(0.4, 0.3),
        )
        self.assertEqual(len(report), 2)
        first, last = report.rows
        self.assertEqual(first.n, 1)
        self.assertEqual(last.cumulative_cost, 15.0)
        self.assertEqual(last.tempering_steps, 2)
        self.assertEqual(last.acceptance, 0.3)
        self.assertTrue(math.isnan(last.mean_error))
        self.assertTrue(math.isnan(last.movement))
        self.assertLess(last.variance_ratio, first.variance_ratio)
        self.assertIs(report.last(), last)

    def test_frame_round_trip(self):
        report = metric_report(
            (0.1, 0.2),
            self.summaries,
            np.full(10, 0.5),
            self.truth,
            true_fronts=(0.3, 0.6),
            tempering_steps=(3, 2),
            stage_costs=(10.0, 5.0),
            benchmark=self.summaries,
        )
        frame = report.to_frame()
        self.assertEqual(list(frame.columns), list(MetricReport.COLUMNS))
        loaded = MetricReport.from_frame(frame)
        self.assertEqual(loaded.rows[0].truth_error, report.rows[0].truth_error)
        self.assertEqual(loaded.rows[1].mean_error, 0.0)

    def test_length_mismatch(self):
        with self.assertRaises(ParameterError):
            metric_report(
                (0.1, 0.2),
                self.summaries[:1],
                np.full(10, 0.5),
                self.truth,
                true_fronts=(0.3, 0.6),
                tempering_steps=(3, 2),
                stage_costs=(10.0, 5.0),
            )
