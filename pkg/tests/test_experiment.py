import dataclasses
import os
import tempfile
import textwrap
import unittest
from pathlib import Path

import numpy as np
import numpy.testing as npt
import pandas as pd

from rtmlib import MalformedDataError, parse_run_config
from rtmlib import artifacts, experiment
from rtmlib.config import Algorithm
from rtmlib.impl.pool import ChunkPool

# Small enough to run in a few seconds.
TINY = textwrap.dedent(
    """
    grid:
      inversion_cells: 20
      data_cells: 40
    stepping:
      inversion_steps: 400
      data_steps: 800
    measurement:
      num_sensors: 3
      num_times: 2
    renka:
      ensemble_size: 50
    smc:
      ensemble_size: 30
      mcmc_steps: 2
    seed: 3
    """
)


class SyntheticDataTestCase(unittest.TestCase):
    def setUp(self):
        self.config = parse_run_config(TINY)

    def test_truth_from_prior(self):
        data = experiment.simulate_data(self.config)
        self.assertEqual(data.truth_source, "prior:3")
        self.assertEqual(data.truth.values.shape, (40,))
        self.assertEqual(data.truth_inversion.values.shape, (20,))
        self.assertEqual(len(data.records), 2)
        self.assertEqual(data.true_fronts.shape, (2,))
        again = experiment.simulate_data(self.config)
        npt.assert_array_equal(data.truth.values, again.truth.values)
        npt.assert_array_equal(data.records[1].y_pressure, again.records[1].y_pressure)

    def test_seed_changes_truth(self):
        other = dataclasses.replace(self.config, seed=4)
        a = experiment.simulate_data(self.config)
        b = experiment.simulate_data(other)
        self.assertFalse(np.array_equal(a.truth.values, b.truth.values))

    def test_write_and_load(self):
        data = experiment.simulate_data(self.config)
        with tempfile.TemporaryDirectory() as tmp:
            files = experiment.write_data(tmp, data)
            self.assertEqual(
                sorted(f.name for f in files),
                ["observations.csv", "signals.csv", "truth.csv", "truth_inversion.csv"],
            )
            loaded = experiment.load_data(tmp, self.config)
            npt.assert_array_equal(loaded.truth.values, data.truth.values)
            npt.assert_array_equal(loaded.true_fronts, data.true_fronts)
            self.assertEqual(loaded.records[0].y_front, data.records[0].y_front)
            wrong = parse_run_config(TINY + "measurement:\n  num_times: 3\n")
            with self.assertRaises(MalformedDataError):
                experiment.load_data(tmp, wrong)

    def test_truth_from_file(self):
        data = experiment.simulate_data(self.config)
        with tempfile.TemporaryDirectory() as tmp:
            artifacts.write_field(Path(tmp) / "truth.csv", data.truth)
            config = parse_run_config(TINY + "truth:\n  file: truth.csv\n")
            truth, source = experiment.make_truth(config, tmp)
            npt.assert_array_equal(truth.values, data.truth.values)
            self.assertEqual(source, str(Path(tmp) / "truth.csv"))


class InversionTestCase(unittest.TestCase):
    def setUp(self):
        self.config = parse_run_config(TINY)
        self.data = experiment.simulate_data(self.config)

    def test_renka(self):
        outcome = experiment.run_inversion(self.config, self.data)
        self.assertEqual(len(outcome.fields), 3)
        self.assertEqual(outcome.fields[2].shape, (50, 20))
        self.assertIsNone(outcome.coeffs)
        self.assertEqual(len(outcome.metrics), 2)
        self.assertEqual(outcome.cost.algorithm, "renka")
        self.assertEqual(outcome.cost.mcmc_steps, 1)
        npt.assert_allclose(outcome.cost.cost_ratios, [0.5, 1.0])
        self.assertEqual(outcome.cost.tempering_steps, outcome.trace.counts(2))
        last = outcome.metrics.last()
        self.assertLess(last.variance_ratio, 1.0)
        self.assertAlmostEqual(last.cumulative_cost, outcome.cost.total_cost)

    def test_smc(self):
        config = dataclasses.replace(self.config, algorithm=Algorithm.SMC)
        outcome = experiment.run_inversion(config, self.data)
        self.assertEqual(outcome.fields[1].shape, (30, 20))
        self.assertEqual(len(outcome.coeffs), 3)
        self.assertEqual(outcome.cost.mcmc_steps, 2)
        self.assertGreater(len(outcome.mutation_reports), 0)
        self.assertFalse(np.isnan(outcome.metrics.last().acceptance))

    def test_repeats_and_outputs(self):
        config = dataclasses.replace(self.config, repeats=2)
        outcomes = experiment.run_repeats(config, self.data)
        self.assertEqual([o.repeat for o in outcomes], [0, 1])
        self.assertFalse(np.array_equal(outcomes[0].fields[0], outcomes[1].fields[0]))
        with tempfile.TemporaryDirectory() as tmp:
            experiment.write_outcomes(tmp, outcomes, self.data)
            run_dir = Path(tmp)
            metrics = pd.read_csv(run_dir / artifacts.METRICS_CSV)
            self.assertEqual(sorted(metrics["repeat"].unique()), [0, 1])
            self.assertEqual(len(metrics), 4)
            summaries = pd.read_csv(run_dir / artifacts.SUMMARIES_CSV)
            self.assertEqual(sorted(summaries["n"].unique()), [0, 1, 2])
            fields = artifacts.load_ensemble(artifacts.ensemble_path(run_dir, 2))
            npt.assert_array_equal(fields, outcomes[0].fields[2])
            costs = artifacts.read_costs(run_dir / artifacts.COST_JSON)
            self.assertEqual([c.repeat for c in costs], [0, 1])
            self.assertFalse((run_dir / artifacts.MUTATION_REPORTS_CSV).exists())

    def test_worker_count_does_not_change_outputs(self):
        for algorithm in (Algorithm.RENKA, Algorithm.SMC):
            config = dataclasses.replace(self.config, algorithm=algorithm, repeats=2)
            inline = experiment.run_repeats(config, self.data)
            with ChunkPool(2) as pool:
                pooled = experiment.run_repeats(config, self.data, pool=pool)
            with tempfile.TemporaryDirectory() as a, tempfile.TemporaryDirectory() as b:
                experiment.write_outcomes(a, inline, self.data)
                experiment.write_outcomes(b, pooled, self.data)
                for name in (artifacts.METRICS_CSV, artifacts.TEMPER_TRACE_CSV):
                    self.assertEqual(
                        (Path(a) / name).read_bytes(),
                        (Path(b) / name).read_bytes(),
                        f"{algorithm.value}: {name}",
                    )

    def test_benchmark_errors(self):
        reference = experiment.run_inversion(self.config, self.data)
        with tempfile.TemporaryDirectory() as tmp:
            experiment.write_outcomes(tmp, [reference], self.data)
            config = dataclasses.replace(self.config, benchmark_dir=tmp)
            (outcome,) = experiment.run_repeats(config, self.data)
        # The same seed and repeat reproduce the benchmark itself.
        self.assertEqual(outcome.metrics.last().mean_error, 0.0)
        self.assertEqual(outcome.metrics.last().variance_error, 0.0)


class SweepTestCase(unittest.TestCase):
    def test_sensor_sweep(self):
        config = parse_run_config(
            TINY + "sweep:\n  axis: sensors\n  values: [0, 3]\n  repeats: 2\n"
        )
        with tempfile.TemporaryDirectory() as tmp:
            table = experiment.run_sweep(config, tmp)
            self.assertEqual(len(table), 3 * 2)
            self.assertTrue((table["repeats"] == 2).all())
            self.assertEqual(
                list(table["label"].unique()),
                ["M=0,front=on", "M=3,front=on", "M=3,front=off"],
            )
            for metric in experiment.SWEEP_METRICS:
                frame = pd.read_csv(Path(tmp) / f"sweep_{metric}.csv")
                self.assertEqual(
                    list(frame.columns),
                    [
                        "axis",
                        "label",
                        "value",
                        "include_front",
                        "n",
                        "repeats",
                        "mean",
                        "std",
                    ],
                )
            self.assertTrue(os.path.isdir(Path(tmp) / "M=3_front=off"))

    def test_aggregate(self):
        metrics = pd.DataFrame(
            {
                "label": ["a", "a", "b"],
                "value": [1.0, 1.0, 2.0],
                "include_front": [True, True, True],
                "n": [1, 1, 1],
                "repeat": [0, 1, 0],
                **{
                    metric: [1.0, 3.0, 5.0]
                    for metric in experiment.SWEEP_METRICS
                },
            }
        )
        table = experiment.aggregate_sweep(metrics, "noise")
        self.assertEqual(list(table["repeats"]), [2, 1])
        self.assertEqual(list(table["truth_error_mean"]), [2.0, 5.0])
        self.assertAlmostEqual(table["truth_error_std"][0], np.sqrt(2.0))
        self.assertTrue(np.isnan(table["truth_error_std"][1]))
        self.assertEqual(table.columns[0], "axis")
        self.assertEqual(table.columns[5], "repeats")
