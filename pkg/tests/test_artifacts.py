import dataclasses
import tempfile
import unittest
from pathlib import Path

import numpy as np
import numpy.testing as npt
import pandas as pd

from rtmlib import Grid1D, LogPermField, MalformedDataError, RunConfig
from rtmlib import artifacts
from rtmlib.config import config_digest

GRID = Grid1D(10)


class FieldFileTestCase(unittest.TestCase):
    def test_round_trip(self):
        field = LogPermField(GRID, np.linspace(-1.0, 1.0, 10) / 3.0)
        with tempfile.TemporaryDirectory() as tmp:
            path = artifacts.write_field(Path(tmp) / "nested" / "truth.csv", field)
            frame = pd.read_csv(path)
            self.assertEqual(list(frame.columns), ["cell", "x", "u"])
            loaded = artifacts.read_field(path, GRID)
        npt.assert_array_equal(loaded.values, field.values)

    def test_rows_are_ordered_by_cell(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "truth.csv"
            path.write_text("cell,u\n1,2.0\n0,1.0\n")
            loaded = artifacts.read_field(path, Grid1D(2))
        npt.assert_array_equal(loaded.values, [1.0, 2.0])

    def test_malformed(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "truth.csv"
            with self.assertRaises(MalformedDataError):
                artifacts.read_field(path, GRID)
            path.write_text("cell,value\n0,1.0\n")
            with self.assertRaises(MalformedDataError):
                artifacts.read_field(path, Grid1D(1))
            path.write_text("cell,u\n0,1.0\n")
            with self.assertRaises(MalformedDataError):
                artifacts.read_field(path, GRID)
            path.write_text("")
            with self.assertRaises(MalformedDataError):
                artifacts.read_frame(path)


class EnsembleFileTestCase(unittest.TestCase):
    def test_round_trip(self):
        fields = np.arange(12.0).reshape(3, 4)
        with tempfile.TemporaryDirectory() as tmp:
            path = artifacts.ensemble_path(tmp, 3)
            self.assertEqual(path.name, "ensemble_n03.npz")
            artifacts.save_ensemble(path, fields, coeffs=-fields)
            npt.assert_array_equal(artifacts.load_ensemble(path), fields)
            with np.load(path) as data:
                npt.assert_array_equal(data["coeffs"], -fields)

    def test_malformed(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "bad.npz"
            path.write_bytes(b"not an archive")
            with self.assertRaises(MalformedDataError):
                artifacts.load_ensemble(path)
            artifacts.save_ensemble(path, np.zeros(3))
            with self.assertRaises(MalformedDataError):
                artifacts.load_ensemble(path)


class ReportFileTestCase(unittest.TestCase):
    def test_manifest(self):
        config = RunConfig()
        manifest = artifacts.RunManifest(
            command="run",
            version="0.1.0",
            config=config,
            config_sha256=config_digest(config),
            truth_source="prior:0",
            files=("metrics.csv",),
            forward_evaluations=(100, 200),
            created_at="2024-01-01T00:00:00+00:00",
        )
        with tempfile.TemporaryDirectory() as tmp:
            path = artifacts.write_manifest(Path(tmp) / "manifest.json", manifest)
            loaded = artifacts.read_manifest(path)
        self.assertEqual(loaded, manifest)
        later = dataclasses.replace(manifest, created_at="2025-01-01T00:00:00+00:00")
        self.assertEqual(later.digest(), manifest.digest())

    def test_costs(self):
        report = artifacts.CostReport(
            algorithm="smc",
            ensemble_size=100,
            mcmc_steps=20,
            tempering_steps=(3, 2),
            cost_ratios=(0.5, 1.0),
            stage_costs=(3000.0, 4000.0),
            total_cost=7000.0,
            forward_evaluations=(6100, 4100),
        )
        with tempfile.TemporaryDirectory() as tmp:
            path = artifacts.write_costs(Path(tmp) / "cost.json", [report])
            self.assertEqual(artifacts.read_costs(path), [report])
            path.write_text("{not json")
            with self.assertRaises(MalformedDataError):
                artifacts.read_costs(path)
            with self.assertRaises(MalformedDataError):
                artifacts.read_manifest(path)
