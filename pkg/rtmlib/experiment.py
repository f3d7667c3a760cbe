"""
End-to-end experiments: synthetic data from a truth field, inversion with SMC or
REnKA, metrics against the truth and an optional benchmark, and sweeps over one
experimental parameter.
"""

import dataclasses
import logging
import re
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np
import pandas as pd

from rtmlib import artifacts, renka, smc
from rtmlib.config import Algorithm, CostModel, RunConfig, SweepPoint, sweep_points
from rtmlib.diagnostics import (
    EnsembleSummary,
    MetricReport,
    metric_report,
    restrict_truth,
    summarize,
)
from rtmlib.errors import MalformedDataError, RtmError
from rtmlib.forward1d import ForwardBatch, ForwardModel, LogPermField
from rtmlib.impl.pool import INLINE, ChunkPool
from rtmlib.observation import (
    MeasurementConfig,
    ObservationRecord,
    generate_synthetic,
    read_records,
    simulate_signals,
    write_records,
)
from rtmlib.prior import GaussianPrior, build_prior
from rtmlib.rng import Stream, stream
from rtmlib.tempering import TemperTrace

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


@dataclass(frozen=True, eq=False)
class SyntheticData:
    # On the data grid.
    truth: LogPermField
    truth_inversion: LogPermField
    records: tuple[ObservationRecord, ...]
    # Noise-free outputs of the truth at the observation times.
    signals: ForwardBatch
    measurement: MeasurementConfig
    truth_source: str

    @property
    def true_fronts(self) -> np.ndarray:
        return self.signals.fronts[0]


def _resolve(path: str, base_dir: Optional[PathLike]) -> Path:
    resolved = Path(path)
    if base_dir is not None and not resolved.is_absolute():
        resolved = Path(base_dir) / resolved
    return resolved


def _prior(config: RunConfig, grid, base_dir: Optional[PathLike]) -> GaussianPrior:
    cache = config.prior_cache_dir
    return build_prior(
        grid, config.prior, None if cache is None else _resolve(cache, base_dir)
    )


def make_truth(
    config: RunConfig, base_dir: Optional[PathLike] = None
) -> tuple[LogPermField, str]:
    """The truth on the data grid, from config.truth.file or drawn from the prior."""
    grid = config.grid.data_grid()
    if config.truth.file is not None:
        path = _resolve(config.truth.file, base_dir)
        return artifacts.read_field(path, grid), str(path)
    prior = _prior(config, grid, base_dir)
    coeffs = prior.sample_coeffs(stream(config.seed, Stream.TRUTH), 1)
    return LogPermField(grid, prior.coeffs_to_fields(coeffs)[0]), f"prior:{config.seed}"


def simulate_data(
    config: RunConfig, base_dir: Optional[PathLike] = None
) -> SyntheticData:
    truth, source = make_truth(config, base_dir)
    measurement = config.measurement_config()
    records = generate_synthetic(
        truth,
        measurement,
        config.noise,
        stream(config.seed, Stream.NOISE),
        constants=config.forward,
        stepping=config.stepping.data,
        inversion_cells=config.grid.inversion_cells,
    )
    signals = simulate_signals(
        truth,
        measurement.observation_times,
        measurement.sensor_positions,
        config.forward,
        config.stepping.data,
    )
    return SyntheticData(
        truth=truth,
        truth_inversion=restrict_truth(
            truth, config.grid.inversion_grid(), config.truth.averaging
        ),
        records=tuple(records),
        signals=signals,
        measurement=measurement,
        truth_source=source,
    )


def write_data(out_dir: PathLike, data: SyntheticData) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    observations = out_dir / artifacts.OBSERVATIONS_CSV
    write_records(observations, data.records)
    logger.info("wrote %s", observations)
    return [
        artifacts.write_field(out_dir / artifacts.TRUTH_CSV, data.truth),
        artifacts.write_field(
            out_dir / artifacts.TRUTH_INVERSION_CSV, data.truth_inversion
        ),
        observations,
        artifacts.write_frame(
            out_dir / artifacts.SIGNALS_CSV, artifacts.signals_to_frame(data.signals)
        ),
    ]


def load_data(data_dir: PathLike, config: RunConfig) -> SyntheticData:
    """Reads what write_data wrote; the truth signals are recomputed from the truth."""
    data_dir = Path(data_dir)
    grid = config.grid.data_grid()
    truth = artifacts.read_field(data_dir / artifacts.TRUTH_CSV, grid)
    records = tuple(read_records(data_dir / artifacts.OBSERVATIONS_CSV))
    measurement = config.measurement_config()
    times = tuple(r.time for r in records)
    if not np.allclose(times, measurement.observation_times, rtol=0.0, atol=1e-12):
        raise MalformedDataError(
            f"{data_dir}: observation times {times} do not match the config"
        )
    signals = simulate_signals(
        truth, times, measurement.sensor_positions, config.forward, config.stepping.data
    )
    return SyntheticData(
        truth=truth,
        truth_inversion=restrict_truth(
            truth, config.grid.inversion_grid(), config.truth.averaging
        ),
        records=records,
        signals=signals,
        measurement=measurement,
        truth_source=str(data_dir / artifacts.TRUTH_CSV),
    )


@dataclass(frozen=True, eq=False)
class InversionOutcome:
    repeat: int
    # fields[0] is the prior ensemble, fields[n] the ensemble of μ_n.
    fields: tuple[np.ndarray, ...]
    # SMC only, same layout as fields.
    coeffs: Optional[tuple[np.ndarray, ...]]
    summaries: tuple[EnsembleSummary, ...]
    trace: TemperTrace
    mutation_reports: tuple[smc.MutationReport, ...]
    cost: artifacts.CostReport
    metrics: MetricReport


def load_benchmark(
    benchmark_dir: PathLike, num_times: int
) -> tuple[EnsembleSummary, ...]:
    return tuple(
        summarize(artifacts.load_ensemble(artifacts.ensemble_path(benchmark_dir, n)))
        for n in range(1, num_times + 1)
    )


def run_inversion(
    config: RunConfig,
    data: SyntheticData,
    *,
    pool: ChunkPool = INLINE,
    repeat: int = 0,
    benchmark: Optional[Sequence[EnsembleSummary]] = None,
    base_dir: Optional[PathLike] = None,
) -> InversionOutcome:
    grid = config.grid.inversion_grid()
    prior = _prior(config, grid, base_dir)
    measurement = data.measurement
    model = ForwardModel(
        grid, measurement.sensor_positions, config.forward, config.stepping.inversion
    )
    restrict = measurement.restriction
    times = measurement.observation_times
    num_times = len(data.records)
    acceptance = movement = None
    mutation_reports: tuple[smc.MutationReport, ...] = ()
    coeffs = None
    logger.info(
        "running %s with %d particles (repeat %d)",
        config.algorithm.value,
        config.ensemble_size,
        repeat,
    )
    if config.algorithm is Algorithm.SMC:
        smc_config = config.smc_config
        target = smc.PosteriorTarget(
            model, data.records, restrict, config.noise.variance_floor
        )
        smc_result = smc.run_smc(
            smc_config, prior, target, num_times, pool=pool, repeat=repeat
        )
        fields = tuple(e.fields for e in smc_result.ensembles)
        coeffs = tuple(e.coeffs for e in smc_result.ensembles)
        trace = smc_result.trace
        mutation_reports = smc_result.reports
        acceptance = [smc_result.mean_acceptance(n) for n in range(1, num_times + 1)]
        movement = [smc_result.mean_movement(n) for n in range(1, num_times + 1)]
        ratios = _cost_ratios(config, model, fields[0], times)
        costs = smc.stage_costs(trace, smc_config, ratios)
        evaluations = smc_result.evaluations
        mcmc_steps = smc_config.mcmc_steps
    else:
        renka_config = config.renka_config
        renka_result = renka.run_renka(
            renka_config,
            prior,
            model,
            data.records,
            restrict=restrict,
            variance_floor=config.noise.variance_floor,
            pool=pool,
            repeat=repeat,
        )
        fields = renka_result.ensembles
        trace = renka_result.trace
        ratios = _cost_ratios(config, model, fields[0], times)
        costs = renka.stage_costs(trace, renka_config, ratios)
        evaluations = renka_result.evaluations
        mcmc_steps = 1
    summaries = tuple(summarize(f) for f in fields[1:])
    metrics = metric_report(
        times,
        summaries,
        summarize(fields[0]).variance,
        data.truth_inversion,
        data.true_fronts,
        trace.counts(num_times),
        costs,
        benchmark=benchmark,
        acceptance=acceptance,
        movement=movement,
    )
    cost = artifacts.CostReport(
        algorithm=config.algorithm.value,
        ensemble_size=config.ensemble_size,
        mcmc_steps=mcmc_steps,
        tempering_steps=trace.counts(num_times),
        cost_ratios=tuple(ratios),
        stage_costs=tuple(costs),
        total_cost=float(sum(costs)),
        forward_evaluations=tuple(evaluations),
        repeat=repeat,
    )
    if metrics.rows:
        last = metrics.last()
        logger.info(
            "repeat %d: truth error %.4f, variance ratio %.4f, cost %.4g",
            repeat,
            last.truth_error,
            last.variance_ratio,
            cost.total_cost,
        )
    return InversionOutcome(
        repeat=repeat,
        fields=fields,
        coeffs=coeffs,
        summaries=summaries,
        trace=trace,
        mutation_reports=mutation_reports,
        cost=cost,
        metrics=metrics,
    )


def _cost_ratios(
    config: RunConfig,
    model: ForwardModel,
    prior_fields: np.ndarray,
    times: Sequence[float],
) -> tuple[float, ...]:
    if config.cost_model is CostModel.MEASURED:
        return smc.measure_cost_ratios(model, prior_fields[:50], times)
    return smc.time_proxy_ratios(times)


def run_repeats(
    config: RunConfig,
    data: SyntheticData,
    *,
    pool: ChunkPool = INLINE,
    repeats: Optional[int] = None,
    base_dir: Optional[PathLike] = None,
) -> list[InversionOutcome]:
    """
    Inversions of the same data from config.repeats (or 'repeats') independent
    initial ensembles.
    """
    benchmark = None
    if config.benchmark_dir is not None:
        benchmark = load_benchmark(
            _resolve(config.benchmark_dir, base_dir), len(data.records)
        )
    count = config.repeats if repeats is None else repeats
    return [
        run_inversion(
            config,
            data,
            pool=pool,
            repeat=repeat,
            benchmark=benchmark,
            base_dir=base_dir,
        )
        for repeat in range(count)
    ]


def _with_repeat(frame: pd.DataFrame, repeat: int) -> pd.DataFrame:
    frame.insert(0, "repeat", repeat)
    return frame


def write_outcomes(
    out_dir: PathLike,
    outcomes: Sequence[InversionOutcome],
    data: SyntheticData,
) -> list[Path]:
    """
    Metrics, traces and costs of every repeat; ensembles and summaries of the first.
    """
    out_dir = Path(out_dir)
    files = []
    first = outcomes[0]
    for n, fields in enumerate(first.fields):
        coeffs = None if first.coeffs is None else first.coeffs[n]
        files.append(
            artifacts.save_ensemble(artifacts.ensemble_path(out_dir, n), fields, coeffs)
        )
    positions = np.asarray(data.truth_inversion.grid.cell_centers)
    summaries = [summarize(first.fields[0]).to_frame(0, positions)]
    summaries += [
        s.to_frame(n, positions) for n, s in enumerate(first.summaries, start=1)
    ]
    files.append(
        artifacts.write_frame(
            out_dir / artifacts.SUMMARIES_CSV, pd.concat(summaries, ignore_index=True)
        )
    )
    files.append(
        artifacts.write_frame(
            out_dir / artifacts.METRICS_CSV,
            pd.concat(
                [_with_repeat(o.metrics.to_frame(), o.repeat) for o in outcomes],
                ignore_index=True,
            ),
        )
    )
    files.append(
        artifacts.write_frame(
            out_dir / artifacts.TEMPER_TRACE_CSV,
            pd.concat(
                [_with_repeat(o.trace.to_frame(), o.repeat) for o in outcomes],
                ignore_index=True,
            ),
        )
    )
    reports = [
        dict(repeat=o.repeat, **dataclasses.asdict(r))
        for o in outcomes
        for r in o.mutation_reports
    ]
    if reports:
        files.append(
            artifacts.write_frame(
                out_dir / artifacts.MUTATION_REPORTS_CSV, pd.DataFrame(reports)
            )
        )
    files.append(
        artifacts.write_costs(out_dir / artifacts.COST_JSON, [o.cost for o in outcomes])
    )
    return files


SWEEP_METRICS = (
    "truth_error",
    "moving_domain_error",
    "variance_ratio",
    "mean_error",
    "variance_error",
    "tempering_steps",
    "cumulative_cost",
)


def point_dir_name(point: SweepPoint) -> str:
    return re.sub(r"[^A-Za-z0-9_.=-]+", "_", point.label)


def run_sweep(
    config: RunConfig,
    out_dir: PathLike,
    *,
    pool: ChunkPool = INLINE,
    base_dir: Optional[PathLike] = None,
) -> pd.DataFrame:
    """
    Runs every point of the sweep config.sweep.repeats times and writes one table of
    metrics averaged over the repeats. A point that fails is recorded and skipped.
    """
    out_dir = Path(out_dir)
    sweep = config.sweep
    rows: list[pd.DataFrame] = []
    failures = []
    points = sweep_points(config)
    logger.info("sweep over %s: %d points", sweep.axis.value, len(points))
    for point in points:
        point_dir = out_dir / point_dir_name(point)
        try:
            data = simulate_data(point.config, base_dir)
            write_data(point_dir, data)
            outcomes = run_repeats(
                point.config, data, pool=pool, repeats=sweep.repeats, base_dir=base_dir
            )
            write_outcomes(point_dir, outcomes, data)
        except RtmError as e:
            logger.error("sweep point %s failed: %s", point.label, e)
            failures.append({"label": point.label, "error": str(e)})
            continue
        for outcome in outcomes:
            frame = _with_repeat(outcome.metrics.to_frame(), outcome.repeat)
            frame.insert(0, "include_front", point.include_front)
            frame.insert(0, "value", point.value)
            frame.insert(0, "label", point.label)
            rows.append(frame)
    if failures:
        artifacts.write_frame(
            out_dir / artifacts.SWEEP_FAILURES_CSV, pd.DataFrame(failures)
        )
    if not rows:
        raise MalformedDataError("every point of the sweep failed")
    table = aggregate_sweep(pd.concat(rows, ignore_index=True), sweep.axis.value)
    artifacts.write_frame(out_dir / artifacts.SWEEP_METRICS_CSV, table)
    for metric in SWEEP_METRICS:
        artifacts.write_frame(
            out_dir / f"sweep_{metric}.csv",
            table[["axis", "label", "value", "include_front", "n", "repeats"]].assign(
                mean=table[f"{metric}_mean"], std=table[f"{metric}_std"]
            ),
        )
    return table


def aggregate_sweep(metrics: pd.DataFrame, axis: str) -> pd.DataFrame:
    """Mean and standard deviation over repeats of each metric, per point and n."""
    keys = ["label", "value", "include_front", "n"]
    grouped = metrics.groupby(keys, sort=False)
    table = grouped[list(SWEEP_METRICS)].agg(["mean", "std"])
    table.columns = [f"{metric}_{stat}" for metric, stat in table.columns]
    table = table.reset_index()
    table.insert(0, "axis", axis)
    table.insert(5, "repeats", grouped.size().to_numpy())
    return table
