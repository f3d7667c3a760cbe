"""Ensemble summaries and the error, uncertainty and mutation metrics of a run."""

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass
from typing import Final, Optional

import numpy as np
import pandas as pd

from rtmlib.errors import (
    DegenerateEnsembleError,
    DomainError,
    MalformedDataError,
    NumericalError,
    ParameterError,
)
from rtmlib.forward1d import Grid1D, LogPermField

logger = logging.getLogger(__name__)

PERCENTILE_LEVELS: Final = (0.02, 0.25, 0.5, 0.75, 0.98)
# In units of truth cells.
EDGE_TOLERANCE: Final = 1e-9


@dataclass(frozen=True, eq=False)
class EnsembleSummary:
    mean: np.ndarray
    variance: np.ndarray
    # (len(levels), S)
    percentiles: np.ndarray
    levels: tuple[float, ...] = PERCENTILE_LEVELS

    def percentile(self, level: float) -> np.ndarray:
        try:
            return self.percentiles[self.levels.index(level)]
        except ValueError:
            raise ParameterError(f"no percentile at level {level}") from None

    def to_frame(self, n: int, positions: np.ndarray) -> pd.DataFrame:
        """Long format: n, x, statistic, value."""
        statistics = {"mean": self.mean, "variance": self.variance}
        for level, values in zip(self.levels, self.percentiles):
            statistics[f"p{level:g}"] = values
        frames = [
            pd.DataFrame({"n": n, "x": positions, "statistic": name, "value": values})
            for name, values in statistics.items()
        ]
        return pd.concat(frames, ignore_index=True)


def summarize(
    fields: np.ndarray, levels: tuple[float, ...] = PERCENTILE_LEVELS
) -> EnsembleSummary:
    """Pointwise mean, unbiased variance and linearly interpolated percentiles."""
    fields = np.asarray(fields, dtype=float)
    if fields.ndim != 2 or fields.shape[0] < 2:
        raise DegenerateEnsembleError(
            f"need at least 2 particles, got shape {fields.shape}"
        )
    percentiles = np.quantile(fields, levels, axis=0, method="linear")
    return EnsembleSummary(
        mean=fields.mean(axis=0),
        variance=fields.var(axis=0, ddof=1),
        percentiles=percentiles,
        levels=tuple(levels),
    )


def _l2_norm(values: np.ndarray, cell_width: float) -> float:
    return math.sqrt(float(np.sum(np.square(values))) * cell_width)


def _same_cells(values: np.ndarray, grid: Grid1D) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if values.shape != (grid.num_cells,):
        raise ParameterError(
            f"expected {grid.num_cells} values, got shape {values.shape}"
        )
    return values


def truth_error(mean: np.ndarray, truth: LogPermField) -> float:
    """Relative L² distance between an ensemble mean and the truth on its grid."""
    mean = _same_cells(mean, truth.grid)
    width = truth.grid.cell_width
    norm = _l2_norm(truth.values, width)
    if norm == 0.0:
        raise NumericalError("relative error against a zero truth")
    return _l2_norm(truth.values - mean, width) / norm


def moving_domain_error(
    mean: np.ndarray, truth: LogPermField, front_true: float
) -> float:
    """L² distance over [0, front_true], divided by front_true."""
    grid = truth.grid
    mean = _same_cells(mean, grid)
    if not 0.0 < front_true <= grid.domain_length:
        raise DomainError(
            f"front_true={front_true} outside (0, {grid.domain_length}]"
        )
    # Length of each cell lying behind the front.
    edges = np.asarray(grid.cell_edges)
    covered = np.clip(front_true - edges[:-1], 0.0, grid.cell_width)
    difference = truth.values - mean
    return math.sqrt(float(np.sum(difference * difference * covered))) / front_true


def variance_ratio(
    ensemble_variance: np.ndarray, prior_variance: np.ndarray
) -> float:
    prior_norm = float(np.linalg.norm(prior_variance))
    if prior_norm == 0.0:
        raise ParameterError("reference prior variance is zero")
    return float(np.linalg.norm(ensemble_variance)) / prior_norm


def benchmark_errors(
    candidate: EnsembleSummary, benchmark: EnsembleSummary
) -> tuple[float, float]:
    """Relative L² errors of the candidate mean and variance against a benchmark."""
    if candidate.mean.shape != benchmark.mean.shape:
        raise ParameterError("candidate and benchmark live on different grids")
    mean_norm = float(np.linalg.norm(benchmark.mean))
    variance_norm = float(np.linalg.norm(benchmark.variance))
    if mean_norm == 0.0 or variance_norm == 0.0:
        raise NumericalError("benchmark mean or variance is zero")
    return (
        float(np.linalg.norm(candidate.mean - benchmark.mean)) / mean_norm,
        float(np.linalg.norm(candidate.variance - benchmark.variance)) / variance_norm,
    )


@dataclass(frozen=True, eq=False)
class MutationQuality:
    # One value per KL mode, NaN for modes with no spread.
    per_mode: np.ndarray

    @property
    def skipped(self) -> np.ndarray:
        return np.isnan(self.per_mode)

    @property
    def min(self) -> float:
        return self._reduce(np.nanmin)

    @property
    def mean(self) -> float:
        return self._reduce(np.nanmean)

    @property
    def max(self) -> float:
        return self._reduce(np.nanmax)

    def _reduce(self, fn) -> float:
        if np.all(self.skipped):
            return math.nan
        return float(fn(self.per_mode))


def mutation_quality(
    before: np.ndarray,
    after: np.ndarray,
    mean: Optional[np.ndarray] = None,
) -> MutationQuality:
    """
    Per mode k: half the summed movement of the particles over the mutation,
    over their summed distance to the ensemble mean before it.
    """
    before = np.asarray(before, dtype=float)
    after = np.asarray(after, dtype=float)
    if before.shape != after.shape or before.ndim != 2:
        raise ParameterError(
            f"particles before and after differ: {before.shape} vs {after.shape}"
        )
    if mean is None:
        mean = before.mean(axis=0)
    movement = 0.5 * np.sum(np.abs(after - before), axis=0)
    spread = np.sum(np.abs(before - mean), axis=0)
    per_mode = np.full(before.shape[1], np.nan)
    np.divide(movement, spread, out=per_mode, where=spread > 0.0)
    skipped = int(np.count_nonzero(spread == 0.0))
    if skipped:
        logger.warning("skipped %d modes with no spread", skipped)
    return MutationQuality(per_mode)


def restrict_truth(
    truth: LogPermField, grid: Grid1D, averaging: bool = False
) -> LogPermField:
    """
    Transfers a truth field to a coarser grid, either by sampling the piecewise
    constant truth at the cell centers or by cell averages.

    A center lying on an edge of the truth grid samples the cell to its right.
    """
    fine = truth.grid
    if not math.isclose(fine.domain_length, grid.domain_length):
        raise ParameterError("truth and target grids cover different domains")
    if not averaging:
        position = np.asarray(grid.cell_centers) / fine.cell_width
        cells = np.floor(position + EDGE_TOLERANCE).astype(int)
        cells = np.clip(cells, 0, fine.num_cells - 1)
        return LogPermField(grid, truth.values[cells])
    integral = np.concatenate(([0.0], np.cumsum(truth.values) * fine.cell_width))
    at_edges = np.interp(grid.cell_edges, fine.cell_edges, integral)
    return LogPermField(grid, np.diff(at_edges) / grid.cell_width)


@dataclass(frozen=True)
class MetricRow:
    n: int
    time: float
    truth_error: float
    moving_domain_error: float
    variance_ratio: float
    tempering_steps: int
    cumulative_cost: float
    # Against a benchmark ensemble, if one was given.
    mean_error: float = math.nan
    variance_error: float = math.nan
    # SMC only.
    acceptance: float = math.nan
    movement: float = math.nan


class MetricReport:
    """One MetricRow per observation time."""

    COLUMNS: Final = (
        "n",
        "t_n",
        "truth_error",
        "moving_domain_error",
        "variance_ratio",
        "mean_error",
        "variance_error",
        "tempering_steps",
        "cumulative_cost",
        "acceptance",
        "movement",
    )

    def __init__(self, rows: Sequence[MetricRow]):
        self.rows = tuple(rows)

    def __len__(self) -> int:
        return len(self.rows)

    def last(self) -> MetricRow:
        return self.rows[-1]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [
                (
                    r.n,
                    r.time,
                    r.truth_error,
                    r.moving_domain_error,
                    r.variance_ratio,
                    r.mean_error,
                    r.variance_error,
                    r.tempering_steps,
                    r.cumulative_cost,
                    r.acceptance,
                    r.movement,
                )
                for r in self.rows
            ],
            columns=list(self.COLUMNS),
        )

    @staticmethod
    def from_frame(frame: pd.DataFrame) -> "MetricReport":
        missing = [c for c in MetricReport.COLUMNS if c not in frame.columns]
        if missing:
            raise MalformedDataError(f"metric table lacks columns {missing}")
        return MetricReport(
            [
                MetricRow(
                    n=int(r.n),
                    time=float(r.t_n),
                    truth_error=float(r.truth_error),
                    moving_domain_error=float(r.moving_domain_error),
                    variance_ratio=float(r.variance_ratio),
                    tempering_steps=int(r.tempering_steps),
                    cumulative_cost=float(r.cumulative_cost),
                    mean_error=float(r.mean_error),
                    variance_error=float(r.variance_error),
                    acceptance=float(r.acceptance),
                    movement=float(r.movement),
                )
                for r in frame.itertuples(index=False)
            ]
        )


def metric_report(
    times: Sequence[float],
    summaries: Sequence[EnsembleSummary],
    prior_variance: np.ndarray,
    truth: LogPermField,
    true_fronts: Sequence[float],
    tempering_steps: Sequence[int],
    stage_costs: Sequence[float],
    *,
    benchmark: Optional[Sequence[EnsembleSummary]] = None,
    acceptance: Optional[Sequence[float]] = None,
    movement: Optional[Sequence[float]] = None,
) -> MetricReport:
    """
    Metrics of the posterior ensembles of times 1..N. 'truth' must already live on
    the inversion grid.
    """
    num_times = len(times)
    for name, values in (
        ("summaries", summaries),
        ("true_fronts", true_fronts),
        ("tempering_steps", tempering_steps),
        ("stage_costs", stage_costs),
    ):
        if len(values) != num_times:
            raise ParameterError(f"expected {num_times} {name}, got {len(values)}")
    rows = []
    cost = 0.0
    for i, summary in enumerate(summaries):
        cost += stage_costs[i]
        mean_error = variance_error = math.nan
        if benchmark is not None:
            mean_error, variance_error = benchmark_errors(summary, benchmark[i])
        rows.append(
            MetricRow(
                n=i + 1,
                time=float(times[i]),
                truth_error=truth_error(summary.mean, truth),
                moving_domain_error=moving_domain_error(
                    summary.mean,
                    truth,
                    min(float(true_fronts[i]), truth.grid.domain_length),
                ),
                variance_ratio=variance_ratio(summary.variance, prior_variance),
                tempering_steps=int(tempering_steps[i]),
                cumulative_cost=cost,
                mean_error=mean_error,
                variance_error=variance_error,
                acceptance=math.nan if acceptance is None else float(acceptance[i]),
                movement=math.nan if movement is None else float(movement[i]),
            )
        )
    return MetricReport(rows)
