import enum
import logging
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path
from typing import Final, Optional, Union

import numpy as np
import pandas as pd

from rtmlib.errors import (
    ConfigError,
    MalformedDataError,
    NoiseModelError,
    ParameterError,
)
from rtmlib.forward1d import (
    DATA_STEPPING,
    DEFAULT_CONSTANTS,
    ForwardBatch,
    ForwardModel,
    ForwardOutput,
    LogPermField,
    ModelConstants,
    TimeStepping,
)

logger = logging.getLogger(__name__)

DEFAULT_VARIANCE_FLOOR: Final = 1e-12


class Restriction(enum.Enum):
    """Which components of the data enter the likelihood."""

    BOTH = "both"
    PRESSURE = "pressure"
    FRONT = "front"

    @property
    def uses_front(self) -> bool:
        return self is not Restriction.PRESSURE

    @property
    def uses_pressure(self) -> bool:
        return self is not Restriction.FRONT


@dataclass(frozen=True)
class MeasurementConfig:
    sensor_positions: tuple[float, ...]
    observation_times: tuple[float, ...]
    include_front: bool = True
    include_pressure: bool = True

    def __post_init__(self):
        positions = np.asarray(self.sensor_positions, dtype=float)
        times = np.asarray(self.observation_times, dtype=float)
        if np.any(positions <= 0.0) or np.any(np.diff(positions) <= 0.0):
            raise ParameterError("sensor positions must be positive and increasing")
        if np.any(times <= 0.0) or np.any(np.diff(times) <= 0.0):
            raise ParameterError(
                "observation times must be positive and strictly increasing"
            )
        if not (self.include_front or self.include_pressure):
            raise ParameterError("at least one of front or pressure data is needed")
        if self.include_pressure and not self.sensor_positions:
            raise ParameterError("pressure data needs at least one sensor")

    @property
    def num_sensors(self) -> int:
        return len(self.sensor_positions)

    @property
    def num_times(self) -> int:
        return len(self.observation_times)

    @property
    def restriction(self) -> Restriction:
        if self.include_front and self.include_pressure:
            return Restriction.BOTH
        return Restriction.FRONT if self.include_front else Restriction.PRESSURE


def equispaced_sensors(
    num_sensors: int, domain_length: float = 1.0
) -> tuple[float, ...]:
    """x_m = m L / (M + 1), m = 1..M."""
    return tuple(
        m * domain_length / (num_sensors + 1) for m in range(1, num_sensors + 1)
    )


def uniform_times(num_times: int, spacing: float = 0.072) -> tuple[float, ...]:
    return tuple(n * spacing for n in range(1, num_times + 1))


def nested_times(
    num_times: int, final_time: float = 0.36, max_count: int = 16
) -> tuple[float, ...]:
    """
    Observation times on the grid final_time * k / max_count, k = 1..max_count,
    always ending at final_time. The set for N times is contained in the set for
    any larger N: points are added in the order of a binary subdivision of the grid.
    """
    if not 1 <= num_times <= max_count:
        raise ParameterError(f"num_times must be in [1, {max_count}], got {num_times}")
    order = _subdivision_order(max_count)
    chosen = sorted(order[:num_times])
    return tuple(final_time * k / max_count for k in chosen)


def _subdivision_order(count: int) -> list[int]:
    order = [count]
    step = count
    while step > 1:
        half = step // 2
        order.extend(k for k in range(half, count, step) if k not in order)
        step = half
    order.extend(k for k in range(1, count + 1) if k not in order)
    return order


@dataclass(frozen=True)
class NoiseModel:
    """
    Independent Gaussian noise with variance max((noise_fraction * |s|)^2, floor)
    for a noise-free signal s. A zero noise_fraction means no noise at all.
    """

    noise_fraction: float = 0.015
    variance_floor: float = DEFAULT_VARIANCE_FLOOR

    def __post_init__(self):
        if not self.noise_fraction >= 0.0:
            raise ParameterError(
                f"noise_fraction must be >= 0, got {self.noise_fraction}"
            )
        if not self.variance_floor > 0.0:
            raise ParameterError(
                f"variance_floor must be > 0, got {self.variance_floor}"
            )

    def variances(self, signal: np.ndarray) -> np.ndarray:
        std = self.noise_fraction * np.abs(signal)
        return np.maximum(std * std, self.variance_floor)

    def noise_std(self, signal: np.ndarray) -> np.ndarray:
        """Standard deviation to draw with: the root of the floored variance."""
        if self.noise_fraction == 0.0:
            return np.zeros_like(np.asarray(signal, dtype=float))
        return np.sqrt(self.variances(signal))


@dataclass(frozen=True, eq=False)
class ObservationVector:
    """Data and diagonal noise covariance of one record, flattened."""

    values: np.ndarray
    variances: np.ndarray

    @property
    def size(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True, eq=False)
class ObservationRecord:
    # 1-based index n of the observation time
    index: int
    time: float
    y_front: Optional[float] = None
    y_pressure: Optional[np.ndarray] = None
    gamma_front: Optional[float] = None
    gamma_pressure: Optional[np.ndarray] = None

    def __post_init__(self):
        if (self.y_front is None) != (self.gamma_front is None):
            raise ParameterError("front data and front variance go together")
        if (self.y_pressure is None) != (self.gamma_pressure is None):
            raise ParameterError("pressure data and pressure variances go together")
        if self.y_pressure is not None and self.gamma_pressure is not None:
            y = np.asarray(self.y_pressure, dtype=float)
            gamma = np.asarray(self.gamma_pressure, dtype=float)
            if y.shape != gamma.shape or y.ndim != 1:
                raise ParameterError("pressure data and variances differ in shape")
            object.__setattr__(self, "y_pressure", y)
            object.__setattr__(self, "gamma_pressure", gamma)

    @property
    def has_front(self) -> bool:
        return self.y_front is not None

    @property
    def has_pressure(self) -> bool:
        return self.y_pressure is not None

    def vector(self, restrict: Restriction = Restriction.BOTH) -> ObservationVector:
        values: list[np.ndarray] = []
        variances: list[np.ndarray] = []
        if restrict.uses_front and self.y_front is not None:
            values.append(np.array([self.y_front]))
            variances.append(np.array([self.gamma_front]))
        if restrict.uses_pressure and self.y_pressure is not None:
            values.append(self.y_pressure)
            variances.append(np.asarray(self.gamma_pressure))
        if not values:
            return ObservationVector(np.zeros(0), np.zeros(0))
        return ObservationVector(
            np.concatenate(values).astype(float),
            np.concatenate(variances).astype(float),
        )


def simulate_signals(
    truth: LogPermField,
    times: Sequence[float],
    sensors: Sequence[float],
    constants: ModelConstants = DEFAULT_CONSTANTS,
    stepping: TimeStepping = DATA_STEPPING,
) -> ForwardBatch:
    """Noise-free forward outputs of the truth, one row."""
    model = ForwardModel(truth.grid, tuple(sensors), constants, stepping)
    batch = model.evaluate(truth.values[None, :], times)
    if not batch.ok[0]:
        raise ConfigError(
            f"forward solve of the truth failed at step {int(batch.failed_steps[0])}"
        )
    return batch


def generate_synthetic(
    truth: LogPermField,
    config: MeasurementConfig,
    noise_model: NoiseModel,
    rng: np.random.Generator,
    *,
    constants: ModelConstants = DEFAULT_CONSTANTS,
    stepping: TimeStepping = DATA_STEPPING,
    inversion_cells: Optional[int] = None,
) -> list[ObservationRecord]:
    """
    Noisy records at each observation time. Front noise for all times is drawn
    before any pressure noise, so the front data do not depend on the number of
    sensors.
    """
    if inversion_cells is not None and truth.grid.num_cells < 2 * inversion_cells:
        raise ParameterError(
            f"truth grid ({truth.grid.num_cells} cells) must be at least twice as "
            f"fine as the inversion grid ({inversion_cells} cells)"
        )
    if config.observation_times[-1] > stepping.horizon + 1e-12:
        raise ConfigError(
            f"observation time {config.observation_times[-1]} is beyond the "
            f"simulation horizon {stepping.horizon}"
        )
    for x in config.sensor_positions:
        if x > truth.grid.domain_length:
            raise ConfigError(f"sensor at {x} is outside the domain")
    signals = simulate_signals(
        truth, config.observation_times, config.sensor_positions, constants, stepping
    )
    num_times, num_sensors = config.num_times, config.num_sensors
    fronts = signals.fronts[0]
    pressures = signals.pressures[0]
    front_noise = rng.standard_normal(num_times)
    pressure_noise = rng.standard_normal((num_times, num_sensors))
    records = []
    for i, t in enumerate(config.observation_times):
        front_kwargs = {}
        if config.include_front:
            front = fronts[i]
            front_kwargs = dict(
                y_front=float(
                    front + noise_model.noise_std(np.array([front]))[0] * front_noise[i]
                ),
                gamma_front=float(noise_model.variances(np.array([front]))[0]),
            )
        pressure_kwargs = {}
        if config.include_pressure:
            p = pressures[i]
            pressure_kwargs = dict(
                y_pressure=p + noise_model.noise_std(p) * pressure_noise[i],
                gamma_pressure=noise_model.variances(p),
            )
        records.append(
            ObservationRecord(index=i + 1, time=t, **front_kwargs, **pressure_kwargs)
        )
    logger.info(
        "generated %d records (%d sensors, front %s, noise %.3g%%)",
        len(records),
        num_sensors,
        "on" if config.include_front else "off",
        100.0 * noise_model.noise_fraction,
    )
    return records


def log_likelihood(
    output: ForwardOutput,
    record: ObservationRecord,
    restrict: Restriction = Restriction.BOTH,
    variance_floor: float = DEFAULT_VARIANCE_FLOOR,
) -> float:
    """-1/2 |Γ^(-1/2) (y - G(u))|^2 over the selected components."""
    observed = record.vector(restrict)
    check_variances(observed, variance_floor)
    predicted = _predicted(
        np.array([output.front_at_t]),
        np.asarray(output.pressures_at_sensors)[None, :],
        record,
        restrict,
    )
    if predicted.shape[1] != observed.size:
        raise ParameterError("output and record sizes differ")
    residual = observed.values - predicted[0]
    return float(-0.5 * np.sum(residual * residual / observed.variances))


def log_likelihoods(
    batch: ForwardBatch,
    column: int,
    record: ObservationRecord,
    restrict: Restriction = Restriction.BOTH,
    variance_floor: float = DEFAULT_VARIANCE_FLOOR,
) -> np.ndarray:
    """log_likelihood for every row of a batch; -inf where the solve failed."""
    predicted = predicted_vectors(batch, column, record, restrict)
    values = misfit_log_likelihoods(
        predicted, record.vector(restrict), variance_floor
    )
    return np.where(batch.ok & np.isfinite(values), values, -np.inf)


def misfit_log_likelihoods(
    predicted: np.ndarray,
    observed: ObservationVector,
    variance_floor: float = DEFAULT_VARIANCE_FLOOR,
) -> np.ndarray:
    """-1/2 |Γ^(-1/2) (y - w_j)|^2 for each row w_j of 'predicted'."""
    check_variances(observed, variance_floor)
    if predicted.shape[1] != observed.size:
        raise ParameterError(
            f"predicted vectors have {predicted.shape[1]} entries, data {observed.size}"
        )
    residual = observed.values[None, :] - predicted
    with np.errstate(invalid="ignore"):
        return -0.5 * np.sum(residual * residual / observed.variances[None, :], axis=1)


def predicted_vectors(
    batch: ForwardBatch,
    column: int,
    record: ObservationRecord,
    restrict: Restriction = Restriction.BOTH,
) -> np.ndarray:
    """(J, d) model counterparts of record.vector(restrict)."""
    return _predicted(
        batch.fronts[:, column], batch.pressures[:, column, :], record, restrict
    )


def _predicted(
    fronts: np.ndarray,
    pressures: np.ndarray,
    record: ObservationRecord,
    restrict: Restriction,
) -> np.ndarray:
    parts = []
    if restrict.uses_front and record.has_front:
        parts.append(fronts[:, None])
    if restrict.uses_pressure and record.y_pressure is not None:
        if pressures.shape[1] != record.y_pressure.shape[0]:
            raise ParameterError(
                f"record has {record.y_pressure.shape[0]} pressures, "
                f"model has {pressures.shape[1]} sensors"
            )
        parts.append(pressures)
    if not parts:
        return np.zeros((fronts.shape[0], 0))
    return np.concatenate(parts, axis=1)


def check_variances(observed: ObservationVector, variance_floor: float) -> None:
    if np.any(observed.variances < variance_floor):
        raise NoiseModelError(f"noise variance below the floor {variance_floor}")


def records_to_frame(records: Sequence[ObservationRecord]) -> pd.DataFrame:
    """One row per time: n, t_n, y_front, y_p_1..M, gamma_front, gamma_p_1..M."""
    rows = []
    for record in records:
        row: dict[str, float] = {"n": record.index, "t_n": record.time}
        if record.y_front is not None:
            row["y_front"] = record.y_front
        if record.y_pressure is not None:
            for m, value in enumerate(record.y_pressure, start=1):
                row[f"y_p_{m}"] = float(value)
        if record.gamma_front is not None:
            row["gamma_front"] = record.gamma_front
        if record.gamma_pressure is not None:
            for m, value in enumerate(record.gamma_pressure, start=1):
                row[f"gamma_p_{m}"] = float(value)
        rows.append(row)
    return pd.DataFrame(rows)


def records_from_frame(frame: pd.DataFrame) -> list[ObservationRecord]:
    if "n" not in frame.columns or "t_n" not in frame.columns:
        raise MalformedDataError("observation table needs columns n and t_n")
    pressure_columns = sorted(
        (c for c in frame.columns if c.startswith("y_p_")),
        key=lambda c: int(c[len("y_p_") :]),
    )
    gamma_columns = [f"gamma_p_{c[len('y_p_'):]}" for c in pressure_columns]
    missing = [c for c in gamma_columns if c not in frame.columns]
    if "y_front" in frame.columns and "gamma_front" not in frame.columns:
        missing.append("gamma_front")
    if missing:
        raise MalformedDataError(f"observation table lacks columns {missing}")
    records = []
    for _, row in frame.sort_values("n").iterrows():
        kwargs = {}
        if "y_front" in frame.columns:
            kwargs["y_front"] = float(row["y_front"])
            kwargs["gamma_front"] = float(row["gamma_front"])
        if pressure_columns:
            kwargs["y_pressure"] = row[pressure_columns].to_numpy(dtype=float)
            kwargs["gamma_pressure"] = row[gamma_columns].to_numpy(dtype=float)
        records.append(
            ObservationRecord(index=int(row["n"]), time=float(row["t_n"]), **kwargs)
        )
    return records


def write_records(path: Union[str, Path], records: Sequence[ObservationRecord]) -> None:
    records_to_frame(records).to_csv(path, index=False, float_format="%.17g")


def read_records(path: Union[str, Path]) -> list[ObservationRecord]:
    try:
        frame = pd.read_csv(path)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise MalformedDataError(f"{path}: {e}") from e
    try:
        return records_from_frame(frame)
    except MalformedDataError:
        raise
    except (KeyError, ValueError) as e:
        raise MalformedDataError(f"{path}: {e}") from e
