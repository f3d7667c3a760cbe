"""
Dimensionless 1D resin injection: a front Υ(t) moving into a medium of
log-permeability u, driven by a fixed inlet pressure.

With F_u(x) the integral of exp(-u) from 0 to x (smoothed at cell boundaries), the
front obeys dΥ/dt = c / F_u(Υ) with c = (p_I - p_0) / porosity, and behind the
front the pressure is p_I - (p_I - p_0) F_u(x) / F_u(Υ). The process stops at the
filling time τ*, when Υ reaches the end of the domain.
"""

import dataclasses
import functools
import math
from collections.abc import Sequence
from dataclasses import dataclass
from typing import Final, Optional, Protocol, final

import numpy as np

from rtmlib.errors import DomainError, InvalidFieldError, ParameterError, SolverError
from rtmlib.impl import front_solver
from rtmlib.impl.pool import INLINE, ChunkPool


@dataclass(frozen=True)
class Grid1D:
    num_cells: int
    domain_length: float = 1.0

    def __post_init__(self):
        if self.num_cells < 1:
            raise ParameterError(f"num_cells must be >= 1, got {self.num_cells}")
        if not self.domain_length > 0.0:
            raise ParameterError(
                f"domain_length must be > 0, got {self.domain_length}"
            )

    @property
    def cell_width(self) -> float:
        return self.domain_length / self.num_cells

    @functools.cached_property
    def cell_edges(self) -> np.ndarray:
        edges = np.arange(self.num_cells + 1) * self.cell_width
        edges[-1] = self.domain_length
        edges.flags.writeable = False
        return edges

    @functools.cached_property
    def cell_centers(self) -> np.ndarray:
        centers = (np.arange(self.num_cells) + 0.5) * self.cell_width
        centers.flags.writeable = False
        return centers


@final
@dataclass(frozen=True, eq=False)
class LogPermField:
    """Piecewise-constant log-permeability, one value per grid cell."""

    grid: Grid1D
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.shape != (self.grid.num_cells,):
            raise InvalidFieldError(
                f"expected {self.grid.num_cells} values, got shape {values.shape}"
            )
        if not np.all(np.isfinite(values)):
            raise InvalidFieldError("field values must be finite")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @staticmethod
    def constant(grid: Grid1D, value: float) -> "LogPermField":
        return LogPermField(grid, np.full(grid.num_cells, value))

    @property
    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))

    def at(self, x: np.ndarray) -> np.ndarray:
        """Evaluates the piecewise-constant field at points of the domain."""
        cells = np.floor(np.asarray(x) / self.grid.cell_width).astype(np.int64)
        return self.values[np.clip(cells, 0, self.grid.num_cells - 1)]


@dataclass(frozen=True)
class ModelConstants:
    p_inlet: float = 2.0
    p_ambient: float = 1.0
    porosity: float = 1.0
    heaviside_sharpness: float = 300.0

    def __post_init__(self):
        if not math.isclose(self.p_inlet, 2.0 * self.p_ambient):
            raise ParameterError("p_inlet must equal 2 * p_ambient")
        if not self.p_ambient > 0.0:
            raise ParameterError(f"p_ambient must be > 0, got {self.p_ambient}")
        if not self.porosity > 0.0:
            raise ParameterError(f"porosity must be > 0, got {self.porosity}")
        if not self.heaviside_sharpness > 0.0:
            raise ParameterError(
                f"heaviside_sharpness must be > 0, got {self.heaviside_sharpness}"
            )

    @property
    def front_speed(self) -> float:
        return (self.p_inlet - self.p_ambient) / self.porosity


DEFAULT_CONSTANTS: Final = ModelConstants()


@dataclass(frozen=True)
class TimeStepping:
    """Uniform backward Euler steps: num_steps steps cover [0, horizon]."""

    horizon: float = 0.4
    num_steps: int = 2000

    def __post_init__(self):
        if not self.horizon > 0.0:
            raise ParameterError(f"horizon must be > 0, got {self.horizon}")
        if self.num_steps < 1:
            raise ParameterError(f"num_steps must be >= 1, got {self.num_steps}")

    @property
    def time_step(self) -> float:
        return self.horizon / self.num_steps

    def steps_to(self, t: float) -> int:
        """Number of steps needed to reach time t, which may exceed the horizon."""
        return max(1, math.ceil(t / self.time_step - 1e-9))


INVERSION_STEPPING: Final = TimeStepping(horizon=0.4, num_steps=2000)
DATA_STEPPING: Final = TimeStepping(horizon=0.4, num_steps=4000)


@dataclass(frozen=True, eq=False)
class FrontTrajectory:
    time_step: float
    front_values: np.ndarray
    # None if the front did not reach the end of the domain
    filling_time: Optional[float]

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.front_values.shape[0]) * self.time_step

    def front_at(self, t: float) -> float:
        if self.filling_time is not None and t >= self.filling_time:
            return float(self.front_values[-1])
        return float(np.interp(t, self.times, self.front_values))


@dataclass(frozen=True, eq=False)
class ForwardOutput:
    """G_n(u): the front and the sensor pressures at t_n, or at τ* if earlier."""

    front_at_t: float
    pressures_at_sensors: np.ndarray


def _check_field(u: LogPermField) -> None:
    if not isinstance(u, LogPermField):
        raise InvalidFieldError(f"expected a LogPermField, got {type(u).__name__}")


def _check_position(grid: Grid1D, x: float, name: str = "x") -> None:
    if not 0.0 <= x <= grid.domain_length:
        raise DomainError(f"{name}={x} outside [0, {grid.domain_length}]")


def f_integral(
    u: LogPermField, x: float, constants: ModelConstants = DEFAULT_CONSTANTS
) -> float:
    _check_field(u)
    _check_position(u.grid, x)
    grid = u.grid
    smoothed = 0.5 + 0.5 * np.tanh(
        constants.heaviside_sharpness * (x - grid.cell_centers)
    )
    return float(np.sum(np.exp(-u.values) * smoothed) * grid.cell_width)


def filling_time(
    u: LogPermField, constants: ModelConstants = DEFAULT_CONSTANTS
) -> float:
    """τ* from the midpoint rule applied to F_u over the cell centers."""
    _check_field(u)
    grid = u.grid
    primitive = _primitive(u.values[None, :], grid, constants)
    rows = np.zeros(grid.num_cells, dtype=np.int64)
    centers = np.asarray(grid.cell_centers)
    values, _ = primitive.evaluate(rows, centers, with_slope=False)
    return float(np.sum(values) * grid.cell_width / constants.front_speed)


def advance_front(
    u: LogPermField,
    t_final: float,
    num_steps: int,
    constants: ModelConstants = DEFAULT_CONSTANTS,
) -> FrontTrajectory:
    _check_field(u)
    if not t_final > 0.0:
        raise DomainError(f"t_final must be > 0, got {t_final}")
    if num_steps < 1:
        raise ParameterError(f"num_steps must be >= 1, got {num_steps}")
    time_step = t_final / num_steps
    solution = _solve(
        u.values[None, :],
        u.grid,
        constants,
        time_step,
        num_steps,
        np.array([t_final]),
        record_trajectory=True,
    )
    _raise_on_failure(solution)
    assert solution.trajectory is not None
    filled_at = solution.filling_times[0]
    return FrontTrajectory(
        time_step=time_step,
        front_values=solution.trajectory[0],
        filling_time=None if np.isnan(filled_at) else float(filled_at),
    )


def pressure_at(
    u: LogPermField,
    front_value: float,
    x: float,
    constants: ModelConstants = DEFAULT_CONSTANTS,
) -> float:
    _check_field(u)
    _check_position(u.grid, x)
    if not 0.0 < front_value <= u.grid.domain_length:
        raise DomainError(
            f"front_value={front_value} outside (0, {u.grid.domain_length}]"
        )
    if x >= front_value:
        return constants.p_ambient
    ratio = f_integral(u, x, constants) / f_integral(u, front_value, constants)
    return constants.p_inlet - (constants.p_inlet - constants.p_ambient) * ratio


def forward_map(
    u: LogPermField,
    t_n: float,
    sensors: Sequence[float],
    constants: ModelConstants = DEFAULT_CONSTANTS,
    stepping: TimeStepping = INVERSION_STEPPING,
) -> ForwardOutput:
    _check_field(u)
    if not t_n > 0.0:
        raise DomainError(f"t_n must be > 0, got {t_n}")
    model = ForwardModel(u.grid, tuple(sensors), constants, stepping)
    batch = model.evaluate(u.values[None, :], (t_n,))
    if not batch.ok[0]:
        raise SolverError("front root solve failed", int(batch.failed_steps[0]))
    return batch.output(0, 0)


@dataclass(frozen=True, eq=False)
class ForwardBatch:
    """Forward outputs of J fields at N observation times."""

    times: np.ndarray
    # (J, N)
    fronts: np.ndarray
    # (J, N, M)
    pressures: np.ndarray
    # (J,)
    filling_times: np.ndarray
    # (J,): -1 where the solve succeeded
    failed_steps: np.ndarray

    @property
    def size(self) -> int:
        return self.fronts.shape[0]

    @property
    def ok(self) -> np.ndarray:
        return self.failed_steps < 0

    def output(self, row: int, n: int) -> ForwardOutput:
        return ForwardOutput(
            front_at_t=float(self.fronts[row, n]),
            pressures_at_sensors=self.pressures[row, n].copy(),
        )

    def take(self, rows: np.ndarray) -> "ForwardBatch":
        return ForwardBatch(
            times=self.times,
            fronts=self.fronts[rows],
            pressures=self.pressures[rows],
            filling_times=self.filling_times[rows],
            failed_steps=self.failed_steps[rows],
        )

    def merged(self, mask: np.ndarray, other: "ForwardBatch") -> "ForwardBatch":
        """Rows of 'other' where mask is set, rows of self elsewhere."""
        return ForwardBatch(
            times=self.times,
            fronts=np.where(mask[:, None], other.fronts, self.fronts),
            pressures=np.where(mask[:, None, None], other.pressures, self.pressures),
            filling_times=np.where(mask, other.filling_times, self.filling_times),
            failed_steps=np.where(mask, other.failed_steps, self.failed_steps),
        )

    @staticmethod
    def concatenate(parts: Sequence["ForwardBatch"]) -> "ForwardBatch":
        if len(parts) == 1:
            return parts[0]
        return ForwardBatch(
            times=parts[0].times,
            fronts=np.concatenate([p.fronts for p in parts]),
            pressures=np.concatenate([p.pressures for p in parts]),
            filling_times=np.concatenate([p.filling_times for p in parts]),
            failed_steps=np.concatenate([p.failed_steps for p in parts]),
        )


class ForwardMap(Protocol):
    """What the samplers need from a forward model. Other solvers plug in here."""

    @property
    def num_sensors(self) -> int: ...

    def evaluate(
        self,
        fields: np.ndarray,
        times: Sequence[float],
        pool: ChunkPool = INLINE,
    ) -> ForwardBatch:
        """Outputs for each row of the (J, S) array 'fields' at each of 'times'."""
        ...


@dataclass(frozen=True)
class ForwardModel:
    """The batched 1D solver, as a ForwardMap."""

    grid: Grid1D
    sensors: tuple[float, ...]
    constants: ModelConstants = DEFAULT_CONSTANTS
    stepping: TimeStepping = INVERSION_STEPPING

    def __post_init__(self):
        for x in self.sensors:
            _check_position(self.grid, x, "sensor")

    @property
    def num_sensors(self) -> int:
        return len(self.sensors)

    def evaluate(
        self,
        fields: np.ndarray,
        times: Sequence[float],
        pool: ChunkPool = INLINE,
    ) -> ForwardBatch:
        fields = np.atleast_2d(np.asarray(fields, dtype=float))
        if fields.shape[1] != self.grid.num_cells:
            raise InvalidFieldError(
                f"expected {self.grid.num_cells} cells, got {fields.shape[1]}"
            )
        if not np.all(np.isfinite(fields)):
            raise InvalidFieldError("field values must be finite")
        times = np.asarray(times, dtype=float)
        if np.any(times <= 0.0):
            raise DomainError("observation times must be > 0")
        parts = pool.map_rows(_evaluate_rows, fields, self, times)
        return ForwardBatch.concatenate(parts)

    def with_stepping(self, stepping: TimeStepping) -> "ForwardModel":
        return dataclasses.replace(self, stepping=stepping)


def _evaluate_rows(
    fields: np.ndarray, model: ForwardModel, times: np.ndarray
) -> ForwardBatch:
    stepping = model.stepping
    num_steps = stepping.steps_to(float(times.max())) if times.size else 1
    primitive = _primitive(fields, model.grid, model.constants)
    solution = front_solver.solve_fronts(
        primitive,
        np.max(np.abs(fields), axis=1),
        model.grid.domain_length,
        model.constants.front_speed,
        stepping.time_step,
        num_steps,
        times,
    )
    num_fields = fields.shape[0]
    sensors = np.asarray(model.sensors, dtype=float)
    pressures = np.full((num_fields, times.size, sensors.size), np.nan)
    ok = np.flatnonzero(solution.ok)
    constants = model.constants
    drop = constants.p_inlet - constants.p_ambient
    for n in range(times.size):
        if ok.size == 0 or sensors.size == 0:
            break
        fronts = solution.fronts[ok, n]
        at_front, _ = primitive.evaluate(ok, fronts, with_slope=False)
        rows = np.repeat(ok, sensors.size)
        at_sensors, _ = primitive.evaluate(
            rows, np.tile(sensors, ok.size), with_slope=False
        )
        ratio = at_sensors.reshape(ok.size, sensors.size) / at_front[:, None]
        behind = sensors[None, :] < fronts[:, None]
        pressures[ok, n, :] = np.where(
            behind,
            np.clip(
                constants.p_inlet - drop * ratio,
                constants.p_ambient,
                constants.p_inlet,
            ),
            constants.p_ambient,
        )
    return ForwardBatch(
        times=times,
        fronts=solution.fronts,
        pressures=pressures,
        filling_times=solution.filling_times,
        failed_steps=solution.failed_steps,
    )


def _primitive(
    fields: np.ndarray, grid: Grid1D, constants: ModelConstants
) -> front_solver.SmoothedPrimitive:
    return front_solver.SmoothedPrimitive(
        fields,
        np.asarray(grid.cell_centers),
        grid.cell_width,
        constants.heaviside_sharpness,
    )


def _solve(
    fields: np.ndarray,
    grid: Grid1D,
    constants: ModelConstants,
    time_step: float,
    num_steps: int,
    report_times: np.ndarray,
    record_trajectory: bool = False,
) -> front_solver.FrontSolution:
    return front_solver.solve_fronts(
        _primitive(fields, grid, constants),
        np.max(np.abs(fields), axis=1),
        grid.domain_length,
        constants.front_speed,
        time_step,
        num_steps,
        report_times,
        record_trajectory=record_trajectory,
    )


def _raise_on_failure(solution: front_solver.FrontSolution) -> None:
    if not solution.ok[0]:
        raise SolverError("front root solve failed", int(solution.failed_steps[0]))
