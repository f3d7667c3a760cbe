"""
Run configuration: a YAML file decoded into a tree of frozen dataclasses.

Every section and key is optional; missing ones take the defaults of the
dimensionless benchmark experiment. Errors name the offending key and, when it is
known, its line in the file.
"""

import dataclasses
import enum
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Final, Optional, Union

import yaml

from rtmlib.errors import ConfigError, ParameterError
from rtmlib.forward1d import DEFAULT_CONSTANTS, Grid1D, ModelConstants, TimeStepping
from rtmlib.observation import (
    MeasurementConfig,
    NoiseModel,
    equispaced_sensors,
    nested_times,
    uniform_times,
)
from rtmlib.prior import MaternParams
from rtmlib.renka import RenkaConfig
from rtmlib.serializers import record_serializer
from rtmlib.smc import SmcConfig


class Algorithm(enum.Enum):
    SMC = "smc"
    RENKA = "renka"


class CostModel(enum.Enum):
    # g_n / g_N taken as t_n / t_N
    PROXY = "proxy"
    # g_n / g_N from timed forward solves
    MEASURED = "measured"


class SweepAxis(enum.Enum):
    SENSORS = "sensors"
    NOISE = "noise"
    TIMES = "times"
    ENSEMBLE_SIZE = "ensemble_size"
    THRESHOLD_FRACTION = "threshold_fraction"
    MCMC_STEPS = "mcmc_steps"


DEFAULT_SWEEP_VALUES: Final[dict[SweepAxis, tuple[float, ...]]] = {
    SweepAxis.SENSORS: (0, 5, 9, 20),
    SweepAxis.NOISE: (0.15, 0.05, 0.025, 0.01, 0.005),
    SweepAxis.TIMES: (1, 2, 3, 4, 5, 8, 10, 12, 14, 16),
    SweepAxis.ENSEMBLE_SIZE: (50, 100, 200, 400, 800, 1600, 3200, 6400),
    SweepAxis.THRESHOLD_FRACTION: (1 / 3, 1 / 2, 2 / 3),
    SweepAxis.MCMC_STEPS: (5, 20),
}


@dataclass(frozen=True)
class GridConfig:
    inversion_cells: int = 60
    # Synthetic data come from a finer grid than the inversion.
    data_cells: int = 120
    domain_length: float = 1.0

    def __post_init__(self):
        if self.inversion_cells < 1:
            raise ParameterError("inversion_cells must be >= 1")
        if self.data_cells < 2 * self.inversion_cells:
            raise ParameterError(
                f"data_cells must be at least 2 * inversion_cells, got "
                f"{self.data_cells} < 2 * {self.inversion_cells}"
            )
        if not self.domain_length > 0.0:
            raise ParameterError("domain_length must be > 0")

    def inversion_grid(self) -> Grid1D:
        return Grid1D(self.inversion_cells, self.domain_length)

    def data_grid(self) -> Grid1D:
        return Grid1D(self.data_cells, self.domain_length)


@dataclass(frozen=True)
class SteppingConfig:
    horizon: float = 0.4
    inversion_steps: int = 2000
    data_steps: int = 4000

    def __post_init__(self):
        TimeStepping(self.horizon, self.inversion_steps)
        TimeStepping(self.horizon, self.data_steps)

    @property
    def inversion(self) -> TimeStepping:
        return TimeStepping(self.horizon, self.inversion_steps)

    @property
    def data(self) -> TimeStepping:
        return TimeStepping(self.horizon, self.data_steps)


@dataclass(frozen=True)
class MeasurementSettings:
    # Equispaced at m L / (M + 1); 0 means no pressure data.
    num_sensors: int = 9
    include_front: bool = True
    num_times: int = 5
    # Times n * time_spacing, unless nested_times is set.
    time_spacing: float = 0.072
    # Nested times on a grid ending at final_time.
    nested_times: bool = False
    final_time: float = 0.36

    def __post_init__(self):
        if self.num_sensors < 0:
            raise ParameterError("num_sensors must be >= 0")
        if self.num_times < 1:
            raise ParameterError("num_times must be >= 1")
        if self.num_sensors == 0 and not self.include_front:
            raise ParameterError("no sensors and no front: nothing is observed")
        if self.nested_times:
            nested_times(self.num_times, self.final_time)

    @property
    def times(self) -> tuple[float, ...]:
        if self.nested_times:
            return nested_times(self.num_times, self.final_time)
        return uniform_times(self.num_times, self.time_spacing)

    def build(self, domain_length: float) -> MeasurementConfig:
        return MeasurementConfig(
            sensor_positions=equispaced_sensors(self.num_sensors, domain_length),
            observation_times=self.times,
            include_front=self.include_front,
            include_pressure=self.num_sensors > 0,
        )


@dataclass(frozen=True)
class TruthConfig:
    # CSV of cell values on the data grid; drawn from the prior if unset.
    file: Optional[str] = None
    # Transfer to the inversion grid by cell averages instead of sampling.
    averaging: bool = False


@dataclass(frozen=True)
class SweepConfig:
    axis: SweepAxis = SweepAxis.SENSORS
    # Empty means the default values of the axis.
    values: tuple[float, ...] = ()
    # Sensors axis only; (M = 0, front off) is always left out.
    front_options: tuple[bool, ...] = (True, False)
    repeats: int = 15

    def __post_init__(self):
        if self.repeats < 1:
            raise ParameterError("repeats must be >= 1")
        if not self.front_options:
            raise ParameterError("front_options must not be empty")

    @property
    def resolved_values(self) -> tuple[float, ...]:
        return self.values or DEFAULT_SWEEP_VALUES[self.axis]


@dataclass(frozen=True)
class RunConfig:
    """
    The master seed replaces the seeds of the smc and renka sections; use
    smc_config and renka_config to get them resolved.
    """

    grid: GridConfig = GridConfig()
    stepping: SteppingConfig = SteppingConfig()
    prior: MaternParams = MaternParams()
    measurement: MeasurementSettings = MeasurementSettings()
    noise: NoiseModel = NoiseModel()
    forward: ModelConstants = DEFAULT_CONSTANTS
    algorithm: Algorithm = Algorithm.RENKA
    smc: SmcConfig = SmcConfig()
    renka: RenkaConfig = RenkaConfig()
    seed: int = 0
    repeats: int = 1
    workers: int = 1
    truth: TruthConfig = TruthConfig()
    # Directory of an earlier run whose ensembles serve as benchmark.
    benchmark_dir: Optional[str] = None
    prior_cache_dir: Optional[str] = None
    cost_model: CostModel = CostModel.PROXY
    sweep: SweepConfig = SweepConfig()

    def __post_init__(self):
        if self.seed < 0:
            raise ConfigError("must be >= 0", ("seed",))
        if self.repeats < 1:
            raise ConfigError("must be >= 1", ("repeats",))
        if self.workers < 1:
            raise ConfigError("must be >= 1", ("workers",))
        last = self.measurement.times[-1]
        if last > self.stepping.horizon + 1e-12:
            raise ConfigError(
                f"last observation time {last:g} is beyond the horizon "
                f"{self.stepping.horizon:g}",
                ("measurement",),
            )

    @property
    def smc_config(self) -> SmcConfig:
        return dataclasses.replace(self.smc, seed=self.seed)

    @property
    def renka_config(self) -> RenkaConfig:
        return dataclasses.replace(self.renka, seed=self.seed)

    @property
    def ensemble_size(self) -> int:
        if self.algorithm is Algorithm.SMC:
            return self.smc.ensemble_size
        return self.renka.ensemble_size

    def measurement_config(self) -> MeasurementConfig:
        return self.measurement.build(self.grid.domain_length)


_RUN_CONFIG_SERIALIZER: Final = record_serializer(RunConfig)


def parse_run_config(text: str, source: str = "<string>") -> RunConfig:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        line = None if mark is None else mark.line + 1
        raise ConfigError(f"invalid YAML: {e}", line=line, source=source) from e
    if data is None:
        data = {}
    try:
        return _RUN_CONFIG_SERIALIZER.from_json(data)
    except ConfigError as e:
        raise e.located(source, _line_of(text, e.path)) from e


def load_run_config(path: Union[str, Path]) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config: {e}", source=str(path)) from e
    return parse_run_config(text, str(path))


def _line_of(text: str, path: tuple[str, ...]) -> Optional[int]:
    """1-based line of the deepest key of 'path' found in the YAML document."""
    try:
        node = yaml.compose(text)
    except yaml.YAMLError:
        return None
    line = None
    for key in path:
        if not isinstance(node, yaml.MappingNode):
            break
        for key_node, value_node in node.value:
            if key_node.value == key:
                line = key_node.start_mark.line + 1
                node = value_node
                break
        else:
            break
    return line


def with_overrides(
    config: RunConfig, *, seed: Optional[int] = None, workers: Optional[int] = None
) -> RunConfig:
    changes: dict[str, Any] = {}
    if seed is not None:
        changes["seed"] = seed
    if workers is not None:
        changes["workers"] = workers
    return dataclasses.replace(config, **changes) if changes else config


def config_to_json(config: RunConfig) -> Any:
    return _RUN_CONFIG_SERIALIZER.to_json(config, readable=True)


def config_from_json(json: Any) -> RunConfig:
    return _RUN_CONFIG_SERIALIZER.from_json(json)


def config_digest(config: RunConfig) -> str:
    """SHA-256 of the dense JSON form of the config."""
    return _RUN_CONFIG_SERIALIZER.digest(config)


@dataclass(frozen=True)
class SweepPoint:
    label: str
    value: float
    config: RunConfig
    include_front: bool = True


def sweep_points(config: RunConfig) -> list[SweepPoint]:
    """The run configurations of a sweep along config.sweep.axis, in order."""
    sweep = config.sweep
    points = []
    for value in sweep.resolved_values:
        if sweep.axis is SweepAxis.SENSORS:
            for front in sweep.front_options:
                num_sensors = int(value)
                if num_sensors == 0 and not front:
                    continue
                measurement = dataclasses.replace(
                    config.measurement, num_sensors=num_sensors, include_front=front
                )
                points.append(
                    SweepPoint(
                        label=f"M={num_sensors},front={'on' if front else 'off'}",
                        value=float(value),
                        config=dataclasses.replace(config, measurement=measurement),
                        include_front=front,
                    )
                )
            continue
        points.append(
            SweepPoint(
                label=f"{sweep.axis.value}={value:g}",
                value=float(value),
                config=_along_axis(config, sweep.axis, value),
                include_front=config.measurement.include_front,
            )
        )
    return points


def _along_axis(config: RunConfig, axis: SweepAxis, value: float) -> RunConfig:
    replace = dataclasses.replace
    if axis is SweepAxis.NOISE:
        return replace(config, noise=replace(config.noise, noise_fraction=value))
    if axis is SweepAxis.TIMES:
        measurement = replace(
            config.measurement, num_times=int(value), nested_times=True
        )
        return replace(config, measurement=measurement)
    if axis is SweepAxis.ENSEMBLE_SIZE:
        size = int(value)
        return replace(
            config,
            smc=replace(config.smc, ensemble_size=size, threshold=None),
            renka=replace(config.renka, ensemble_size=size, threshold=None),
        )
    if axis is SweepAxis.THRESHOLD_FRACTION:
        return replace(
            config,
            smc=replace(
                config.smc, threshold=max(1.0, value * config.smc.ensemble_size)
            ),
            renka=replace(
                config.renka, threshold=max(1.0, value * config.renka.ensemble_size)
            ),
        )
    if axis is SweepAxis.MCMC_STEPS:
        return replace(config, smc=replace(config.smc, mcmc_steps=int(value)))
    raise AssertionError(axis)
