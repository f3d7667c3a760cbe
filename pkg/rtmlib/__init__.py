__version__ = "0.1.0"

from rtmlib.config import RunConfig, load_run_config, parse_run_config
from rtmlib.diagnostics import (
    EnsembleSummary,
    MetricReport,
    metric_report,
    moving_domain_error,
    mutation_quality,
    summarize,
    truth_error,
    variance_ratio,
)
from rtmlib.errors import (
    ConfigError,
    DegenerateEnsembleError,
    DomainError,
    EmptyEnsembleError,
    InvalidFieldError,
    MalformedDataError,
    NoiseModelError,
    NumericalError,
    ParameterError,
    RtmError,
    SolverError,
)
from rtmlib.forward1d import (
    ForwardMap,
    ForwardModel,
    ForwardOutput,
    FrontTrajectory,
    Grid1D,
    LogPermField,
    ModelConstants,
    TimeStepping,
    advance_front,
    f_integral,
    filling_time,
    forward_map,
    pressure_at,
)
from rtmlib.observation import (
    MeasurementConfig,
    NoiseModel,
    ObservationRecord,
    generate_synthetic,
    log_likelihood,
)
from rtmlib.prior import (
    GaussianPrior,
    KLBasis,
    MaternParams,
    coeffs_to_field,
    field_to_coeffs,
    kl_decompose,
    matern_covariance,
    sample_prior,
)
from rtmlib.renka import RenkaConfig, kalman_update, renka_cost, run_renka
from rtmlib.serializer import Serializer
from rtmlib.serializers import (
    array_serializer,
    enum_serializer,
    optional_serializer,
    primitive_serializer,
    record_serializer,
)
from rtmlib.smc import SmcConfig, pcn_mutate, pcn_propose, run_smc, smc_cost
from rtmlib.tempering import (
    TemperTrace,
    ess,
    incremental_weights,
    multinomial_resample,
    next_phi,
    select_phi,
)

__all__ = [
    "ConfigError",
    "DegenerateEnsembleError",
    "DomainError",
    "EmptyEnsembleError",
    "EnsembleSummary",
    "ForwardMap",
    "ForwardModel",
    "ForwardOutput",
    "FrontTrajectory",
    "GaussianPrior",
    "Grid1D",
    "InvalidFieldError",
    "KLBasis",
    "LogPermField",
    "MalformedDataError",
    "MaternParams",
    "MeasurementConfig",
    "MetricReport",
    "ModelConstants",
    "NoiseModel",
    "NoiseModelError",
    "NumericalError",
    "ObservationRecord",
    "ParameterError",
    "RenkaConfig",
    "RtmError",
    "RunConfig",
    "Serializer",
    "SmcConfig",
    "SolverError",
    "TemperTrace",
    "TimeStepping",
    "advance_front",
    "array_serializer",
    "coeffs_to_field",
    "enum_serializer",
    "ess",
    "f_integral",
    "field_to_coeffs",
    "filling_time",
    "forward_map",
    "generate_synthetic",
    "incremental_weights",
    "kalman_update",
    "kl_decompose",
    "load_run_config",
    "log_likelihood",
    "matern_covariance",
    "metric_report",
    "moving_domain_error",
    "multinomial_resample",
    "mutation_quality",
    "next_phi",
    "optional_serializer",
    "parse_run_config",
    "pcn_mutate",
    "pcn_propose",
    "pressure_at",
    "primitive_serializer",
    "record_serializer",
    "renka_cost",
    "run_renka",
    "run_smc",
    "sample_prior",
    "select_phi",
    "smc_cost",
    "summarize",
    "truth_error",
    "variance_ratio",
]
