"""
Regularizing ensemble Kalman algorithm (REnKA).

Each record is assimilated through a sequence of Kalman updates with perturbed
observations and inflated noise covariance αΓ. The inflation factors come from the
same ESS-driven tempering as the SMC sampler (α = 1 / Δφ, so Σ 1/α = 1), or from a
fixed schedule as in multiple data assimilation. There is no resampling and no MCMC.
Particles are cell-value fields.
"""

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass
from typing import Final, Optional

import numpy as np
import scipy.linalg

from rtmlib import tempering
from rtmlib.errors import (
    DegenerateEnsembleError,
    NumericalError,
    ParameterError,
)
from rtmlib.forward1d import ForwardMap
from rtmlib.impl.pool import INLINE, ChunkPool
from rtmlib.observation import (
    DEFAULT_VARIANCE_FLOOR,
    ObservationRecord,
    ObservationVector,
    Restriction,
    check_variances,
    misfit_log_likelihoods,
    predicted_vectors,
)
from rtmlib.prior import GaussianPrior
from rtmlib.rng import Stream, stream
from rtmlib.tempering import TemperTrace

logger = logging.getLogger(__name__)

SCHEDULE_TOLERANCE: Final = 1e-9


@dataclass(frozen=True)
class RenkaConfig:
    ensemble_size: int = 1000
    # None means ensemble_size / 3.
    threshold: Optional[float] = None
    seed: int = 0
    # Fixed α_1..α_q with Σ 1/α = 1, used at every time instead of adaptive φ.
    inflation_schedule: Optional[tuple[float, ...]] = None
    linear_space_safeguard: bool = False
    max_stages_per_time: int = 1000

    def __post_init__(self):
        if self.ensemble_size < 2:
            raise ParameterError(
                f"ensemble_size must be >= 2, got {self.ensemble_size}"
            )
        if self.threshold is not None and not (
            1.0 <= self.threshold <= self.ensemble_size
        ):
            raise ParameterError(
                f"threshold must be in [1, {self.ensemble_size}], got {self.threshold}"
            )
        if self.seed < 0:
            raise ParameterError(f"seed must be >= 0, got {self.seed}")
        if self.inflation_schedule is not None:
            schedule = self.inflation_schedule
            if not schedule or any(not a >= 1.0 for a in schedule):
                raise ParameterError("inflation factors must all be >= 1")
            total = math.fsum(1.0 / a for a in schedule)
            if abs(total - 1.0) > SCHEDULE_TOLERANCE:
                raise ParameterError(
                    f"inverse inflation factors must sum to 1, got {total}"
                )
        if self.max_stages_per_time < 1:
            raise ParameterError("max_stages_per_time must be >= 1")

    @property
    def resolved_threshold(self) -> float:
        if self.threshold is not None:
            return self.threshold
        return max(1.0, self.ensemble_size / 3.0)


@dataclass(frozen=True, eq=False)
class KalmanGainPieces:
    """
    Empirical covariances about the ensemble means. The field-field block is never
    needed by the update and is not formed.
    """

    # (S, d)
    cross: np.ndarray
    # (d, d)
    output: np.ndarray


def empirical_covariances(fields: np.ndarray, outputs: np.ndarray) -> KalmanGainPieces:
    fields = np.asarray(fields, dtype=float)
    outputs = np.asarray(outputs, dtype=float)
    size = fields.shape[0]
    if size < 2:
        raise DegenerateEnsembleError(f"need at least 2 particles, got {size}")
    if outputs.shape[0] != size:
        raise ParameterError(
            f"{size} fields but {outputs.shape[0]} output vectors"
        )
    du = fields - fields.mean(axis=0)
    dw = outputs - outputs.mean(axis=0)
    output = dw.T @ dw / (size - 1)
    return KalmanGainPieces(
        cross=du.T @ dw / (size - 1),
        output=0.5 * (output + output.T),
    )


def kalman_update(
    fields: np.ndarray,
    outputs: np.ndarray,
    observed: ObservationVector,
    alpha: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """
    u_j + C^{uw} (C^{ww} + αΓ)^{-1} (y + η_j - w_j) for every particle,
    with η_j drawn from N(0, αΓ).
    """
    if not alpha >= 1.0:
        raise ParameterError(f"alpha must be >= 1, got {alpha}")
    fields = np.asarray(fields, dtype=float)
    outputs = np.asarray(outputs, dtype=float)
    if outputs.ndim != 2 or outputs.shape[1] != observed.size:
        raise ParameterError(
            f"outputs of shape {outputs.shape} do not match {observed.size} data"
        )
    if observed.size == 0:
        return fields.copy()
    pieces = empirical_covariances(fields, outputs)
    inflated = alpha * observed.variances
    perturbations = rng.standard_normal(outputs.shape) * np.sqrt(inflated)
    innovations = observed.values[None, :] + perturbations - outputs
    try:
        factor = scipy.linalg.cho_factor(pieces.output + np.diag(inflated))
        weights = scipy.linalg.cho_solve(factor, innovations.T)
    except (scipy.linalg.LinAlgError, ValueError) as e:
        raise NumericalError(f"Kalman system is singular: {e}") from e
    return fields + (pieces.cross @ weights).T


@dataclass(frozen=True, eq=False)
class RenkaResult:
    # ensembles[0] is the prior ensemble, ensembles[n] approximates μ_n; (J, S) each.
    ensembles: tuple[np.ndarray, ...]
    trace: TemperTrace
    evaluations: tuple[int, ...]
    # Forward failures replaced by the last valid output of the particle.
    substitutions: tuple[int, ...]

    @property
    def num_times(self) -> int:
        return len(self.ensembles) - 1


def run_renka(
    config: RenkaConfig,
    prior: GaussianPrior,
    model: ForwardMap,
    records: Sequence[ObservationRecord],
    *,
    restrict: Restriction = Restriction.BOTH,
    variance_floor: float = DEFAULT_VARIANCE_FLOOR,
    pool: ChunkPool = INLINE,
    repeat: int = 0,
) -> RenkaResult:
    size = config.ensemble_size
    threshold = config.resolved_threshold
    coeffs = prior.sample_coeffs(stream(config.seed, Stream.ENSEMBLE, repeat), size)
    fields = prior.coeffs_to_fields(coeffs)
    ensembles = [fields]
    trace = TemperTrace()
    evaluations: list[int] = []
    substitutions: list[int] = []

    for n, record in enumerate(records, start=1):
        observed = record.vector(restrict)
        check_variances(observed, variance_floor)
        last_valid: Optional[np.ndarray] = None
        replaced = 0
        phi = 0.0
        r = 0
        while phi < 1.0:
            r += 1
            if r > config.max_stages_per_time:
                raise NumericalError(
                    f"time {n}: no convergence after {config.max_stages_per_time} "
                    "tempering stages"
                )
            batch = model.evaluate(fields, (record.time,), pool)
            predicted = predicted_vectors(batch, 0, record, restrict)
            predicted, count = _substitute_failures(predicted, batch.ok, last_valid)
            replaced += count
            last_valid = predicted
            logliks = misfit_log_likelihoods(predicted, observed, variance_floor)
            if config.inflation_schedule is not None:
                schedule = config.inflation_schedule
                alpha = schedule[r - 1]
                next_phi = 1.0 if r == len(schedule) else min(phi + 1.0 / alpha, 1.0)
                ess = tempering.ess(
                    tempering.incremental_weights(logliks, phi, next_phi)
                )
                step = trace.record(n, next_phi, ess)
            else:
                selection = tempering.select_phi(
                    logliks,
                    phi,
                    threshold,
                    linear_space_safeguard=config.linear_space_safeguard,
                )
                step = trace.record(
                    n, selection.phi, selection.ess, selection.nonmonotone
                )
                alpha = step.alpha
            phi = step.phi
            logger.info(
                "time %d stage %d: phi=%.6g alpha=%.4g ess=%.1f",
                n,
                r,
                phi,
                alpha,
                step.ess,
            )
            fields = kalman_update(
                fields,
                predicted,
                observed,
                alpha,
                stream(config.seed, Stream.PERTURBATION, repeat, n, r),
            )
        if replaced:
            logger.warning(
                "time %d: %d failed forward solves replaced by earlier outputs",
                n,
                replaced,
            )
        ensembles.append(fields)
        evaluations.append(size * r)
        substitutions.append(replaced)
    return RenkaResult(
        tuple(ensembles), trace, tuple(evaluations), tuple(substitutions)
    )


def _substitute_failures(
    predicted: np.ndarray, ok: np.ndarray, last_valid: Optional[np.ndarray]
) -> tuple[np.ndarray, int]:
    """
    Rows whose solve failed take the particle's output from the previous stage, or
    the mean output of the successful particles at the first stage.
    """
    failed = ~ok
    count = int(np.count_nonzero(failed))
    if count == 0:
        return predicted, 0
    if not np.any(ok):
        raise NumericalError("every forward solve of the ensemble failed")
    predicted = predicted.copy()
    if last_valid is not None:
        predicted[failed] = last_valid[failed]
    else:
        predicted[failed] = predicted[ok].mean(axis=0)
    return predicted, count


def stage_costs(
    trace: TemperTrace, config: RenkaConfig, ratios: Sequence[float]
) -> tuple[float, ...]:
    """J q_n g_n / g_N, for each observation time n."""
    return tuple(
        config.ensemble_size * q * ratio
        for q, ratio in zip(trace.counts(len(ratios)), ratios)
    )


def renka_cost(
    trace: TemperTrace, config: RenkaConfig, ratios: Sequence[float]
) -> float:
    return math.fsum(stage_costs(trace, config, ratios))
