"""
Adaptive-tempering SMC sampler with pcn-MCMC mutation.

Particles are kept as KL coefficients of the prior, where the pcn proposal is an
AR(1) step that leaves the prior invariant. For each observation time the sampler
tempers in the new likelihood through stages r = 1..q_n; each stage reweights,
resamples and mutates the ensemble.
"""

import dataclasses
import logging
import math
import time
from collections.abc import Sequence
from dataclasses import dataclass
from typing import Final, Optional, Protocol

import numpy as np

from rtmlib import tempering
from rtmlib.diagnostics import mutation_quality
from rtmlib.errors import NumericalError, ParameterError
from rtmlib.forward1d import ForwardBatch, ForwardMap
from rtmlib.impl.pool import INLINE, ChunkPool
from rtmlib.observation import (
    DEFAULT_VARIANCE_FLOOR,
    ObservationRecord,
    Restriction,
    log_likelihoods,
)
from rtmlib.prior import GaussianPrior
from rtmlib.rng import Stream, stream
from rtmlib.tempering import TemperTrace, WeightSet

logger = logging.getLogger(__name__)

TARGET_ACCEPTANCE: Final = 0.3
# Range of the pcn step when it is adapted between stages.
MIN_PCN_STEP: Final = 1e-3
MAX_PCN_STEP: Final = 0.999


@dataclass(frozen=True)
class SmcConfig:
    ensemble_size: int = 10000
    # None means ensemble_size / 3.
    threshold: Optional[float] = None
    mcmc_steps: int = 20
    pcn_step: float = 0.2
    seed: int = 0
    adapt_pcn_step: bool = False
    # If false, resampling is skipped while the ESS stays above the threshold and
    # the weights are carried into the next stage.
    resample_always: bool = True
    linear_space_safeguard: bool = False
    max_stages_per_time: int = 1000

    def __post_init__(self):
        if self.ensemble_size < 1:
            raise ParameterError(
                f"ensemble_size must be >= 1, got {self.ensemble_size}"
            )
        if self.threshold is not None and not (
            1.0 <= self.threshold <= self.ensemble_size
        ):
            raise ParameterError(
                f"threshold must be in [1, {self.ensemble_size}], got {self.threshold}"
            )
        if self.mcmc_steps < 1:
            raise ParameterError(f"mcmc_steps must be >= 1, got {self.mcmc_steps}")
        if not 0.0 < self.pcn_step < 1.0:
            raise ParameterError(f"pcn_step must be in (0, 1), got {self.pcn_step}")
        if self.seed < 0:
            raise ParameterError(f"seed must be >= 0, got {self.seed}")
        if self.max_stages_per_time < 1:
            raise ParameterError("max_stages_per_time must be >= 1")

    @property
    def resolved_threshold(self) -> float:
        if self.threshold is not None:
            return self.threshold
        return max(1.0, self.ensemble_size / 3.0)


def uniform_weights(size: int) -> WeightSet:
    return WeightSet(np.zeros(size), np.full(size, 1.0 / size))


@dataclass(frozen=True, eq=False)
class WeightedEnsemble:
    """
    Particles of stage (n, r). 'fields' and 'logliks' are caches derived from
    'coeffs': the cell values and the log-likelihoods of records 1..n.
    """

    coeffs: np.ndarray
    fields: np.ndarray
    # (J, n)
    logliks: np.ndarray
    weights: WeightSet
    n: int
    r: int
    # Outputs at times 1..n, if the target computed them.
    outputs: Optional[ForwardBatch] = None

    @property
    def size(self) -> int:
        return self.coeffs.shape[0]

    @property
    def is_equally_weighted(self) -> bool:
        w = self.weights.normalized_weights
        return bool(np.all(w == w[0]))

    def take(self, rows: np.ndarray, n: int, r: int) -> "WeightedEnsemble":
        return WeightedEnsemble(
            coeffs=self.coeffs[rows],
            fields=self.fields[rows],
            logliks=self.logliks[rows],
            weights=uniform_weights(rows.shape[0]),
            n=n,
            r=r,
            outputs=None if self.outputs is None else self.outputs.take(rows),
        )


@dataclass(frozen=True)
class MutationReport:
    n: int
    r: int
    pcn_step: float
    acceptance: float
    # Proposals rejected because their forward solve failed.
    failures: int
    movement_min: float
    movement_mean: float
    movement_max: float


@dataclass(frozen=True, eq=False)
class LikelihoodTable:
    # (J, n): log-likelihood of records 1..n, -inf where the forward solve failed
    values: np.ndarray
    outputs: Optional[ForwardBatch] = None

    @property
    def ok(self) -> np.ndarray:
        return np.all(self.values > -np.inf, axis=1)


class MutationTarget(Protocol):
    def log_likelihoods(
        self, fields: np.ndarray, n: int, pool: ChunkPool = INLINE
    ) -> LikelihoodTable:
        """Log-likelihoods of records 1..n for each row of 'fields'."""
        ...


@dataclass(frozen=True)
class PosteriorTarget:
    """Gaussian likelihoods of the observation records through a forward map."""

    model: ForwardMap
    records: tuple[ObservationRecord, ...]
    restrict: Restriction = Restriction.BOTH
    variance_floor: float = DEFAULT_VARIANCE_FLOOR

    @property
    def num_records(self) -> int:
        return len(self.records)

    @property
    def times(self) -> tuple[float, ...]:
        return tuple(r.time for r in self.records)

    def log_likelihoods(
        self, fields: np.ndarray, n: int, pool: ChunkPool = INLINE
    ) -> LikelihoodTable:
        if not 1 <= n <= len(self.records):
            raise ParameterError(f"n must be in [1, {len(self.records)}], got {n}")
        batch = self.model.evaluate(fields, self.times[:n], pool)
        values = np.column_stack(
            [
                log_likelihoods(
                    batch, s, self.records[s], self.restrict, self.variance_floor
                )
                for s in range(n)
            ]
        )
        return LikelihoodTable(values, batch)


def tempered_log_density(logliks: np.ndarray, phi: float) -> np.ndarray:
    """φ loglik_n + Σ_{s<n} loglik_s, row by row."""
    if logliks.shape[1] == 0:
        return np.zeros(logliks.shape[0])
    with np.errstate(invalid="ignore"):
        return phi * logliks[:, -1] + np.sum(logliks[:, :-1], axis=1)


def pcn_propose(
    current: np.ndarray,
    beta: float,
    rng: Optional[np.random.Generator] = None,
    noise: Optional[np.ndarray] = None,
) -> np.ndarray:
    """sqrt(1 - β²) current + β ξ; ξ is 'noise' if given, else drawn from 'rng'."""
    if not 0.0 < beta < 1.0:
        raise ParameterError(f"beta must be in (0, 1), got {beta}")
    current = np.asarray(current, dtype=float)
    if noise is None:
        if rng is None:
            raise ParameterError("pcn_propose needs an rng or a noise array")
        noise = rng.standard_normal(current.shape)
    return math.sqrt(1.0 - beta * beta) * current + beta * np.asarray(noise)


def pcn_mutate(
    ensemble: WeightedEnsemble,
    prior: GaussianPrior,
    target: MutationTarget,
    phi: float,
    steps: int,
    beta: float,
    rng: np.random.Generator,
    pool: ChunkPool = INLINE,
) -> tuple[WeightedEnsemble, MutationReport]:
    """
    'steps' Metropolis steps with pcn proposals for every particle, targeting the
    tempered posterior at φ of stage (ensemble.n, ensemble.r). Proposals whose forward
    solve fails are rejected.
    """
    n = ensemble.n
    coeffs = ensemble.coeffs
    fields = ensemble.fields
    logliks = ensemble.logliks
    outputs = ensemble.outputs
    current = tempered_log_density(logliks, phi)
    accepted = 0
    failures = 0
    for _ in range(steps):
        noise = rng.standard_normal(coeffs.shape)
        uniforms = rng.random(coeffs.shape[0])
        proposal = pcn_propose(coeffs, beta, noise=noise)
        proposal_fields = prior.coeffs_to_fields(proposal)
        if n > 0:
            table = target.log_likelihoods(proposal_fields, n, pool)
        else:
            table = LikelihoodTable(np.zeros((coeffs.shape[0], 0)))
        ok = table.ok
        proposed = tempered_log_density(table.values, phi)
        with np.errstate(invalid="ignore", over="ignore", divide="ignore"):
            log_ratio = proposed - current
            accept = ok & (
                (current == -np.inf) | (np.log(uniforms) < np.minimum(log_ratio, 0.0))
            )
        failures += int(np.count_nonzero(~ok))
        accepted += int(np.count_nonzero(accept))
        coeffs = np.where(accept[:, None], proposal, coeffs)
        fields = np.where(accept[:, None], proposal_fields, fields)
        logliks = np.where(accept[:, None], table.values, logliks)
        current = np.where(accept, proposed, current)
        if outputs is not None and table.outputs is not None:
            outputs = outputs.merged(accept, table.outputs)
    if failures:
        logger.warning(
            "stage (%d, %d): %d proposals rejected after failed forward solves",
            n,
            ensemble.r,
            failures,
        )
    quality = mutation_quality(ensemble.coeffs, coeffs)
    report = MutationReport(
        n=n,
        r=ensemble.r,
        pcn_step=beta,
        acceptance=accepted / (steps * coeffs.shape[0]),
        failures=failures,
        movement_min=quality.min,
        movement_mean=quality.mean,
        movement_max=quality.max,
    )
    mutated = WeightedEnsemble(
        coeffs=coeffs,
        fields=fields,
        logliks=logliks,
        weights=ensemble.weights,
        n=n,
        r=ensemble.r,
        outputs=outputs,
    )
    return mutated, report


@dataclass(frozen=True, eq=False)
class SmcResult:
    # ensembles[0] is the prior ensemble, ensembles[n] approximates μ_n.
    ensembles: tuple[WeightedEnsemble, ...]
    trace: TemperTrace
    reports: tuple[MutationReport, ...]
    # Forward evaluations spent on each observation time.
    evaluations: tuple[int, ...]

    @property
    def num_times(self) -> int:
        return len(self.ensembles) - 1

    def reports_for(self, n: int) -> list[MutationReport]:
        return [r for r in self.reports if r.n == n]

    def mean_acceptance(self, n: int) -> float:
        reports = self.reports_for(n)
        return math.fsum(r.acceptance for r in reports) / len(reports)

    def mean_movement(self, n: int) -> float:
        values = [r.movement_mean for r in self.reports_for(n)]
        values = [v for v in values if not math.isnan(v)]
        return math.fsum(values) / len(values) if values else math.nan


def initial_ensemble(
    prior: GaussianPrior, size: int, seed: int, repeat: int = 0
) -> WeightedEnsemble:
    coeffs = prior.sample_coeffs(stream(seed, Stream.ENSEMBLE, repeat), size)
    return WeightedEnsemble(
        coeffs=coeffs,
        fields=prior.coeffs_to_fields(coeffs),
        logliks=np.zeros((size, 0)),
        weights=uniform_weights(size),
        n=0,
        r=0,
    )


def run_smc(
    config: SmcConfig,
    prior: GaussianPrior,
    target: MutationTarget,
    num_times: int,
    *,
    pool: ChunkPool = INLINE,
    repeat: int = 0,
) -> SmcResult:
    """
    Approximates the posteriors μ_1..μ_{num_times}. Each returned posterior
    ensemble is equally weighted.
    """
    size = config.ensemble_size
    threshold = config.resolved_threshold
    ensemble = initial_ensemble(prior, size, config.seed, repeat)
    ensembles = [ensemble]
    trace = TemperTrace()
    reports: list[MutationReport] = []
    evaluations: list[int] = []
    beta = config.pcn_step
    # Set while resampling is being skipped.
    carried: Optional[WeightSet] = None

    for n in range(1, num_times + 1):
        table = target.log_likelihoods(ensemble.fields, n, pool)
        spent = size
        ensemble = dataclasses.replace(
            ensemble, logliks=table.values, outputs=table.outputs, n=n, r=0
        )
        if not np.all(table.ok):
            logger.warning(
                "time %d: %d particles failed the forward solve",
                n,
                int(np.count_nonzero(~table.ok)),
            )
        phi = 0.0
        r = 0
        while phi < 1.0:
            r += 1
            if r > config.max_stages_per_time:
                raise NumericalError(
                    f"time {n}: no convergence after {config.max_stages_per_time} "
                    "tempering stages"
                )
            if carried is not None and tempering.ess(carried) <= threshold:
                ensemble = _resample(ensemble, carried, config.seed, repeat, n, r, 0)
                carried = None
            base = None if carried is None else carried.log_weights
            logliks = ensemble.logliks[:, n - 1]
            selection = tempering.select_phi(
                logliks,
                phi,
                threshold,
                base_log_weights=base,
                linear_space_safeguard=config.linear_space_safeguard,
            )
            weights = tempering.incremental_weights(logliks, phi, selection.phi, base)
            phi = selection.phi
            trace.record(n, phi, selection.ess, selection.nonmonotone)
            logger.info(
                "time %d stage %d: phi=%.6g ess=%.1f", n, r, phi, selection.ess
            )
            if config.resample_always or tempering.ess(weights) <= threshold:
                ensemble = _resample(ensemble, weights, config.seed, repeat, n, r, 1)
                carried = None
            else:
                carried = tempering.weights_from_log(
                    weights.log_weights - np.max(weights.log_weights)
                )
                ensemble = dataclasses.replace(ensemble, weights=carried, n=n, r=r)
            ensemble, report = pcn_mutate(
                ensemble,
                prior,
                target,
                phi,
                config.mcmc_steps,
                beta,
                stream(config.seed, Stream.MUTATION, repeat, n, r),
                pool,
            )
            spent += size * config.mcmc_steps
            reports.append(report)
            logger.info(
                "time %d stage %d: acceptance=%.3f movement=%.3f beta=%.4g",
                n,
                r,
                report.acceptance,
                report.movement_mean,
                beta,
            )
            if config.adapt_pcn_step:
                beta = adapted_pcn_step(beta, report.acceptance)
        posterior = ensemble
        if carried is not None:
            # Reported posteriors are equally weighted; the weighted ensemble goes on.
            posterior = _resample(ensemble, carried, config.seed, repeat, n, r + 1, 1)
        ensembles.append(posterior)
        evaluations.append(spent)
        logger.info(
            "time %d: %d tempering stages, %d forward evaluations",
            n,
            trace.count(n),
            spent,
        )
    return SmcResult(tuple(ensembles), trace, tuple(reports), tuple(evaluations))


def adapted_pcn_step(beta: float, acceptance: float) -> float:
    """Moves β up when acceptance is above the target rate and down when below."""
    scaled = beta * math.exp(acceptance - TARGET_ACCEPTANCE)
    return float(np.clip(scaled, MIN_PCN_STEP, MAX_PCN_STEP))


def _resample(
    ensemble: WeightedEnsemble,
    weights: WeightSet,
    seed: int,
    repeat: int,
    n: int,
    r: int,
    phase: int,
) -> WeightedEnsemble:
    rng = stream(seed, Stream.RESAMPLE, repeat, n, r, phase)
    indices = tempering.multinomial_resample(weights, rng)
    return ensemble.take(indices, n, r)


def time_proxy_ratios(times: Sequence[float]) -> tuple[float, ...]:
    """g_n / g_N approximated by t_n / t_N: the solver cost grows with the time span."""
    if not times:
        return ()
    last = float(times[-1])
    return tuple(float(t) / last for t in times)


def measure_cost_ratios(
    model: ForwardMap,
    fields: np.ndarray,
    times: Sequence[float],
    repeats: int = 3,
) -> tuple[float, ...]:
    """g_n / g_N from the wall-clock time of forward solves up to each t_n."""
    fields = np.atleast_2d(fields)
    durations = []
    for n in range(1, len(times) + 1):
        best = math.inf
        for _ in range(repeats):
            start = time.perf_counter()
            model.evaluate(fields, times[:n])
            best = min(best, time.perf_counter() - start)
        durations.append(best)
    return tuple(d / durations[-1] for d in durations)


def stage_costs(
    trace: TemperTrace, config: SmcConfig, ratios: Sequence[float]
) -> tuple[float, ...]:
    """J N_μ q_n g_n / g_N, for each observation time n."""
    return tuple(
        config.ensemble_size * config.mcmc_steps * q * ratio
        for q, ratio in zip(trace.counts(len(ratios)), ratios)
    )


def smc_cost(
    trace: TemperTrace, config: SmcConfig, ratios: Sequence[float]
) -> float:
    """Forward evaluations of the longest span spent by the sampler."""
    return math.fsum(stage_costs(trace, config, ratios))
