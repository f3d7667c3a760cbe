"""
Adaptive tempering shared by the SMC sampler and REnKA.

Between two consecutive posteriors the likelihood of the new record is switched on
gradually: at tempering parameter φ the target is proportional to
l(u)^φ times the previous posterior. Each step picks the next φ so that the
effective sample size of the incremental weights drops to a threshold.

A log-likelihood of -inf marks a particle whose forward solve failed; it gets
weight zero.
"""

import logging
import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass
from typing import Final, Optional

import numpy as np
import pandas as pd
import scipy.special

from rtmlib.errors import EmptyEnsembleError, NumericalError, ParameterError

logger = logging.getLogger(__name__)

BISECTION_TOLERANCE: Final = 1e-10
MAX_BISECTIONS: Final = 100
# Points of the ESS scan used to detect a non-monotone ESS curve.
MONOTONICITY_SCAN: Final = 64


@dataclass(frozen=True, eq=False)
class WeightSet:
    # (φ - φ_prev) * loglik
    log_weights: np.ndarray
    normalized_weights: np.ndarray

    @property
    def size(self) -> int:
        return self.normalized_weights.shape[0]


def _check_logliks(loglik: np.ndarray) -> np.ndarray:
    loglik = np.asarray(loglik, dtype=float)
    if loglik.ndim != 1 or loglik.size == 0:
        raise EmptyEnsembleError("empty ensemble")
    if np.any(np.isnan(loglik)) or np.any(loglik == np.inf):
        raise NumericalError("log-likelihoods must be finite or -inf")
    if np.all(loglik == -np.inf):
        raise NumericalError("every particle has zero likelihood")
    return loglik


def _normalize(log_weights: np.ndarray) -> np.ndarray:
    weights = np.exp(log_weights - scipy.special.logsumexp(log_weights))
    return weights / weights.sum()


def incremental_weights(
    loglik: np.ndarray,
    phi_prev: float,
    phi: float,
    base_log_weights: Optional[np.ndarray] = None,
) -> WeightSet:
    """
    Weights proportional to exp((φ - φ_prev) loglik), times exp(base_log_weights)
    for particles that still carry weights from an earlier stage.
    """
    loglik = _check_logliks(loglik)
    if not 0.0 <= phi_prev < phi <= 1.0:
        raise ParameterError(f"need 0 <= phi_prev < phi <= 1, got {phi_prev}, {phi}")
    log_weights = _tempered(loglik, phi - phi_prev, base_log_weights)
    return WeightSet(log_weights, _normalize(log_weights))


def weights_from_log(log_weights: np.ndarray) -> WeightSet:
    log_weights = np.asarray(log_weights, dtype=float)
    if log_weights.size == 0:
        raise EmptyEnsembleError("empty ensemble")
    return WeightSet(log_weights, _normalize(log_weights))


def ess(weights: WeightSet) -> float:
    w = weights.normalized_weights
    return float(1.0 / np.dot(w, w))


def _tempered(
    loglik: np.ndarray, increment: float, base: Optional[np.ndarray]
) -> np.ndarray:
    with np.errstate(invalid="ignore"):
        log_weights = increment * loglik
    # 0 * -inf
    log_weights = np.where(np.isnan(log_weights), -np.inf, log_weights)
    if base is not None:
        log_weights = log_weights + base
    return log_weights


def _ess_at(
    loglik: np.ndarray, increment: float, base: Optional[np.ndarray] = None
) -> float:
    w = _normalize(_tempered(loglik, increment, base))
    return float(1.0 / np.dot(w, w))


@dataclass(frozen=True)
class PhiSelection:
    phi: float
    ess: float
    # The ESS curve was seen increasing somewhere on (φ_prev, 1].
    nonmonotone: bool = False
    # Upper limit from the linear-space safeguard, if it applied.
    cap: Optional[float] = None


def select_phi(
    loglik: np.ndarray,
    phi_prev: float,
    threshold: float,
    *,
    base_log_weights: Optional[np.ndarray] = None,
    linear_space_safeguard: bool = False,
) -> PhiSelection:
    """
    Returns the smallest φ in (φ_prev, 1] at which the ESS falls to 'threshold', or 1
    (the cap, under the safeguard) if the ESS stays above it.

    The ESS is first scanned on MONOTONICITY_SCAN points. If it is monotone, the
    crossing is bisected on the whole interval; otherwise on the first scan cell
    whose right end is at or below the threshold.
    """
    loglik = _check_logliks(loglik)
    size = loglik.size
    if not 0.0 <= phi_prev < 1.0:
        raise ParameterError(f"phi_prev must be in [0, 1), got {phi_prev}")
    if not 1.0 <= threshold <= size:
        raise ParameterError(f"threshold must be in [1, {size}], got {threshold}")
    finite = loglik[np.isfinite(loglik)]
    if base_log_weights is None and finite.size == size and np.ptp(finite) == 0.0:
        return PhiSelection(phi=1.0, ess=float(size))

    upper = 1.0
    cap = None
    if linear_space_safeguard:
        upper = machine_precision_cap(loglik, phi_prev)
        if upper < 1.0:
            cap = upper
            logger.debug("tempering capped at %.6g", upper)

    def ess_at(phi: float) -> float:
        return _ess_at(loglik, phi - phi_prev, base_log_weights)

    grid, values = _ess_scan(ess_at, phi_prev, upper)
    nonmonotone = bool(np.any(np.diff(values) > 1e-9 * size))
    if nonmonotone:
        logger.warning("ESS is not monotone on (%.6g, %.6g]", phi_prev, upper)
        below = np.flatnonzero(values <= threshold)
        if below.size == 0:
            return PhiSelection(upper, float(values[-1]), nonmonotone, cap)
        first = int(below[0])
        lo = phi_prev if first == 0 else float(grid[first - 1])
        hi = float(grid[first])
    else:
        if values[-1] > threshold:
            return PhiSelection(upper, float(values[-1]), nonmonotone, cap)
        lo, hi = phi_prev, upper
    for _ in range(MAX_BISECTIONS):
        if hi - lo <= BISECTION_TOLERANCE:
            break
        mid = 0.5 * (lo + hi)
        if ess_at(mid) > threshold:
            lo = mid
        else:
            hi = mid
    logger.debug("bisection stopped at [%.12g, %.12g]", lo, hi)
    return PhiSelection(hi, ess_at(hi), nonmonotone, cap)


def next_phi(loglik: np.ndarray, phi_prev: float, threshold: float) -> float:
    return select_phi(loglik, phi_prev, threshold).phi


def machine_precision_cap(loglik: np.ndarray, phi_prev: float) -> float:
    """
    The largest φ in (φ_prev, 1] at which the weights exp((φ - φ_prev) loglik),
    computed without any shift, are not all zero in double precision.
    """
    loglik = _check_logliks(loglik)

    def representable(phi: float) -> bool:
        with np.errstate(under="ignore"):
            return bool(np.sum(np.exp((phi - phi_prev) * loglik)) > 0.0)

    if representable(1.0):
        return 1.0
    lo, hi = phi_prev, 1.0
    for _ in range(MAX_BISECTIONS):
        if hi - lo <= BISECTION_TOLERANCE:
            break
        mid = 0.5 * (lo + hi)
        if representable(mid):
            lo = mid
        else:
            hi = mid
    return max(lo, phi_prev + BISECTION_TOLERANCE)


def _ess_scan(
    ess_at: Callable[[float], float], lo: float, hi: float
) -> tuple[np.ndarray, np.ndarray]:
    """ESS on MONOTONICITY_SCAN evenly spaced points of (lo, hi], ending at hi."""
    grid = lo + (hi - lo) * np.arange(1, MONOTONICITY_SCAN + 1) / MONOTONICITY_SCAN
    grid[-1] = hi
    return grid, np.array([ess_at(phi) for phi in grid])


def multinomial_resample(weights: WeightSet, rng: np.random.Generator) -> np.ndarray:
    """J indices drawn with probabilities given by the weights, in sorted order."""
    w = weights.normalized_weights
    counts = rng.multinomial(w.size, w / w.sum())
    return np.repeat(np.arange(w.size), counts)


@dataclass(frozen=True)
class TemperStep:
    n: int
    r: int
    phi: float
    alpha: float
    ess: float
    nonmonotone: bool = False


class TemperTrace:
    """Tempering parameters, inflation factors and ESS, per observation time."""

    COLUMNS: Final = ("n", "r", "phi", "alpha", "ess", "nonmonotone")

    def __init__(self, steps: Sequence[TemperStep] = ()):
        self._steps: list[TemperStep] = list(steps)

    @property
    def steps(self) -> tuple[TemperStep, ...]:
        return tuple(self._steps)

    def record(
        self, n: int, phi: float, ess_value: float, nonmonotone: bool = False
    ) -> TemperStep:
        previous = self.phis(n)
        phi_prev = previous[-1] if previous else 0.0
        if not phi > phi_prev:
            raise ParameterError(f"phi must increase: {phi_prev} -> {phi}")
        if phi > 1.0:
            raise ParameterError(f"phi must not exceed 1, got {phi}")
        step = TemperStep(
            n=n,
            r=len(previous) + 1,
            phi=phi,
            alpha=1.0 / (phi - phi_prev),
            ess=ess_value,
            nonmonotone=nonmonotone,
        )
        self._steps.append(step)
        return step

    def times(self) -> list[int]:
        return sorted({s.n for s in self._steps})

    def phis(self, n: int) -> list[float]:
        return [s.phi for s in self._steps if s.n == n]

    def alphas(self, n: int) -> list[float]:
        return [s.alpha for s in self._steps if s.n == n]

    def count(self, n: int) -> int:
        """q_n."""
        return sum(1 for s in self._steps if s.n == n)

    def counts(self, num_times: int) -> tuple[int, ...]:
        return tuple(self.count(n) for n in range(1, num_times + 1))

    def inverse_alpha_sum(self, n: int) -> float:
        """
        Sum of 1/α_r = φ_r - φ_{r-1} over the steps of time n, with no rounding
        before the final result: exactly 1.0 once the time is complete.
        """
        phis = self.phis(n)
        return math.fsum([*phis, *(-p for p in phis[:-1])])

    def is_complete(self, n: int) -> bool:
        phis = self.phis(n)
        return bool(phis) and phis[-1] == 1.0

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [
                (s.n, s.r, s.phi, s.alpha, s.ess, s.nonmonotone)
                for s in self._steps
            ],
            columns=list(self.COLUMNS),
        )

    @staticmethod
    def from_frame(frame: pd.DataFrame) -> "TemperTrace":
        return TemperTrace(
            [
                TemperStep(
                    n=int(row.n),
                    r=int(row.r),
                    phi=float(row.phi),
                    alpha=float(row.alpha),
                    ess=float(row.ess),
                    nonmonotone=bool(getattr(row, "nonmonotone", False)),
                )
                for row in frame.itertuples(index=False)
            ]
        )
