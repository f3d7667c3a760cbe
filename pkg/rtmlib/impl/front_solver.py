"""
Backward Euler front tracking for a batch of log-permeability fields.

Each row of the batch is advanced independently: brackets, Newton iterates and
convergence are tracked per row, so the result for one row never depends on the
other rows sharing the batch.
"""

import logging
import math
from dataclasses import dataclass
from typing import Final, Optional

import numpy as np

logger = logging.getLogger(__name__)

ROOT_TOLERANCE: Final = 1e-10
MAX_NEWTON_ITERATIONS: Final = 100
MAX_BRACKET_DOUBLINGS: Final = 60

# Past this many multiples of 1/r, the smoothed Heaviside matches the sharp one to
# within exp(-40).
_SATURATION: Final = 20.0


class SmoothedPrimitive:
    """
    F_u(x) = sum_s exp(-u_s) H(x - x_s) dx with the smoothed Heaviside
    H(z) = 1/2 + tanh(r z)/2, for every field of a (J, S) batch.

    Cells far below x contribute their full weight through a prefix sum; only a
    window of cells around x goes through tanh.
    """

    __slots__ = (
        "_weights",
        "_prefix",
        "_centers",
        "_cell_width",
        "_sharpness",
        "_offsets",
        "_half_window",
    )

    def __init__(
        self,
        fields: np.ndarray,
        centers: np.ndarray,
        cell_width: float,
        sharpness: float,
    ):
        num_cells = fields.shape[1]
        self._weights = np.exp(-fields) * cell_width
        self._prefix = np.zeros((fields.shape[0], num_cells + 1))
        np.cumsum(self._weights, axis=1, out=self._prefix[:, 1:])
        self._centers = centers
        self._cell_width = cell_width
        self._sharpness = sharpness
        half_window = math.ceil(_SATURATION / (sharpness * cell_width) - 0.5)
        self._half_window = min(max(half_window, 1), num_cells)
        self._offsets = np.arange(-self._half_window, self._half_window + 1)

    def evaluate(
        self, rows: np.ndarray, x: np.ndarray, with_slope: bool = True
    ) -> tuple[np.ndarray, Optional[np.ndarray]]:
        """Returns F and dF/dx at x[i] for the field in row rows[i]."""
        num_cells = self._weights.shape[1]
        nearest = np.clip(
            np.floor(x / self._cell_width).astype(np.int64), 0, num_cells - 1
        )
        cells = nearest[:, None] + self._offsets[None, :]
        inside = (cells >= 0) & (cells < num_cells)
        cells = np.clip(cells, 0, num_cells - 1)
        weights = np.where(inside, self._weights[rows[:, None], cells], 0.0)
        t = np.tanh(self._sharpness * (x[:, None] - self._centers[cells]))
        first = np.maximum(nearest - self._half_window, 0)
        value = self._prefix[rows, first] + (weights * (0.5 + 0.5 * t)).sum(axis=1)
        if not with_slope:
            return value, None
        slope = (weights * (0.5 * self._sharpness) * (1.0 - t * t)).sum(axis=1)
        return value, slope


@dataclass(frozen=True)
class FrontSolution:
    # (J, N): front at each report time, clamped to the domain length
    fronts: np.ndarray
    # (J,): NaN if the front did not reach the end of the domain
    filling_times: np.ndarray
    # (J,): index of the step whose root solve failed, -1 if none
    failed_steps: np.ndarray
    # (J, K + 1) when requested
    trajectory: Optional[np.ndarray] = None

    @property
    def ok(self) -> np.ndarray:
        return self.failed_steps < 0


def solve_fronts(
    primitive: SmoothedPrimitive,
    sup_norms: np.ndarray,
    domain_length: float,
    speed: float,
    time_step: float,
    num_steps: int,
    report_times: np.ndarray,
    record_trajectory: bool = False,
) -> FrontSolution:
    num_fields = sup_norms.shape[0]
    report_times = np.asarray(report_times, dtype=float)
    num_reports = report_times.shape[0]
    # The step at the end of which each report time is reached.
    ratios = report_times / time_step
    report_steps = np.maximum(np.ceil(ratios - 1e-9).astype(np.int64) - 1, 0)
    report_fractions = np.clip(ratios - report_steps, 0.0, 1.0)

    front = np.zeros(num_fields)
    previous = np.zeros(num_fields)
    filled = np.zeros(num_fields, dtype=bool)
    failed_steps = np.full(num_fields, -1, dtype=np.int64)
    filling_times = np.full(num_fields, np.nan)
    fronts = np.full((num_fields, num_reports), np.nan)
    trajectory = None
    if record_trajectory:
        trajectory = np.full((num_fields, num_steps + 1), domain_length)
        trajectory[:, 0] = 0.0
    increment_scale = time_step * speed

    for k in range(num_steps):
        moving = np.flatnonzero(~filled & (failed_steps < 0))
        due = np.flatnonzero(report_steps == k)
        if moving.size == 0:
            _fill_reports(
                fronts, np.flatnonzero(report_steps >= k), filled, domain_length
            )
            break
        start = front[moving]
        lower = start.copy()
        upper = start + increment_scale * np.exp(sup_norms[moving]) * domain_length
        residual_upper = upper - start - increment_scale / primitive.evaluate(
            moving, upper, with_slope=False
        )[0]
        for _ in range(MAX_BRACKET_DOUBLINGS):
            short = residual_upper <= 0.0
            if not short.any():
                break
            logger.debug("step %d: widening %d brackets", k, int(short.sum()))
            upper[short] = start[short] + 2.0 * (upper[short] - start[short])
            residual_upper[short] = (
                upper[short]
                - start[short]
                - increment_scale
                / primitive.evaluate(moving[short], upper[short], with_slope=False)[0]
            )
        unbracketed = ~(residual_upper > 0.0)
        if unbracketed.any():
            logger.debug("step %d: %d fronts not bracketed", k, int(unbracketed.sum()))
            failed_steps[moving[unbracketed]] = k
            keep = ~unbracketed
            moving, start, lower, upper = (
                moving[keep],
                start[keep],
                lower[keep],
                upper[keep],
            )

        if k == 0:
            guess = 0.5 * (lower + upper)
        else:
            guess = start + (start - previous[moving])
            outside = (guess <= lower) | (guess >= upper)
            guess[outside] = 0.5 * (lower[outside] + upper[outside])
        nxt = _newton(primitive, moving, start, lower, upper, guess, increment_scale)

        not_finite = ~np.isfinite(nxt)
        if not_finite.any():
            failed_steps[moving[not_finite]] = k
            keep = ~not_finite
            moving, start, nxt = moving[keep], start[keep], nxt[keep]

        for n in due:
            fraction = report_fractions[n]
            fronts[moving, n] = np.minimum(
                start + fraction * (nxt - start), domain_length
            )
            fronts[filled & (failed_steps < 0), n] = domain_length

        crossed = nxt >= domain_length
        if crossed.any():
            rows = moving[crossed]
            filling_times[rows] = time_step * (
                k
                + (domain_length - start[crossed])
                / (nxt[crossed] - start[crossed])
            )
            filled[rows] = True
        previous[moving] = start
        front[moving] = np.minimum(nxt, domain_length)
        if trajectory is not None:
            trajectory[moving, k + 1] = front[moving]

    # Report times beyond the last step taken: the front has stopped at the end.
    pending = np.flatnonzero(report_steps >= num_steps)
    if pending.size:
        _fill_reports(fronts, pending, filled, domain_length)
    fronts[failed_steps >= 0, :] = np.nan
    return FrontSolution(
        fronts=fronts,
        filling_times=filling_times,
        failed_steps=failed_steps,
        trajectory=trajectory,
    )


def _fill_reports(
    fronts: np.ndarray, columns: np.ndarray, filled: np.ndarray, domain_length: float
) -> None:
    for n in columns:
        fronts[filled, n] = domain_length


def _newton(
    primitive: SmoothedPrimitive,
    rows: np.ndarray,
    start: np.ndarray,
    lower: np.ndarray,
    upper: np.ndarray,
    guess: np.ndarray,
    increment_scale: float,
) -> np.ndarray:
    """
    Solves x - start - increment_scale / F(x) = 0 for each row, safeguarded by the
    bracket [lower, upper] on which the residual changes sign. Rows still
    unconverged after MAX_NEWTON_ITERATIONS come back as NaN.
    """
    x = guess.copy()
    lower = lower.copy()
    upper = upper.copy()
    live = np.arange(rows.size)
    for _ in range(MAX_NEWTON_ITERATIONS):
        if live.size == 0:
            break
        xl = x[live]
        value, slope = primitive.evaluate(rows[live], xl)
        residual = xl - start[live] - increment_scale / value
        derivative = 1.0 + increment_scale * slope / (value * value)
        below = residual < 0.0
        lower[live[below]] = xl[below]
        above = residual > 0.0
        upper[live[above]] = xl[above]
        candidate = xl - residual / derivative
        lo, hi = lower[live], upper[live]
        outside = ~((candidate > lo) & (candidate < hi))
        candidate[outside] = 0.5 * (lo[outside] + hi[outside])
        converged = (
            (np.abs(candidate - xl) < ROOT_TOLERANCE)
            | (hi - lo < ROOT_TOLERANCE)
            | (residual == 0.0)
        )
        x[live] = candidate
        live = live[~converged]
    if live.size:
        logger.warning("%d root solves stopped at the iteration cap", live.size)
        x[live] = np.nan
    return x
