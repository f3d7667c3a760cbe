"""
Explicit stability constants of the forward map.

For fields u, v with M = exp(max(|u|_inf, |v|_inf)) and times t >= t1 > 0:

    |Υ^u - Υ^v|       <= B (1 + A_u) |u - v|_inf
    |p^u - p^v|       <= (B + 4 (L / t1) M^3 (L + A_u B)) |u - v|_inf
    |τ*^u - τ*^v|     <= L^2 M / 2 |u - v|_inf

where L is the domain length, A_u = (L / t1) exp(2 |u|_inf) and B is the smallest of
C, (L / t1) M^3 (2 L + C) and L^2 M / 2, with C = exp(L^4 M^6 / t1^2) L^5 M^6 / t1^2.
C overflows double precision for realistic t1, so it is computed in log space and
reported as infinity in that case.
"""

import math
from dataclasses import dataclass

from rtmlib.forward1d import LogPermField


@dataclass(frozen=True)
class StabilityConstants:
    sup_distance: float
    m: float
    a_u: float
    c_uv: float
    b_uv: float
    domain_length: float
    first_time: float

    @property
    def front_bound(self) -> float:
        return _times(self.b_uv * (1.0 + self.a_u), self.sup_distance)

    @property
    def pressure_bound(self) -> float:
        length, t1 = self.domain_length, self.first_time
        factor = self.b_uv + 4.0 * (length / t1) * self.m**3 * (
            length + self.a_u * self.b_uv
        )
        return _times(factor, self.sup_distance)

    @property
    def filling_time_bound(self) -> float:
        return _times(0.5 * self.domain_length**2 * self.m, self.sup_distance)


def stability_constants(
    u: LogPermField, v: LogPermField, first_time: float
) -> StabilityConstants:
    if not first_time > 0.0:
        raise ValueError(f"first_time must be > 0, got {first_time}")
    length = u.grid.domain_length
    t1 = first_time
    log_m = max(u.sup_norm, v.sup_norm)
    m = math.exp(log_m)
    a_u = (length / t1) * math.exp(2.0 * u.sup_norm)
    log_c = (
        length**4 / t1**2 * math.exp(6.0 * log_m)
        + math.log(length**5 / t1**2)
        + 6.0 * log_m
    )
    c_uv = math.exp(log_c) if log_c < 700.0 else math.inf
    b_uv = min(
        c_uv,
        (length / t1) * m**3 * (2.0 * length + c_uv),
        0.5 * length**2 * m,
    )
    return StabilityConstants(
        sup_distance=float(abs(u.values - v.values).max()),
        m=m,
        a_u=a_u,
        c_uv=c_uv,
        b_uv=b_uv,
        domain_length=length,
        first_time=t1,
    )


def _times(factor: float, distance: float) -> float:
    # inf * 0 would be NaN; identical fields have a zero bound.
    return 0.0 if distance == 0.0 else factor * distance
