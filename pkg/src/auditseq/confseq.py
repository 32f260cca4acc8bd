"""Confidence sequences and anytime p-values from betting martingales.

A candidate mean ``mu`` is rejected at time ``t`` when the wealth process
for ``mu`` has reached ``1/alpha`` at any prefix length ``s <= t``; by
Ville's inequality the true mean is ever rejected with probability at most
``alpha``.  The non-rejected set is an interval, so its endpoints are found
by bisection: for one-sided strategies the wealth is nonincreasing in
``mu`` and only the lower endpoint is informative, while two-sided mixtures
yield both endpoints.

Rejection uses the running maximum of the wealth, so confidence sets are
automatically intersected over time: reported lower bounds never decrease
and upper bounds never increase.  Ville's guarantee covers the whole time
horizon at once, so the intersection costs nothing.

Endpoints are rounded outward by the bisection tolerance ``eps`` so the
reported set is always a superset of the exact one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from auditseq.martingale import (
    BettingStrategy,
    TwoSided,
    log_wealth_path,
    max_log_wealth,
)
from auditseq.numerics import bisect_decreasing_predicate

__all__ = [
    "ConfidenceConfig",
    "ConfidenceState",
    "IntervalResult",
    "anytime_p_value",
    "anytime_p_values",
    "interval",
    "lower_bound",
]


@dataclass(frozen=True)
class ConfidenceConfig:
    """Risk limit and bisection resolution for confidence sequences."""

    alpha: float
    eps: float = 1e-6
    side: str = "lower"

    def __post_init__(self):
        if not (0.0 < self.alpha < 1.0):
            raise ValueError("alpha must lie in (0, 1)")
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        if self.side not in ("lower", "two_sided"):
            raise ValueError("side must be 'lower' or 'two_sided'")


@dataclass(frozen=True)
class IntervalResult:
    lower: float
    upper: float
    degenerate: bool = False


def _rejector(x, N, strategy, u, alpha):
    threshold = -math.log(alpha)

    def rejects(mu: float) -> bool:
        return max_log_wealth(x, N, mu, strategy, u=u) >= threshold

    return rejects


def lower_bound(
    x,
    strategy: BettingStrategy,
    N: int,
    config: ConfidenceConfig,
    u: float = 1.0,
    prev: float = 0.0,
) -> float:
    """Lower confidence bound: infimum of the non-rejected means.

    Valid for one-sided strategies, whose wealth is nonincreasing in the
    candidate mean.  ``prev`` is the bound reported at an earlier time; the
    result never falls below it (running intersection).  Rounded down by
    ``eps``.
    """
    if isinstance(strategy, TwoSided) and strategy.beta < 1.0:
        raise ValueError("lower_bound requires a one-sided strategy; use interval")
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        return max(0.0, prev)
    rejects = _rejector(x, N, strategy, u, config.alpha)
    eps = config.eps
    probe = prev + eps
    if probe >= u or not rejects(probe):
        return prev
    # expand geometrically from the last known bound to bracket the crossing
    lo = probe
    step = eps
    hi = None
    while True:
        cand = lo + step
        if cand >= u:
            # wealth at u never exceeds 1 for upward bets, so u is never
            # rejected; still guard against a pathological caller
            if rejects(u):
                return u
            hi = u
            break
        if rejects(cand):
            lo = cand
            step *= 2.0
        else:
            hi = cand
            break
    lo, _ = bisect_decreasing_predicate(rejects, lo, hi, eps)
    return max(prev, lo)


def interval(
    x,
    strategy: TwoSided,
    N: int,
    config: ConfidenceConfig,
    u: float = 1.0,
    prev: IntervalResult | None = None,
) -> IntervalResult:
    """Both endpoints of the non-rejected set for a two-sided mixture.

    The sublevel set of the mixture is an interval (verified property), so
    one bisection per side suffices.  Endpoints are rounded outward and
    intersected with ``prev``.  When every probed mean is rejected the
    result is widened by ``eps`` around the least-rejected point and
    flagged degenerate.
    """
    if not isinstance(strategy, TwoSided) or not (0.0 < strategy.beta < 1.0):
        raise ValueError("interval requires a two-sided strategy with beta in (0, 1)")
    if prev is None:
        prev = IntervalResult(0.0, u)
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        return prev
    rejects = _rejector(x, N, strategy, u, config.alpha)
    eps = config.eps

    anchor = min(max(float(np.sum(x)) / x.size, prev.lower), prev.upper)
    if rejects(anchor):
        grid = np.linspace(prev.lower, prev.upper, 65)
        keep = [m for m in grid if not rejects(float(m))]
        if not keep:
            mid = anchor
            return IntervalResult(
                max(prev.lower, mid - eps), min(prev.upper, mid + eps), True
            )
        anchor = float(keep[len(keep) // 2])

    if prev.lower + eps >= anchor or not rejects(prev.lower + eps):
        lower = prev.lower
    else:
        lo, _ = bisect_decreasing_predicate(rejects, prev.lower + eps, anchor, eps)
        lower = lo

    if prev.upper - eps <= anchor or not rejects(prev.upper - eps):
        upper = prev.upper
    else:
        # mirrored: rejection is True on the right of the crossing
        lo, hi = bisect_decreasing_predicate(
            lambda m: not rejects(m), anchor, prev.upper - eps, eps
        )
        upper = hi

    lower = max(lower, prev.lower)
    upper = min(upper, prev.upper)
    if lower > upper:
        mid = 0.5 * (lower + upper)
        return IntervalResult(mid - eps, mid + eps, True)
    return IntervalResult(lower, upper, False)


def anytime_p_values(
    x, strategy: BettingStrategy, mu0: float, N: int, u: float = 1.0
) -> np.ndarray:
    """Anytime-valid p-value path for the null mean ``mu0``.

    The reciprocal of the running-maximum wealth, capped at one.  The
    running maximum keeps the path nonincreasing; threshold crossings
    coincide with those of the raw reciprocal, so Ville's guarantee is
    inherited.  Exactly zero once ``mu0`` is logically refuted.
    """
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        return np.empty(0)
    path = log_wealth_path(x, N, mu0, strategy, u=u)
    running = np.maximum.accumulate(path)
    with np.errstate(over="ignore"):
        return np.minimum(1.0, np.exp(-running))


def anytime_p_value(
    x, strategy: BettingStrategy, mu0: float, N: int, u: float = 1.0
) -> float:
    """Current anytime-valid p-value for the null mean ``mu0`` (1 at t=0)."""
    path = anytime_p_values(x, strategy, mu0, N, u=u)
    if path.size == 0:
        return 1.0
    return float(path[-1])


class ConfidenceState:
    """Growing observation prefix with lazily computed, cached endpoints.

    Endpoint queries replay the stored prefix per candidate mean, so no
    per-mean state is kept; warm starts from the previous endpoints make
    the per-observation cost a handful of replays.
    """

    def __init__(
        self,
        strategy: BettingStrategy,
        N: int,
        config: ConfidenceConfig,
        u: float = 1.0,
    ):
        self.strategy = strategy
        self.N = N
        self.config = config
        self.u = u
        self._obs: list[float] = []
        self._lower = 0.0
        self._interval = IntervalResult(0.0, u)
        self._lower_at = 0
        self._interval_at = 0
        self.two_sided = isinstance(strategy, TwoSided) and 0.0 < strategy.beta < 1.0

    @property
    def t(self) -> int:
        return len(self._obs)

    def append(self, x: float) -> None:
        if len(self._obs) >= self.N:
            raise ValueError("population exhausted")
        self._obs.append(float(x))

    def observations(self) -> np.ndarray:
        return np.asarray(self._obs, dtype=float)

    def lower(self) -> float:
        if self.two_sided:
            return self.interval().lower
        if self._lower_at < self.t:
            self._lower = lower_bound(
                self.observations(), self.strategy, self.N, self.config,
                u=self.u, prev=self._lower,
            )
            self._lower_at = self.t
        return self._lower

    def interval(self) -> IntervalResult:
        if not self.two_sided:
            raise ValueError("interval requires a two-sided strategy")
        if self._interval_at < self.t:
            self._interval = interval(
                self.observations(), self.strategy, self.N, self.config,
                u=self.u, prev=IntervalResult(self._interval.lower, self._interval.upper),
            )
            self._interval_at = self.t
        return self._interval

    def p_value(self, mu0: float) -> float:
        return anytime_p_value(self.observations(), self.strategy, mu0, self.N, u=self.u)
