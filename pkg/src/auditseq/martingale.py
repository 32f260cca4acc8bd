"""Betting martingales over samples drawn without replacement.

The wealth process for a candidate mean ``mu`` multiplies, per observation,
a factor ``1 + lam_t * (x_t - c_t(mu))`` where ``c_t(mu)`` is the mean the
next draw must have if the full population mean were ``mu``.  Bets ``lam_t``
are predictable (they depend only on earlier draws) and are confined to the
range keeping every factor nonnegative, so the process is a nonnegative
martingale with initial value one whenever ``mu`` is the true mean.  Large
wealth is therefore evidence against ``mu``.

Three families of bets are implemented:

* a fixed bet derived from reported vote totals, truncated each step to the
  allowable range ("apK");
* convex mixtures over an implicit grid of bets ``d / ((D+1) c_t)`` with
  constant, truncated-linear or truncated-square weights ("dKelly",
  "linKelly", "SqKelly");
* two-sided mixtures pairing the upward grid with a downward grid
  ``d / ((D+1)(u - c_t))`` for risk-limiting tallies.

Wealth is accumulated in log space per mixture component and combined by
log-sum-exp; raw products overflow for realistic population sizes.

Candidate means that are arithmetically impossible given the observed
prefix (the remaining ballots would need a negative sum, or more than ``u``
each) are flagged as logically refuted and their wealth reported as +inf.
For one-sided (upward-betting) strategies only the low-side impossibility
counts as refutation: a mean that is impossibly *high* is evidence for the
null being tested, not against it, and the wealth keeps its finite formula
value there so that it stays nonincreasing in ``mu``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from auditseq.numerics import logsumexp
from auditseq.population import AssorterPopulation, ContestResult

__all__ = [
    "FEAS_RTOL",
    "ConditionalMeanState",
    "WeightVector",
    "FixedLambda",
    "ConvexGrid",
    "TwoSided",
    "MartingaleState",
    "PathScanner",
    "PopulationExhausted",
    "DegenerateWeightsError",
    "apriori_kelly_lambda",
    "conditional_mean",
    "first_crossing",
    "init_state",
    "kelly_lambda_numeric",
    "log_wealth_path",
    "logical_refutation_check",
    "make_weights",
    "max_log_wealth",
    "update_martingale",
]

# Relative slack for feasibility comparisons: N*mu is computed in floating
# point, and refuting the true mean over a rounding error would break
# coverage.  The slack only ever loosens confidence sets, by < 1e-9 * u on
# the mean axis.
FEAS_RTOL = 1e-9


class PopulationExhausted(RuntimeError):
    """Raised when updating a martingale past the population size."""


class DegenerateWeightsError(ValueError):
    """Raised when a weight construction assigns zero mass everywhere."""


# ---------------------------------------------------------------------------
# conditional means and logical refutation


@dataclass
class ConditionalMeanState:
    """Prefix summary: next draw index ``t`` (1-based) and sum of earlier draws."""

    N: int
    t: int = 1
    prefix_sum: float = 0.0

    def __post_init__(self):
        if not (1 <= self.t <= self.N + 1):
            raise ValueError("t must lie in 1..N+1")
        if self.prefix_sum < 0:
            raise ValueError("prefix_sum must be nonnegative")


def conditional_mean(state: ConditionalMeanState, mu: float) -> float:
    """Mean the next draw must have for the population mean to be ``mu``.

    Equals ``(N*mu - prefix_sum) / (N - t + 1)``.  May fall outside [0, u];
    callers decide what an out-of-range value means for their bet.
    """
    if state.t > state.N:
        raise PopulationExhausted("population exhausted")
    return (state.N * mu - state.prefix_sum) / (state.N - state.t + 1)


def logical_refutation_check(state: ConditionalMeanState, mu: float, u: float = 1.0) -> bool:
    """True when no completion of the prefix can give the population mean ``mu``.

    Either the observed sum already exceeds ``N*mu`` (values are
    nonnegative), or the remaining draws would need to average more than
    ``u`` (values are bounded).
    """
    tol = FEAS_RTOL * state.N * u
    required = state.N * mu - state.prefix_sum
    remaining = state.N - state.t + 1
    return required < -tol or required > u * remaining + tol


# ---------------------------------------------------------------------------
# bets


def apriori_kelly_lambda(result: ContestResult, winner: str, loser: str) -> float:
    """Fixed bet maximizing final wealth if reported totals are correct.

    Closed form ``2 * (n_w - n_l) / (n_w + n_l)``, clamped below at zero
    because the bet range is one-sided.  Values above 2 cannot occur for
    valid counts.
    """
    for name in (winner, loser):
        if name not in result.counts:
            raise KeyError(f"unknown candidate id {name!r}")
    n_w = result.counts[winner]
    n_l = result.counts[loser]
    if n_w + n_l == 0:
        raise ValueError("winner and loser both have zero reported votes")
    lam = 2.0 * (n_w - n_l) / (n_w + n_l)
    return max(lam, 0.0)


def kelly_lambda_numeric(pop: AssorterPopulation, tol: float = 1e-9) -> float:
    """Bet maximizing the wealth proxy over a hypothesized population.

    Finds the root of ``sum((x_i - 1/2) / (1 + lam * (x_i - 1/2)))`` by
    bisection on ``[0, lam_max]``.  ``lam_max`` keeps every factor positive:
    ``1 / (1/2 - min x)`` when some value is below 1/2, else ``2 / u``.
    Returns 0 when the derivative at 0 is nonpositive (wealth cannot grow).
    """
    x = pop.values
    centered = x - 0.5

    def deriv(lam: float) -> float:
        return float(np.sum(centered / (1.0 + lam * centered)))

    if deriv(0.0) <= 0:
        return 0.0
    x_min = float(np.min(x))
    if x_min < 0.5:
        lam_max = 1.0 / (0.5 - x_min)
    else:
        lam_max = 2.0 / pop.upper
    lo, hi = 0.0, lam_max
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if deriv(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# weights and strategies


@dataclass(frozen=True)
class WeightVector:
    """Convex weights over the implicit bet grid ``d / (D+1), d = 1..D``."""

    thetas: np.ndarray

    def __post_init__(self):
        thetas = np.asarray(self.thetas, dtype=float)
        object.__setattr__(self, "thetas", thetas)
        if thetas.size < 2:
            raise ValueError("grid size D must be at least 2")
        if np.any(thetas < 0):
            raise ValueError("weights must be nonnegative")
        if abs(float(np.sum(thetas)) - 1.0) > 1e-12:
            raise ValueError("weights must sum to one")
        thetas.setflags(write=False)
        d = np.arange(1, thetas.size + 1, dtype=float)
        fracs = d / (thetas.size + 1)
        fracs.setflags(write=False)
        with np.errstate(divide="ignore"):
            log_thetas = np.log(thetas)
        log_thetas.setflags(write=False)
        object.__setattr__(self, "fracs", fracs)
        object.__setattr__(self, "log_thetas", log_thetas)

    @property
    def D(self) -> int:
        return int(self.thetas.size)


def make_weights(kind: str, D: int = 100) -> WeightVector:
    """Build constant, truncated-linear, or truncated-square grid weights.

    With grid fractions ``u_d = d / (D+1)``: constant weights are ``1/D``;
    linear weights are ``max(0, 1 - 2 u_d)`` normalized; square weights are
    ``(1/3 - u_d)^2`` for ``u_d <= 1/3`` (else 0) normalized.  Linear and
    square weights favor small bets, which are optimal for small margins.
    """
    if D < 2:
        raise ValueError("grid size D must be at least 2")
    d = np.arange(1, D + 1, dtype=float)
    grid_frac = d / (D + 1)
    if kind == "constant":
        return WeightVector(np.full(D, 1.0 / D))
    if kind == "linear":
        gamma = np.maximum(0.0, 1.0 - 2.0 * grid_frac)
    elif kind == "square":
        third = 1.0 / 3.0
        gamma = np.where(grid_frac <= third, (third - grid_frac) ** 2, 0.0)
    else:
        raise ValueError(f"unknown weight kind {kind!r}; use constant, linear or square")
    total = float(np.sum(gamma))
    if total <= 0:
        raise DegenerateWeightsError(f"{kind} weights with D={D} are all zero")
    return WeightVector(gamma / total)


@dataclass(frozen=True)
class FixedLambda:
    """Bet a single value, truncated each step to the allowable range."""

    lam: float

    def __post_init__(self):
        if not (self.lam >= 0):
            raise ValueError("lambda must be nonnegative")


@dataclass(frozen=True)
class ConvexGrid:
    """Convex mixture of upward bets on the implicit grid."""

    weights: WeightVector


@dataclass(frozen=True)
class TwoSided:
    """Mixture ``beta * plus + (1 - beta) * minus`` with two-sided power."""

    plus: WeightVector
    minus: WeightVector
    beta: float = 0.5

    def __post_init__(self):
        if not (0.0 <= self.beta <= 1.0):
            raise ValueError("beta must lie in [0, 1]")


BettingStrategy = FixedLambda | ConvexGrid | TwoSided


def _default_refute_high(strategy: BettingStrategy) -> bool:
    # Only genuinely two-sided statistics treat an impossibly-high mean as
    # rejected; one-sided statistics must stay monotone in mu.
    return isinstance(strategy, TwoSided) and strategy.beta < 1.0


# ---------------------------------------------------------------------------
# martingale state, incremental updates


@dataclass
class MartingaleState:
    """Per-null wealth state: log wealth per mixture component plus prefix info.

    A value type: ``update_martingale`` returns a fresh state.  Callers must
    feed every update the same null ``mu``.
    """

    strategy: BettingStrategy
    N: int
    u: float = 1.0
    mean_state: ConditionalMeanState = None  # type: ignore[assignment]
    log_plus: np.ndarray | None = None
    log_minus: np.ndarray | None = None
    refuted: bool = False

    def __post_init__(self):
        if self.mean_state is None:
            self.mean_state = ConditionalMeanState(N=self.N)

    @property
    def t(self) -> int:
        return self.mean_state.t

    def log_wealth(self) -> float:
        if self.refuted:
            return math.inf
        strat = self.strategy
        if isinstance(strat, FixedLambda):
            return float(self.log_plus[0])
        if isinstance(strat, ConvexGrid):
            return float(logsumexp(strat.weights.log_thetas + self.log_plus))
        if strat.beta == 1.0:
            return float(logsumexp(strat.plus.log_thetas + self.log_plus))
        if strat.beta == 0.0:
            return float(logsumexp(strat.minus.log_thetas + self.log_minus))
        terms = np.concatenate(
            [
                math.log(strat.beta) + strat.plus.log_thetas + self.log_plus,
                math.log1p(-strat.beta) + strat.minus.log_thetas + self.log_minus,
            ]
        )
        return float(logsumexp(terms))

    def wealth(self) -> float:
        return float(np.exp(self.log_wealth()))


def init_state(strategy: BettingStrategy, N: int, u: float = 1.0) -> MartingaleState:
    """Fresh state with wealth exactly one in every component."""
    if N < 1:
        raise ValueError("population size must be at least 1")
    if isinstance(strategy, FixedLambda):
        log_plus = np.zeros(1)
        log_minus = None
    elif isinstance(strategy, ConvexGrid):
        log_plus = np.zeros(strategy.weights.D)
        log_minus = None
    elif isinstance(strategy, TwoSided):
        log_plus = np.zeros(strategy.plus.D)
        log_minus = np.zeros(strategy.minus.D)
    else:
        raise TypeError(f"unknown strategy {strategy!r}")
    return MartingaleState(strategy=strategy, N=N, u=u, log_plus=log_plus, log_minus=log_minus)


def update_martingale(
    state: MartingaleState, x: float, mu: float
) -> tuple[MartingaleState, float]:
    """Multiply one observation into the wealth process for the null ``mu``.

    Returns ``(new_state, wealth)``.  Wealth is +inf once ``mu`` is
    logically refuted; whether an impossibly-high ``mu`` counts as refuted
    depends on the strategy's sidedness (see module docstring).
    """
    ms = state.mean_state
    if ms.t > state.N:
        raise PopulationExhausted("population exhausted")
    if not np.isfinite(x):
        raise ValueError("observation must be a finite number")
    if x < 0 or x > state.u * (1 + 1e-12):
        raise ValueError(f"observation {x} outside [0, {state.u}]")

    N, u = state.N, state.u
    refute_high = _default_refute_high(state.strategy)
    tol = FEAS_RTOL * N * u
    rem = N - ms.t + 1
    refuted = state.refuted
    log_plus = state.log_plus
    log_minus = state.log_minus

    if not refuted:
        required = N * mu - ms.prefix_sum
        if required < -tol or (refute_high and required > u * rem + tol):
            refuted = True
        else:
            # The upward bet grid diverges as the conditional mean reaches 0
            # and the downward grid as it reaches u; at those boundaries the
            # null forces the next draw, so the factor is exactly one.
            at_floor = required <= tol
            at_ceiling = required >= u * rem - tol
            c = required / rem
            strat = state.strategy
            if isinstance(strat, FixedLambda):
                # truncated bet: factor is x/c once lam exceeds 1/c, so a
                # zero observation zeroes the wealth exactly
                c_f = max(c, 0.0)
                if strat.lam * c_f >= 1.0:
                    factor = x / c_f
                else:
                    factor = max(1.0 + strat.lam * (x - c_f), 0.0)
                log_plus = log_plus + (math.log(factor) if factor > 0 else -math.inf)
            elif isinstance(strat, ConvexGrid):
                if not at_floor:
                    log_plus = log_plus + np.log1p(strat.weights.fracs * (x / c - 1.0))
            else:
                if strat.beta > 0.0 and not at_floor:
                    log_plus = log_plus + np.log1p(strat.plus.fracs * (x / c - 1.0))
                if strat.beta < 1.0 and not at_ceiling:
                    log_minus = log_minus + np.log1p(
                        -strat.minus.fracs * ((x - c) / (u - c))
                    )

    new_mean = ConditionalMeanState(N=N, t=ms.t + 1, prefix_sum=ms.prefix_sum + x)
    if not refuted:
        required_post = N * mu - new_mean.prefix_sum
        if required_post < -tol or (
            refute_high and required_post > u * (rem - 1) + tol
        ):
            refuted = True

    new_state = MartingaleState(
        strategy=state.strategy,
        N=N,
        u=u,
        mean_state=new_mean,
        log_plus=None if log_plus is None else np.array(log_plus),
        log_minus=None if log_minus is None else np.array(log_minus),
        refuted=refuted,
    )
    return new_state, new_state.wealth()


# ---------------------------------------------------------------------------
# vectorized whole-path evaluation


def _block_masks(x, N, mu, u, t0, s0, refute_high):
    """Feasibility masks and required remaining sums for a block of draws."""
    n = x.size
    idx = t0 + np.arange(1, n + 1, dtype=float)
    rem = N - idx + 1.0
    csum = np.cumsum(x)
    s_prev = s0 + csum - x
    s_incl = s0 + csum
    req = N * mu - s_prev
    req_post = N * mu - s_incl
    tol = FEAS_RTOL * N * u
    bad = req < -tol
    bad_post = req_post < -tol
    if refute_high:
        bad = bad | (req > u * rem + tol)
        bad_post = bad_post | (req_post > u * (rem - 1.0) + tol)
    refuted = np.maximum.accumulate(bad | bad_post)
    return refuted, req, rem, tol, float(s_incl[-1])


def _grid_log_factors_plus(x, req, rem, tol, refuted, fracs, u):
    # frozen where the null forces the next draw to 0 (grid diverges there)
    dead = refuted | (req <= tol)
    c = np.where(dead, 0.5 * u, req / rem)
    lf = np.log1p(np.outer(x / c - 1.0, fracs))
    lf[dead] = 0.0
    return lf


def _grid_log_factors_minus(x, req, rem, tol, refuted, fracs, u):
    # frozen where the null forces the next draw to u
    dead = refuted | (req >= u * rem - tol)
    c = np.where(dead, 0.5 * u, req / rem)
    lf = np.log1p(np.outer(-(x - c) / (u - c), fracs))
    lf[dead] = 0.0
    return lf


def _fixed_log_factors(x, req, rem, tol, refuted, lam):
    # truncated bet: factor is x/c once lam exceeds 1/c (exactly zero at x=0)
    c = np.maximum(req, 0.0) / rem
    truncated = lam * c >= 1.0
    c_safe = np.where(truncated, c, 1.0)
    factors = np.where(
        truncated,
        x / c_safe,
        np.maximum(1.0 + lam * (x - c), 0.0),
    )
    with np.errstate(divide="ignore"):
        lf = np.log(factors)
    lf[refuted] = 0.0
    return lf[:, None]


def log_wealth_path(
    x,
    N: int,
    mu: float,
    strategy: BettingStrategy,
    u: float = 1.0,
    refute_high: bool | None = None,
) -> np.ndarray:
    """Log wealth at every prefix length ``t = 1..len(x)`` for the null ``mu``.

    Equivalent to repeated ``update_martingale`` calls but vectorized over
    the whole observation sequence.  Entries are +inf from the first time
    ``mu`` is logically refuted.
    """
    scanner = PathScanner(strategy, N, mu, u=u, refute_high=refute_high)
    return scanner.feed(np.asarray(x, dtype=float))


def max_log_wealth(
    x, N: int, mu: float, strategy: BettingStrategy, u: float = 1.0,
    refute_high: bool | None = None,
) -> float:
    """Largest log wealth over all prefixes of ``x`` (running-maximum test)."""
    if len(x) == 0:
        return 0.0
    path = log_wealth_path(x, N, mu, strategy, u=u, refute_high=refute_high)
    return float(np.max(path))


def first_crossing(log_path: np.ndarray, alpha: float) -> int | None:
    """First 1-based index where log wealth reaches ``log(1/alpha)``, else None."""
    hits = log_path >= -math.log(alpha)
    if not np.any(hits):
        return None
    return int(np.argmax(hits)) + 1


class PathScanner:
    """Incrementally evaluate a wealth path in blocks of observations.

    Carries the prefix sum, per-component log wealth and refutation flag
    between blocks so simulations can stop scanning as soon as the wealth
    crosses a threshold.
    """

    def __init__(
        self,
        strategy: BettingStrategy,
        N: int,
        mu: float,
        u: float = 1.0,
        refute_high: bool | None = None,
    ):
        self.strategy = strategy
        self.N = N
        self.mu = mu
        self.u = u
        if refute_high is None:
            refute_high = _default_refute_high(strategy)
        self.refute_high = refute_high
        self.t_consumed = 0
        self.s_consumed = 0.0
        self.refuted = False
        if isinstance(strategy, FixedLambda):
            self._lw_plus = np.zeros(1)
            self._lw_minus = None
        elif isinstance(strategy, ConvexGrid):
            self._lw_plus = np.zeros(strategy.weights.D)
            self._lw_minus = None
        else:
            self._lw_plus = np.zeros(strategy.plus.D)
            self._lw_minus = np.zeros(strategy.minus.D)

    def feed(self, x_block) -> np.ndarray:
        """Consume a block; return log wealth at each new prefix length."""
        x = np.asarray(x_block, dtype=float)
        n = x.size
        if n == 0:
            return np.empty(0)
        if self.t_consumed + n > self.N:
            raise PopulationExhausted("population exhausted")
        strat = self.strategy
        if self.refuted:
            self.t_consumed += n
            self.s_consumed += float(np.sum(x))
            return np.full(n, np.inf)

        refuted, req, rem, tol, s_end = _block_masks(
            x, self.N, self.mu, self.u, self.t_consumed, self.s_consumed,
            self.refute_high,
        )
        if isinstance(strat, FixedLambda):
            lf = _fixed_log_factors(x, req, rem, tol, refuted, strat.lam)
            lw = self._lw_plus + np.cumsum(lf, axis=0)
            log_m = lw[:, 0]
            self._lw_plus = lw[-1].copy()
        elif isinstance(strat, ConvexGrid):
            lf = _grid_log_factors_plus(x, req, rem, tol, refuted, strat.weights.fracs, self.u)
            lw = self._lw_plus + np.cumsum(lf, axis=0)
            log_m = logsumexp(lw + strat.weights.log_thetas, axis=1)
            self._lw_plus = lw[-1].copy()
        else:
            parts = []
            if strat.beta > 0.0:
                lf_p = _grid_log_factors_plus(x, req, rem, tol, refuted, strat.plus.fracs, self.u)
                lw_p = self._lw_plus + np.cumsum(lf_p, axis=0)
                self._lw_plus = lw_p[-1].copy()
                w = strat.plus.log_thetas + (
                    0.0 if strat.beta == 1.0 else math.log(strat.beta)
                )
                parts.append(lw_p + w)
            if strat.beta < 1.0:
                lf_m = _grid_log_factors_minus(x, req, rem, tol, refuted, strat.minus.fracs, self.u)
                lw_m = self._lw_minus + np.cumsum(lf_m, axis=0)
                self._lw_minus = lw_m[-1].copy()
                w = strat.minus.log_thetas + (
                    0.0 if strat.beta == 0.0 else math.log1p(-strat.beta)
                )
                parts.append(lw_m + w)
            log_m = logsumexp(np.concatenate(parts, axis=1), axis=1)
        log_m = np.where(refuted, np.inf, log_m)
        self.refuted = bool(refuted[-1])
        self.t_consumed += n
        self.s_consumed = s_end
        return log_m

    def scan_until(self, x, alpha: float, block: int = 512) -> int | None:
        """First 1-based crossing of ``log(1/alpha)``, scanning blockwise."""
        x = np.asarray(x, dtype=float)
        threshold = -math.log(alpha)
        offset = 0
        for start in range(0, x.size, block):
            log_m = self.feed(x[start : start + block])
            hits = log_m >= threshold
            if np.any(hits):
                return offset + int(np.argmax(hits)) + 1
            offset += log_m.size
        return None
