"""Encodings of election data into bounded finite populations.

A contest is reduced to one or more lists of numbers in [0, u]: each ballot
maps to 1 for the asserted winner, 0 for the asserted loser, and 1/2 for
anything else.  The assertion "w beat l" is then exactly "the population
mean exceeds 1/2", which is what the martingale machinery tests.  The values
0, 1/2 and 1 are exact dyadic rationals, so prefix sums and conditional
means computed from them are exact in binary floating point; the
enumeration-based martingale tests rely on this.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "AssorterPopulation",
    "Assertion",
    "ContestResult",
    "encode_plurality_pairwise",
    "population_mean",
    "rescale_to_unit",
]


@dataclass(frozen=True)
class AssorterPopulation:
    """A finite list of values in [0, upper], immutable once built."""

    values: np.ndarray
    upper: float = 1.0

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", vals)
        if vals.size == 0:
            raise ValueError("population must be nonempty")
        if self.upper <= 0:
            raise ValueError("upper bound must be positive")
        if np.any(vals < 0) or np.any(vals > self.upper):
            raise ValueError(f"values must lie in [0, {self.upper}]")
        vals.setflags(write=False)

    @property
    def size(self) -> int:
        return int(self.values.size)


@dataclass(frozen=True)
class ContestResult:
    """Reported vote counts per candidate plus the total number of ballots.

    Candidates not summing to ``total_ballots`` leave the remainder as
    invalid (or otherwise unusable) ballots.
    """

    counts: dict[str, int]
    total_ballots: int

    def __post_init__(self):
        if self.total_ballots <= 0:
            raise ValueError("total_ballots must be positive")
        for name, c in self.counts.items():
            if not isinstance(c, (int, np.integer)) or c < 0:
                raise ValueError(f"count for {name!r} must be a nonnegative integer")
        if sum(self.counts.values()) > self.total_ballots:
            raise ValueError("candidate counts exceed total ballots")

    @property
    def invalid(self) -> int:
        return self.total_ballots - sum(self.counts.values())


@dataclass(frozen=True)
class Assertion:
    """The claim that ``winner`` beat ``loser``: population mean in (threshold, u]."""

    winner: str
    loser: str
    threshold: float = 0.5
    upper: float = 1.0

    def __post_init__(self):
        if not (0 <= self.threshold < self.upper):
            raise ValueError("threshold must lie in [0, upper)")
        if self.winner == self.loser:
            raise ValueError("winner and loser must differ")

    @property
    def label(self) -> str:
        return f"{self.winner}_vs_{self.loser}"


def encode_plurality_pairwise(
    result: ContestResult, winner: str, loser: str
) -> AssorterPopulation:
    """Encode a pairwise plurality contest as a {0, 1/2, 1} population.

    Votes for ``winner`` become 1, votes for ``loser`` become 0, and every
    other ballot (other candidates, invalid) becomes 1/2.  The population
    mean exceeds 1/2 exactly when the winner got strictly more votes than
    the loser.
    """
    if winner == loser:
        raise ValueError("winner and loser must differ")
    for name in (winner, loser):
        if name not in result.counts:
            raise KeyError(f"unknown candidate id {name!r}")
    n_w = result.counts[winner]
    n_l = result.counts[loser]
    n_other = result.total_ballots - n_w - n_l
    values = np.concatenate(
        [np.ones(n_w), np.zeros(n_l), np.full(n_other, 0.5)]
    )
    return AssorterPopulation(values=values, upper=1.0)


def population_mean(pop: AssorterPopulation) -> float:
    """Arithmetic mean of the population values."""
    return float(np.sum(pop.values) / pop.size)


def rescale_to_unit(pop: AssorterPopulation) -> AssorterPopulation:
    """Divide every value by the upper bound, yielding a [0, 1] population.

    Thresholds of assertions stated against the original scale must be
    divided by the same factor by the caller.
    """
    if pop.upper == 1.0:
        return pop
    return AssorterPopulation(values=pop.values / pop.upper, upper=1.0)
