"""Monte Carlo harness: workload distributions and risk validation.

Each replication shuffles the true ballot population with a Philox
generator seeded from ``(scenario seed, replication index)``, so every
strategy sees the same sequence of draws within a replication and reports
are bit-for-bit reproducible.  Workload counts distinct ballots examined,
invalid ballots included; a replication that never certifies is recorded as
exhausted and contributes the full population size to workload statistics.

The ballot-polling SPRT baseline ("bravo") tests the tie null against the
reported shares with the with-replacement likelihood ratio: a winner ballot
multiplies wealth by ``2p``, a loser ballot by ``2(1-p)`` where ``p`` is
the reported winner share among valid votes, and invalid ballots consume
workload without updating wealth.  Ballots are still drawn without
replacement, matching how the distinct-ballot workload is measured.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from auditseq.martingale import (
    BettingStrategy,
    ConvexGrid,
    FixedLambda,
    PathScanner,
    TwoSided,
    make_weights,
)

__all__ = [
    "Scenario",
    "StrategySummary",
    "SimulationReport",
    "RiskResult",
    "bravo_stopping_time",
    "compare_methods",
    "comparison_csv",
    "load_scenario",
    "replication_rng",
    "resolve_strategy",
    "scenario_from_dict",
    "simulate_risk",
    "simulate_workload",
]

SIM_STRATEGY_NAMES = ("apk", "dkelly", "sqkelly", "linkelly", "bravo")


@dataclass(frozen=True)
class Scenario:
    """True and reported two-candidate profiles plus simulation knobs."""

    name: str
    true_winner: int
    true_loser: int
    true_invalid: int = 0
    reported_winner: int | None = None
    reported_loser: int | None = None
    strategies: tuple = ("sqkelly",)
    alpha: float = 0.05
    replications: int = 500
    seed: int = 0

    def __post_init__(self):
        if min(self.true_winner, self.true_loser, self.true_invalid) < 0:
            raise ValueError("profile counts must be nonnegative")
        if self.N < 1:
            raise ValueError("population must be nonempty")
        if not (0.0 < self.alpha < 1.0):
            raise ValueError("alpha must lie strictly in (0, 1)")
        if self.replications < 1:
            raise ValueError("replications must be at least 1")

    @property
    def N(self) -> int:
        return self.true_winner + self.true_loser + self.true_invalid

    @property
    def true_mean(self) -> float:
        return (self.true_winner + 0.5 * self.true_invalid) / self.N

    @property
    def reported(self) -> tuple[int, int]:
        rw = self.true_winner if self.reported_winner is None else self.reported_winner
        rl = self.true_loser if self.reported_loser is None else self.reported_loser
        return rw, rl

    def population(self) -> np.ndarray:
        return np.concatenate(
            [
                np.ones(self.true_winner),
                np.zeros(self.true_loser),
                np.full(self.true_invalid, 0.5),
            ]
        )


def scenario_from_dict(d: dict) -> Scenario:
    true = d["true_profile"]
    reported = d.get("reported_profile") or {}
    return Scenario(
        name=d.get("name", "scenario"),
        true_winner=int(true["winner"]),
        true_loser=int(true["loser"]),
        true_invalid=int(true.get("invalid", 0)),
        reported_winner=(None if "winner" not in reported else int(reported["winner"])),
        reported_loser=(None if "loser" not in reported else int(reported["loser"])),
        strategies=tuple(d.get("strategies", ["sqkelly"])),
        alpha=float(d.get("alpha", 0.05)),
        replications=int(d.get("replications", 500)),
        seed=int(d.get("seed", 0)),
    )


def load_scenario(path: str | Path) -> Scenario:
    return scenario_from_dict(json.loads(Path(path).read_text()))


def resolve_strategy(
    name_or_strategy,
    reported: tuple[int, int] = (0, 0),
    grid_size: int = 100,
    beta: float = 0.5,
) -> tuple[str, BettingStrategy | None]:
    """Map a strategy name to a betting strategy ("bravo" maps to None)."""
    if isinstance(name_or_strategy, (FixedLambda, ConvexGrid, TwoSided)):
        return type(name_or_strategy).__name__, name_or_strategy
    name = str(name_or_strategy)
    if name == "bravo":
        return name, None
    if name == "apk":
        rw, rl = reported
        if rw + rl == 0:
            raise ValueError("apk requires reported vote totals")
        return name, FixedLambda(max(0.0, 2.0 * (rw - rl) / (rw + rl)))
    kinds = {"dkelly": "constant", "sqkelly": "square", "linkelly": "linear"}
    if name in kinds:
        return name, ConvexGrid(make_weights(kinds[name], grid_size))
    raise ValueError(
        f"unknown strategy {name!r}; choose from {', '.join(SIM_STRATEGY_NAMES)}"
    )


def replication_rng(seed: int, rep: int) -> np.random.Generator:
    """Generator for one replication, identical across strategies."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence((seed, rep))))


@dataclass(frozen=True)
class StrategySummary:
    strategy: str
    stopping_times: list  # int per certified run, None per exhausted run
    N: int

    @property
    def workloads(self) -> np.ndarray:
        return np.array([self.N if t is None else t for t in self.stopping_times])

    @property
    def frac_exhausted(self) -> float:
        return sum(t is None for t in self.stopping_times) / len(self.stopping_times)

    @property
    def mean(self) -> float:
        return float(np.mean(self.workloads))

    @property
    def median(self) -> float:
        return float(np.median(self.workloads))

    def quantile(self, q: float) -> float:
        return float(np.quantile(self.workloads, q))

    def histogram(self, bins: int = 20) -> list[tuple[float, int]]:
        counts, edges = np.histogram(self.workloads, bins=bins, range=(0, self.N))
        return [(float(edges[i]), int(counts[i])) for i in range(len(counts))]

    def to_dict(self) -> dict:
        return {
            "strategy": self.strategy,
            "mean": self.mean,
            "median": self.median,
            "q10": self.quantile(0.1),
            "q90": self.quantile(0.9),
            "frac_exhausted": self.frac_exhausted,
            "stopping_times": [t for t in self.stopping_times],
            "histogram": self.histogram(),
        }


@dataclass(frozen=True)
class SimulationReport:
    scenario: Scenario
    summaries: list

    def summary(self, strategy: str) -> StrategySummary:
        for s in self.summaries:
            if s.strategy == strategy:
                return s
        raise KeyError(strategy)

    def to_dict(self) -> dict:
        return {
            "scenario": {
                "name": self.scenario.name,
                "N": self.scenario.N,
                "true_profile": {
                    "winner": self.scenario.true_winner,
                    "loser": self.scenario.true_loser,
                    "invalid": self.scenario.true_invalid,
                },
                "reported_profile": {
                    "winner": self.scenario.reported[0],
                    "loser": self.scenario.reported[1],
                },
                "alpha": self.scenario.alpha,
                "replications": self.scenario.replications,
                "seed": self.scenario.seed,
            },
            "strategies": [s.to_dict() for s in self.summaries],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def to_csv(self) -> str:
        lines = ["scenario,strategy,mean,median,q10,q90,frac_exhausted"]
        for s in self.summaries:
            lines.append(
                f"{self.scenario.name},{s.strategy},{s.mean!r},{s.median!r},"
                f"{s.quantile(0.1)!r},{s.quantile(0.9)!r},{s.frac_exhausted!r}"
            )
        return "\n".join(lines) + "\n"


def _bravo_crossing(values: np.ndarray, p: float, alpha: float) -> int | None:
    with np.errstate(divide="ignore"):
        log_factors = np.where(
            values == 1.0,
            math.log(2.0 * p),
            np.where(values == 0.0, np.log(2.0 * (1.0 - p)), 0.0),
        )
    path = np.cumsum(log_factors)
    hits = path >= -math.log(alpha)
    if not np.any(hits):
        return None
    return int(np.argmax(hits)) + 1


def bravo_stopping_time(
    reported: tuple[int, int],
    true_profile: tuple[int, int, int],
    alpha: float,
    seed: int = 0,
    rep: int = 0,
) -> int | None:
    """Distinct ballots until the reported-share SPRT certifies, None if never."""
    rw, rl = reported
    if rw + rl == 0 or rw / (rw + rl) <= 0.5:
        raise ValueError("reported winner share must exceed 1/2 among valid votes")
    tw, tl, ti = true_profile
    pop = np.concatenate([np.ones(tw), np.zeros(tl), np.full(ti, 0.5)])
    perm = replication_rng(seed, rep).permutation(pop)
    return _bravo_crossing(perm, rw / (rw + rl), alpha)


def _stopping_time(
    perm: np.ndarray,
    N: int,
    strategy: BettingStrategy | None,
    scenario: Scenario,
    mu0: float = 0.5,
) -> int | None:
    if strategy is None:  # bravo
        rw, rl = scenario.reported
        if rw + rl == 0 or rw / (rw + rl) <= 0.5:
            raise ValueError("reported winner share must exceed 1/2 among valid votes")
        return _bravo_crossing(perm, rw / (rw + rl), scenario.alpha)
    scanner = PathScanner(strategy, N, mu0)
    return scanner.scan_until(perm, scenario.alpha)


def simulate_workload(scenario: Scenario, mu0: float = 0.5) -> SimulationReport:
    """Stopping-time distribution per strategy over seeded replications.

    Requires a true winner (population mean above the tested threshold);
    use ``simulate_risk`` for false assertions.
    """
    if scenario.true_mean <= mu0:
        raise ValueError("workload scenarios need a true mean above the threshold")
    return _simulate(scenario, mu0)


def simulate_risk(scenario: Scenario, mu0: float = 0.5) -> list["RiskResult"]:
    """Certification rate per strategy when the assertion is false.

    Passes when the rate stays below ``alpha + 3 * sqrt(alpha(1-alpha)/R)``.
    """
    if scenario.true_mean > mu0:
        raise ValueError("risk scenarios need a true mean at or below the threshold")
    report = _simulate(scenario, mu0)
    results = []
    for summary in report.summaries:
        rate = 1.0 - summary.frac_exhausted
        R = len(summary.stopping_times)
        se = math.sqrt(rate * (1.0 - rate) / R)
        bound = scenario.alpha + 3.0 * math.sqrt(
            scenario.alpha * (1.0 - scenario.alpha) / R
        )
        results.append(
            RiskResult(
                strategy=summary.strategy,
                rate=rate,
                se=se,
                bound=bound,
                passed=rate <= bound,
            )
        )
    return results


@dataclass(frozen=True)
class RiskResult:
    strategy: str
    rate: float
    se: float
    bound: float
    passed: bool


def _simulate(scenario: Scenario, mu0: float) -> SimulationReport:
    pop = scenario.population()
    N = scenario.N
    resolved = [
        resolve_strategy(name, reported=scenario.reported)
        for name in scenario.strategies
    ]
    times: dict[int, list] = {i: [] for i in range(len(resolved))}
    for rep in range(scenario.replications):
        perm = replication_rng(scenario.seed, rep).permutation(pop)
        for i, (_, strategy) in enumerate(resolved):
            times[i].append(_stopping_time(perm, N, strategy, scenario, mu0))
    summaries = [
        StrategySummary(strategy=name, stopping_times=times[i], N=N)
        for i, (name, _) in enumerate(resolved)
    ]
    return SimulationReport(scenario=scenario, summaries=summaries)


def compare_methods(scenarios: list[Scenario]) -> list[dict]:
    """Mean/median workload per (scenario, strategy), deterministic given seeds."""
    rows = []
    for sc in scenarios:
        report = simulate_workload(sc)
        for s in report.summaries:
            rows.append(
                {
                    "scenario": sc.name,
                    "strategy": s.strategy,
                    "mean": s.mean,
                    "median": s.median,
                    "q10": s.quantile(0.1),
                    "q90": s.quantile(0.9),
                    "frac_exhausted": s.frac_exhausted,
                }
            )
    return rows


def comparison_csv(rows: list[dict]) -> str:
    lines = ["scenario,strategy,mean,median,q10,q90,frac_exhausted"]
    for r in rows:
        lines.append(
            f"{r['scenario']},{r['strategy']},{r['mean']!r},{r['median']!r},"
            f"{r['q10']!r},{r['q90']!r},{r['frac_exhausted']!r}"
        )
    return "\n".join(lines) + "\n"
