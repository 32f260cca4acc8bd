"""Shared helpers: the exhaustive martingale-property oracle and strategies."""

from __future__ import annotations

import math
from collections import Counter

import pytest

from auditseq.martingale import (
    ConvexGrid,
    FixedLambda,
    TwoSided,
    init_state,
    make_weights,
    update_martingale,
)


def apk_for_population(values) -> FixedLambda | None:
    """The fixed bet implied by treating the population's own counts as reported."""
    n1 = sum(1 for v in values if v == 1.0)
    n0 = sum(1 for v in values if v == 0.0)
    if n1 + n0 == 0:
        return None
    return FixedLambda(max(0.0, 2.0 * (n1 - n0) / (n1 + n0)))


def populations_over_halves(max_n: int):
    """Every multiset over {0, 1/2, 1} of size 1..max_n."""
    for n in range(1, max_n + 1):
        for n1 in range(n + 1):
            for nh in range(n + 1 - n1):
                n0 = n - n1 - nh
                yield (1.0,) * n1 + (0.5,) * nh + (0.0,) * n0


def martingale_property_worst_dev(pop, strategy, mu) -> float:
    """Exhaustively check E[M_t | prefix] = M_{t-1} over every ordered prefix.

    Walks the tree of distinct prefixes, averaging the updated wealth over
    the remaining multiset at each node.  Returns the worst absolute
    deviation encountered; exact martingales give ~1e-16.
    """
    N = len(pop)
    worst = 0.0

    def walk(state, remaining: Counter, m_prev: float):
        nonlocal worst
        total = sum(remaining.values())
        if total == 0:
            return
        expected = 0.0
        children = []
        for value, count in remaining.items():
            nxt, m_next = update_martingale(state, value, mu)
            expected += m_next * (count / total)
            children.append((value, nxt, m_next))
        worst = max(worst, abs(expected - m_prev))
        for value, nxt, m_next in children:
            if math.isfinite(m_next):
                rest = remaining.copy()
                rest[value] -= 1
                if rest[value] == 0:
                    del rest[value]
                walk(nxt, rest, m_next)

    walk(init_state(strategy, N), Counter(pop), 1.0)
    return worst


@pytest.fixture
def grid_strategies():
    return {
        "dkelly3": ConvexGrid(make_weights("constant", 3)),
        "sqkelly12": ConvexGrid(make_weights("square", 12)),
        "two_sided": TwoSided(
            make_weights("constant", 3), make_weights("constant", 3), beta=0.5
        ),
    }
