"""Numerically stable primitives shared across the package.

Wealth processes are accumulated in log space because raw products of
per-ballot factors overflow for populations in the tens of thousands;
convex mixtures of component wealths are therefore log-sum-exp reductions.
"""

from __future__ import annotations

import numpy as np

__all__ = ["logsumexp", "bisect_decreasing_predicate"]


def logsumexp(a: np.ndarray, axis: int | None = None) -> np.ndarray | float:
    """Compute log(sum(exp(a))) along ``axis`` without overflow.

    Entries of -inf contribute zero weight; an all -inf reduction returns
    -inf rather than raising.
    """
    a = np.asarray(a, dtype=float)
    m = np.max(a, axis=axis, keepdims=True)
    # max of -inf stays -inf; shift by 0 there to avoid inf - inf = nan
    shift = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(under="ignore", divide="ignore"):
        s = np.sum(np.exp(a - shift), axis=axis, keepdims=True)
        out = shift + np.log(s)
    out = np.where(np.isfinite(m), out, m)
    if axis is None:
        return float(out.reshape(-1)[0]) if out.ndim else float(out)
    return np.squeeze(out, axis=axis)


def bisect_decreasing_predicate(
    predicate,
    lo: float,
    hi: float,
    tol: float,
) -> tuple[float, float]:
    """Locate the downward crossing of a monotone predicate on ``[lo, hi]``.

    ``predicate`` must be True on the left of some crossing point and False
    on the right.  The caller is responsible for having verified
    ``predicate(lo)`` is True and ``predicate(hi)`` is False; this routine
    only evaluates interior midpoints.  Returns ``(lo, hi)`` with
    ``hi - lo <= tol`` bracketing the crossing.
    """
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break  # float resolution exhausted
        if predicate(mid):
            lo = mid
        else:
            hi = mid
    return lo, hi
