"""Differential co-morbidity between two independent populations."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

from .errors import NotComparableError
from .multiplicity import NullGrid, fcr_interval, scan_null_grid

# differential scores are centred on a ratio of 1
DIFF_GRID = NullGrid(lo=-8.0, hi=8.0, step=0.01)


def differential_score(senior, bg) -> float:
    """Difference of the two populations' (pooled) log2 odds ratios.

    A common bias shift cancels here, so raw and bias-adjusted scores
    give the same difference.
    """
    if senior is None or bg is None:
        raise NotComparableError("term must be valid in both populations")
    return _lor(senior) - _lor(bg)


def pooled_se(se_senior: float, se_bg: float) -> float:
    if se_senior < 0 or se_bg < 0:
        raise ValueError("standard errors must be non-negative")
    return math.sqrt(se_senior * se_senior + se_bg * se_bg)


def _lor(est) -> float:
    return est.lor_adj if hasattr(est, "lor_adj") else est.lor


def _se(est) -> float:
    return est.se_adj if hasattr(est, "se_adj") else est.se


@dataclass(frozen=True)
class DifferentialResult:
    term_id: str
    dc: float
    sigma: float
    q_t: float | None
    r_t: int
    m_total: int
    lower: float | None
    upper: float | None

    @property
    def ratio(self) -> float:
        return 2.0 ** self.dc

    @property
    def confident(self) -> bool:
        return self.lower is not None and self.lower > 1.0


def differential_estimates(senior: Mapping, bg: Mapping) -> dict:
    """(dc, sigma) for every term present in both estimate maps."""
    out = {}
    for term in sorted(set(senior) & set(bg)):
        s, b = senior[term], bg[term]
        out[term] = (differential_score(s, b), pooled_se(_se(s), _se(b)))
    return out


def differential_confidence(estimates: Mapping, grid: NullGrid = DIFF_GRID, alpha: float = 0.05) -> dict:
    """FCR-adjusted differential intervals for every term.

    ``estimates`` maps term to (dc, sigma); M is the number of terms.  A
    term is confident when its adjusted lower bound exceeds a ratio of 1.
    """
    scans = scan_null_grid(estimates, grid, alpha)
    m = len(estimates)
    out = {}
    for term, (dc, sigma) in estimates.items():
        scan = scans[term]
        if scan is None:
            out[term] = DifferentialResult(term, dc, sigma, None, 0, m, None, None)
            continue
        fcr = fcr_interval(dc, scan.q, scan.r, m, alpha)
        out[term] = DifferentialResult(term, dc, sigma, scan.q, scan.r, m, fcr.lower, fcr.upper)
    return out
