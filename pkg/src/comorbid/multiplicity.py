"""Benjamini-Hochberg selection over a grid of null odds-ratio levels.

For each null level Q on a log2 grid, every term is tested against
"OR = Q" and the BH step-up rule is applied across terms.  A term's Q(t)
is the largest grid level at which it is still selected and R(t) the size
of the selection there.  The FCR-adjusted interval of a selected term is
[Q(t), OR^2 / Q(t)], i.e. symmetric about the point estimate on the log
scale.

Two equivalent scans are provided.  ``scan_null_grid_reference`` runs BH
literally at every grid level.  ``scan_null_grid`` solves for each term's
selection boundary in closed form and only then snaps it to the grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Hashable, Mapping

import numpy as np
from scipy.stats import norm

from .errors import DegenerateError, DomainError, NotSelectedError


@dataclass(frozen=True)
class NullGrid:
    """Null levels lo, lo + step, ..., hi on the log2 scale.

    Endpoints are snapped outward to integer multiples of ``step`` so that
    grid points, including 0 (OR = 1), are represented without drift.
    """

    lo: float = -2.0
    hi: float = 12.0
    step: float = 0.01

    def __post_init__(self):
        if not self.step > 0:
            raise DomainError(f"grid step must be positive, got {self.step}")
        if not self.lo < self.hi:
            raise DomainError(f"grid lo ({self.lo}) must be below hi ({self.hi})")

    @classmethod
    def from_odds(cls, q_lo: float, q_hi: float, step: float = 0.01) -> "NullGrid":
        if q_lo <= 0 or q_hi <= 0:
            raise DomainError("grid bounds must be positive odds ratios")
        return cls(math.log2(q_lo), math.log2(q_hi), step)

    @property
    def first(self) -> int:
        return math.floor(self.lo / self.step + 1e-9)

    @property
    def last(self) -> int:
        return math.ceil(self.hi / self.step - 1e-9)

    def indices(self) -> np.ndarray:
        return np.arange(self.first, self.last + 1)

    def levels(self) -> np.ndarray:
        """Grid points on the log2 scale."""
        return self.indices() * self.step

    def __len__(self):
        return self.last - self.first + 1


@dataclass(frozen=True)
class NullScan:
    """Q(t) as a grid index plus the BH selection size R(t) at that level."""

    index: int
    step: float
    r: int

    @property
    def q_log2(self) -> float:
        return self.index * self.step

    @property
    def q(self) -> float:
        return 2.0 ** self.q_log2


@dataclass(frozen=True)
class FcrResult:
    q_max: float
    r_at_q: int
    m_total: int
    lower: float
    upper: float
    alpha: float

    @property
    def level(self) -> float:
        """Confidence level 1 - alpha * R(t) / M the interval corresponds to."""
        return 1.0 - self.alpha * self.r_at_q / self.m_total


def p_value_at_null(lor: float, se: float, q: float) -> float:
    """Two-sided normal p-value for H0: OR = q."""
    if not se > 0:
        raise DegenerateError(f"standard error must be positive, got {se}")
    z = abs(lor - math.log2(q)) / se
    return float(2.0 * norm.sf(z))


def directional_p_values(lors: np.ndarray, ses: np.ndarray, null_log2: float) -> np.ndarray:
    """Two-sided p-values, set to 1 for terms not exceeding the null level."""
    p = 2.0 * norm.sf((lors - null_log2) / ses)
    return np.where(lors > null_log2, p, 1.0)


def bh_count(pvalues: np.ndarray, alpha: float) -> int:
    """Number of hypotheses the BH step-up rule rejects."""
    p = np.sort(np.asarray(pvalues, dtype=float))
    m = p.size
    if m == 0:
        return 0
    passed = np.nonzero(p <= alpha * np.arange(1, m + 1) / m)[0]
    return int(passed[-1]) + 1 if passed.size else 0


def bh_mask(pvalues: np.ndarray, alpha: float) -> np.ndarray:
    p = np.asarray(pvalues, dtype=float)
    k = bh_count(p, alpha)
    if k == 0:
        return np.zeros(p.size, dtype=bool)
    return p <= alpha * k / p.size


def bh_select(pvalues: Mapping[Hashable, float], alpha: float) -> set:
    """Keys selected by the BH step-up rule at FDR level ``alpha``."""
    keys = list(pvalues)
    mask = bh_mask(np.array([pvalues[k] for k in keys], dtype=float), alpha)
    return {k for k, hit in zip(keys, mask) if hit}


def _as_arrays(estimates: Mapping) -> tuple[list, np.ndarray, np.ndarray]:
    keys = sorted(estimates)
    lors = np.empty(len(keys))
    ses = np.empty(len(keys))
    for i, key in enumerate(keys):
        est = estimates[key]
        if hasattr(est, "lor_adj"):
            lors[i], ses[i] = est.lor_adj, est.se_adj
        else:
            lors[i], ses[i] = est
    if np.any(~(ses > 0)):
        raise DegenerateError("every standard error must be positive")
    return keys, lors, ses


def _collect(keys, index, r, grid) -> dict:
    out = {}
    for key, idx, rr in zip(keys, index, r):
        out[key] = None if idx is None else NullScan(int(idx), grid.step, int(rr))
    return out


def scan_null_grid_reference(estimates: Mapping, grid: NullGrid = NullGrid(), alpha: float = 0.05) -> dict:
    """Literal scan: BH at every grid level, keep each term's highest selection."""
    keys, lors, ses = _as_arrays(estimates)
    best = [None] * len(keys)
    r = [0] * len(keys)
    for idx, level in zip(grid.indices(), grid.levels()):
        mask = bh_mask(directional_p_values(lors, ses, level), alpha)
        k = int(mask.sum())
        for i in np.nonzero(mask)[0]:
            best[i] = idx
            r[i] = k
    return _collect(keys, best, r, grid)


def selection_boundaries(lors: np.ndarray, ses: np.ndarray, alpha: float) -> tuple[np.ndarray, np.ndarray]:
    """Continuous selection boundary of every term, plus BH reach per rank.

    At null level x, term t clears the rank-k threshold alpha*k/M iff
    x <= lor_t - se_t * z_k with z_k = Phi^-1(1 - alpha*k / (2M)).  BH
    rejects at least k terms iff x <= reach[k-1], the suffix maximum of the
    k-th largest rank-k boundary.  A term is selected at x iff it clears
    some rank k with x <= reach[k-1]; selection shrinks monotonically in x,
    so the boundary is max_k min(lor_t - se_t z_k, reach[k-1]).
    """
    m = lors.size
    ranks = np.arange(1, m + 1)
    z = norm.isf(alpha * ranks / (2.0 * m))
    kth = np.empty(m)
    for k in range(m):
        xs = lors - ses * z[k]
        kth[k] = np.partition(xs, m - 1 - k)[m - 1 - k]
    reach = np.maximum.accumulate(kth[::-1])[::-1]
    boundary = np.full(m, -np.inf)
    for k in range(m):
        np.maximum(boundary, np.minimum(lors - ses * z[k], reach[k]), out=boundary)
    return boundary, reach


def scan_null_grid(estimates: Mapping, grid: NullGrid = NullGrid(), alpha: float = 0.05) -> dict:
    """Q(t) and R(t) per term via closed-form boundaries snapped to the grid.

    Returns ``{term: NullScan}``, with ``None`` for terms not selected even
    at the lowest grid level.  Agrees with the literal scan up to one grid
    step at exact ties.
    """
    keys, lors, ses = _as_arrays(estimates)
    if not keys:
        return {}
    boundary, reach = selection_boundaries(lors, ses, alpha)
    # reach is non-increasing; R at level x is the count of ranks with reach >= x
    neg_reach = -reach
    index, r = [], []
    for b in boundary:
        idx = math.floor(b / grid.step + 1e-9) if np.isfinite(b) else None
        if idx is None or idx < grid.first:
            index.append(None)
            r.append(0)
            continue
        idx = min(idx, grid.last)
        index.append(idx)
        r.append(int(np.searchsorted(neg_reach, -idx * grid.step, side="right")))
    return _collect(keys, index, r, grid)


def fcr_interval(lor: float, q_t: float | None, r_t: int, m_total: int, alpha: float = 0.05) -> FcrResult:
    """FCR-adjusted interval [Q(t), 2^(2 lor - log2 Q(t))] on the odds-ratio scale."""
    if q_t is None:
        raise NotSelectedError("term is not selected at any null level")
    if not 1 <= r_t <= m_total:
        raise DomainError(f"R(t)={r_t} must lie in [1, M={m_total}]")
    upper = 2.0 ** (2.0 * lor - math.log2(q_t))
    return FcrResult(q_max=q_t, r_at_q=r_t, m_total=m_total, lower=q_t, upper=upper, alpha=alpha)
