"""Multiple imputation of rounded counts.

Every reported aggregate is redrawn uniformly from its censoring interval,
the contingency table is rebuilt from the draws, and the per-draw scores
are pooled with Rubin's rules.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .association import log_odds_ratio, lor_and_se_arrays, wald_standard_error
from .errors import CensoringInfeasibleError, DomainError
from .ingest import CENSOR_WIDTH, RoundedCount

MAX_ATTEMPTS = 1000


@dataclass(frozen=True)
class ImputationConfig:
    samples: int = 100
    seed: int = 0
    width: int = CENSOR_WIDTH

    def __post_init__(self):
        if self.samples < 2:
            raise DomainError(f"imputation needs at least 2 samples, got {self.samples}")
        if self.width < 0:
            raise DomainError(f"censoring width must be >= 0, got {self.width}")


@dataclass(frozen=True)
class PooledEstimate:
    lor_adj: float
    within: float
    between: float
    se_adj: float
    samples: int

    @property
    def or_point(self) -> float:
        return 2.0 ** self.lor_adj


def term_rng(seed: int, term_id: str) -> np.random.Generator:
    """Independent stream for one term, stable across runs and workers."""
    digest = hashlib.blake2b(term_id.encode("utf-8"), digest_size=8).digest()
    key = int.from_bytes(digest, "little")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed & (2**64 - 1), key])))


def draw_count_sample(reported, rng: np.random.Generator, width: int = CENSOR_WIDTH, size=None):
    """Uniform integer draw from [reported - width, reported + width], floored at 0.

    Draws below zero are clamped to zero rather than redrawn.
    """
    value = reported.reported if isinstance(reported, RoundedCount) else int(reported)
    if width == 0 or (isinstance(reported, RoundedCount) and reported.exact):
        return value if size is None else np.full(size, value, dtype=np.int64)
    draws = rng.integers(value - width, value + width, size=size, endpoint=True)
    return np.maximum(draws, 0) if size is not None else max(int(draws), 0)


def draw_tables(counts: Sequence, cfg: ImputationConfig, rng: np.random.Generator) -> np.ndarray:
    """Draw ``cfg.samples`` feasible tables, shape (samples, 4).

    Infeasible draws (a negative derived cell) are redrawn; a sample that
    stays infeasible for MAX_ATTEMPTS draws raises CensoringInfeasibleError.
    """
    m = cfg.samples
    tables = np.empty((m, 4), dtype=np.int64)
    pending = np.arange(m)
    attempts = 0
    while pending.size:
        attempts += 1
        if attempts > MAX_ATTEMPTS:
            raise CensoringInfeasibleError(
                f"{pending.size} imputation samples infeasible after {MAX_ATTEMPTS} draws"
            )
        n, n_cond, n_term, n_both = (draw_count_sample(c, rng, cfg.width, pending.size) for c in counts)
        a = n_both
        b = n_cond - n_both
        c = n_term - n_both
        d = n + n_both - n_cond - n_term
        cells = np.stack([a, b, c, d], axis=1)
        ok = cells.min(axis=1) >= 0
        tables[pending[ok]] = cells[ok]
        pending = pending[~ok]
    return tables


def score_tables(tables: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-sample log2 OR and SE, with a 0.5 correction on tables holding a zero."""
    cells = tables.astype(float)
    zero = cells.min(axis=1) == 0
    cells[zero] += 0.5
    return lor_and_se_arrays(cells[:, 0], cells[:, 1], cells[:, 2], cells[:, 3])


def pool(lors, ses) -> PooledEstimate:
    """Rubin's rules over m imputations.

    between uses the m - 1 divisor and the total variance inflates it by
    (m + 1) / m.  Identical samples pool to exactly the shared estimate.
    """
    lors = np.asarray(lors, dtype=float)
    ses = np.asarray(ses, dtype=float)
    m = lors.size
    if m < 2:
        raise DomainError("pooling needs at least 2 samples")
    if np.all(lors == lors[0]) and np.all(ses == ses[0]):
        se0 = float(ses[0])
        return PooledEstimate(float(lors[0]), se0 * se0, 0.0, se0, m)
    lor_adj = float(lors.mean())
    within = float(np.mean(ses ** 2))
    between = float(np.sum((lor_adj - lors) ** 2) / (m - 1))
    se_adj = math.sqrt(within + (m + 1) / m * between)
    return PooledEstimate(lor_adj, within, between, se_adj, m)


def impute_association(counts: Sequence, cfg: ImputationConfig = ImputationConfig(),
                       rng: np.random.Generator | None = None, term_id: str | None = None) -> PooledEstimate:
    """Pooled log2 OR and censoring-aware SE for one term.

    ``counts`` are the four aggregates (N, N(cond), N(t), N(t, cond)) as
    RoundedCount or plain integers.  The random stream is ``rng`` when given,
    else the per-term stream keyed by (cfg.seed, term_id).
    """
    if rng is None:
        rng = term_rng(cfg.seed, term_id or "")
    tables = draw_tables(counts, cfg, rng)
    if np.all(tables == tables[0]):
        cells = tuple(int(x) for x in tables[0])
        correction = min(cells) == 0
        se = wald_standard_error(cells, correction)
        return PooledEstimate(log_odds_ratio(cells, correction), se * se, 0.0, se, cfg.samples)
    lors, ses = score_tables(tables)
    return pool(lors, ses)

