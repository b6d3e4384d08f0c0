"""Co-morbidity scores: log2 odds ratios, Wald standard errors and intervals.

All scores live on the log2 scale.  The natural-log Wald variance is
converted once, by dividing the standard error by ln 2.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.stats import norm

from .errors import DomainError, NonFiniteError
from .ingest import ContingencyTable

LN2 = math.log(2.0)
DEFAULT_THRESHOLDS = (3.0, 5.0, 10.0)


def _cells(table) -> tuple[float, float, float, float]:
    if isinstance(table, ContingencyTable):
        return table.cells()
    a, b, c, d = table
    return a, b, c, d


def _check_positive(cells, correction: bool):
    if min(cells) < 0:
        raise DomainError(f"negative cell in {cells}")
    if min(cells) == 0:
        if not correction:
            raise NonFiniteError(f"zero cell in {tuple(cells)}")
        cells = tuple(x + 0.5 for x in cells)
    return cells


def log_odds_ratio(table, correction: bool = False) -> float:
    """log2((a*d) / (b*c)) for a 2x2 table.

    With ``correction`` a zero cell triggers the Haldane-Anscombe correction
    (0.5 added to every cell); otherwise it raises NonFiniteError.
    """
    a, b, c, d = _check_positive(_cells(table), correction)
    # grouped sums keep swapping rows an exact negation
    return (math.log2(a) + math.log2(d)) - (math.log2(b) + math.log2(c))


def wald_standard_error(table, correction: bool = False) -> float:
    a, b, c, d = _check_positive(_cells(table), correction)
    return math.sqrt(1.0 / a + 1.0 / b + 1.0 / c + 1.0 / d) / LN2


def lor_and_se_arrays(a, b, c, d):
    """Vectorised log2 odds ratio and standard error; cells must be positive."""
    a, b, c, d = (np.asarray(x, dtype=float) for x in (a, b, c, d))
    lor = (np.log2(a) + np.log2(d)) - (np.log2(b) + np.log2(c))
    se = np.sqrt(1.0 / a + 1.0 / b + 1.0 / c + 1.0 / d) / LN2
    return lor, se


@dataclass(frozen=True)
class AssociationEstimate:
    lor: float
    se: float

    def __post_init__(self):
        if self.se < 0:
            raise DomainError(f"negative standard error {self.se}")

    @property
    def or_point(self) -> float:
        return 2.0 ** self.lor

    @classmethod
    def from_table(cls, table, correction: bool = False) -> "AssociationEstimate":
        return cls(log_odds_ratio(table, correction), wald_standard_error(table, correction))


@dataclass(frozen=True)
class IntervalSpec:
    """Two-sided normal interval at level 1 - alpha."""

    alpha: float = 0.05

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise DomainError(f"alpha must lie in (0, 1), got {self.alpha}")

    @property
    def z_alpha(self) -> float:
        return float(norm.ppf(1.0 - self.alpha / 2.0))


def confidence_interval(est: AssociationEstimate, spec: IntervalSpec = IntervalSpec()) -> tuple[float, float]:
    """Symmetric interval on the log2 scale."""
    half = spec.z_alpha * est.se
    return est.lor - half, est.lor + half


@dataclass(frozen=True)
class BiasModel:
    """Null odds-ratio level attributed to selection bias."""

    mu: float = 3.0

    def __post_init__(self):
        if not self.mu >= 1.0:
            raise DomainError(f"bias level mu must be >= 1, got {self.mu}")


def bias_adjust(or_value: float, model: BiasModel = BiasModel()) -> float:
    """Remove the selection-bias share of an odds ratio (a shift of -log2 mu)."""
    if not or_value > 0:
        raise DomainError(f"odds ratio must be positive, got {or_value}")
    return or_value / model.mu


class ComorbidityLevel(enum.Enum):
    NOT_SIGNIFICANT = "NotSignificant"
    MINOR = "Minor"
    MODERATE = "Moderate"
    HIGH = "High"

    @property
    def rank(self) -> int:
        return _LEVEL_ORDER.index(self)

    @property
    def abbrev(self) -> str:
        return {"High": "H", "Moderate": "M", "Minor": "m", "NotSignificant": ""}[self.value]


_LEVEL_ORDER = [
    ComorbidityLevel.NOT_SIGNIFICANT,
    ComorbidityLevel.MINOR,
    ComorbidityLevel.MODERATE,
    ComorbidityLevel.HIGH,
]


def classify_level(or_min_raw: float | None, thresholds: Sequence[float] = DEFAULT_THRESHOLDS) -> ComorbidityLevel:
    """Label a term from the lower bound of its adjusted raw-OR interval.

    Boundaries are strict: a lower bound of exactly 10 is Moderate, not High.
    ``None`` (never significant) is NotSignificant.
    """
    minor, moderate, high = sorted(thresholds)
    if or_min_raw is None:
        return ComorbidityLevel.NOT_SIGNIFICANT
    if or_min_raw > high:
        return ComorbidityLevel.HIGH
    if or_min_raw > moderate:
        return ComorbidityLevel.MODERATE
    if or_min_raw > minor:
        return ComorbidityLevel.MINOR
    return ComorbidityLevel.NOT_SIGNIFICANT


@dataclass(frozen=True)
class BiasEstimate:
    """Geometric mean of term odds ratios and the quartiles of their spread."""

    mu: float
    q25: float
    q75: float
    n_terms: int

    def model(self) -> BiasModel:
        return BiasModel(max(1.0, self.mu))


def estimate_selection_bias(scores: Iterable[float]) -> BiasEstimate:
    """Estimate a global bias level from the point odds ratios of valid terms."""
    ors = np.asarray(list(scores), dtype=float)
    if ors.size == 0:
        raise DomainError("bias estimation needs at least one valid term")
    if np.any(~np.isfinite(ors)) or np.any(ors <= 0):
        raise DomainError("odds ratios must be finite and positive")
    logs = np.log2(ors)
    q25, q75 = np.percentile(logs, [25, 75])
    return BiasEstimate(
        mu=float(2.0 ** logs.mean()),
        q25=float(2.0 ** q25),
        q75=float(2.0 ** q75),
        n_terms=int(ors.size),
    )
