"""End-to-end analysis: validity, imputation, grid scan, FCR intervals, reports."""

from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .association import (
    DEFAULT_THRESHOLDS,
    BiasEstimate,
    BiasModel,
    ComorbidityLevel,
    bias_adjust,
    classify_level,
    estimate_selection_bias,
)
from .differential import DIFF_GRID, DifferentialResult, differential_confidence, differential_estimates
from .errors import CensoringInfeasibleError, ConfigError, InconsistentMarginalsError
from .imputation import ImputationConfig, PooledEstimate, impute_association
from .ingest import PopulationPair, RoundedCount, build_contingency, term_validity
from .multiplicity import NullGrid, fcr_interval, scan_null_grid

log = logging.getLogger(__name__)

HIST_BIN = 0.25


@dataclass(frozen=True)
class AnalysisConfig:
    alpha: float = 0.05
    mu: float = 3.0
    samples: int = 100
    seed: int = 0
    width: int = 5
    grid: NullGrid = NullGrid()
    diff_grid: NullGrid = DIFF_GRID
    thresholds: tuple[float, float, float] = DEFAULT_THRESHOLDS
    jobs: int = 1

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ConfigError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not self.mu >= 1:
            raise ConfigError(f"mu must be >= 1, got {self.mu}")
        if self.samples < 2:
            raise ConfigError(f"samples must be >= 2, got {self.samples}")
        if self.width < 0:
            raise ConfigError(f"width must be >= 0, got {self.width}")
        if len(self.thresholds) != 3 or any(not t > 0 for t in self.thresholds):
            raise ConfigError(f"thresholds must be three positive odds ratios, got {self.thresholds}")
        if self.jobs < 1:
            raise ConfigError(f"jobs must be >= 1, got {self.jobs}")

    @property
    def imputation(self) -> ImputationConfig:
        return ImputationConfig(samples=self.samples, seed=self.seed, width=self.width)

    @property
    def bias(self) -> BiasModel:
        return BiasModel(self.mu)


@dataclass(frozen=True)
class AssociationResult:
    term_id: str
    description: str
    counts: tuple[int, int, int, int]
    estimate: PooledEstimate
    q_t: float | None
    r_t: int
    m_total: int
    raw_lo: float | None
    raw_hi: float | None
    mu: float
    level: ComorbidityLevel

    @property
    def raw_or(self) -> float:
        return self.estimate.or_point

    @property
    def adj_or(self) -> float:
        return bias_adjust(self.raw_or, BiasModel(self.mu))

    @property
    def adj_lo(self) -> float | None:
        return None if self.raw_lo is None else bias_adjust(self.raw_lo, BiasModel(self.mu))

    @property
    def adj_hi(self) -> float | None:
        return None if self.raw_hi is None else bias_adjust(self.raw_hi, BiasModel(self.mu))


@dataclass
class PopulationAnalysis:
    name: str
    results: dict[str, AssociationResult] = field(default_factory=dict)
    invalid: dict[str, str] = field(default_factory=dict)
    bias: BiasEstimate | None = None

    @property
    def estimates(self) -> dict[str, PooledEstimate]:
        return {t: r.estimate for t, r in self.results.items()}

    def ranked(self) -> list[AssociationResult]:
        """Selected terms by descending raw lower bound, ties by term id."""
        rows = [r for r in self.results.values() if r.raw_lo is not None]
        return sorted(rows, key=lambda r: (-r.raw_lo, r.term_id))

    def below_threshold(self) -> list[AssociationResult]:
        return sorted((r for r in self.results.values() if r.raw_lo is None), key=lambda r: r.term_id)


def _impute_one(args):
    term, counts, cfg = args
    try:
        return term, impute_association(counts, cfg, term_id=term), None
    except CensoringInfeasibleError as exc:
        return term, None, f"censoring infeasible: {exc}"


def _point_reason(counts: Sequence[RoundedCount]) -> str | None:
    try:
        table = build_contingency(*(c.reported for c in counts))
    except InconsistentMarginalsError as exc:
        return f"inconsistent marginals: {exc}"
    if not term_validity(table):
        return f"zero cell in point table {table.cells()}"
    return None


def impute_terms(tasks: list, jobs: int = 1) -> list:
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_impute_one, tasks, chunksize=max(1, len(tasks) // (jobs * 8))))
    return [_impute_one(t) for t in tasks]


def analyze_population(pair: PopulationPair, config: AnalysisConfig = AnalysisConfig(),
                       terms: Sequence[str] | None = None) -> PopulationAnalysis:
    """Score every term of one population.

    Validity is decided on the point table before imputation.  Valid terms
    are imputed, scanned over the null grid together, and classified from
    their FCR lower bound.
    """
    analysis = PopulationAnalysis(pair.base.name)
    term_ids = sorted(terms) if terms is not None else pair.terms()
    tasks = []
    for term in term_ids:
        counts = pair.counts(term)
        reason = _point_reason(counts)
        if reason:
            analysis.invalid[term] = reason
        else:
            tasks.append((term, counts, config.imputation))
    estimates = {}
    for term, est, reason in impute_terms(tasks, config.jobs):
        if est is None:
            analysis.invalid[term] = reason
        else:
            estimates[term] = est
    log.info("%s: %d valid terms, %d invalid", analysis.name, len(estimates), len(analysis.invalid))

    scans = scan_null_grid(estimates, config.grid, config.alpha)
    m = len(estimates)
    for term in sorted(estimates):
        est = estimates[term]
        scan = scans[term]
        raw_lo = raw_hi = q_t = None
        r_t = 0
        if scan is not None:
            fcr = fcr_interval(est.lor_adj, scan.q, scan.r, m, config.alpha)
            raw_lo, raw_hi, q_t, r_t = fcr.lower, fcr.upper, scan.q, scan.r
        analysis.results[term] = AssociationResult(
            term_id=term,
            description=pair.description(term),
            counts=tuple(c.reported for c in pair.counts(term)),
            estimate=est,
            q_t=q_t,
            r_t=r_t,
            m_total=m,
            raw_lo=raw_lo,
            raw_hi=raw_hi,
            mu=config.mu,
            level=classify_level(raw_lo, config.thresholds),
        )
    if estimates:
        analysis.bias = estimate_selection_bias(e.or_point for e in estimates.values())
        log.info("%s: geometric-mean OR %.3f [q25 %.3f, q75 %.3f]", analysis.name,
                 analysis.bias.mu, analysis.bias.q25, analysis.bias.q75)
    else:
        log.warning("%s: no valid terms", analysis.name)
    return analysis


@dataclass
class DifferentialAnalysis:
    senior: PopulationAnalysis
    bg: PopulationAnalysis
    results: dict[str, DifferentialResult] = field(default_factory=dict)

    def ranked(self) -> list[DifferentialResult]:
        def key(r):
            return (0, -r.lower, r.term_id) if r.lower is not None else (1, 0.0, r.term_id)
        return sorted(self.results.values(), key=key)


def analyze_differential(senior: PopulationPair, bg: PopulationPair,
                         config: AnalysisConfig = AnalysisConfig()) -> DifferentialAnalysis:
    terms = sorted(set(senior.terms()) | set(bg.terms()))
    s = analyze_population(senior, config, terms)
    b = analyze_population(bg, config, terms)
    estimates = differential_estimates(s.estimates, b.estimates)
    log.info("differential: %d terms valid in both populations", len(estimates))
    results = differential_confidence(estimates, config.diff_grid, config.alpha)
    return DifferentialAnalysis(s, b, results)


# -- report writing ---------------------------------------------------------

def fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return f"{value:.6g}"


def _write_tsv(path: Path, header: Sequence[str], rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, delimiter="\t", lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) if not isinstance(v, str) else v for v in row])


RESULT_COLUMNS = (
    "term_id", "description", "raw_or", "raw_lo", "raw_hi", "adj_or", "adj_lo", "adj_hi",
    "level", "q_t", "r_t", "n_z", "n_z_cond", "n_z_term", "n_z_term_cond", "lor", "se",
)


def _result_row(r: AssociationResult):
    return (r.term_id, r.description, r.raw_or, r.raw_lo, r.raw_hi, r.adj_or, r.adj_lo, r.adj_hi,
            r.level.value, r.q_t, r.r_t, *r.counts, r.estimate.lor_adj, r.estimate.se_adj)


def histogram_rows(values: Sequence[float], markers: Mapping[str, float], width: float = HIST_BIN):
    """Histogram of log2 scores in bins aligned to multiples of ``width``."""
    rows = []
    vals = np.asarray(list(values), dtype=float)
    if vals.size:
        first = math.floor(vals.min() / width)
        last = math.floor(vals.max() / width)
        idx = np.floor(vals / width).astype(int) - first
        counts = np.bincount(idx, minlength=last - first + 1)
        for k, count in enumerate(counts):
            lo = (first + k) * width
            rows.append(("bin", lo, lo + width, int(count), ""))
    for label, value in markers.items():
        rows.append(("threshold", value, value, None, label))
    return rows


HIST_COLUMNS = ("kind", "log2_lo", "log2_hi", "count", "label")


def write_population_reports(analysis: PopulationAnalysis, config: AnalysisConfig, out_dir,
                             prefix: str = "") -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / f"{prefix}results.tsv", out / f"{prefix}below_threshold.tsv",
             out / f"{prefix}invalid.tsv", out / f"{prefix}histogram.tsv", out / f"{prefix}summary.tsv"]
    _write_tsv(paths[0], RESULT_COLUMNS, (_result_row(r) for r in analysis.ranked()))
    _write_tsv(paths[1], RESULT_COLUMNS, (_result_row(r) for r in analysis.below_threshold()))
    _write_tsv(paths[2], ("term_id", "reason"), sorted(analysis.invalid.items()))
    names = ("Minor", "Moderate", "High")
    markers = {n: math.log2(t) for n, t in zip(names, sorted(config.thresholds))}
    lors = [r.estimate.lor_adj for r in analysis.results.values()]
    _write_tsv(paths[3], HIST_COLUMNS, histogram_rows(lors, markers))
    _write_tsv(paths[4], ("key", "value"), summary_rows(analysis))
    return paths


def summary_rows(analysis: PopulationAnalysis):
    rows = [("population", analysis.name),
            ("valid_terms", len(analysis.results)),
            ("invalid_terms", len(analysis.invalid))]
    for level in ComorbidityLevel:
        rows.append((f"level_{level.value}", sum(r.level is level for r in analysis.results.values())))
    if analysis.bias is not None:
        rows += [("bias_geomean_or", analysis.bias.mu),
                 ("bias_q25_or", analysis.bias.q25),
                 ("bias_q75_or", analysis.bias.q75)]
    return rows


DIFF_COLUMNS = (
    "term_id", "description",
    "senior_adj_or", "senior_adj_lo", "senior_adj_hi", "senior_level",
    "bg_adj_or", "bg_adj_lo", "bg_adj_hi", "bg_level",
    "dc_ratio", "dc_lo", "dc_hi", "confident",
)
SCATTER_COLUMNS = ("term_id", "or_min_senior", "or_min_bg", "level_senior", "level_bg", "differential")


def write_differential_reports(diff: DifferentialAnalysis, config: AnalysisConfig, out_dir) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = write_population_reports(diff.senior, config, out, prefix="senior_")
    paths += write_population_reports(diff.bg, config, out, prefix="bg_")
    rows, scatter = [], []
    for d in diff.ranked():
        s = diff.senior.results[d.term_id]
        b = diff.bg.results[d.term_id]
        rows.append((d.term_id, s.description,
                     s.adj_or, s.adj_lo, s.adj_hi, s.level.value,
                     b.adj_or, b.adj_lo, b.adj_hi, b.level.value,
                     d.ratio, d.lower, d.upper, d.confident))
    for term in sorted(diff.results):
        d = diff.results[term]
        s = diff.senior.results[term]
        b = diff.bg.results[term]
        scatter.append((term, s.raw_lo, b.raw_lo, s.level.value, b.level.value, d.confident))
    diff_path, scatter_path, hist_path = out / "diff.tsv", out / "scatter.tsv", out / "diff_histogram.tsv"
    _write_tsv(diff_path, DIFF_COLUMNS, rows)
    _write_tsv(scatter_path, SCATTER_COLUMNS, scatter)
    _write_tsv(hist_path, HIST_COLUMNS,
               histogram_rows([d.dc for d in diff.results.values()], {"Null": 0.0}))
    return paths + [diff_path, scatter_path, hist_path]
