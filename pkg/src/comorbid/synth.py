"""Synthetic cohort exports with planted odds ratios.

Each term gets a target odds ratio (planted effect times selection bias)
and its 2x2 table is solved so the aggregates reproduce that target.  In
stochastic mode the term counts inside and outside the condition cohort are
instead drawn binomially from the solved rates, which keeps the condition
cohort size fixed across terms.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigError, InfeasibleEffectError
from .ingest import Cohort, ContingencyTable, PopulationPair, RoundedCount, round_to_ten, save_cohort


@dataclass(frozen=True)
class TermSpec:
    term_id: str
    base_rate: float
    planted_or: float
    planted_bias: float = 1.0
    description: str = ""

    @property
    def target_or(self) -> float:
        return self.planted_or * self.planted_bias


@dataclass(frozen=True)
class SynthConfig:
    n_base: int
    n_condition: int
    terms: Sequence[TermSpec] = ()
    rounding_width: int = 5
    seed: int = 0
    stochastic: bool = False
    name: str = "pop"

    def __post_init__(self):
        if not 0 < self.n_condition < self.n_base:
            raise ConfigError(
                f"need 0 < n_condition < n_base, got {self.n_condition} and {self.n_base}"
            )
        if self.rounding_width not in (0, 5):
            raise ConfigError(f"rounding_width must be 0 or 5, got {self.rounding_width}")
        seen = set()
        for t in self.terms:
            if t.term_id in seen:
                raise ConfigError(f"duplicate term id {t.term_id!r}")
            seen.add(t.term_id)
            if not 0 < t.base_rate < 1:
                raise ConfigError(f"term {t.term_id!r}: base_rate must lie in (0, 1), got {t.base_rate}")
            if not t.planted_or > 0 or not t.planted_bias > 0:
                raise ConfigError(f"term {t.term_id!r}: planted_or and planted_bias must be positive")


@dataclass(frozen=True)
class TruthRow:
    population: str
    term_id: str
    planted_or: float
    planted_bias: float
    table: ContingencyTable

    @property
    def target_or(self) -> float:
        return self.planted_or * self.planted_bias


@dataclass
class SyntheticPopulation:
    pair: PopulationPair
    truth: list[TruthRow] = field(default_factory=list)


def _real_root(n: float, n_cond: float, n_term: float, target: float) -> float:
    """Cell a of the real-valued table with the given marginals and odds ratio.

    a solves (1 - R) a^2 + (N - Nt - Nc + R (Nc + Nt)) a - R Nc Nt = 0; the
    form below picks the root inside the feasible range and stays stable as
    R approaches 1.
    """
    quad = 1.0 - target
    lin = n - n_term - n_cond + target * (n_cond + n_term)
    const = -target * n_cond * n_term
    disc = lin * lin - 4.0 * quad * const
    return -2.0 * const / (lin + math.sqrt(disc))


def solve_cells_from_or(n: int, n_cond: int, p_t: float, or_target: float,
                        integer: bool = True) -> ContingencyTable | tuple[float, float, float, float]:
    """Table with marginals (n, n_cond, round(p_t * n)) and odds ratio ``or_target``.

    Integer tables are rounded from the real solution and must keep every
    cell at least 1, otherwise InfeasibleEffectError.
    """
    if not or_target > 0:
        raise InfeasibleEffectError(f"odds ratio must be positive, got {or_target}")
    n_term = round(p_t * n)
    if n_term + n_cond >= n or n_term < 1:
        raise InfeasibleEffectError(f"marginals N={n}, N(cond)={n_cond}, N(t)={n_term} leave no free cell")
    a = _real_root(n, n_cond, n_term, or_target)
    if not integer:
        return a, n_cond - a, n_term - a, n - n_cond - n_term + a
    ai = int(round(a))
    table = (ai, n_cond - ai, n_term - ai, n - n_cond - n_term + ai)
    if min(table) < 1:
        raise InfeasibleEffectError(
            f"odds ratio {or_target:g} is not achievable with all cells >= 1 "
            f"(N={n}, N(cond)={n_cond}, N(t)={n_term})"
        )
    return ContingencyTable(*table)


def _stochastic_table(n, n_cond, spec: TermSpec, rng) -> ContingencyTable:
    a, b, c, d = solve_cells_from_or(n, n_cond, spec.base_rate, spec.target_or, integer=False)
    p_in = a / n_cond
    p_out = c / (n - n_cond)
    ai = int(rng.binomial(n_cond, p_in))
    ci = int(rng.binomial(n - n_cond, p_out))
    return ContingencyTable(ai, n_cond - ai, ci, n - n_cond - ci)


def generate_cohort_pair(cfg: SynthConfig) -> SyntheticPopulation:
    """Exact (unrounded) base and condition cohorts plus the truth ledger."""
    rng = np.random.default_rng(cfg.seed)
    base_freq, cond_freq, catalog = {}, {}, {}
    truth = []
    for spec in cfg.terms:
        try:
            if cfg.stochastic:
                table = _stochastic_table(cfg.n_base, cfg.n_condition, spec, rng)
            else:
                table = solve_cells_from_or(cfg.n_base, cfg.n_condition, spec.base_rate, spec.target_or)
        except InfeasibleEffectError as exc:
            raise InfeasibleEffectError(str(exc), term_id=spec.term_id) from None
        base_freq[spec.term_id] = RoundedCount(table.a + table.c, exact=True)
        cond_freq[spec.term_id] = RoundedCount(table.a, exact=True)
        catalog[spec.term_id] = spec.description or spec.term_id
        truth.append(TruthRow(cfg.name, spec.term_id, spec.planted_or, spec.planted_bias, table))
    base = Cohort(cfg.name, RoundedCount(cfg.n_base, exact=True), base_freq, catalog)
    cond = Cohort(f"{cfg.name}_condition", RoundedCount(cfg.n_condition, exact=True), cond_freq, dict(catalog))
    return SyntheticPopulation(PopulationPair(base, cond), truth)


def _round_cohort(cohort: Cohort) -> Cohort:
    freq = {t: RoundedCount(round_to_ten(c.reported)) for t, c in cohort.freq.items()}
    return Cohort(cohort.name, RoundedCount(round_to_ten(cohort.total.reported)), freq, cohort.catalog)


def round_export(pair: PopulationPair, width: int = 5) -> PopulationPair:
    """Round every count to the nearest ten; width 0 leaves counts exact."""
    if width not in (0, 5):
        raise ConfigError(f"rounding width must be 0 or 5, got {width}")
    if width == 0:
        return pair
    return PopulationPair(_round_cohort(pair.base), _round_cohort(pair.condition))


def simulate(cfg: SynthConfig) -> SyntheticPopulation:
    """Generate and round a population as configured."""
    pop = generate_cohort_pair(cfg)
    return SyntheticPopulation(round_export(pop.pair, cfg.rounding_width), pop.truth)


# -- multi-population configuration files ---------------------------------

def default_simulation_config() -> dict:
    """Two populations sharing 60 terms: nulls at the bias level plus planted effects."""
    terms = []
    rates = np.geomspace(0.0005, 0.05, 50)
    for i, rate in enumerate(rates):
        terms.append({"term_id": f"N{i:03d}", "description": f"Null term {i}",
                      "base_rate": float(round(rate, 6)), "planted_or": 1.0})
    effects = [
        ("H001", "Planted differential effect", 0.002, {"senior": 10.0, "bg": 2.0}),
        ("H002", "Planted shared high effect", 0.004, 10.0),
        ("H003", "Planted shared moderate effect", 0.004, 4.0),
        ("H004", "Planted senior-only effect", 0.003, {"senior": 6.0, "bg": 1.0}),
        ("H005", "Planted background-only effect", 0.003, {"senior": 1.0, "bg": 6.0}),
        ("H006", "Common weak effect", 0.02, 1.5),
        ("H007", "Protective term", 0.02, 0.5),
        ("H008", "Rare strong effect", 0.0008, 8.0),
        ("H009", "Frequent minor effect", 0.03, 2.0),
        ("H010", "Planted differential moderate", 0.01, {"senior": 4.0, "bg": 1.5}),
    ]
    for term_id, desc, rate, effect in effects:
        terms.append({"term_id": term_id, "description": desc, "base_rate": rate, "planted_or": effect})
    return {
        "seed": 2019,
        "rounding_width": 5,
        "stochastic": False,
        "populations": [
            {"name": "senior", "n_base": 5253320, "n_condition": 4300, "bias": 3.0},
            {"name": "bg", "n_base": 13164960, "n_condition": 15000, "bias": 3.0},
        ],
        "terms": terms,
    }


def configs_from_dict(raw: dict, seed: int | None = None, width: int | None = None) -> list[SynthConfig]:
    """Per-population SynthConfigs from a parsed simulation config."""
    try:
        base_seed = int(raw.get("seed", 0) if seed is None else seed)
        rounding = int(raw.get("rounding_width", 5) if width is None else width)
        stochastic = bool(raw.get("stochastic", False))
        pops = raw["populations"]
        term_rows = raw.get("terms", [])
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed simulation config: {exc}") from None
    configs = []
    for index, pop in enumerate(pops):
        try:
            name = str(pop["name"])
            bias = float(pop.get("bias", 1.0))
            terms = []
            for row in term_rows:
                effect = row["planted_or"]
                if isinstance(effect, dict):
                    effect = effect[name]
                term_bias = row.get("planted_bias", bias)
                if isinstance(term_bias, dict):
                    term_bias = term_bias[name]
                terms.append(TermSpec(
                    term_id=str(row["term_id"]),
                    base_rate=float(row["base_rate"]),
                    planted_or=float(effect),
                    planted_bias=float(term_bias),
                    description=str(row.get("description", "")),
                ))
            pop_seed = int(np.random.SeedSequence([base_seed, index]).generate_state(1)[0])
            configs.append(SynthConfig(
                n_base=int(pop["n_base"]),
                n_condition=int(pop["n_condition"]),
                terms=terms,
                rounding_width=rounding,
                seed=pop_seed,
                stochastic=stochastic,
                name=name,
            ))
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"population {index}: malformed entry ({exc!r})") from None
    if not configs:
        raise ConfigError("simulation config defines no populations")
    return configs


def load_simulation_config(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None


TRUTH_COLUMNS = ("population", "term_id", "planted_or", "planted_bias", "a", "b", "c", "d")


def write_outputs(populations: Sequence[SyntheticPopulation], out_dir) -> list[Path]:
    """Write <name>_base.csv and <name>_condition.csv per population plus truth.csv."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for pop in populations:
        name = pop.pair.base.name
        for role, cohort in (("base", pop.pair.base), ("condition", pop.pair.condition)):
            path = out / f"{name}_{role}.csv"
            save_cohort(cohort, path)
            written.append(path)
    truth_path = out / "truth.csv"
    with open(truth_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRUTH_COLUMNS)
        for pop in populations:
            for row in pop.truth:
                writer.writerow((row.population, row.term_id, f"{row.planted_or:g}", f"{row.planted_bias:g}",
                                 *row.table.cells()))
    written.append(truth_path)
    return written
