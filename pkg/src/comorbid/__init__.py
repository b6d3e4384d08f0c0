"""Co-morbidity mining for privacy-rounded aggregate health-record exports."""

from .association import (
    AssociationEstimate,
    BiasModel,
    ComorbidityLevel,
    IntervalSpec,
    bias_adjust,
    classify_level,
    confidence_interval,
    estimate_selection_bias,
    log_odds_ratio,
    wald_standard_error,
)
from .differential import differential_confidence, differential_score, pooled_se
from .imputation import ImputationConfig, PooledEstimate, impute_association
from .ingest import Cohort, ContingencyTable, PopulationPair, RoundedCount, build_contingency, parse_cohort, read_cohort
from .multiplicity import NullGrid, bh_select, fcr_interval, p_value_at_null, scan_null_grid
from .pipeline import AnalysisConfig, analyze_differential, analyze_population

__version__ = "0.1.0"
