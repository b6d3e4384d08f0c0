import math
from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from comorbid.association import (
    LN2,
    AssociationEstimate,
    BiasModel,
    ComorbidityLevel,
    IntervalSpec,
    bias_adjust,
    classify_level,
    confidence_interval,
    estimate_selection_bias,
    log_odds_ratio,
    lor_and_se_arrays,
    wald_standard_error,
)
from comorbid.errors import DomainError, NonFiniteError
from comorbid.ingest import ContingencyTable

cells = st.integers(1, 10**7)


def lor_oracle(a, b, c, d):
    """Exact odds ratio as a Fraction, then a single log."""
    return math.log2(Fraction(a * d, b * c))


@pytest.mark.parametrize("table, expected", [
    ((10, 10, 10, 10), 0.0),
    ((40, 10, 10, 10), 2.0),
    ((10, 40, 10, 10), -2.0),
])
def test_log_odds_ratio_examples(table, expected):
    assert log_odds_ratio(table) == pytest.approx(expected, abs=1e-12)


def test_log_odds_ratio_cohort_table():
    table = ContingencyTable(20, 410, 2760, 5_250_130)
    assert log_odds_ratio(table) == pytest.approx(lor_oracle(*table.cells()), abs=1e-12)
    assert log_odds_ratio(table) == pytest.approx(6.536, abs=1e-3)


def test_standard_error_examples():
    assert wald_standard_error((4, 4, 4, 4)) == pytest.approx(1 / LN2)
    assert wald_standard_error((10, 10, 10, 10)) == pytest.approx(math.sqrt(0.4) / LN2)


def test_zero_cell():
    with pytest.raises(NonFiniteError):
        log_odds_ratio((0, 10, 10, 10))
    with pytest.raises(NonFiniteError):
        wald_standard_error((0, 10, 10, 10))
    # Haldane: 0.5 * 10.5 / (10.5 * 10.5)
    assert log_odds_ratio((0, 10, 10, 10), correction=True) == pytest.approx(math.log2(0.5 / 10.5))


def test_negative_cell_rejected():
    with pytest.raises(DomainError):
        log_odds_ratio((-1, 10, 10, 10), correction=True)


def test_vectorised_matches_scalar():
    tables = [(20, 410, 2760, 5_250_130), (3, 7, 11, 13), (10, 10, 10, 10)]
    lor, se = lor_and_se_arrays(*zip(*tables))
    for i, t in enumerate(tables):
        assert lor[i] == pytest.approx(log_odds_ratio(t), abs=1e-12)
        assert se[i] == pytest.approx(wald_standard_error(t), abs=1e-12)


def test_confidence_interval():
    lo, hi = confidence_interval(AssociationEstimate(2.0, 0.5))
    assert lo == pytest.approx(1.02, abs=1e-3)
    assert hi == pytest.approx(2.98, abs=1e-3)
    assert IntervalSpec(0.32).z_alpha == pytest.approx(0.9944579, abs=1e-6)
    with pytest.raises(DomainError):
        IntervalSpec(1.5)


def test_estimate_from_table():
    est = AssociationEstimate.from_table(ContingencyTable(40, 10, 10, 10))
    assert est.or_point == pytest.approx(4.0)
    with pytest.raises(DomainError):
        AssociationEstimate(1.0, -0.1)


@pytest.mark.parametrize("raw, adjusted", [(91.4, 30.47), (194.7, 64.9), (3.0, 1.0)])
def test_bias_adjust(raw, adjusted):
    assert bias_adjust(raw) == pytest.approx(adjusted, abs=0.01)


def test_bias_model_bounds():
    with pytest.raises(DomainError):
        BiasModel(0.5)
    with pytest.raises(DomainError):
        bias_adjust(0.0)
    assert bias_adjust(5.0, BiasModel(1.0)) == 5.0


@pytest.mark.parametrize("lower, level", [
    (10.3, ComorbidityLevel.HIGH),
    (10.0, ComorbidityLevel.MODERATE),
    (5.01, ComorbidityLevel.MODERATE),
    (5.0, ComorbidityLevel.MINOR),
    (3.0, ComorbidityLevel.NOT_SIGNIFICANT),
    (0.4, ComorbidityLevel.NOT_SIGNIFICANT),
    (None, ComorbidityLevel.NOT_SIGNIFICANT),
])
def test_classify_level(lower, level):
    assert classify_level(lower) is level


def test_classify_custom_thresholds():
    assert classify_level(2.5, (2, 4, 8)) is ComorbidityLevel.MINOR
    assert ComorbidityLevel.HIGH.abbrev == "H"
    assert ComorbidityLevel.MINOR.rank == 1


def test_selection_bias_geometric_mean():
    est = estimate_selection_bias([2.0, 8.0])
    assert est.mu == pytest.approx(4.0)
    assert est.n_terms == 2
    assert est.q25 <= est.mu <= est.q75
    assert est.model().mu == pytest.approx(4.0)
    with pytest.raises(DomainError):
        estimate_selection_bias([])
    with pytest.raises(DomainError):
        estimate_selection_bias([1.0, 0.0])


@given(cells, cells, cells, cells)
def test_row_swap_negates(a, b, c, d):
    assert log_odds_ratio((b, a, d, c)) == -log_odds_ratio((a, b, c, d))
    assert wald_standard_error((b, a, d, c)) == pytest.approx(wald_standard_error((a, b, c, d)))


@given(cells, cells, cells, cells)
def test_transpose_invariant(a, b, c, d):
    assert log_odds_ratio((a, c, b, d)) == pytest.approx(log_odds_ratio((a, b, c, d)), abs=1e-9)


@given(cells, cells, cells, cells, st.integers(1, 1000))
def test_monotone_in_a(a, b, c, d, extra):
    assert log_odds_ratio((a + extra, b, c, d)) > log_odds_ratio((a, b, c, d))


@given(st.floats(1e-3, 1e6), st.floats(1.0, 100.0))
def test_bias_adjust_never_increases(or_value, mu):
    assert bias_adjust(or_value, BiasModel(mu)) <= or_value


@given(st.floats(0, 1e4, allow_nan=False), st.floats(0, 1e4, allow_nan=False))
def test_classify_monotone(x, y):
    lo, hi = sorted((x, y))
    assert classify_level(lo).rank <= classify_level(hi).rank
