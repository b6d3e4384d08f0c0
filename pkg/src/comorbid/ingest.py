"""Cohort exports: parsing, serialisation and contingency-table derivation.

An export is a UTF-8 CSV file::

    #cohort=SeniorIPV,total=430
    term_id,description,count
    T1,History of abuse,20

Counts are record counts rounded to the nearest ten.  A header carrying
``rounded=false`` marks an export with exact counts (used by the simulator
when rounding is switched off); such files skip the multiple-of-ten check.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field
from typing import IO, Iterable, Mapping

from .errors import (
    DomainError,
    DuplicateTermError,
    InconsistentMarginalsError,
    ParseError,
)

log = logging.getLogger(__name__)

ROUNDING_UNIT = 10
CENSOR_WIDTH = 5
COLUMNS = ("term_id", "description", "count")


def round_to_ten(value: int) -> int:
    """Round a non-negative count to the nearest ten, halves away from zero."""
    if value < 0:
        raise DomainError(f"negative count {value}")
    return (value + 5) // 10 * 10


@dataclass(frozen=True, order=True)
class RoundedCount:
    """A reported record count and the censoring interval it implies.

    ``exact`` marks counts known without rounding; their interval is the
    single point ``reported``.
    """

    reported: int
    exact: bool = False

    def __post_init__(self):
        if self.reported < 0:
            raise DomainError(f"negative count {self.reported}")
        if not self.exact and self.reported % ROUNDING_UNIT:
            raise DomainError(f"count {self.reported} is not a multiple of {ROUNDING_UNIT}")

    def interval(self, width: int = CENSOR_WIDTH) -> tuple[int, int]:
        if self.exact:
            return self.reported, self.reported
        return max(0, self.reported - width), self.reported + width

    def __int__(self):
        return self.reported


@dataclass(frozen=True)
class Cohort:
    name: str
    total: RoundedCount
    freq: Mapping[str, RoundedCount] = field(default_factory=dict)
    catalog: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        slack = 0 if self.total.exact else ROUNDING_UNIT
        for term, count in self.freq.items():
            if count.reported > self.total.reported + slack:
                raise DomainError(
                    f"cohort {self.name!r}: term {term!r} count {count.reported} "
                    f"exceeds cohort total {self.total.reported}"
                )

    @property
    def rounded(self) -> bool:
        return not self.total.exact

    def count(self, term: str) -> RoundedCount:
        """Frequency of ``term``; terms absent from the export count as zero."""
        found = self.freq.get(term)
        if found is None:
            return RoundedCount(0, exact=self.total.exact)
        return found


@dataclass(frozen=True)
class PopulationPair:
    """A base population and its subpopulation carrying the target condition."""

    base: Cohort
    condition: Cohort

    def __post_init__(self):
        if self.condition.total.reported > self.base.total.reported:
            raise DomainError(
                f"condition cohort {self.condition.name!r} ({self.condition.total.reported}) "
                f"is larger than base cohort {self.base.name!r} ({self.base.total.reported})"
            )

    def terms(self) -> list[str]:
        """Union of term ids over both cohorts, sorted."""
        return sorted(set(self.base.freq) | set(self.condition.freq))

    def description(self, term: str) -> str:
        base_desc = self.base.catalog.get(term)
        cond_desc = self.condition.catalog.get(term)
        if base_desc is not None and cond_desc is not None and base_desc != cond_desc:
            log.info("term %s: description conflict, keeping base %r over %r",
                     term, base_desc, cond_desc)
        if base_desc is not None:
            return base_desc
        return cond_desc or ""

    def counts(self, term: str) -> tuple[RoundedCount, RoundedCount, RoundedCount, RoundedCount]:
        """The four aggregates (N, N(cond), N(t), N(t, cond)) for one term."""
        return (
            self.base.total,
            self.condition.total,
            self.base.count(term),
            self.condition.count(term),
        )


def _parse_header(line: str) -> tuple[str, int, bool]:
    if not line.startswith("#"):
        raise ParseError("missing '#cohort=<name>,total=<int>' header", line=1)
    fields = {}
    for part in line[1:].split(","):
        key, sep, value = part.partition("=")
        if not sep:
            raise ParseError(f"malformed header field {part!r}", line=1)
        fields[key.strip()] = value.strip()
    if "cohort" not in fields or "total" not in fields:
        raise ParseError("header must define cohort and total", line=1)
    try:
        total = int(fields["total"])
    except ValueError:
        raise ParseError(f"total {fields['total']!r} is not an integer", line=1) from None
    rounded = fields.get("rounded", "true").lower()
    if rounded not in ("true", "false"):
        raise ParseError(f"rounded must be true or false, got {rounded!r}", line=1)
    return fields["cohort"], total, rounded == "true"


def _wrap_count(value: int, rounded: bool, strict: bool, line: int) -> RoundedCount:
    if value < 0:
        raise DomainError(f"line {line}: negative count {value}")
    if rounded and value % ROUNDING_UNIT:
        if strict:
            raise ParseError(f"count {value} is not a multiple of {ROUNDING_UNIT}", line=line)
        fixed = round_to_ten(value)
        log.warning("line %d: count %d rounded to %d", line, value, fixed)
        value = fixed
    return RoundedCount(value, exact=not rounded)


def parse_cohort(source: IO[str] | IO[bytes] | str | bytes, strict: bool = True) -> Cohort:
    """Parse one cohort export.

    ``source`` may be a text or binary stream, or the export contents.
    With ``strict=False`` counts that are not multiples of ten are rounded
    with a warning instead of rejected.
    """
    if isinstance(source, bytes):
        source = source.decode("utf-8")
    if isinstance(source, str):
        source = io.StringIO(source)
    elif isinstance(source, io.BufferedIOBase) or "b" in getattr(source, "mode", ""):
        source = io.TextIOWrapper(source, encoding="utf-8")

    header = source.readline().rstrip("\r\n")
    name, total, rounded = _parse_header(header)
    total_count = _wrap_count(total, rounded, strict, 1)

    reader = csv.reader(source)
    freq: dict[str, RoundedCount] = {}
    catalog: dict[str, str] = {}
    for offset, row in enumerate(reader):
        lineno = reader.line_num + 1
        if offset == 0 and tuple(c.strip() for c in row) == COLUMNS:
            continue
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 3:
            raise ParseError(f"expected 3 columns, found {len(row)}", line=lineno)
        term, desc, raw = row
        term = term.strip()
        if not term:
            raise ParseError("empty term id", line=lineno)
        try:
            value = int(raw)
        except ValueError:
            raise ParseError(f"count {raw!r} is not an integer", line=lineno) from None
        if term in freq:
            raise DuplicateTermError(f"duplicate term id {term!r}", line=lineno)
        freq[term] = _wrap_count(value, rounded, strict, lineno)
        catalog[term] = desc
    return Cohort(name=name, total=total_count, freq=freq, catalog=catalog)


def read_cohort(path, strict: bool = True) -> Cohort:
    with open(path, encoding="utf-8", newline="") as fh:
        return parse_cohort(fh, strict=strict)


def write_cohort(cohort: Cohort, stream: IO[str]) -> None:
    header = f"#cohort={cohort.name},total={cohort.total.reported}"
    if not cohort.rounded:
        header += ",rounded=false"
    stream.write(header + "\n")
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(COLUMNS)
    for term, count in cohort.freq.items():
        writer.writerow((term, cohort.catalog.get(term, ""), count.reported))


def dump_cohort(cohort: Cohort) -> str:
    buf = io.StringIO()
    write_cohort(cohort, buf)
    return buf.getvalue()


def save_cohort(cohort: Cohort, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        write_cohort(cohort, fh)


@dataclass(frozen=True)
class ContingencyTable:
    """2x2 table of term presence against the target condition.

    a: term and condition, b: condition without term,
    c: term without condition, d: neither.
    """

    a: int
    b: int
    c: int
    d: int

    def cells(self) -> tuple[int, int, int, int]:
        return self.a, self.b, self.c, self.d

    def marginals(self) -> tuple[int, int, int, int]:
        """Inverse of :func:`build_contingency`: (N, N(cond), N(t), N(t, cond))."""
        return self.a + self.b + self.c + self.d, self.a + self.b, self.a + self.c, self.a

    @property
    def valid(self) -> bool:
        return term_validity(self)


def build_contingency(n: int, n_cond: int, n_term: int, n_both: int) -> ContingencyTable:
    """Derive the four cells from the population aggregates.

    Raises InconsistentMarginalsError when any derived cell is negative.
    """
    a = n_both
    b = n_cond - n_both
    c = n_term - n_both
    d = n + n_both - n_cond - n_term
    if min(a, b, c, d) < 0:
        raise InconsistentMarginalsError(
            f"aggregates N={n}, N(cond)={n_cond}, N(t)={n_term}, N(t,cond)={n_both} "
            f"imply cells ({a}, {b}, {c}, {d})"
        )
    return ContingencyTable(a, b, c, d)


def term_validity(table: ContingencyTable) -> bool:
    """A term is valid when every cell of its point table is at least one.

    Equivalently its odds-ratio interval has finite, positive endpoints.
    """
    return min(table.cells()) >= 1


def interval_is_valid(lower: float, upper: float) -> bool:
    return all(math.isfinite(x) and x > 0 for x in (lower, upper))


def point_table(pair: PopulationPair, term: str) -> ContingencyTable:
    return build_contingency(*(c.reported for c in pair.counts(term)))


def merge_catalogs(pairs: Iterable[PopulationPair]) -> dict[str, str]:
    """Union of term catalogs; the first pair's base cohort wins conflicts."""
    merged: dict[str, str] = {}
    for pair in pairs:
        for term in pair.terms():
            desc = pair.description(term)
            if not merged.get(term):
                merged[term] = desc
            elif desc and merged[term] != desc:
                log.info("term %s: description conflict, keeping %r over %r", term, merged[term], desc)
    return merged
