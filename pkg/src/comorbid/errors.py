"""Exception hierarchy shared by the library and the command line."""


class ComorbidError(Exception):
    """Base class for every error raised by this package."""


class DomainError(ComorbidError, ValueError):
    """A value lies outside the domain an operation accepts."""


class ConfigError(DomainError):
    """An analysis or simulation configuration is invalid."""


class ParseError(ComorbidError):
    """A cohort export could not be parsed.

    ``line`` is the 1-based line number in the source, when known.
    """

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DuplicateTermError(ParseError):
    pass


class InconsistentMarginalsError(DomainError):
    """Aggregate counts imply a negative contingency cell."""


class NonFiniteError(DomainError):
    """A log-odds ratio or its standard error would be infinite."""


class CensoringInfeasibleError(ComorbidError):
    """Imputation could not draw a feasible table from the censoring intervals."""


class DegenerateError(DomainError):
    pass


class NotSelectedError(ComorbidError):
    """The term is not significant at any level of the null grid."""


class NotComparableError(ComorbidError):
    """The term is not valid in both populations."""


class InfeasibleEffectError(DomainError):
    """A planted odds ratio cannot be realised with the given marginals."""

    def __init__(self, message, term_id=None):
        self.term_id = term_id
        if term_id is not None:
            message = f"term {term_id!r}: {message}"
        super().__init__(message)
