"""Exception hierarchy shared by all modules.

Every error derives from :class:`MarketEdgeError` (itself a ``ValueError``),
so callers can catch one type while the CLI still maps specific failures to
distinct exit codes.
"""


class MarketEdgeError(ValueError):
    """Base class for domain errors raised by this package."""


class EmptyInputError(MarketEdgeError):
    pass


class DomainError(MarketEdgeError):
    """An argument lies outside the mathematical domain of the operation."""


class InfeasibleSpecError(MarketEdgeError):
    """A market specification cannot be realised by any joint distribution."""


class MarginOverflowError(DomainError):
    pass


class BudgetError(MarketEdgeError):
    """Requested stakes exceed the available budget."""


class NoPositiveEdgeError(MarketEdgeError):
    """No opportunity has a strictly positive expected profit."""


class RuinDomainError(DomainError):
    """Some outcome would leave zero or negative wealth, so log-growth is undefined."""


class UndefinedCorrelationError(MarketEdgeError):
    pass


class DivergenceError(MarketEdgeError):
    pass


class ConfigError(MarketEdgeError):
    """Malformed configuration text; ``line`` is 1-based when known."""

    def __init__(self, message, line=None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)
