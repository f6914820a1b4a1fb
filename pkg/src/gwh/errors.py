"""Exception taxonomy shared by all gwh modules.

Every error raised by the library derives from GwhError so the CLI can map
failures to exit codes in one place.  Configuration problems (bad parameters,
malformed config text) are ConfigError/ParseError; everything else signals a
numerical or modelling failure encountered at run time.
"""


class GwhError(Exception):
    """Base class for all gwh errors."""


class ConfigError(GwhError):
    """Invalid parameter or unsupported model construction."""


class ParseError(ConfigError):
    """Malformed configuration text; message names the offending key."""


class DomainError(GwhError):
    """Argument outside the moment-generating-function domain."""


class NoRootError(GwhError):
    """A required root does not exist on the searchable domain."""


class MonotonePathsError(GwhError):
    """Model has monotone paths; extrema laws and thresholds are degenerate."""


class SimulationBudgetError(GwhError):
    """Simulated sample smaller than the configured minimum."""


class InversionError(GwhError):
    """Laplace inversion failed its transform-residual acceptance check."""


class IntegrabilityError(GwhError):
    """Integrand fails the tail-decay probe against the target law."""


class MonotonicityError(GwhError):
    """Tabulated curve violates monotonicity beyond noise level."""


class HorizonError(GwhError):
    """No finite horizon meets the discounted-tail bound."""


class PreconditionError(GwhError):
    """A documented mathematical precondition is violated."""


class BudgetError(GwhError):
    """Nested-simulation standard error exceeds the configured cap."""


class ConvergenceError(GwhError):
    """Fixed-point iteration failed to converge within its iteration cap."""
