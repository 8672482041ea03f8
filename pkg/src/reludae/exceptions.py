"""Exception hierarchy.

Validation problems subclass :class:`ValueError` so callers can catch them
generically; the CLI maps them to exit code 2. Numeric blow-ups subclass
:class:`ArithmeticError` and map to exit code 3.
"""


class ConfigurationError(ValueError):
    """Bad parameters or mismatched dimensions."""


class DegenerateDataError(ValueError):
    """Data that makes a quantity undefined, e.g. a zero-norm cluster mean."""


class DomainError(ValueError):
    """Argument outside the domain of a formula."""


class AssumptionViolation(ValueError):
    """A precondition of a closed-form construction does not hold."""


class NumericFailure(ArithmeticError):
    """NaN/inf produced during sampling or evaluation."""


class DivergenceError(NumericFailure):
    """Training loss blew up past the divergence guard."""
