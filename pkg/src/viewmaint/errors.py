"""Exception types shared across the package."""


class Error(Exception):
    """Base class for all viewmaint errors."""


class ParseError(Error):
    """Malformed catalog or view input."""


class ValidationError(Error):
    """Structurally valid input with inconsistent content (dangling FK, bad stats)."""


class ViewSyntaxError(ParseError):
    """View text does not conform to the grammar."""


class UnknownRelationError(ValidationError):
    pass


class UnknownColumnError(ValidationError):
    pass


class TypeMismatchError(ValidationError):
    pass


class AggregateNotIncrementalError(ValidationError):
    """Aggregate function whose result cannot be maintained under deletes (min/max)."""


class UnsupportedSelectionError(ValidationError):
    """Selection predicate that cannot be pushed below an aggregate root."""


class BudgetExceededError(Error):
    """Memo grew past the configured node cap during expansion."""


class NullDifferentialError(Error):
    """Differential requested for an update the node does not depend on."""


class SchemaMismatchError(Error):
    """Expression evaluated against a database with incompatible schemas."""


class PlanInconsistentError(Error):
    """Plan references a materialized result that is not available."""


class TooLargeError(Error):
    """Exhaustive enumeration requested on a memo above the size guard."""
