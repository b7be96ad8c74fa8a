class RegistrationError(Exception):
    """Base class for all registration errors."""


class IngestionError(RegistrationError):
    """A frame could not be read or decoded."""


class ContractError(RegistrationError, ValueError):
    """An operation was called with inputs violating its preconditions."""


class EstimationError(RegistrationError):
    """A least-squares estimate is undefined for the given data."""


class UndefinedMeasureError(RegistrationError):
    """A normalized measure was requested for a zero-norm reference."""


class SolverError(RegistrationError):
    """The optimizer hit a state it cannot recover from (non-finite objective)."""
