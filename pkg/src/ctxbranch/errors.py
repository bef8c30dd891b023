"""Exception types shared across the toolkit."""


class SchemaError(ValueError):
    """Raised when an input file violates the expected schema."""


class ConsistencyError(ValueError):
    """Raised when two inputs that must agree (clusters vs. common set,
    assignment vs. model plan) contradict each other."""


class NumericalError(RuntimeError):
    """Raised when an iterative computation produces non-finite values."""
