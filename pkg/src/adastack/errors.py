class ContractViolation(ValueError):
    """An operation was called outside its documented preconditions."""


class Unsupported(TypeError):
    """The operation does not apply to this environment or observation kind."""


class OracleCapExceeded(RuntimeError):
    """An exact model would exceed the configured state cap."""


class NonFiniteLoss(ArithmeticError):
    """A training update produced a NaN or infinite loss or gradient."""
