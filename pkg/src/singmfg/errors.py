"""Exception hierarchy shared by all modules."""


class SingMFGError(Exception):
    """Base class for all package errors."""


class RangeError(SingMFGError, ValueError):
    pass


class ContractError(SingMFGError, ValueError):
    """An input violates a documented precondition (e.g. non-monotone control)."""


class InvariantError(SingMFGError, ValueError):
    pass


class DomainError(SingMFGError, ValueError):
    """A parametrised path lies outside the domain of the unparametrisation map."""

    def __init__(self, message, violations=None):
        super().__init__(message)
        self.violations = list(violations or [])


class ParameterError(SingMFGError, ValueError):
    pass


class OrderError(SingMFGError, ValueError):
    """Control increments must be component-wise non-negative."""


class AlignmentError(SingMFGError, ValueError):
    pass


class NumericError(SingMFGError, ArithmeticError):
    def __init__(self, message, location=None):
        super().__init__(message)
        self.location = location


class CapabilityError(SingMFGError, NotImplementedError):
    pass


class CoverageError(SingMFGError, ValueError):
    def __init__(self, message, suggested_bounds=None):
        super().__init__(message)
        self.suggested_bounds = suggested_bounds


class ConfigError(SingMFGError, ValueError):
    pass
