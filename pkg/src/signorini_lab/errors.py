"""Exception types shared across the package."""


class SignoriniLabError(Exception):
    pass


class DomainError(SignoriniLabError, ValueError):
    """A point, ball or support falls outside the sampled box."""


class NonFiniteError(SignoriniLabError, ValueError):
    pass


class FieldFormatError(SignoriniLabError, ValueError):
    pass


class DegenerateError(SignoriniLabError, ValueError):
    """A denominator (H, H0, E0, ...) vanishes to tolerance."""


class HypothesisError(SignoriniLabError, ValueError):
    pass


class PreconditionError(SignoriniLabError, ValueError):
    pass


class SolverDivergence(SignoriniLabError, RuntimeError):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class SizeCapError(SignoriniLabError, ValueError):
    pass


class UnsupportedDimension(SignoriniLabError, ValueError):
    pass


class ConfigError(SignoriniLabError, ValueError):
    pass
