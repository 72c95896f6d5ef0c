"""Exception hierarchy shared by every module."""


class ATLError(Exception):
    """Base class for all errors raised by the package."""


class DomainError(ATLError, ValueError):
    """An argument lies outside the domain an operation is defined on."""


class SpecError(ATLError, ValueError):
    """A user-supplied model or design function violates its declared contract."""


class ConfigError(ATLError, ValueError):
    """A scenario file or override is malformed or semantically invalid."""


class DivergenceError(ATLError, ArithmeticError):
    """A non-finite value appeared during evaluation or integration."""

    def __init__(self, message, t=None):
        super().__init__(message)
        self.t = t


class GainOverflowError(ATLError, OverflowError):
    """A Nussbaum gain exceeded its overflow cap."""

    def __init__(self, message, t=None, zeta=None):
        super().__init__(message)
        self.t = t
        self.zeta = zeta
