"""Exception hierarchy shared by every pblf module."""


class PBLFError(Exception):
    """Base class for all library errors."""


class DomainError(PBLFError, ValueError):
    """An error coordinate reached or crossed its barrier half-width.

    ``channel`` is the 1-based error channel when known.
    """

    def __init__(self, message, channel=None):
        super().__init__(message)
        self.channel = channel


class NonFiniteError(PBLFError, ArithmeticError):
    """A dynamics or control evaluation produced NaN or infinity."""


class ConfigError(PBLFError, ValueError):
    """Invalid controller, integrator or experiment configuration."""


class ConstraintBreach(PBLFError):
    """Barrier breach detected during a simulation."""

    def __init__(self, channel, t, detail=""):
        msg = f"barrier breach on channel {channel} at t={t:.6g}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)
        self.channel = channel
        self.t = t
        self.detail = detail

    def __reduce__(self):
        return type(self), (self.channel, self.t, self.detail)


class NonFiniteState(PBLFError):
    """Integrated state became non-finite."""

    def __init__(self, t, detail=""):
        msg = f"non-finite state at t={t:.6g}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)
        self.t = t
        self.detail = detail

    def __reduce__(self):
        return type(self), (self.t, self.detail)


class InadmissibleInitialCondition(PBLFError):
    """Initial errors (or initial state) lie outside the admissible set."""

    def __init__(self, message, channel=None):
        super().__init__(message)
        self.channel = channel
