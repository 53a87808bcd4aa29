"""Exception hierarchy shared by every module."""


class ArmdpError(Exception):
    """Base class for all package errors."""


class ParseError(ArmdpError):
    pass


class ValidationError(ArmdpError):
    """An instance or policy violates a model invariant.

    ``field`` and ``index`` name the offending location so that callers (and
    the CLI) can point at the exact entry.
    """

    def __init__(self, message, field=None, index=None):
        self.field = field
        self.index = index
        where = ""
        if field is not None:
            where = f"{field}"
            if index is not None:
                where += f"[{', '.join(str(i) for i in _as_tuple(index))}]"
            where += ": "
        super().__init__(where + message)


def _as_tuple(index):
    return index if isinstance(index, tuple) else (index,)


class DimensionMismatch(ArmdpError):
    pass


class ExplosionGuard(ArmdpError):
    """A finite enumeration would exceed its configured cap."""


class EnumerationCapExceeded(ExplosionGuard):
    pass


class UnsupportedCombination(ArmdpError):
    pass


class ToleranceNotMet(ArmdpError):
    pass


class MaxItersExceeded(ArmdpError):
    def __init__(self, message, last_residual=None, iterations=None):
        self.last_residual = last_residual
        self.iterations = iterations
        super().__init__(message)


class ExtractionFailed(ArmdpError):
    pass


class TargetUnreachable(ArmdpError):
    def __init__(self, state, target):
        self.state = state
        self.target = target
        super().__init__(f"state {state} cannot reach target {target}")


class SingularSystem(ArmdpError):
    pass


class PreconditionFailed(ArmdpError):
    pass


class OracleRefused(ArmdpError):
    """The oracle declines a question it cannot answer exactly."""


class InfeasibleProgram(ArmdpError):
    pass


class UnboundedProgram(ArmdpError):
    pass
