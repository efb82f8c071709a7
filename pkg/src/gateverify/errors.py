"""Exception hierarchy shared by all gateverify modules."""


class GateVerifyError(Exception):
    """Base class for all errors raised by this package."""


class DimensionMismatch(GateVerifyError, ValueError):
    """Operands act on incompatible spaces."""


class DimensionCapExceeded(GateVerifyError, ValueError):
    """Requested problem size exceeds the dense-representation cap."""


class NotHermitian(GateVerifyError, ValueError):
    """An operation requiring a Hermitian operator received a non-Hermitian one."""


class NotStabilizerState(GateVerifyError, ValueError):
    """Stabilizer-group extraction found fewer stabilizing operators than required."""


class StrategyError(GateVerifyError, ValueError):
    """A verification strategy could not be constructed under the requested policy."""


class InvariantViolation(GateVerifyError, RuntimeError):
    """A structural invariant failed at build or check time."""


class ConfigError(GateVerifyError, ValueError):
    """A scenario configuration is malformed or references unavailable constructions."""
