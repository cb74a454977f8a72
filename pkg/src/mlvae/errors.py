"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Operand shapes are inconsistent with a registered parameter or each other."""


class NumericError(ArithmeticError):
    """A non-finite value appeared where finite math is required."""


class TapeError(RuntimeError):
    """Backward was asked for a value the active tape never produced."""


class PreconditionError(ValueError):
    """An operation's documented precondition was violated."""


class ConfigError(ValueError):
    """Inconsistent or unsupported model/training configuration."""


class CorpusError(ValueError):
    """Unusable corpus input (empty stream, no valid lines, ...)."""


class UsageError(ValueError):
    """A request the given checkpoint or arguments cannot satisfy."""
