"""Exception types shared across the package."""


class CausalGenError(Exception):
    """Base class for all errors raised by causalgen."""


class ShapeError(CausalGenError, ValueError):
    pass


class ConfigError(CausalGenError, ValueError):
    pass


class DataError(CausalGenError, ValueError):
    pass


class CheckpointError(CausalGenError, ValueError):
    pass


class TrainingError(CausalGenError, RuntimeError):
    pass


class ContractError(CausalGenError, ValueError):
    """An operation was called with inputs its contract excludes."""
