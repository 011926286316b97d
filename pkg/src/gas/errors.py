"""Exception taxonomy shared across the package."""


class GasError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(GasError):
    """Invalid configuration: unknown keys, bad values, unknown environments."""


class ContractError(GasError):
    """A call violated an operation's precondition (bad index, shape, range)."""


class SchemaError(GasError):
    """A file failed validation: bad magic, unsupported version, corrupt body."""


class NonFiniteError(GasError):
    """A loss or gradient became non-finite; the offending step was aborted."""
