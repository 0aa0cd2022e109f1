"""Exception types. Each maps onto one CLI exit code."""


class MMFilterError(Exception):
    exit_code = 1


class ConfigError(MMFilterError, ValueError):
    exit_code = 2


class DataError(MMFilterError, ValueError):
    exit_code = 2


class DimensionError(DataError):
    pass


class SchemaError(DataError):
    pass


class ParseError(DataError):
    pass


class ContractError(MMFilterError, ValueError):
    exit_code = 2


class SamplingError(MMFilterError, ValueError):
    exit_code = 2


class ModelFileError(MMFilterError, ValueError):
    exit_code = 2


class NumericalError(MMFilterError, ArithmeticError):
    """Raised when a training loss stops being finite."""

    exit_code = 3
