"""Exception hierarchy. CLI exit codes hang off these classes."""


class AimsPoseError(Exception):
    exit_code = 1


class ConfigError(AimsPoseError, ValueError):
    exit_code = 2


class DataError(AimsPoseError, ValueError):
    exit_code = 3


class NumericalError(AimsPoseError, ArithmeticError):
    exit_code = 4


class LabelAccessError(DataError):
    """Raised when training code asks for labels of a hidden-label split."""
