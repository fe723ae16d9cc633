"""Exception families shared across the package.

Each family maps to one CLI exit code (config 2, data 3, training 4,
evaluation 5). Concrete errors live next to the code that raises them and
subclass one of these.
"""


class CoidetectError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigError(CoidetectError):
    """Invalid configuration, flags, or config file contents."""

    exit_code = 2


class DataError(CoidetectError):
    """Malformed or inconsistent input data."""

    exit_code = 3


class TrainingError(CoidetectError):
    """Failure while building, optimising, or fitting a model."""

    exit_code = 4


class EvaluationError(CoidetectError):
    """Failure while scoring, labelling, or computing metrics."""

    exit_code = 5
