"""
Error types for QEM Lab
Configuration / dataset problems map to exit code 1, mathematical contract
violations to exit code 2
"""
from typing import Optional


class QemLabError(Exception):
    """Base class for all errors raised by QEM Lab"""


class ConfigError(QemLabError, ValueError):
    """Invalid, missing or unknown configuration keys/values"""


class DatasetFormatError(QemLabError, ValueError):
    """Malformed dataset file (message carries the file line number)"""

    def __init__(self, message: str, line: Optional[int] = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class DomainError(QemLabError):
    """A numerical precondition or invariant does not hold"""


class EmptyComponentError(DomainError):
    """A mixture component received (numerically) zero responsibility"""

    def __init__(self, component: int):
        super().__init__(f"empty component {component}")
        self.component = component


EXIT_OK = 0
EXIT_IO_OR_CONFIG = 1
EXIT_DOMAIN = 2


def exit_code_for(error: BaseException) -> int:
    """
    Map an exception to the CLI exit code

    Args:
        error: Raised exception

    Returns:
        1 for I/O or configuration problems, 2 for domain errors
    """
    if isinstance(error, DomainError):
        return EXIT_DOMAIN
    return EXIT_IO_OR_CONFIG
