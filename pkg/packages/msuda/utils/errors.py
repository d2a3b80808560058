"""
Error types shared across services and commands.
Each error carries the process exit code the CLI reports for it.
"""

from typing import Any, Dict, Optional


class MSUDAError(Exception):
    """Base class for every error the toolkit raises on purpose"""

    exit_code = 1

    def __init__(self, message: str):
        super().__init__(message)
        self.message = message


class ConfigurationError(MSUDAError):
    """Invalid configuration, missing inputs or incompatible artifacts"""

    exit_code = 2


class DataFormatError(MSUDAError):
    """Malformed corpus input"""

    exit_code = 3

    def __init__(self, message: str, path: Optional[str] = None, line_number: Optional[int] = None):
        location = ""
        if path is not None:
            location = f"{path}:{line_number}: " if line_number is not None else f"{path}: "
        super().__init__(f"{location}{message}")
        self.path = path
        self.line_number = line_number


class DimensionError(MSUDAError, ValueError):
    """Shape mismatch between operands"""

    exit_code = 3


class ContractViolation(MSUDAError):
    """A batch does not satisfy the preconditions of a loss"""

    exit_code = 3


class NumericAbortError(MSUDAError):
    """Non-finite loss or gradient; training cannot continue"""

    exit_code = 4

    def __init__(self, message: str, last_good_state: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.last_good_state = last_good_state
