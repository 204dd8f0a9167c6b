"""
Módulo de Errores
=================

Jerarquía de excepciones del paquete y códigos de salida de la CLI.

Clases:
    TripletHashingError: Base de todos los errores del paquete
"""

from typing import Optional


EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_DIVERGENCE = 3


class TripletHashingError(Exception):
    """Base class for every error raised by the package."""


class ArgumentError(TripletHashingError, ValueError):
    """Invalid argument value or shape mismatch."""


class ConfigError(ArgumentError):
    """Unknown configuration key, bad value or violated config invariant."""


class FormatError(TripletHashingError, ValueError):
    """
    Malformed binary file.

    Attributes:
        offset (Optional[int]): Byte offset where parsing failed
    """

    def __init__(self, message: str, offset: Optional[int] = None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class DataValidationError(TripletHashingError, ValueError):
    """
    Payload that parsed but violates a data invariant.

    Attributes:
        row (Optional[int]): Offending row, when one can be named
    """

    def __init__(self, message: str, row: Optional[int] = None):
        if row is not None:
            message = f"{message} (row {row})"
        super().__init__(message)
        self.row = row


class DivergenceError(TripletHashingError, ArithmeticError):
    """
    Training produced non-finite parameters or loss.

    Attributes:
        learning_rate (float): Learning rate in effect when it happened
    """

    def __init__(self, message: str, learning_rate: float):
        super().__init__(f"{message} (learning_rate={learning_rate:g})")
        self.learning_rate = learning_rate


class SamplerExhaustedError(TripletHashingError, RuntimeError):
    """Triplet sampler could not produce a valid triplet within its retry budget."""


class CapabilityError(TripletHashingError, ValueError):
    """Request exceeds what the implementation supports."""


def exit_code_for(error: BaseException) -> int:
    """
    Map an exception to the CLI exit code.

    Args:
        error (BaseException): Raised exception

    Returns:
        int: Process exit code
    """
    if isinstance(error, DivergenceError):
        return EXIT_DIVERGENCE
    if isinstance(error, ConfigError):
        return EXIT_USAGE
    if isinstance(error, (TripletHashingError, FileNotFoundError)):
        return EXIT_DATA
    return EXIT_USAGE
