"""Exception types shared across the toolkit and the CLI exit-code contract."""

EXIT_OK          = 0
EXIT_INPUT       = 2
EXIT_ESTIMATION  = 3
EXIT_EQUIVALENCE = 4


class FdxError(Exception):
    """Base class for every error raised by this package."""


class DomainError(FdxError, ValueError):
    """An argument lies outside the domain of the operation."""


class CapacityError(FdxError, ValueError):
    """The request is larger than the operation supports."""


class EstimationError(FdxError, RuntimeError):
    """A fitting routine could not produce a usable estimate."""


class InputFormatError(DomainError):
    """A z-value file could not be parsed."""

    def __init__(self, line_number: int, message: str):
        self.line_number = line_number
        super().__init__(f"line {line_number}: {message}")


class EquivalenceError(FdxError, AssertionError):
    """Procedure 1 and Procedure 2 disagreed on the same input."""


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, EquivalenceError):
        return EXIT_EQUIVALENCE
    if isinstance(exc, EstimationError):
        return EXIT_ESTIMATION
    if isinstance(exc, (DomainError, CapacityError, OSError)):
        return EXIT_INPUT
    raise exc
