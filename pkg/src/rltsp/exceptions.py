"""Exception hierarchy shared by every module."""


class TspError(Exception):
    """Base class for all errors raised by rltsp."""


class InvalidTourError(TspError, ValueError):
    pass


class InvalidSizeError(TspError, ValueError):
    pass


class SizeLimitError(TspError, ValueError):
    """An exact oracle was asked to solve an instance above its memory guard."""


class ParseError(TspError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ShapeError(TspError, ValueError):
    pass


class NumericError(TspError, ArithmeticError):
    """Non-finite value met during forward, backward or an optimizer step."""


class ParameterError(TspError, ValueError):
    pass


class InfeasibleConstraintsError(TspError, ValueError):
    pass


class ConstraintViolationError(TspError, ValueError):
    pass
