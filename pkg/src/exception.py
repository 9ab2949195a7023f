import sys


def error_message_detail(error, error_detail: sys = sys):
    _, _, exc_tb = error_detail.exc_info()
    if exc_tb is not None:
        file_name = exc_tb.tb_frame.f_code.co_filename
        line_number = exc_tb.tb_lineno
    else:
        # raised directly, not re-raised from an except block
        frame = sys._getframe(1)
        while frame is not None and frame.f_code.co_filename == __file__:
            frame = frame.f_back
        file_name = frame.f_code.co_filename if frame is not None else "<unknown>"
        line_number = frame.f_lineno if frame is not None else 0

    error_message = "Error occured in python script name [{0}] line number [{1}] error message [{2}]".format(
        file_name, line_number, str(error)
    )

    return error_message


class CustomException(Exception):
    exit_code = 2

    def __init__(self, error_message, error_detail: sys = sys):
        super().__init__(error_message)
        self.raw_message = str(error_message)
        self.error_message = error_message_detail(error_message, error_detail=error_detail)

    def __str__(self):
        return self.error_message


class InvalidParameterError(CustomException):
    """Parameters violate an operation's preconditions (usage error)."""
    exit_code = 1


class UnprovenRateError(InvalidParameterError):
    """The requested rate is only conjectured, never proven."""


class InvariantViolationError(CustomException):
    exit_code = 2


class NumericalError(InvariantViolationError):
    """Solver non-convergence, rank deficiency or loss of definiteness."""


class ResourceGuardError(CustomException):
    exit_code = 3
