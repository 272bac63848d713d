"""Exception hierarchy shared by every module.

The CLI maps these onto its exit-code contract, so each class carries the
code it should surface with.
"""


class EntspecError(Exception):
    exit_code = 1


class FormatError(EntspecError, ValueError):
    """Malformed input text (DIMACS header, clause width, ...)."""

    exit_code = 1


class ArgumentError(EntspecError, ValueError):
    exit_code = 1


class DimensionError(EntspecError, ValueError):
    exit_code = 1


class ScaleError(EntspecError):
    """Instance exceeds the dense desk-scale limits."""

    exit_code = 3


class DegenerateError(EntspecError):
    exit_code = 2


class NotPSDError(EntspecError, ValueError):
    exit_code = 2


class RangeError(EntspecError, ValueError):
    exit_code = 2


class PromiseViolation(EntspecError):
    """An eigenvalue sits inside the promised empty window."""

    exit_code = 4

    def __init__(self, message, offending=None):
        super().__init__(message)
        self.offending = offending


class ConfidenceError(EntspecError):
    exit_code = 4


class TieError(EntspecError, ValueError):
    exit_code = 4


class PrepError(EntspecError):
    exit_code = 1


class AmplitudeError(EntspecError):
    exit_code = 2


class TruncationError(EntspecError):
    exit_code = 4

    def __init__(self, message, achieved=None):
        super().__init__(message)
        self.achieved = achieved
