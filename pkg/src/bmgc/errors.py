"""Exception hierarchy.

Data problems (bad files, shape disagreements, label issues) derive from
:class:`DataError`; the CLI maps them to exit code 2. Numerical failures
during training derive from :class:`RuntimeFailure` (exit code 3).
"""


class BMGCError(Exception):
    pass


class DataError(BMGCError, ValueError):
    pass


class FormatError(DataError):
    pass


class ShapeMismatch(DataError):
    pass


class LabelRangeError(DataError):
    pass


class LengthMismatch(DataError):
    pass


class IsolatedNode(DataError):
    pass


class EmptyGraph(DataError):
    pass


class EmptyClass(DataError):
    pass


class SingleClass(DataError):
    pass


class SingleClassTruth(SingleClass):
    pass


class DomainError(BMGCError, ValueError):
    pass


class ConfigError(BMGCError, ValueError):
    pass


class RuntimeFailure(BMGCError, RuntimeError):
    pass


class NonFiniteGradient(RuntimeFailure):
    def __init__(self, message, epoch=None, breakdown=None):
        super().__init__(message)
        self.epoch = epoch
        self.breakdown = breakdown
