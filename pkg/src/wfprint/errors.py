"""Exception hierarchy shared by every stage of the pipeline."""


class WFError(Exception):
    """Base class for validation errors raised by wfprint."""


class CaptureError(WFError, ValueError):
    pass


class UnknownMagic(CaptureError):
    pass


class TruncatedBlock(CaptureError):
    pass


class LengthMismatch(WFError, ValueError):
    """Two lengths that must agree do not (block trailer, label vectors)."""


class MissingInterface(CaptureError):
    pass


class MalformedHeader(CaptureError):
    pass


class AmbiguousMatch(WFError, ValueError):
    pass


class EmptyAfterFilter(WFError, ValueError):
    pass


class ClassTooSmall(WFError, ValueError):
    pass


class HeaderMismatch(WFError, ValueError):
    pass


class EmptyFile(WFError, ValueError):
    pass


class DegenerateInput(WFError, ValueError):
    pass


class InvalidHyperparameter(WFError, ValueError):
    pass


class ArityMismatch(WFError, ValueError):
    pass


class Unsupported(WFError, TypeError):
    pass


class VersionMismatch(WFError, ValueError):
    pass


class CorruptDocument(WFError, ValueError):
    pass


class UnknownLabel(WFError, ValueError):
    pass


class GridTooLarge(WFError, ValueError):
    pass


class InvariantError(AssertionError):
    """An internal invariant was breached; always a bug."""
