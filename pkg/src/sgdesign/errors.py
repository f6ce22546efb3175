"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class SGError(Exception):
    exit_code = 1


class InputError(SGError, ValueError):
    """Bad user input: malformed files, out-of-range indices, invalid options."""

    exit_code = 2


class MaskFormatError(InputError):
    pass


class MalformedHeader(MaskFormatError):
    pass


class EntryCountMismatch(MaskFormatError):
    pass


class IndexOutOfRange(MaskFormatError):
    pass


class DomainError(SGError, ValueError):
    """Well-formed input that the mathematics cannot handle (empty mask, degenerate geometry)."""

    exit_code = 3


class SolverDivergence(SGError, RuntimeError):
    exit_code = 4
