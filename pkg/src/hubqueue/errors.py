"""Exception hierarchy shared by all hubqueue modules."""


class HubQueueError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(HubQueueError, ValueError):
    """An input violates a declared invariant."""


class ParseError(HubQueueError, ValueError):
    """An instance or config file is malformed.

    ``line`` is 1-based and may be ``None`` when the problem is not tied to
    a single line (e.g. a missing section).
    """

    def __init__(self, message: str, line: int | None = None, field: str | None = None):
        self.line = line
        self.field = field
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        prefix = f"[{', '.join(where)}] " if where else ""
        super().__init__(prefix + message)


class DivergentSeries(HubQueueError, ArithmeticError):
    """The normalising series of the birth-death chain does not converge."""


class CapExceeded(HubQueueError, ArithmeticError):
    """Truncation hit the hard state cap before reaching the requested accuracy."""


class TruncationTooShort(HubQueueError, IndexError):
    """A probability was requested beyond the truncation index."""


class Unbounded(HubQueueError):
    """The tail constraint never failed below the bracketing cap."""


class TooLarge(HubQueueError):
    """Exhaustive enumeration would exceed the configured subset cap."""
