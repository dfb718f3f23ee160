class DoppelgangerError(RuntimeError):
    """
    Base class for every error raised by the doppelganger toolkit.
    """


class DomainError(DoppelgangerError, ValueError):
    """
    An input lies outside its valid range (latitude, near/far planes, config values).
    """


class UsageError(DoppelgangerError):
    """
    The caller broke an operation contract (unknown id, duplicate pair, mixed frames...).
    """


class DegenerateInputError(DoppelgangerError):
    """
    Too few or geometrically degenerate points for an estimation.
    """


class UndefinedRatioError(DoppelgangerError):
    """
    A pooled ratio was requested over zero registered probes.
    """


class FormatError(DoppelgangerError):
    """
    A file record could not be parsed.
    - path: file being read
    - line_no: 1-based line number of the offending record (None for whole-file problems)
    """

    def __init__(self, message: str, path=None, line_no: int | None = None):
        self.path = str(path) if path is not None else None
        self.line_no = line_no
        where = ""
        if self.path is not None:
            where = self.path
            if line_no is not None:
                where += f":{line_no}"
            where += ": "
        super().__init__(where + message)
