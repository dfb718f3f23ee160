import math
import re
from pathlib import Path

from doppelganger.errors import FormatError

# Ids end up as whitespace-separated tokens
_ID_PATTERN = re.compile(r"^\S+$")


class Helper:
    """
    Helper class with static methods for reading and writing the line-oriented files.
    """

    @staticmethod
    def formatFloat(value: float) -> str:
        """
        Format a float with 9 significant digits.
        """
        return format(float(value), ".9g")

    @staticmethod
    def parseFloat(token: str, path=None, line_no: int | None = None, name: str = "value") -> float:
        """
        Parse a finite float, rejecting NaN and Inf.
        """
        try:
            value = float(token)
        except ValueError:
            raise FormatError(f"{name}: {token!r} is not a number", path, line_no) from None
        if not math.isfinite(value):
            raise FormatError(f"{name}: {token!r} is not finite", path, line_no)
        return value

    @staticmethod
    def parseInt(token: str, path=None, line_no: int | None = None, name: str = "value") -> int:
        try:
            return int(token)
        except ValueError:
            raise FormatError(f"{name}: {token!r} is not an integer", path, line_no) from None

    @staticmethod
    def checkId(token: str, path=None, line_no: int | None = None) -> str:
        if not _ID_PATTERN.match(token):
            raise FormatError(f"invalid id {token!r}", path, line_no)
        return token

    @staticmethod
    def readRecords(path, kind: str, version: int, header: list[str] | None = None) -> list[tuple[int, list[str]]]:
        """
        Read a line-oriented file.
        - kind, version: expected '<KIND> <VERSION>' line (e.g. "CAMERAS", 1)
        - header: expected column names on the line after the kind line, if any
        Returns the (line number, tokens) of every record.
        Blank lines and lines starting with '#' are skipped.
        """
        path = Path(path)
        version_seen = False
        header_seen = header is None
        records = []
        with open(path, "rb") as f:
            for line_no, raw in enumerate(f, start=1):
                try:
                    line = raw.decode("utf-8").strip()
                except UnicodeDecodeError as err:
                    raise FormatError(f"invalid UTF-8 at byte {err.start}", path, line_no) from None
                if not line or line.startswith("#"):
                    continue
                tokens = line.split()
                if not version_seen:
                    if tokens[0] != kind or len(tokens) != 2:
                        raise FormatError(f"expected '{kind} <version>' header, got {line!r}", path, line_no)
                    found = Helper.parseInt(tokens[1], path, line_no, "version")
                    if found != version:
                        raise FormatError(f"unsupported {kind} version {found}, expected {version}", path, line_no)
                    version_seen = True
                    continue
                if not header_seen:
                    if tokens != header:
                        raise FormatError(f"expected column header {' '.join(header)!r}", path, line_no)
                    header_seen = True
                    continue
                records.append((line_no, tokens))
        if not version_seen:
            raise FormatError(f"missing '{kind} <version>' header", path)
        if not header_seen:
            raise FormatError("missing column header", path)
        return records

    @staticmethod
    def writeRecords(path, kind: str, version: int, rows, header: list[str] | None = None):
        """
        Write a line-oriented file.
        - rows: iterable of token lists (already formatted strings)
        """
        path = Path(path)
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(f"{kind} {version}\n")
            if header is not None:
                f.write(" ".join(header) + "\n")
            for row in rows:
                f.write(" ".join(row) + "\n")
