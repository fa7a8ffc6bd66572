# storage/text.py
from pathlib import Path
from typing import Iterator

from app.exceptions import ParseError


def read_lines(path: str | Path) -> Iterator[str]:
    """Yield the decoded lines of a UTF-8 text file; bad bytes become a ParseError naming the line."""
    with open(path, "rb") as fh:
        for lineno, raw in enumerate(fh, start=1):
            try:
                yield raw.decode("utf-8")
            except UnicodeDecodeError as exc:
                raise ParseError(lineno, f"invalid UTF-8 byte 0x{raw[exc.start]:02x} at column {exc.start + 1}")
