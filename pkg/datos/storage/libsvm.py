# storage/libsvm.py
import logging
import math
from pathlib import Path
from typing import Iterable, TextIO

from app.exceptions import DataError, ParseError
from optim.problems import Dataset
from storage.text import read_lines

logger = logging.getLogger(__name__)


def _number(token: str, lineno: int, what: str) -> float:
    try:
        value = float(token)
    except ValueError:
        raise ParseError(lineno, f"non-numeric {what} '{token}'")
    if not math.isfinite(value):
        raise ParseError(lineno, f"non-finite {what} '{token}'")
    return value


def parse_libsvm(text: str | TextIO | Iterable[str]) -> Dataset:
    """
    Parse '<label> (<index>:<value>)*' lines with 1-based indices.

    '#' starts a comment running to the end of the line; blank lines are skipped.
    Indices come back 0-based and dim is the largest index seen.
    """
    lines = text.splitlines() if isinstance(text, str) else text
    rows = []
    dim = 0
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        label = _number(tokens[0], lineno, "label")
        feats: dict[int, float] = {}
        for token in tokens[1:]:
            index_text, sep, value_text = token.partition(":")
            if not sep:
                raise ParseError(lineno, f"expected '<index>:<value>', got '{token}'")
            try:
                index = int(index_text)
            except ValueError:
                raise ParseError(lineno, f"non-numeric index '{index_text}'")
            if index < 1:
                raise ParseError(lineno, f"feature index {index} is below 1")
            if index - 1 in feats:
                raise ParseError(lineno, f"duplicate feature index {index}")
            feats[index - 1] = _number(value_text, lineno, "value")
            dim = max(dim, index)
        rows.append((label, feats))
    return Dataset(rows=tuple(rows), dim=dim)


def serialize_libsvm(data: Dataset) -> str:
    lines = []
    for label, feats in data.rows:
        parts = [format(label, ".17g")]
        parts += [f"{j + 1}:{format(feats[j], '.17g')}" for j in sorted(feats)]
        lines.append(" ".join(parts))
    return "".join(line + "\n" for line in lines)


def load_libsvm(path: str | Path, max_rows: int | None = None) -> Dataset:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"data file not found: {path}")
    data = parse_libsvm(read_lines(path))
    if max_rows is not None and len(data) > max_rows:
        data = Dataset(rows=data.rows[:max_rows], dim=data.dim)
    logger.info("[data] loaded %d rows with %d features from %s", len(data), data.dim, path)
    return data
