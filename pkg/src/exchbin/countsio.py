"""Reading and writing the ``m,s,count`` CSV format."""
from __future__ import annotations

import csv
import io
from importlib import resources
from pathlib import Path

from .estimation import SumDataset
from .exceptions import DomainError


class CountsFormatError(DomainError):
    """Malformed counts file; the message names the offending line."""


def parse_counts(text: str, tally: bool = False) -> SumDataset:
    """Parse ``m,s,count`` rows (or ``m,s`` per-cluster rows when ``tally``)."""
    reader = csv.reader(io.StringIO(text))
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise CountsFormatError("line 1: empty file") from None
    expected = ["m", "s"] if tally else ["m", "s", "count"]
    if header != expected:
        raise CountsFormatError(f"line 1: header must be {','.join(expected)}, got {','.join(header)}")
    records = []
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(expected):
            raise CountsFormatError(f"line {lineno}: expected {len(expected)} fields, got {len(row)}")
        try:
            vals = [int(c.strip()) for c in row]
        except ValueError:
            raise CountsFormatError(f"line {lineno}: non-integer field in {row}") from None
        m, s = vals[0], vals[1]
        count = 1 if tally else vals[2]
        if m < 1 or not 0 <= s <= m or count < 1:
            raise CountsFormatError(f"line {lineno}: need m >= 1, 0 <= s <= m, count >= 1; got {row}")
        records.append((m, s, count))
    if not records:
        raise CountsFormatError("no data rows")
    return SumDataset.from_records(records)


def read_counts(path, tally: bool = False) -> SumDataset:
    return parse_counts(Path(path).read_text(encoding="utf-8"), tally=tally)


def format_counts(data: SumDataset) -> str:
    lines = ["m,s,count"]
    lines += [f"{m},{s},{c}" for m, s, c in data.records()]
    return "\n".join(lines) + "\n"


def brassica_text() -> str:
    return resources.files("exchbin").joinpath("data/brassica.csv").read_text(encoding="utf-8")


def brassica() -> SumDataset:
    """Secondary chromosome associations in Brassica: 337 nuclei with m = 3."""
    return parse_counts(brassica_text())


def schema_text() -> str:
    return resources.files("exchbin").joinpath("data/result_schema.json").read_text(encoding="utf-8")
