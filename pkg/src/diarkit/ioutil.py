"""Small helpers shared by the text serializers.

All versioned formats (POST, EMB, LBL, LDA, PLDA) print floats with
``repr``: the shortest decimal string that round-trips exactly, so
write -> parse -> write is byte-identical.
"""

from __future__ import annotations

from typing import Iterable

from .errors import FormatError


def fmt(x: float) -> str:
    return repr(float(x))


def fmt_row(row: Iterable[float]) -> str:
    return " ".join(fmt(v) for v in row)


def split_lines(text: str) -> list[str]:
    return text.splitlines()


def parse_header(line: str, magic: str, n_fields: int) -> list[str]:
    """Validate ``<MAGIC> v1 ...`` and return the fields after the version."""
    parts = line.split()
    if len(parts) != 2 + n_fields or parts[0] != magic or parts[1] != "v1":
        raise FormatError(f"bad {magic} header: {line!r}")
    return parts[2:]


def parse_floats(line: str, count: int, what: str) -> list[float]:
    parts = line.split()
    if len(parts) != count:
        raise FormatError(f"{what}: expected {count} values, got {len(parts)}")
    try:
        return [float(p) for p in parts]
    except ValueError as exc:
        raise FormatError(f"{what}: non-numeric value ({exc})") from None
