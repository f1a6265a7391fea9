"""Time-unit handling.

All internal times are 64-bit floats in femtoseconds.  User-facing strings
may carry an fs / ps / ns / us suffix; bare numbers are femtoseconds.
"""

import math
import re

from .errors import InvalidArgument

FS = 1.0
PS = 1e3
NS = 1e6
US = 1e9

_SUFFIXES = {"fs": FS, "ps": PS, "ns": NS, "us": US}

_TIME_RE = re.compile(r"^\s*([+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)\s*([a-z]*)\s*$")


def parse_time(text: str | float | int) -> float:
    """Parse a time value into femtoseconds.

    Accepts floats (already fs) or strings like '1.5ps', '63 fs', '1e6fs'.
    """
    if isinstance(text, (int, float)):
        value = float(text)
        if not math.isfinite(value):
            raise InvalidArgument(f"non-finite time value: {text!r}")
        return value
    m = _TIME_RE.match(text)
    if not m:
        raise InvalidArgument(f"cannot parse time value: {text!r}")
    value = float(m.group(1))
    suffix = m.group(2) or "fs"
    if suffix not in _SUFFIXES:
        raise InvalidArgument(f"unknown time unit {suffix!r} in {text!r}")
    return value * _SUFFIXES[suffix]


def format_time(value_fs: float) -> str:
    """Render femtoseconds with a readable suffix."""
    a = abs(value_fs)
    if a >= US:
        return f"{value_fs / US:.6g}us"
    if a >= NS:
        return f"{value_fs / NS:.6g}ns"
    if a >= PS:
        return f"{value_fs / PS:.6g}ps"
    return f"{value_fs:.6g}fs"
