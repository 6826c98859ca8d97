"""Reader/writer for the sectioned ``key = value`` documents used by machine,
problem, scenario and calibration files.

The grammar is the INI subset understood by :mod:`configparser`: ``[section]``
headers, ``key = value`` pairs and ``#`` comments (full-line or trailing).
Keys are case-sensitive.
"""

from __future__ import annotations

import configparser
import math
from typing import Iterable


class SpecError(ValueError):
    """Malformed or invalid input document."""


def parse(text: str, source: str = "<text>") -> configparser.ConfigParser:
    cp = configparser.ConfigParser(
        interpolation=None,
        inline_comment_prefixes=("#",),
        comment_prefixes=("#",),
        empty_lines_in_values=False,
        default_section="\x00none",
    )
    cp.optionxform = str  # type: ignore[assignment]
    try:
        cp.read_string(text, source=source)
    except configparser.MissingSectionHeaderError as exc:
        raise SpecError(f"{source}: line {exc.lineno}: key outside of any [section]") from None
    except configparser.DuplicateSectionError as exc:
        raise SpecError(f"{source}: line {exc.lineno}: duplicate section [{exc.section}]") from None
    except configparser.DuplicateOptionError as exc:
        raise SpecError(
            f"{source}: line {exc.lineno}: duplicate key '{exc.option}' in [{exc.section}]"
        ) from None
    except configparser.ParsingError as exc:
        lineno, line = exc.errors[0]
        raise SpecError(f"{source}: line {lineno}: cannot parse {line.strip()!r}") from None
    return cp


def check_keys(
    cp: configparser.ConfigParser,
    section: str,
    required: Iterable[str],
    optional: Iterable[str] = (),
    source: str = "<text>",
) -> None:
    if not cp.has_section(section):
        raise SpecError(f"{source}: missing section [{section}]")
    required = list(required)
    allowed = set(required) | set(optional)
    present = list(cp[section].keys())
    for key in present:
        if key not in allowed:
            raise SpecError(f"{source}: unknown key '{key}' in [{section}]")
    for key in required:
        if key not in present:
            raise SpecError(f"{source}: missing key '{key}' in [{section}]")


def get_float(cp: configparser.ConfigParser, section: str, key: str, source: str = "<text>") -> float:
    raw = cp[section][key]
    try:
        return float(raw)
    except ValueError:
        raise SpecError(f"{source}: [{section}] {key} = {raw!r} is not a number") from None


def get_int(cp: configparser.ConfigParser, section: str, key: str, source: str = "<text>") -> int:
    raw = cp[section][key]
    try:
        return int(raw)
    except ValueError:
        raise SpecError(f"{source}: [{section}] {key} = {raw!r} is not an integer") from None


def fmt_num(value: float) -> str:
    """Shortest text that parses back to exactly ``value``."""
    if isinstance(value, int):
        return str(value)
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    if value == int(value) and abs(value) < 1e15:
        return str(int(value))
    return repr(value)


def dump(sections: list[tuple[str, list[tuple[str, object]]]], header: str = "") -> str:
    lines: list[str] = []
    if header:
        lines.extend(f"# {h}" if h else "#" for h in header.splitlines())
        lines.append("")
    for name, items in sections:
        lines.append(f"[{name}]")
        for key, value in items:
            text = fmt_num(value) if isinstance(value, (int, float)) and not isinstance(value, bool) else str(value)
            lines.append(f"{key} = {text}")
        lines.append("")
    return "\n".join(lines)
