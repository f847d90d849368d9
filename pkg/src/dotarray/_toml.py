"""Minimal TOML-subset reader for device files.

Python 3.10 has no stdlib ``tomllib`` and this package keeps its
dependency set to numpy/scipy, so device files are parsed with this
small reader. Supported subset: ``[section]`` headers, ``key = value``
pairs with integers, floats, booleans, double/single-quoted strings,
and (nested, multi-line) arrays. ``#`` comments. That covers the whole
device-file schema; anything fancier raises ConfigError.
"""

from __future__ import annotations

import re

from .errors import ConfigError

_SECTION_RE = re.compile(r"^\[([A-Za-z0-9_.-]+)\]\s*$")
_KEY_RE = re.compile(r"^([A-Za-z0-9_-]+)\s*=\s*(.*)$", re.S)
_NUM_RE = re.compile(r"^[+-]?(\d+\.?\d*([eE][+-]?\d+)?|\.\d+([eE][+-]?\d+)?)")


def parse(text: str) -> dict:
    """Parse TOML-subset ``text`` into nested dicts."""
    root: dict = {}
    table = root
    lines = text.splitlines()
    i = 0
    while i < len(lines):
        line = _strip_comment(lines[i])
        i += 1
        if not line.strip():
            continue
        m = _SECTION_RE.match(line.strip())
        if m:
            table = root.setdefault(m.group(1), {})
            if not isinstance(table, dict):
                raise ConfigError(f"duplicate key used as section: {m.group(1)}")
            continue
        m = _KEY_RE.match(line.strip())
        if not m:
            raise ConfigError(f"cannot parse line: {line.strip()!r}")
        key, rhs = m.group(1), m.group(2).strip()
        # pull in continuation lines until brackets balance
        while rhs.count("[") > rhs.count("]"):
            if i >= len(lines):
                raise ConfigError(f"unterminated array for key {key!r}")
            rhs += " " + _strip_comment(lines[i]).strip()
            i += 1
        if key in table:
            raise ConfigError(f"duplicate key: {key!r}")
        table[key] = _parse_value(rhs, key)
    return root


def _strip_comment(line: str) -> str:
    out = []
    in_str: str | None = None
    for ch in line:
        if in_str:
            if ch == in_str:
                in_str = None
        elif ch in "\"'":
            in_str = ch
        elif ch == "#":
            break
        out.append(ch)
    return "".join(out)


def _parse_value(text: str, key: str):
    value, rest = _parse_token(text.strip(), key)
    if rest.strip():
        raise ConfigError(f"trailing characters after value of {key!r}: {rest.strip()!r}")
    return value


def _parse_token(text: str, key: str):
    if not text:
        raise ConfigError(f"missing value for key {key!r}")
    ch = text[0]
    if ch == "[":
        items = []
        rest = text[1:].lstrip()
        while True:
            if not rest:
                raise ConfigError(f"unterminated array for key {key!r}")
            if rest[0] == "]":
                return items, rest[1:]
            item, rest = _parse_token(rest, key)
            items.append(item)
            rest = rest.lstrip()
            if rest.startswith(","):
                rest = rest[1:].lstrip()
    if ch in "\"'":
        end = text.find(ch, 1)
        if end < 0:
            raise ConfigError(f"unterminated string for key {key!r}")
        return text[1:end], text[end + 1:]
    if text.startswith("true"):
        return True, text[4:]
    if text.startswith("false"):
        return False, text[5:]
    m = _NUM_RE.match(text)
    if m:
        tok = m.group(0)
        rest = text[len(tok):]
        if any(c in tok for c in ".eE"):
            return float(tok), rest
        return int(tok), rest
    raise ConfigError(f"cannot parse value for key {key!r}: {text!r}")
