"""Parser for experiment spec files.

Grammar (one item per line)::

    # comment            ; also lines starting with ';'
    [section]
    key = value

Section and key names are ``[A-Za-z_][A-Za-z0-9_]*`` and case-insensitive.
Values run to the end of the line, surrounding blanks stripped; there is no
quoting and no inline comment.  Keys may not repeat inside a section and
sections may not repeat.  Every value remembers its line and column so
that later validation errors can point at it.
"""

import re
from dataclasses import dataclass

__all__ = ["SpecParseError", "Value", "parse_spec_text", "parse_spec_file"]

_NAME = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")


class SpecParseError(ValueError):
    def __init__(self, message, line=None, col=None, source="<spec>"):
        self.line, self.col, self.source = line, col, source
        where = source if line is None else f"{source}:{line}:{col}"
        super().__init__(f"{where}: {message}")


@dataclass(frozen=True)
class Value:
    text: str
    line: int
    col: int


def parse_spec_text(text, source="<spec>"):
    """Return ``{section: {key: Value}}`` in file order."""
    sections = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.strip()
        if not stripped or stripped[0] in "#;":
            continue
        indent = len(raw) - len(raw.lstrip())
        if stripped.startswith("["):
            if not stripped.endswith("]"):
                raise SpecParseError("section header must end with ']'", lineno, indent + len(stripped), source)
            name = stripped[1:-1].strip()
            if not _NAME.fullmatch(name):
                raise SpecParseError(f"bad section name {name!r}", lineno, indent + 2, source)
            name = name.lower()
            if name in sections:
                raise SpecParseError(f"duplicate section [{name}]", lineno, indent + 1, source)
            current = sections[name] = {}
            continue
        eq = raw.find("=")
        if eq < 0:
            raise SpecParseError("expected 'key = value'", lineno, indent + 1, source)
        key = raw[:eq].strip()
        if not _NAME.fullmatch(key):
            raise SpecParseError(f"bad key {key!r}", lineno, indent + 1, source)
        if current is None:
            raise SpecParseError("key outside of any section", lineno, indent + 1, source)
        key = key.lower()
        if key in current:
            raise SpecParseError(f"duplicate key {key!r}", lineno, indent + 1, source)
        after = raw[eq + 1:]
        value = after.strip()
        col = eq + 2 + (len(after) - len(after.lstrip()))
        if not value:
            raise SpecParseError(f"empty value for {key!r}", lineno, eq + 2, source)
        current[key] = Value(value, lineno, col)
    return sections


def parse_spec_file(path):
    with open(path, encoding="utf-8") as fh:
        return parse_spec_text(fh.read(), source=str(path))
