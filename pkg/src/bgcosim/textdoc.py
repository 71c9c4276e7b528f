"""Strict parser/emitter for the structured text documents used by bgcosim.

The dialect is a small TOML-like subset: ``key = value`` pairs, ``[table]``
sections, ``[[table]]`` array-of-table entries, and values that are quoted
strings, integers, floats, booleans, or (possibly multi-line) arrays of
scalars. Parsing is strict -- malformed lines, duplicate keys, and type
surprises raise TextDocError with a line number -- and emission is
byte-deterministic, which the reproducibility contracts rely on.
"""

from __future__ import annotations

import json
import re

_KEY_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*$")
_INT_RE = re.compile(r"[+-]?\d+$")


class TextDocError(ValueError):
    """Malformed structured-text document."""


def _strip_comment(line: str) -> str:
    out = []
    in_string = False
    escaped = False
    for ch in line:
        if in_string:
            out.append(ch)
            if escaped:
                escaped = False
            elif ch == "\\":
                escaped = True
            elif ch == '"':
                in_string = False
            continue
        if ch == "#":
            break
        if ch == '"':
            in_string = True
        out.append(ch)
    return "".join(out).strip()


def _parse_scalar(token: str, lineno: int) -> object:
    token = token.strip()
    if not token:
        raise TextDocError(f"line {lineno}: empty value")
    if token.startswith('"'):
        try:
            return json.loads(token)
        except json.JSONDecodeError as exc:
            raise TextDocError(f"line {lineno}: bad string {token!r}") from exc
    if token == "true":
        return True
    if token == "false":
        return False
    if _INT_RE.match(token):
        return int(token)
    try:
        return float(token)
    except ValueError:
        raise TextDocError(
            f"line {lineno}: cannot parse value {token!r} "
            "(strings must be double-quoted)"
        ) from None


def _split_array(body: str, lineno: int) -> list:
    items = []
    depth = 0
    in_string = False
    escaped = False
    current = []
    for ch in body:
        if in_string:
            current.append(ch)
            if escaped:
                escaped = False
            elif ch == "\\":
                escaped = True
            elif ch == '"':
                in_string = False
            continue
        if ch == '"':
            in_string = True
            current.append(ch)
        elif ch == "[":
            depth += 1
            current.append(ch)
        elif ch == "]":
            depth -= 1
            current.append(ch)
        elif ch == "," and depth == 0:
            items.append("".join(current))
            current = []
        else:
            current.append(ch)
    tail = "".join(current).strip()
    if tail:
        items.append(tail)
    return [_parse_value(item.strip(), lineno) for item in items if item.strip()]


def _parse_value(token: str, lineno: int) -> object:
    token = token.strip()
    if token.startswith("["):
        if not token.endswith("]"):
            raise TextDocError(f"line {lineno}: unterminated array")
        return _split_array(token[1:-1], lineno)
    return _parse_scalar(token, lineno)


def _descend(root: dict, path: list[str], lineno: int) -> dict:
    node = root
    for part in path:
        child = node.get(part)
        if child is None:
            child = {}
            node[part] = child
        if isinstance(child, list):
            if not child or not isinstance(child[-1], dict):
                raise TextDocError(f"line {lineno}: {part!r} is not a table")
            child = child[-1]
        if not isinstance(child, dict):
            raise TextDocError(f"line {lineno}: {part!r} is not a table")
        node = child
    return node


def loads(text: str) -> dict:
    """Parse a structured-text document into nested dicts/lists."""
    root: dict = {}
    target = root
    pending_key = None
    pending_parts: list[str] = []
    pending_line = 0

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw)
        if pending_key is not None:
            pending_parts.append(line)
            joined = " ".join(pending_parts)
            if _array_closed(joined):
                target[pending_key] = _parse_value(joined, pending_line)
                pending_key = None
                pending_parts = []
            continue
        if not line:
            continue
        if line.startswith("[["):
            if not line.endswith("]]"):
                raise TextDocError(f"line {lineno}: malformed table header")
            path = [p.strip() for p in line[2:-2].split(".")]
            _check_path(path, lineno)
            parent = _descend(root, path[:-1], lineno)
            entries = parent.setdefault(path[-1], [])
            if not isinstance(entries, list):
                raise TextDocError(f"line {lineno}: {path[-1]!r} already a scalar")
            entry: dict = {}
            entries.append(entry)
            target = entry
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise TextDocError(f"line {lineno}: malformed table header")
            path = [p.strip() for p in line[1:-1].split(".")]
            _check_path(path, lineno)
            target = _descend(root, path, lineno)
            continue
        if "=" not in line:
            raise TextDocError(f"line {lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        key = key.strip()
        if not _KEY_RE.match(key):
            raise TextDocError(f"line {lineno}: bad key {key!r}")
        if key in target:
            raise TextDocError(f"line {lineno}: duplicate key {key!r}")
        value = value.strip()
        if value.startswith("[") and not _array_closed(value):
            pending_key = key
            pending_parts = [value]
            pending_line = lineno
            continue
        target[key] = _parse_value(value, lineno)

    if pending_key is not None:
        raise TextDocError(f"line {pending_line}: unterminated array")
    return root


def _check_path(path: list[str], lineno: int) -> None:
    for part in path:
        if not _KEY_RE.match(part):
            raise TextDocError(f"line {lineno}: bad table name {part!r}")


def _array_closed(token: str) -> bool:
    depth = 0
    in_string = False
    escaped = False
    for ch in token:
        if in_string:
            if escaped:
                escaped = False
            elif ch == "\\":
                escaped = True
            elif ch == '"':
                in_string = False
            continue
        if ch == '"':
            in_string = True
        elif ch == "[":
            depth += 1
        elif ch == "]":
            depth -= 1
    return depth == 0


def _format_scalar(value: object) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, str):
        return json.dumps(value)
    raise TextDocError(f"cannot emit value of type {type(value).__name__}")


def _format_value(value: object) -> str:
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_format_scalar(v) for v in value) + "]"
    return _format_scalar(value)


def _emit_table(doc: dict, path: list[str], out: list[str]) -> None:
    scalars = []
    tables = []
    table_lists = []
    for key, value in doc.items():
        if isinstance(value, dict):
            tables.append((key, value))
        elif isinstance(value, (list, tuple)) and value and isinstance(value[0], dict):
            table_lists.append((key, value))
        else:
            scalars.append((key, value))
    for key, value in scalars:
        out.append(f"{key} = {_format_value(value)}")
    for key, value in tables:
        out.append("")
        out.append("[" + ".".join(path + [key]) + "]")
        _emit_table(value, path + [key], out)
    for key, entries in table_lists:
        for entry in entries:
            out.append("")
            out.append("[[" + ".".join(path + [key]) + "]]")
            _emit_table(entry, path + [key], out)


def dumps(doc: dict) -> str:
    """Serialize nested dicts/lists to deterministic structured text."""
    out: list[str] = []
    _emit_table(doc, [], out)
    return "\n".join(out).lstrip("\n") + "\n"


def load(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return loads(fh.read())


def dump(doc: dict, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps(doc))
