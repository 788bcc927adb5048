"""Stable 64-bit content hashing and the canonical serialization it runs over.

Everything that must be bit-identical across platforms and runs (path ids,
derived seeds, manifest hashes) goes through ``canonical_json`` + ``fnv1a64``.
The canonical form is: object keys sorted bytewise, no insignificant
whitespace, floats rendered with 17 significant digits.
"""

from __future__ import annotations

FNV64_OFFSET = 0xCBF29CE484222325
FNV64_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1


def fnv1a64(data: bytes) -> int:
    """64-bit FNV-1a over raw bytes.

    Test vectors: fnv1a64(b"") == 0xcbf29ce484222325,
    fnv1a64(b"a") == 0xaf63dc4c8601ec8c,
    fnv1a64(b"foobar") == 0x85944171f73967e8.
    """
    h = FNV64_OFFSET
    for b in data:
        h ^= b
        h = (h * FNV64_PRIME) & _MASK64
    return h


def _format_float(x: float) -> str:
    if x != x or x in (float("inf"), float("-inf")):
        raise ValueError("non-finite float has no canonical form")
    return format(x, ".17g")


def canonical_json(value) -> str:
    """Render a JSON-like value in canonical form.

    Keys sorted bytewise (UTF-8 order == code-point order for str), no
    whitespace, floats with 17 significant digits so the bytes are identical
    across languages that honor IEEE-754 round-tripping.
    """
    out: list[str] = []
    _write(value, out)
    return "".join(out)


def _write(value, out: list[str]) -> None:
    if value is None:
        out.append("null")
    elif value is True:
        out.append("true")
    elif value is False:
        out.append("false")
    elif isinstance(value, int):
        out.append(str(value))
    elif isinstance(value, float):
        out.append(_format_float(value))
    elif isinstance(value, str):
        out.append(_escape(value))
    elif isinstance(value, dict):
        out.append("{")
        for i, key in enumerate(sorted(value)):
            if not isinstance(key, str):
                raise TypeError(f"canonical object keys must be str, got {type(key)!r}")
            if i:
                out.append(",")
            out.append(_escape(key))
            out.append(":")
            _write(value[key], out)
        out.append("}")
    elif isinstance(value, (list, tuple)):
        out.append("[")
        for i, item in enumerate(value):
            if i:
                out.append(",")
            _write(item, out)
        out.append("]")
    else:
        raise TypeError(f"value of type {type(value)!r} has no canonical form")


_ESCAPES = {'"': '\\"', "\\": "\\\\", "\n": "\\n", "\r": "\\r", "\t": "\\t"}


def _escape(s: str) -> str:
    parts = ['"']
    for ch in s:
        if ch in _ESCAPES:
            parts.append(_ESCAPES[ch])
        elif ord(ch) < 0x20:
            parts.append(f"\\u{ord(ch):04x}")
        else:
            parts.append(ch)
    parts.append('"')
    return "".join(parts)


def stable_hash(value) -> int:
    """64-bit hash of a value's canonical serialization."""
    return fnv1a64(canonical_json(value).encode("utf-8"))


def derive_seed(*parts) -> int:
    """Stable seed from heterogeneous parts (ints, strings, nested values).

    Defined as the stable hash of the parts as a canonical array, so derived
    seeds are reproducible across platforms and process boundaries.
    """
    return stable_hash(list(parts))
