"""Canonical JSON and hash-rendering helpers.

Every byte that gets hashed, written to a ledger file, or exchanged between
nodes flows through this module, so the rules are deliberately strict:
object keys sorted by UTF-8 byte order, no whitespace, integers only
(floats are rejected outright), and 32-byte hashes rendered as exactly
64 lowercase hex characters.
"""

from __future__ import annotations

import json
from typing import Any

HASH_LEN = 32
ZERO_HASH = b"\x00" * HASH_LEN

_LOWER_HEX = set("0123456789abcdef")


class EncodingError(ValueError):
    """A value cannot be canonically encoded (float, bad key, bad UTF-8...)."""


def _check_value(value: Any, path: str) -> None:
    if value is None or isinstance(value, (str, bool)):
        return
    if isinstance(value, int):
        return
    if isinstance(value, float):
        raise EncodingError(f"float at {path} not allowed in canonical JSON")
    if isinstance(value, dict):
        for key, item in value.items():
            if not isinstance(key, str):
                raise EncodingError(f"non-string key {key!r} at {path}")
            _check_value(item, f"{path}.{key}")
        return
    if isinstance(value, (list, tuple)):
        for i, item in enumerate(value):
            _check_value(item, f"{path}[{i}]")
        return
    raise EncodingError(f"unencodable {type(value).__name__} at {path}")


def canonical_json_bytes(value: Any) -> bytes:
    """Serialize to the one canonical byte form: sorted keys, no whitespace."""
    _check_value(value, "$")
    try:
        text = json.dumps(
            value,
            sort_keys=True,
            separators=(",", ":"),
            ensure_ascii=False,
            allow_nan=False,
        )
        return text.encode("utf-8")
    except (TypeError, ValueError, UnicodeEncodeError) as exc:
        raise EncodingError(str(exc)) from exc


def hash_to_hex(digest: bytes) -> str:
    if not isinstance(digest, (bytes, bytearray)) or len(digest) != HASH_LEN:
        raise EncodingError(f"hash must be {HASH_LEN} raw bytes, got {digest!r}")
    return bytes(digest).hex()


def hex_to_hash(text: str) -> bytes:
    """Parse a 64-char lowercase hex rendering; anything else is rejected."""
    if not isinstance(text, str) or len(text) != HASH_LEN * 2:
        raise EncodingError(f"hash hex must be {HASH_LEN * 2} characters")
    if any(c not in _LOWER_HEX for c in text):
        raise EncodingError("hash hex must be lowercase hexadecimal")
    return bytes.fromhex(text)


def require_uint64(value: Any, name: str) -> int:
    if not isinstance(value, int) or isinstance(value, bool):
        raise EncodingError(f"{name} must be an integer")
    if value < 0 or value >= 1 << 64:
        raise EncodingError(f"{name} out of unsigned 64-bit range: {value}")
    return value
