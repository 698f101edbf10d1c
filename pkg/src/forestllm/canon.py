"""Canonical JSON and hashing used for cache keys, fixtures, and model files.

One serialization convention everywhere: keys sorted, UTF-8, no NaN or
infinity, floats in Python's shortest round-trip form.  Compact form feeds
hashes and wire payloads; pretty form feeds files meant for human diffing.
"""

from __future__ import annotations

import hashlib
import json


def canonical_json(obj: object) -> str:
    return json.dumps(
        obj,
        sort_keys=True,
        ensure_ascii=False,
        allow_nan=False,
        separators=(",", ":"),
    )


def canonical_json_pretty(obj: object) -> str:
    return (
        json.dumps(obj, sort_keys=True, ensure_ascii=False, allow_nan=False, indent=2)
        + "\n"
    )


def content_hash(obj: object) -> str:
    return hashlib.sha256(canonical_json(obj).encode("utf-8")).hexdigest()


def content_hash_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()
