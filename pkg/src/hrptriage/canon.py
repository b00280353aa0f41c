"""Canonical JSON serialization and digests.

Every hash in the system (snapshot ids, config hashes, audit chains) is
computed over canonical JSON: sorted keys, no insignificant whitespace,
UTF-8, NaN/Inf rejected. Two structurally equal values always serialize
to the same bytes.
"""

from __future__ import annotations

import hashlib
import json
from datetime import datetime, timezone
from typing import Any

GENESIS_HASH = "0" * 64


def canonical_json(value: Any) -> str:
    return json.dumps(
        value,
        sort_keys=True,
        separators=(",", ":"),
        ensure_ascii=False,
        allow_nan=False,
    )


def sha256_hex(data: bytes | str) -> str:
    if isinstance(data, str):
        data = data.encode("utf-8")
    return hashlib.sha256(data).hexdigest()


def digest_value(value: Any) -> str:
    """SHA-256 of the canonical JSON serialization of ``value``."""
    return sha256_hex(canonical_json(value))


def utc_now_iso() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="microseconds")
