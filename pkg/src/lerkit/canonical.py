"""Canonical serialization and domain-separated hashing.

Every protocol object that is signed, digested, persisted, or sent over the
wire goes through :func:`canonical_serialize`, so equal objects always map to
identical octets regardless of construction order.

Encoding rules: key-sorted JSON, UTF-8, no insignificant whitespace, integers
exact, reals as shortest round-trip decimals, byte strings as lowercase hex.
"""

from __future__ import annotations

import hashlib
import json
from typing import Any

# Domain-separation tags for the enclave hash constructions.
TAG_INPUTS = b"inputs"
TAG_ATTEST = b"att"
TAG_PROV = b"prov"

DIGEST_LEN = 32
SALT_LEN = 16


def _jsonify(value: Any) -> Any:
    if value is None or isinstance(value, (bool, int, str)):
        return value
    if isinstance(value, float):
        if value != value or value in (float("inf"), float("-inf")):
            raise ValueError("non-finite float is not canonicalizable")
        return value
    if isinstance(value, (bytes, bytearray)):
        return bytes(value).hex()
    if isinstance(value, dict):
        out = {}
        for k, v in value.items():
            if not isinstance(k, str):
                raise TypeError(f"non-string map key: {k!r}")
            out[k] = _jsonify(v)
        return out
    if isinstance(value, (list, tuple)):
        return [_jsonify(v) for v in value]
    to_dict = getattr(value, "to_dict", None)
    if callable(to_dict):
        return _jsonify(to_dict())
    raise TypeError(f"cannot canonicalize {type(value).__name__}")


def canonical_serialize(value: Any) -> bytes:
    """Serialize a protocol object to its canonical octet form."""
    return json.dumps(
        _jsonify(value), sort_keys=True, separators=(",", ":"), ensure_ascii=False
    ).encode("utf-8")


def canonical_parse(data: bytes | str) -> Any:
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    return json.loads(data)


def digest(data: bytes) -> bytes:
    """The one hash used everywhere: SHA-256, 32 octets."""
    return hashlib.sha256(data).digest()


def digest_object(value: Any) -> bytes:
    return digest(canonical_serialize(value))


def enclave_input_commitment(salt: bytes, transcript_digest: bytes, syllabus_digest: bytes) -> bytes:
    """H(tag || salt || H(transcript) || H(syllabus)), bit-exact layout."""
    if len(salt) != SALT_LEN:
        raise ValueError(f"salt must be {SALT_LEN} octets")
    return digest(TAG_INPUTS + salt + transcript_digest + syllabus_digest)


def attestation_payload(m_e: bytes, h_inputs: bytes, h_policy: bytes, nonce: bytes, t: int) -> bytes:
    """Octets signed by the enclave attestation key.

    Fixed-width fields precede the variable-length nonce; the timestamp is a
    trailing 8-octet big-endian integer, so the layout parses unambiguously.
    """
    return TAG_ATTEST + m_e + h_inputs + h_policy + nonce + t.to_bytes(8, "big")


def provenance_digest(m_e: bytes, h_inputs: bytes, h_policy: bytes, t: int) -> bytes:
    """H(tag || M_e || H_inputs || H_policy || t)."""
    return digest(TAG_PROV + m_e + h_inputs + h_policy + t.to_bytes(8, "big"))
