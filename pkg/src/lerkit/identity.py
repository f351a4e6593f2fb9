"""Key pairs, decentralized identifiers, and the resolver registry.

Identifiers are derived from an Ed25519 verification key: the identifier is
the base32-encoded SHA-256 digest of the raw public key, so identity is a
pure function of key material. Control of an identifier is proven by signing
a verifier challenge.
"""

from __future__ import annotations

import base64
import threading
from dataclasses import dataclass, field
from pathlib import Path

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)

from .canonical import canonical_parse, canonical_serialize, digest
from .errors import InvalidKey, NotFound, SigningError

ALGORITHM_ED25519 = "ed25519"
DEFAULT_METHOD = "ler"


@dataclass(frozen=True)
class KeyPair:
    """Raw Ed25519 key material; immutable after creation."""

    public_key: bytes
    private_key: bytes
    algorithm_id: str = ALGORITHM_ED25519

    @classmethod
    def generate(cls) -> "KeyPair":
        sk = Ed25519PrivateKey.generate()
        return cls(
            public_key=sk.public_key().public_bytes_raw(),
            private_key=sk.private_bytes_raw(),
        )


def sign(private_key: bytes, message: bytes) -> bytes:
    try:
        return Ed25519PrivateKey.from_private_bytes(private_key).sign(message)
    except Exception as exc:
        raise SigningError(f"signing failed: {exc}") from exc


def verify(public_key: bytes, message: bytes, signature: bytes) -> bool:
    try:
        Ed25519PublicKey.from_public_bytes(public_key).verify(signature, message)
        return True
    except (InvalidSignature, ValueError, TypeError):
        return False


def prove_control(private_key: bytes, challenge: bytes) -> bytes:
    """Signature over a verifier challenge, checkable against the DID document."""
    if not challenge:
        raise SigningError("challenge must be nonempty")
    return sign(private_key, challenge)


@dataclass(frozen=True)
class Did:
    method: str
    identifier: str

    def __str__(self) -> str:
        return f"did:{self.method}:{self.identifier}"

    def to_dict(self) -> str:
        return str(self)

    @classmethod
    def parse(cls, text: str) -> "Did":
        parts = text.split(":")
        if len(parts) != 3 or parts[0] != "did" or not parts[1] or not parts[2]:
            raise ValueError(f"not a DID string: {text!r}")
        return cls(method=parts[1], identifier=parts[2])


@dataclass
class VerificationMethod:
    key_id: str
    public_key: bytes
    algorithm_id: str = ALGORITHM_ED25519

    def to_dict(self) -> dict:
        return {
            "key_id": self.key_id,
            "public_key": self.public_key.hex(),
            "algorithm_id": self.algorithm_id,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "VerificationMethod":
        return cls(
            key_id=d["key_id"],
            public_key=bytes.fromhex(d["public_key"]),
            algorithm_id=d["algorithm_id"],
        )


@dataclass
class DidDocument:
    did: Did
    verification_methods: list[VerificationMethod]
    service_endpoints: list[tuple[str, str]] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)
    version: int = 1

    def __post_init__(self) -> None:
        if not self.verification_methods:
            raise InvalidKey("document requires at least one verification method")
        ids = [m.key_id for m in self.verification_methods]
        if len(ids) != len(set(ids)):
            raise InvalidKey("verification method key ids must be unique")

    def primary_key(self) -> bytes:
        return self.verification_methods[0].public_key

    def to_dict(self) -> dict:
        return {
            "did": str(self.did),
            "verification_methods": [m.to_dict() for m in self.verification_methods],
            "service_endpoints": [[name, loc] for name, loc in self.service_endpoints],
            "metadata": self.metadata,
            "version": self.version,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DidDocument":
        return cls(
            did=Did.parse(d["did"]),
            verification_methods=[VerificationMethod.from_dict(m) for m in d["verification_methods"]],
            service_endpoints=[(name, loc) for name, loc in d["service_endpoints"]],
            metadata=dict(d["metadata"]),
            version=int(d["version"]),
        )


def _encode_identifier(public_key: bytes) -> str:
    return base64.b32encode(digest(public_key)).decode("ascii").rstrip("=").lower()


def gen_did(public_key: bytes, method: str = DEFAULT_METHOD, metadata: dict | None = None) -> tuple[Did, DidDocument]:
    """Deterministically derive an identifier and its document from a key.

    The metadata map is carried opaquely into the document.
    """
    if len(public_key) != 32:
        raise InvalidKey(f"expected 32-octet Ed25519 public key, got {len(public_key)}")
    try:
        Ed25519PublicKey.from_public_bytes(public_key)
    except Exception as exc:
        raise InvalidKey(f"malformed public key: {exc}") from exc
    did = Did(method=method, identifier=_encode_identifier(public_key))
    doc = DidDocument(
        did=did,
        verification_methods=[VerificationMethod(key_id=f"{did}#key-1", public_key=public_key)],
        metadata=dict(metadata or {}),
    )
    return did, doc


class DidRegistry:
    """File-backed document store standing in for a resolver network.

    One canonical-serialized document per DID; concurrent reads, serialized
    writes. Updates bump the document version.
    """

    def __init__(self, root: str | Path):
        self._root = Path(root)
        self._root.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    def _path(self, did: Did) -> Path:
        return self._root / f"{did.method}.{did.identifier}.json"

    def register(self, doc: DidDocument) -> None:
        with self._lock:
            self._write(doc)

    def update(self, doc: DidDocument) -> DidDocument:
        """Replace an existing document, bumping its version counter."""
        with self._lock:
            current = self._read(doc.did)
            doc.version = current.version + 1
            self._write(doc)
            return doc

    def resolve(self, did: Did) -> DidDocument:
        return self._read(did)

    def _write(self, doc: DidDocument) -> None:
        path = self._path(doc.did)
        tmp = path.with_suffix(".tmp")
        tmp.write_bytes(canonical_serialize(doc))
        tmp.replace(path)

    def _read(self, did: Did) -> DidDocument:
        path = self._path(did)
        if not path.exists():
            raise NotFound(f"unknown DID: {did}")
        return DidDocument.from_dict(canonical_parse(path.read_bytes()))
