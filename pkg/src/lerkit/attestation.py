"""Enclave measurement, input commitments, and attestation evidence.

The evidence tuple binds an enclave execution to its measured code bundle,
salted input commitment, policy digest, verifier nonce, and timestamp. The
attestation signature covers the exact concatenation produced by
:func:`lerkit.canonical.attestation_payload`.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import identity
from .canonical import (
    SALT_LEN,
    attestation_payload,
    canonical_serialize,
    digest,
    enclave_input_commitment,
    provenance_digest,
)
from .errors import BadSalt

# Reject reasons shared with presentation verification.
REASON_BAD_ATTESTATION = "BadAttestation"
REASON_BAD_NONCE = "BadNonce"
REASON_NOT_ALLOWLISTED = "MeasurementNotAllowlisted"
REASON_POLICY_MISMATCH = "PolicyMismatch"
REASON_STALE_ATTESTATION = "StaleAttestation"


@dataclass(frozen=True)
class EnclaveMeasurement:
    """Digest identifying the exact code + model bundle of an enclave."""

    m_e: bytes

    def to_dict(self) -> str:
        return self.m_e.hex()


def measure(code_id: str, model_bundle: bytes, version: str) -> EnclaveMeasurement:
    """Measurement over (code identifier, model bundle digest, version)."""
    material = canonical_serialize(
        {"code_id": code_id, "model_digest": digest(model_bundle).hex(), "version": version}
    )
    return EnclaveMeasurement(m_e=digest(material))


@dataclass(frozen=True)
class InputCommitment:
    salt: bytes
    h_inputs: bytes

    def to_dict(self) -> str:
        return self.h_inputs.hex()


def commit_inputs(transcript: bytes, syllabus: bytes, salt: bytes) -> InputCommitment:
    """Salted commitment to the (transcript, syllabus/LO) input pair."""
    if len(salt) != SALT_LEN:
        raise BadSalt(f"salt must be exactly {SALT_LEN} octets, got {len(salt)}")
    h = enclave_input_commitment(salt, digest(transcript), digest(syllabus))
    return InputCommitment(salt=salt, h_inputs=h)


def syllabus_set_digest(documents: list[bytes]) -> bytes:
    """Digest for a multi-document evidence set.

    Per-document digests are sorted and concatenated so the commitment is
    order-insensitive in the supplied documents.
    """
    return digest(b"".join(sorted(digest(d) for d in documents)))


@dataclass(frozen=True)
class AttestationEvidence:
    m_e: bytes
    h_inputs: bytes
    h_policy: bytes
    n_v: bytes
    t: int
    sigma_tee: bytes

    def payload(self) -> bytes:
        return attestation_payload(self.m_e, self.h_inputs, self.h_policy, self.n_v, self.t)

    def to_dict(self) -> dict:
        return {
            "m_e": self.m_e.hex(),
            "h_inputs": self.h_inputs.hex(),
            "h_policy": self.h_policy.hex(),
            "n_v": self.n_v.hex(),
            "t": self.t,
            "sigma_tee": self.sigma_tee.hex(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AttestationEvidence":
        return cls(
            m_e=bytes.fromhex(d["m_e"]),
            h_inputs=bytes.fromhex(d["h_inputs"]),
            h_policy=bytes.fromhex(d["h_policy"]),
            n_v=bytes.fromhex(d["n_v"]),
            t=int(d["t"]),
            sigma_tee=bytes.fromhex(d["sigma_tee"]),
        )


@dataclass(frozen=True)
class Provenance:
    """Binding of a derivative credential to its inputs, code, policy, and time."""

    inputs: tuple[bytes, bytes]
    code: bytes
    policy: bytes
    time: int
    derivation_id: str
    h_prov: bytes

    @classmethod
    def build(
        cls,
        transcript_digest: bytes,
        syllabus_digest: bytes,
        m_e: bytes,
        h_inputs: bytes,
        h_policy: bytes,
        t: int,
        derivation_id: str,
    ) -> "Provenance":
        return cls(
            inputs=(transcript_digest, syllabus_digest),
            code=m_e,
            policy=h_policy,
            time=t,
            derivation_id=derivation_id,
            h_prov=provenance_digest(m_e, h_inputs, h_policy, t),
        )

    def to_dict(self) -> dict:
        return {
            "inputs": [self.inputs[0].hex(), self.inputs[1].hex()],
            "code": self.code.hex(),
            "policy": self.policy.hex(),
            "time": self.time,
            "derivation_id": self.derivation_id,
            "h_prov": self.h_prov.hex(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Provenance":
        return cls(
            inputs=(bytes.fromhex(d["inputs"][0]), bytes.fromhex(d["inputs"][1])),
            code=bytes.fromhex(d["code"]),
            policy=bytes.fromhex(d["policy"]),
            time=int(d["time"]),
            derivation_id=d["derivation_id"],
            h_prov=bytes.fromhex(d["h_prov"]),
        )


@dataclass(frozen=True)
class AttestationResult:
    ok: bool
    reason: str | None = None


def verify_attestation(
    evidence: AttestationEvidence,
    enclave_public_key: bytes,
    expected_nonce: bytes,
    allowlist: set[bytes],
    expected_policy_digest: bytes,
    now: int,
    max_age: int,
) -> AttestationResult:
    """Accept iff signature, nonce, allowlist, policy digest, and age all hold.

    The age boundary is inclusive: evidence exactly max_age old still passes.
    """
    if not identity.verify(enclave_public_key, evidence.payload(), evidence.sigma_tee):
        return AttestationResult(False, REASON_BAD_ATTESTATION)
    if evidence.n_v != expected_nonce:
        return AttestationResult(False, REASON_BAD_NONCE)
    if evidence.m_e not in allowlist:
        return AttestationResult(False, REASON_NOT_ALLOWLISTED)
    if evidence.h_policy != expected_policy_digest:
        return AttestationResult(False, REASON_POLICY_MISMATCH)
    if now - evidence.t > max_age:
        return AttestationResult(False, REASON_STALE_ATTESTATION)
    return AttestationResult(True)


def check_provenance(provenance: Provenance, evidence: AttestationEvidence) -> bool:
    """Recompute the provenance digest from disclosed fields and cross-check."""
    if provenance.code != evidence.m_e or provenance.policy != evidence.h_policy:
        return False
    recomputed = provenance_digest(
        provenance.code, evidence.h_inputs, provenance.policy, provenance.time
    )
    return recomputed == provenance.h_prov
