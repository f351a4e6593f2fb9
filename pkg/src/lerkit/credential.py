"""Verifiable credentials: issuance, selective disclosure, verification, revocation.

Selective disclosure works by salted per-claim digest commitments under a
single issuer signature: the issuer signs the credential body with a digest
standing in for each claim, and a presentation reveals a chosen subset of
claims (with their salts) so the verifier can recompute membership in the
signed digest list. Revealed digests are stable across presentations, so
unlinkability holds only for unrevealed attributes; see README.

Verification is a strict conjunction. Each failed check maps to its own
reject reason, checked in a fixed order: issuer signature, digest binding,
holder signature, nonce, expiry, stapled status, attestation, provenance.
"""

from __future__ import annotations

import secrets
import uuid
from dataclasses import dataclass, field
from random import Random
from typing import Any, Callable

from . import attestation as att
from . import identity
from .canonical import SALT_LEN, canonical_serialize, digest
from .errors import (
    BadListSig,
    EmptyClaims,
    EmptyDisclosure,
    Expired,
    MissingProvenance,
    NotDerivative,
    Unauthorized,
)
from .identity import Did, DidDocument, KeyPair

CLASS_INSTITUTIONAL = "institutional"
CLASS_SELF_ISSUED = "self_issued"
CLASS_DERIVATIVE = "derivative"

STATUS_VALID = "valid"
STATUS_REVOKED = "revoked"
STATUS_REVOKED_UNKNOWN = "revoked-unknown"

LIST_INSTITUTIONAL = "institutional"
LIST_DERIVATIVE = "derivative"

# Reject reasons for presentation verification (attestation reasons are
# shared with the attestation module).
REASON_BAD_ISSUER_SIG = "BadIssuerSig"
REASON_BAD_HOLDER_SIG = "BadHolderSig"
REASON_DIGEST_MISMATCH = "DigestMismatch"
REASON_BAD_NONCE = "BadNonce"
REASON_EXPIRED = "Expired"
REASON_BAD_LIST_SIG = "BadListSig"
REASON_STATUS_MISMATCH = "StatusMismatch"
REASON_STALE_STATUS = "StaleStatus"
REASON_REVOKED = "Revoked"
REASON_BAD_ATTESTATION = att.REASON_BAD_ATTESTATION
REASON_NOT_ALLOWLISTED = att.REASON_NOT_ALLOWLISTED
REASON_POLICY_MISMATCH = att.REASON_POLICY_MISMATCH
REASON_STALE_ATTESTATION = att.REASON_STALE_ATTESTATION
REASON_PROVENANCE_MISMATCH = "ProvenanceMismatch"

_VC_CONTEXT = b"vc\x00"
_VP_CONTEXT = b"vp\x00"
_LIST_CONTEXT = b"status-list\x00"
_SNIPPET_CONTEXT = b"status-snippet\x00"

ClaimValue = str | int | float


@dataclass(frozen=True)
class Claim:
    key: str
    value: ClaimValue
    salt: bytes

    def digest(self) -> bytes:
        # Salt, then a canonical framing of (key, value); the framing keeps
        # the key/value boundary unambiguous.
        return digest(self.salt + canonical_serialize([self.key, self.value]))

    def to_dict(self) -> dict:
        return {"key": self.key, "value": self.value, "salt": self.salt.hex()}

    @classmethod
    def from_dict(cls, d: dict) -> "Claim":
        return cls(key=d["key"], value=d["value"], salt=bytes.fromhex(d["salt"]))


@dataclass
class VerifiableCredential:
    id: str
    credential_class: str
    issuer_did: Did
    subject_did: Did
    claims: list[Claim]
    claim_digests: list[bytes]
    issued_at: int
    expires_at: int | None
    status_ref: tuple[str, int]
    provenance: dict | None
    signature: bytes

    def body_dict(self) -> dict:
        """All signed fields; claim digests stand in for claim values."""
        return {
            "id": self.id,
            "credential_class": self.credential_class,
            "issuer_did": str(self.issuer_did),
            "subject_did": str(self.subject_did),
            "claim_digests": [d.hex() for d in self.claim_digests],
            "issued_at": self.issued_at,
            "expires_at": self.expires_at,
            "status_ref": [self.status_ref[0], self.status_ref[1]],
            "provenance": self.provenance,
        }

    def to_dict(self) -> dict:
        out = self.body_dict()
        out["claims"] = [c.to_dict() for c in self.claims]
        out["signature"] = self.signature.hex()
        return out

    def redacted_dict(self) -> dict:
        """Body plus signature, claims withheld; travels inside presentations."""
        out = self.body_dict()
        out["signature"] = self.signature.hex()
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "VerifiableCredential":
        return cls(
            id=d["id"],
            credential_class=d["credential_class"],
            issuer_did=Did.parse(d["issuer_did"]),
            subject_did=Did.parse(d["subject_did"]),
            claims=[Claim.from_dict(c) for c in d.get("claims", [])],
            claim_digests=[bytes.fromhex(x) for x in d["claim_digests"]],
            issued_at=int(d["issued_at"]),
            expires_at=None if d["expires_at"] is None else int(d["expires_at"]),
            status_ref=(d["status_ref"][0], int(d["status_ref"][1])),
            provenance=d["provenance"],
            signature=bytes.fromhex(d["signature"]),
        )


def issue(
    issuer_keys: KeyPair,
    issuer_did: Did,
    subject_did: Did,
    claims: list[tuple[str, ClaimValue]],
    credential_class: str = CLASS_INSTITUTIONAL,
    provenance: dict | None = None,
    lifetime: int | None = None,
    *,
    now: int,
    status_ref: tuple[str, int] = ("", 0),
    rng: Random | None = None,
) -> VerifiableCredential:
    """Sign a credential over salted claim commitments.

    Fresh random salts are drawn per claim, so two issues of identical claims
    commit to different digests. An injected ``rng`` makes salts and the
    credential id reproducible for replayable enclave sessions.
    """
    if not claims:
        raise EmptyClaims("refusing to issue a credential with no claims")
    if credential_class == CLASS_DERIVATIVE and provenance is None:
        raise MissingProvenance("derivative credentials must carry provenance")
    if credential_class != CLASS_DERIVATIVE and provenance is not None:
        raise ValueError("provenance is only valid on derivative credentials")

    if rng is None:
        salt_fn: Callable[[], bytes] = lambda: secrets.token_bytes(SALT_LEN)
        cred_id = uuid.uuid4().hex
    else:
        salt_fn = lambda: rng.randbytes(SALT_LEN)
        cred_id = uuid.UUID(int=rng.getrandbits(128), version=4).hex

    salted = [Claim(key=k, value=v, salt=salt_fn()) for k, v in claims]
    vc = VerifiableCredential(
        id=cred_id,
        credential_class=credential_class,
        issuer_did=issuer_did,
        subject_did=subject_did,
        claims=salted,
        claim_digests=[c.digest() for c in salted],
        issued_at=now,
        expires_at=None if lifetime is None else now + lifetime,
        status_ref=status_ref,
        provenance=provenance,
        signature=b"",
    )
    vc.signature = identity.sign(issuer_keys.private_key, _VC_CONTEXT + canonical_serialize(vc.body_dict()))
    return vc


@dataclass(frozen=True)
class VerifyResult:
    ok: bool
    reason: str | None = None


def verify_credential(vc: VerifiableCredential, issuer_public_key: bytes) -> VerifyResult:
    """Check the issuer signature and that every claim recomputes its digest."""
    if not identity.verify(issuer_public_key, _VC_CONTEXT + canonical_serialize(vc.body_dict()), vc.signature):
        return VerifyResult(False, REASON_BAD_ISSUER_SIG)
    if len(vc.claims) != len(vc.claim_digests):
        return VerifyResult(False, REASON_DIGEST_MISMATCH)
    for claim, expected in zip(vc.claims, vc.claim_digests):
        if claim.digest() != expected:
            return VerifyResult(False, REASON_DIGEST_MISMATCH)
    return VerifyResult(True)


# --- disclosure policies and presentations -----------------------------------

_COMPARATORS: dict[str, Callable[[float, float], bool]] = {
    ">=": lambda a, b: a >= b,
    ">": lambda a, b: a > b,
    "<=": lambda a, b: a <= b,
    "<": lambda a, b: a < b,
    "==": lambda a, b: a == b,
}


@dataclass(frozen=True)
class Predicate:
    key: str
    op: str
    bound: float

    def evaluate(self, value: ClaimValue) -> bool:
        return _COMPARATORS[self.op](float(value), float(self.bound))

    def to_dict(self) -> dict:
        return {"key": self.key, "op": self.op, "bound": self.bound}

    @classmethod
    def from_dict(cls, d: dict) -> "Predicate":
        return cls(key=d["key"], op=d["op"], bound=d["bound"])


@dataclass
class DisclosurePolicy:
    policy_id: str
    allowed_claims: set[str] = field(default_factory=set)
    allowed_predicates: list[Predicate] = field(default_factory=list)
    default_deny: bool = True

    def permitted_keys(self, requested: set[str]) -> set[str]:
        if self.default_deny:
            return requested & self.allowed_claims
        return set(requested)

    def permitted_predicates(self, requested: list[Predicate]) -> list[Predicate]:
        allowed = set(self.allowed_predicates)
        return [p for p in requested if p in allowed or not self.default_deny]

    def to_dict(self) -> dict:
        return {
            "policy_id": self.policy_id,
            "allowed_claims": sorted(self.allowed_claims),
            "allowed_predicates": [p.to_dict() for p in self.allowed_predicates],
            "default_deny": self.default_deny,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DisclosurePolicy":
        return cls(
            policy_id=d["policy_id"],
            allowed_claims=set(d["allowed_claims"]),
            allowed_predicates=[Predicate.from_dict(p) for p in d["allowed_predicates"]],
            default_deny=d["default_deny"],
        )


@dataclass
class StatusSnippet:
    """Signed single-credential status, stapled to a presentation."""

    owner_did: Did
    credential_id: str
    status: str
    list_kind: str
    issued_at: int
    signature: bytes

    def body_dict(self) -> dict:
        return {
            "owner_did": str(self.owner_did),
            "credential_id": self.credential_id,
            "status": self.status,
            "list_kind": self.list_kind,
            "issued_at": self.issued_at,
        }

    def to_dict(self) -> dict:
        out = self.body_dict()
        out["signature"] = self.signature.hex()
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "StatusSnippet":
        return cls(
            owner_did=Did.parse(d["owner_did"]),
            credential_id=d["credential_id"],
            status=d["status"],
            list_kind=d["list_kind"],
            issued_at=int(d["issued_at"]),
            signature=bytes.fromhex(d["signature"]),
        )


@dataclass
class VerifiablePresentation:
    credential_ref: dict
    revealed: list[Claim]
    predicate_results: list[tuple[Predicate, bool]]
    nonce: bytes
    created_at: int
    stapled_status: StatusSnippet
    attestation: dict | None
    holder_signature: bytes

    def body_dict(self) -> dict:
        return {
            "credential_ref": self.credential_ref,
            "revealed": [c.to_dict() for c in self.revealed],
            "predicate_results": [[p.to_dict(), ok] for p, ok in self.predicate_results],
            "nonce": self.nonce.hex(),
            "created_at": self.created_at,
            "stapled_status": self.stapled_status.to_dict(),
            "attestation": self.attestation,
        }

    def to_dict(self) -> dict:
        out = self.body_dict()
        out["holder_signature"] = self.holder_signature.hex()
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "VerifiablePresentation":
        return cls(
            credential_ref=d["credential_ref"],
            revealed=[Claim.from_dict(c) for c in d["revealed"]],
            predicate_results=[(Predicate.from_dict(p), bool(ok)) for p, ok in d["predicate_results"]],
            nonce=bytes.fromhex(d["nonce"]),
            created_at=int(d["created_at"]),
            stapled_status=StatusSnippet.from_dict(d["stapled_status"]),
            attestation=d["attestation"],
            holder_signature=bytes.fromhex(d["holder_signature"]),
        )


def present(
    credential: VerifiableCredential,
    policy: DisclosurePolicy,
    requested_keys: set[str],
    requested_predicates: list[Predicate],
    holder_keys: KeyPair,
    nonce: bytes,
    status: StatusSnippet,
    *,
    now: int,
    attestation_evidence: dict | None = None,
) -> VerifiablePresentation:
    """Build a holder-signed presentation revealing requested ∩ allowed.

    Keys outside the policy are dropped, not errored; predicate results carry
    a boolean without revealing the underlying value.
    """
    if credential.expires_at is not None and now > credential.expires_at:
        raise Expired(f"credential {credential.id} expired at {credential.expires_at}")

    keys = policy.permitted_keys(requested_keys)
    revealed = [c for c in credential.claims if c.key in keys]

    by_key = {c.key: c for c in credential.claims}
    results: list[tuple[Predicate, bool]] = []
    for pred in policy.permitted_predicates(requested_predicates):
        claim = by_key.get(pred.key)
        if claim is not None:
            results.append((pred, pred.evaluate(claim.value)))

    if not revealed and not results:
        raise EmptyDisclosure("policy permits none of the requested attributes")

    vp = VerifiablePresentation(
        credential_ref=credential.redacted_dict(),
        revealed=revealed,
        predicate_results=results,
        nonce=nonce,
        created_at=now,
        stapled_status=status,
        attestation=attestation_evidence,
        holder_signature=b"",
    )
    vp.holder_signature = identity.sign(
        holder_keys.private_key, _VP_CONTEXT + canonical_serialize(vp.body_dict())
    )
    return vp


@dataclass
class VerifierPolicy:
    """Verifier acceptance rules: allowlist, freshness, threshold, policy pin."""

    measurement_allowlist: set[bytes]
    freshness_delta: int
    tau: float
    expected_policy_digest: bytes
    nonce_ttl: int = 300
    attestation_max_age: int = 300
    enclave_trust_anchor: bytes = b""
    combiner: str = "semsim"
    release: str = "decision+score"

    def __post_init__(self) -> None:
        if self.freshness_delta <= 0:
            raise ValueError("freshness window must be positive")
        if not 0.0 <= self.tau <= 1.0:
            raise ValueError("tau must lie in [0, 1]")


def verify(
    presentation: VerifiablePresentation,
    issuer_doc: DidDocument,
    holder_doc: DidDocument,
    verifier_policy: VerifierPolicy,
    now: int,
    expected_nonce: bytes,
) -> VerifyResult:
    """Conjunctive acceptance over the full rule set; first failure wins."""
    ref = presentation.credential_ref
    try:
        body = {k: v for k, v in ref.items() if k != "signature"}
        issuer_sig = bytes.fromhex(ref["signature"])
        digest_list = [bytes.fromhex(x) for x in ref["claim_digests"]]
        credential_class = ref["credential_class"]
        credential_id = ref["id"]
        expires_at = ref["expires_at"]
    except (KeyError, TypeError, ValueError):
        return VerifyResult(False, REASON_BAD_ISSUER_SIG)

    # 1. issuer signature over the redacted credential body
    if not identity.verify(issuer_doc.primary_key(), _VC_CONTEXT + canonical_serialize(body), issuer_sig):
        return VerifyResult(False, REASON_BAD_ISSUER_SIG)

    # 2. every revealed claim recomputes to a signed digest
    digest_set = set(digest_list)
    for claim in presentation.revealed:
        if claim.digest() not in digest_set:
            return VerifyResult(False, REASON_DIGEST_MISMATCH)

    # 3. holder signature over the whole presentation body
    if not identity.verify(
        holder_doc.primary_key(),
        _VP_CONTEXT + canonical_serialize(presentation.body_dict()),
        presentation.holder_signature,
    ):
        return VerifyResult(False, REASON_BAD_HOLDER_SIG)

    # 4. nonce equals the verifier's outstanding challenge
    if presentation.nonce != expected_nonce:
        return VerifyResult(False, REASON_BAD_NONCE)

    # 5. credential not expired
    if expires_at is not None and now > int(expires_at):
        return VerifyResult(False, REASON_EXPIRED)

    # 6. stapled status: signed by the credential issuer, bound to this
    #    credential, fresh within the window (boundary inclusive), not revoked
    snippet = presentation.stapled_status
    if not identity.verify(
        issuer_doc.primary_key(), _SNIPPET_CONTEXT + canonical_serialize(snippet.body_dict()), snippet.signature
    ):
        return VerifyResult(False, REASON_BAD_LIST_SIG)
    if snippet.credential_id != credential_id or str(snippet.owner_did) != ref["issuer_did"]:
        return VerifyResult(False, REASON_STATUS_MISMATCH)
    if now - snippet.issued_at > verifier_policy.freshness_delta:
        return VerifyResult(False, REASON_STALE_STATUS)
    if snippet.status != STATUS_VALID:
        return VerifyResult(False, REASON_REVOKED)

    # 7. attestation: mandatory for derivative credentials
    if credential_class == CLASS_DERIVATIVE or presentation.attestation is not None:
        if presentation.attestation is None:
            return VerifyResult(False, REASON_BAD_ATTESTATION)
        try:
            evidence = att.AttestationEvidence.from_dict(presentation.attestation)
        except (KeyError, TypeError, ValueError):
            return VerifyResult(False, REASON_BAD_ATTESTATION)
        result = att.verify_attestation(
            evidence,
            verifier_policy.enclave_trust_anchor,
            expected_nonce,
            verifier_policy.measurement_allowlist,
            verifier_policy.expected_policy_digest,
            now,
            verifier_policy.attestation_max_age,
        )
        if not result.ok:
            return VerifyResult(False, result.reason)

        # 8. provenance digest recomputes from disclosed fields
        if ref.get("provenance") is not None:
            try:
                prov = att.Provenance.from_dict(ref["provenance"])
            except (KeyError, TypeError, ValueError):
                return VerifyResult(False, REASON_PROVENANCE_MISMATCH)
            if not att.check_provenance(prov, evidence):
                return VerifyResult(False, REASON_PROVENANCE_MISMATCH)

    return VerifyResult(True)


# --- status lists -------------------------------------------------------------


@dataclass
class StatusList:
    owner_did: Did
    entries: dict[str, str]
    issued_at: int
    list_kind: str
    signature: bytes

    def body_dict(self) -> dict:
        return {
            "owner_did": str(self.owner_did),
            "entries": self.entries,
            "issued_at": self.issued_at,
            "list_kind": self.list_kind,
        }

    def to_dict(self) -> dict:
        out = self.body_dict()
        out["signature"] = self.signature.hex()
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "StatusList":
        return cls(
            owner_did=Did.parse(d["owner_did"]),
            entries=dict(d["entries"]),
            issued_at=int(d["issued_at"]),
            list_kind=d["list_kind"],
            signature=bytes.fromhex(d["signature"]),
        )


def _sign_list(lst: StatusList, owner_keys: KeyPair) -> StatusList:
    lst.signature = identity.sign(owner_keys.private_key, _LIST_CONTEXT + canonical_serialize(lst.body_dict()))
    return lst


def new_status_list(owner_keys: KeyPair, owner_did: Did, list_kind: str, now: int) -> StatusList:
    return _sign_list(StatusList(owner_did=owner_did, entries={}, issued_at=now, list_kind=list_kind, signature=b""), owner_keys)


def _check_owner(lst: StatusList, owner_keys: KeyPair) -> None:
    derived, _ = identity.gen_did(owner_keys.public_key, lst.owner_did.method)
    if derived != lst.owner_did:
        raise Unauthorized("keys do not control the status list owner DID")


def add_entry(lst: StatusList, credential_id: str, owner_keys: KeyPair, now: int) -> StatusList:
    _check_owner(lst, owner_keys)
    if lst.entries.get(credential_id) == STATUS_REVOKED:
        raise Unauthorized("revoked entries are permanent; issue a new credential id")
    lst.entries[credential_id] = STATUS_VALID
    lst.issued_at = now
    return _sign_list(lst, owner_keys)


def revoke(lst: StatusList, credential_id: str, owner_keys: KeyPair, now: int) -> StatusList:
    """Mark an entry revoked and re-sign; idempotent, never un-revokes."""
    _check_owner(lst, owner_keys)
    lst.entries[credential_id] = STATUS_REVOKED
    lst.issued_at = now
    return _sign_list(lst, owner_keys)


def status(lst: StatusList, credential_id: str, owner_public_key: bytes) -> str:
    """Look up a credential's status under the list's unknown-id semantics.

    Absent ids are valid on institutional lists; derivative credentials are
    short-lived and must be affirmatively listed, so absent means
    revoked-unknown.
    """
    if not identity.verify(owner_public_key, _LIST_CONTEXT + canonical_serialize(lst.body_dict()), lst.signature):
        raise BadListSig("status list signature does not verify")
    if credential_id in lst.entries:
        return lst.entries[credential_id]
    return STATUS_VALID if lst.list_kind == LIST_INSTITUTIONAL else STATUS_REVOKED_UNKNOWN


def staple_status(lst: StatusList, credential_id: str, owner_keys: KeyPair, now: int) -> StatusSnippet:
    """Produce a fresh signed snippet of one credential's current status."""
    current = status(lst, credential_id, owner_keys.public_key)
    snippet = StatusSnippet(
        owner_did=lst.owner_did,
        credential_id=credential_id,
        status=current,
        list_kind=lst.list_kind,
        issued_at=now,
        signature=b"",
    )
    snippet.signature = identity.sign(
        owner_keys.private_key, _SNIPPET_CONTEXT + canonical_serialize(snippet.body_dict())
    )
    return snippet


def reissue_on_dispute(
    old: VerifiableCredential,
    corrected_inputs: Any,
    enclave_session: Any,
    status_list: StatusList,
    owner_keys: KeyPair,
    now: int,
) -> tuple[VerifiableCredential, StatusList]:
    """Derive a corrected credential and revoke the superseded one.

    The old id stays on the list as revoked, so the supersession remains
    visible to verifiers.
    """
    if old.credential_class != CLASS_DERIVATIVE:
        raise NotDerivative("only derivative credentials are re-derived on dispute")
    new_vc, _evidence = enclave_session.derive(corrected_inputs)
    updated = revoke(status_list, old.id, owner_keys, now)
    updated = add_entry(updated, new_vc.id, owner_keys, now)
    return new_vc, updated
