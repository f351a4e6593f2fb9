"""Software-simulated trusted execution environment.

The enclave measures its code + model bundle, confines raw documents and
keys in a sealed store, runs the skill-derivation pipeline, and emits
attestation evidence and provenance. Its attestation keypair plays the
hardware root-of-trust role; every output leaves through one audited egress
function that refuses to release raw input bytes.
"""

from __future__ import annotations

import os
import re
import secrets
import threading
import uuid
from dataclasses import dataclass, field
from random import Random

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers.aead import AESGCM

from . import credential as cred
from .attestation import (
    AttestationEvidence,
    EnclaveMeasurement,
    InputCommitment,
    Provenance,
    commit_inputs,
    measure,
    syllabus_set_digest,
    verify_attestation,
)
from .canonical import (
    SALT_LEN,
    attestation_payload,
    canonical_serialize,
    digest,
    enclave_input_commitment,
)
from .clock import Clock, SystemClock
from .errors import EmptyTaxonomy, NoEvidence, SealError, SessionNotReady
from .identity import Did, KeyPair, sign
from .skills import (
    CourseRecord,
    SkillTaxonomy,
    SkillVector,
    WeightConfig,
    course_vector,
    embed_taxonomy,
    personalize,
    top_k,
)

__all__ = [
    "AttestationEvidence",
    "EnclaveMeasurement",
    "InputCommitment",
    "Provenance",
    "commit_inputs",
    "measure",
    "verify_attestation",
    "SealedStore",
    "Enclave",
    "DerivationSession",
    "DerivationInputs",
    "derive_skill_credential",
]

_SENTENCE_SPLIT = re.compile(r"(?<=[.!?])\s+|\n+")


def split_sentences(text: str) -> list[str]:
    return [s.strip() for s in _SENTENCE_SPLIT.split(text) if s.strip()]


class SealedStore:
    """AEAD-sealed blobs under an enclave-instance key.

    Blobs sealed by one instance cannot be unsealed by another: the instance
    key never leaves the store.
    """

    def __init__(self):
        self._key = AESGCM.generate_key(bit_length=256)
        self._blobs: dict[str, bytes] = {}
        self._lock = threading.Lock()

    def seal(self, label: str, data: bytes) -> None:
        nonce = os.urandom(12)
        sealed = nonce + AESGCM(self._key).encrypt(nonce, data, label.encode("utf-8"))
        with self._lock:
            self._blobs[label] = sealed

    def unseal(self, label: str) -> bytes:
        with self._lock:
            sealed = self._blobs.get(label)
        if sealed is None:
            raise SealError(f"no sealed blob labelled {label!r}")
        try:
            return AESGCM(self._key).decrypt(sealed[:12], sealed[12:], label.encode("utf-8"))
        except InvalidTag as exc:
            raise SealError("unsealing failed: blob was sealed by a different instance") from exc

    def export_sealed(self, label: str) -> bytes:
        with self._lock:
            return self._blobs[label]

    def import_sealed(self, label: str, blob: bytes) -> None:
        with self._lock:
            self._blobs[label] = blob

    def labels(self) -> list[str]:
        with self._lock:
            return sorted(self._blobs)


@dataclass
class DerivationInputs:
    """Everything a derivation session consumes.

    ``syllabi`` maps course_id to the raw syllabus document; sentences are
    split and filtered inside the session.
    """

    courses: list[CourseRecord]
    syllabi: dict[str, str]
    taxonomy: SkillTaxonomy
    weights: WeightConfig
    holder_did: Did
    holder_keys: KeyPair
    verifier_nonce: bytes
    status_ref: tuple[str, int] = ("", 0)
    top_k: int = 10
    lifetime: int = 3600

    def transcript_bytes(self) -> bytes:
        # The registrar view: courses and grades, no syllabus content.
        rows = [
            {"course_id": c.course_id, "title": c.title, "level": c.level, "grade": c.grade}
            for c in self.courses
        ]
        return canonical_serialize(rows)

    def syllabus_documents(self) -> list[bytes]:
        return [self.syllabi[cid].encode("utf-8") for cid in sorted(self.syllabi)]


class Enclave:
    """Process-internal enclave with its own attestation root of trust."""

    def __init__(
        self,
        code_id: str,
        model_bundle: bytes,
        version: str,
        clock: Clock | None = None,
        attestation_keys: KeyPair | None = None,
    ):
        self.measurement = measure(code_id, model_bundle, version)
        self.sealed_store = SealedStore()
        self._attestation_keys = attestation_keys or KeyPair.generate()
        self.clock = clock or SystemClock()

    @property
    def attestation_public_key(self) -> bytes:
        return self._attestation_keys.public_key

    def start_session(
        self,
        policy_digest: bytes,
        provider,
        salt: bytes | None = None,
        rng: Random | None = None,
    ) -> "DerivationSession":
        return DerivationSession(
            enclave=self,
            policy_digest=policy_digest,
            provider=provider,
            salt=salt if salt is not None else secrets.token_bytes(SALT_LEN),
            rng=rng,
        )

    def _attestation_sign(self, payload: bytes) -> bytes:
        return sign(self._attestation_keys.private_key, payload)


@dataclass
class DerivationSession:
    """One derivation, single-threaded from input commit to egress."""

    enclave: Enclave
    policy_digest: bytes
    provider: object
    salt: bytes
    rng: Random | None = None
    commitment: InputCommitment | None = None
    _transcript_digest: bytes = b""
    _syllabus_digest: bytes = b""
    _inputs: DerivationInputs | None = None
    last_credential: cred.VerifiableCredential | None = None
    last_evidence: AttestationEvidence | None = None
    last_vector: SkillVector | None = None
    _derivation_id: str = field(default="", repr=False)

    def commit(self, inputs: DerivationInputs) -> InputCommitment:
        transcript = inputs.transcript_bytes()
        documents = inputs.syllabus_documents()
        self._transcript_digest = digest(transcript)
        self._syllabus_digest = syllabus_set_digest(documents)
        self.commitment = InputCommitment(
            salt=self.salt,
            h_inputs=enclave_input_commitment(self.salt, self._transcript_digest, self._syllabus_digest),
        )
        self._inputs = inputs
        store = self.enclave.sealed_store
        store.seal(f"session:{id(self)}:transcript", transcript)
        for i, doc in enumerate(documents):
            store.seal(f"session:{id(self)}:syllabus:{i}", doc)
        store.seal(f"session:{id(self)}:holder_sk", inputs.holder_keys.private_key)
        return self.commitment

    def derive(self, inputs: DerivationInputs | None = None) -> tuple[cred.VerifiableCredential, AttestationEvidence]:
        """Run filter, embed, score, weight; issue and attest the result."""
        if inputs is not None:
            self.commit(inputs)
        if self._inputs is None or self.commitment is None:
            raise SessionNotReady("derivation requires committed inputs")
        inputs = self._inputs
        if len(inputs.taxonomy) == 0:
            raise EmptyTaxonomy("cannot derive against an empty taxonomy")
        if not inputs.courses:
            raise NoEvidence("no course records supplied")

        taxonomy_vectors = embed_taxonomy(inputs.taxonomy, self.provider)
        contributing: list[CourseRecord] = []
        vectors: list[SkillVector] = []
        for course in inputs.courses:
            raw = inputs.syllabi.get(course.course_id, "")
            sentences = split_sentences(raw) if raw else list(course.syllabus_sentences)
            record = CourseRecord(
                course_id=course.course_id,
                title=course.title,
                level=course.level,
                grade=course.grade,
                syllabus_sentences=sentences,
            )
            try:
                vectors.append(
                    course_vector(record, inputs.taxonomy, self.provider, taxonomy_vectors=taxonomy_vectors)
                )
                contributing.append(record)
            except NoEvidence:
                continue
        if not contributing:
            raise NoEvidence("no course yielded parsable outcome sentences")

        profile = personalize(contributing, vectors, inputs.weights)
        ranked = top_k(profile, inputs.taxonomy, min(inputs.top_k, len(inputs.taxonomy)))
        claims = [(skill_id, round(score, 9)) for skill_id, score in ranked if score > 0.0]
        if not claims:
            raise NoEvidence("no skill scored above zero")

        now = self.enclave.clock.now()
        self._derivation_id = (
            uuid.UUID(int=self.rng.getrandbits(128), version=4).hex if self.rng else uuid.uuid4().hex
        )
        provenance = Provenance.build(
            transcript_digest=self._transcript_digest,
            syllabus_digest=self._syllabus_digest,
            m_e=self.enclave.measurement.m_e,
            h_inputs=self.commitment.h_inputs,
            h_policy=self.policy_digest,
            t=now,
            derivation_id=self._derivation_id,
        )
        vc = cred.issue(
            issuer_keys=inputs.holder_keys,
            issuer_did=inputs.holder_did,
            subject_did=inputs.holder_did,
            claims=claims,
            credential_class=cred.CLASS_DERIVATIVE,
            provenance=provenance.to_dict(),
            lifetime=inputs.lifetime,
            now=now,
            status_ref=inputs.status_ref,
            rng=self.rng,
        )
        evidence = self.attest(inputs.verifier_nonce, now)
        self.last_vector = profile
        self.last_credential, self.last_evidence = self._egress(vc, evidence)
        return self.last_credential, self.last_evidence

    def attest(self, verifier_nonce: bytes, now: int) -> AttestationEvidence:
        """Fresh evidence over this session's measurement, inputs, and policy."""
        if self.commitment is None:
            raise SessionNotReady("attestation requires committed inputs")
        m_e = self.enclave.measurement.m_e
        payload = attestation_payload(m_e, self.commitment.h_inputs, self.policy_digest, verifier_nonce, now)
        return AttestationEvidence(
            m_e=m_e,
            h_inputs=self.commitment.h_inputs,
            h_policy=self.policy_digest,
            n_v=verifier_nonce,
            t=now,
            sigma_tee=self.enclave._attestation_sign(payload),
        )

    def _egress(
        self, vc: cred.VerifiableCredential, evidence: AttestationEvidence
    ) -> tuple[cred.VerifiableCredential, AttestationEvidence]:
        """Single audited exit: refuse to release raw input windows."""
        out = canonical_serialize(vc.to_dict()) + canonical_serialize(evidence.to_dict())
        assert self._inputs is not None
        for raw in [self._inputs.transcript_bytes(), *self._inputs.syllabus_documents()]:
            for start in range(0, max(len(raw) - 31, 1), 16):
                window = raw[start : start + 32]
                if len(window) >= 8 and window in out:
                    raise SealError("egress audit: raw input bytes present in output")
        return vc, evidence


def derive_skill_credential(
    session: DerivationSession,
    transcript: list[CourseRecord],
    syllabi: dict[str, str],
    taxonomy: SkillTaxonomy,
    weights: WeightConfig,
    holder_did: Did,
    holder_keys: KeyPair,
    verifier_nonce: bytes,
    *,
    status_ref: tuple[str, int] = ("", 0),
    k: int = 10,
    lifetime: int = 3600,
) -> tuple[cred.VerifiableCredential, AttestationEvidence]:
    inputs = DerivationInputs(
        courses=transcript,
        syllabi=syllabi,
        taxonomy=taxonomy,
        weights=weights,
        holder_did=holder_did,
        holder_keys=holder_keys,
        verifier_nonce=verifier_nonce,
        status_ref=status_ref,
        top_k=k,
        lifetime=lifetime,
    )
    return session.derive(inputs)
