"""Six-step workflow across issuer, holder, and verifier actors.

Steps 1-3 cover institutional issuance, enclave derivation, and wallet
storage; steps 4-6 cover presentation, conjunctive verification, and
skills-only matching. Messages travel through a transport abstraction with a
fault-injection hook standing in for the network adversary.
"""

from __future__ import annotations

import secrets
import threading
from dataclasses import dataclass, field
from typing import Callable

from . import credential as cred
from .canonical import canonical_serialize, digest
from .clock import Clock, SystemClock
from .credential import DisclosurePolicy, Predicate, VerifierPolicy, VerifyResult
from .enclave import DerivationInputs, DerivationSession, Enclave
from .errors import LerError, NoCandidateSkills, NotFound
from .identity import Did, DidDocument, DidRegistry, KeyPair, gen_did
from .matching import AttestedSkillClaims, JobRequirement, MatchResult, decide
from .skills import CourseRecord, SkillTaxonomy, WeightConfig

__all__ = [
    "VerifierPolicy",
    "PolicyBundle",
    "Session",
    "InProcTransport",
    "IssuerActor",
    "HolderActor",
    "VerifierActor",
    "run_issuance",
    "run_derivation",
    "run_verification",
]

NONCE_LEN = 16


@dataclass
class PolicyBundle:
    """Disclosure/acceptance/matching configuration pinned by its digest.

    Holder and verifier both derive the policy digest from this bundle; the
    enclave binds it into attestation evidence, so a verifier only accepts
    derivations produced under the exact configuration it expects.
    """

    tau: float
    combiner: str
    k: int
    freshness_delta: int
    weights: WeightConfig
    taxonomy_id: str

    def to_dict(self) -> dict:
        return {
            "tau": self.tau,
            "combiner": self.combiner,
            "k": self.k,
            "freshness_delta": self.freshness_delta,
            "weights": self.weights.to_dict(),
            "taxonomy_id": self.taxonomy_id,
        }

    def policy_digest(self) -> bytes:
        return digest(canonical_serialize(self.to_dict()))


@dataclass
class Session:
    """Per-exchange verifier state; steps advance monotonically."""

    session_id: str
    step: int = 1
    outstanding_nonce: bytes = b""
    nonce_issued_at: int = 0
    nonce_used: bool = False
    transcript: list[dict] = field(default_factory=list)

    def advance(self, step: int) -> None:
        if step < self.step:
            raise LerError(f"session {self.session_id} cannot move from step {self.step} back to {step}")
        self.step = step

    def record(self, envelope: dict) -> None:
        self.transcript.append(envelope)


FaultHook = Callable[[dict], list[dict]]


class InProcTransport:
    """In-process message passing with a drop/replay/mutate fault hook.

    The hook maps one envelope to the list actually delivered: empty to
    drop, one to pass (possibly mutated), several to replay.
    """

    def __init__(self, fault_hook: FaultHook | None = None):
        self._handlers: dict[str, Callable[[dict], dict]] = {}
        self.fault_hook = fault_hook

    def register(self, did: Did, handler: Callable[[dict], dict]) -> None:
        self._handlers[str(did)] = handler

    def request(self, recipient: Did, envelope: dict) -> dict:
        handler = self._handlers.get(str(recipient))
        if handler is None:
            raise NotFound(f"no transport handler for {recipient}")
        deliveries = [envelope] if self.fault_hook is None else self.fault_hook(envelope)
        if not deliveries:
            raise LerError("message dropped in transit")
        response: dict = {}
        for delivered in deliveries:
            response = handler(delivered)
        return response


def make_envelope(session_id: str, step: int, payload: dict, sender: Did) -> dict:
    return {"session_id": session_id, "step": step, "payload": payload, "sender_did": str(sender)}


class IssuerActor:
    """Authoritative issuer: signs institutional credentials, hosts status."""

    def __init__(self, keys: KeyPair, registry: DidRegistry, clock: Clock | None = None, method: str = "ler"):
        self.keys = keys
        self.did, self.doc = gen_did(keys.public_key, method)
        registry.register(self.doc)
        self.registry = registry
        self.clock = clock or SystemClock()
        self.status_list = cred.new_status_list(keys, self.did, cred.LIST_INSTITUTIONAL, self.clock.now())

    def issue_record(
        self,
        subject_did: Did,
        claims: list[tuple[str, cred.ClaimValue]],
        lifetime: int | None = None,
    ) -> cred.VerifiableCredential:
        vc = cred.issue(
            self.keys,
            self.did,
            subject_did,
            claims,
            cred.CLASS_INSTITUTIONAL,
            None,
            lifetime,
            now=self.clock.now(),
            status_ref=(f"status:{self.did}", 0),
        )
        self.status_list = cred.add_entry(self.status_list, vc.id, self.keys, self.clock.now())
        return vc

    def staple(self, credential_id: str) -> cred.StatusSnippet:
        return cred.staple_status(self.status_list, credential_id, self.keys, self.clock.now())

    def revoke(self, credential_id: str) -> None:
        self.status_list = cred.revoke(self.status_list, credential_id, self.keys, self.clock.now())


class HolderActor:
    """Learner wallet: stores credentials, drives derivation, presents."""

    def __init__(self, keys: KeyPair, registry: DidRegistry, clock: Clock | None = None, method: str = "ler"):
        self.keys = keys
        self.did, self.doc = gen_did(keys.public_key, method)
        registry.register(self.doc)
        self.registry = registry
        self.clock = clock or SystemClock()
        self.wallet: dict[str, cred.VerifiableCredential] = {}
        self.policies: dict[str, DisclosurePolicy] = {}
        self.sessions: dict[str, DerivationSession] = {}
        self.status_list = cred.new_status_list(keys, self.did, cred.LIST_DERIVATIVE, self.clock.now())

    def receive_credential(self, vc_dict: dict, issuer_doc: DidDocument) -> bool:
        """Verify a delivered credential before storing; dedupe by id."""
        vc = cred.VerifiableCredential.from_dict(vc_dict)
        result = cred.verify_credential(vc, issuer_doc.primary_key())
        if not result.ok:
            return False
        self.wallet[vc.id] = vc
        return True

    def set_policy(self, credential_id: str, policy: DisclosurePolicy) -> None:
        self.policies[credential_id] = policy

    def derive(
        self,
        enclave: Enclave,
        courses: list[CourseRecord],
        syllabi: dict[str, str],
        taxonomy: SkillTaxonomy,
        weights: WeightConfig,
        bundle: PolicyBundle,
        provider,
        verifier_nonce: bytes = b"",
        lifetime: int = 3600,
    ) -> cred.VerifiableCredential:
        session = enclave.start_session(bundle.policy_digest(), provider)
        inputs = DerivationInputs(
            courses=courses,
            syllabi=syllabi,
            taxonomy=taxonomy,
            weights=weights,
            holder_did=self.did,
            holder_keys=self.keys,
            verifier_nonce=verifier_nonce or secrets.token_bytes(NONCE_LEN),
            status_ref=(f"status:{self.did}", 0),
            top_k=bundle.k,
            lifetime=lifetime,
        )
        vc, _evidence = session.derive(inputs)
        self.wallet[vc.id] = vc
        self.sessions[vc.id] = session
        self.status_list = cred.add_entry(self.status_list, vc.id, self.keys, self.clock.now())
        # Default policy: every skill claim may be revealed.
        self.policies[vc.id] = DisclosurePolicy(
            policy_id=f"policy:{vc.id}", allowed_claims={c.key for c in vc.claims}
        )
        return vc

    def build_presentation(
        self,
        credential_id: str,
        requested_keys: set[str],
        requested_predicates: list[Predicate],
        nonce: bytes,
        issuer_staple: cred.StatusSnippet | None = None,
    ) -> cred.VerifiablePresentation:
        vc = self.wallet[credential_id]
        policy = self.policies.get(credential_id)
        if policy is None:
            raise NotFound(f"no disclosure policy configured for {credential_id}")
        now = self.clock.now()
        if vc.credential_class == cred.CLASS_DERIVATIVE:
            staple = cred.staple_status(self.status_list, credential_id, self.keys, now)
            session = self.sessions.get(credential_id)
            evidence = session.attest(nonce, now).to_dict() if session else None
        else:
            if issuer_staple is None:
                raise NotFound("institutional presentations need an issuer status staple")
            staple = issuer_staple
            evidence = None
        return cred.present(
            vc,
            policy,
            requested_keys,
            requested_predicates,
            self.keys,
            nonce,
            staple,
            now=now,
            attestation_evidence=evidence,
        )


class VerifierActor:
    """Relying party: challenges, verifies conjunctively, matches skills-only.

    Validation and matching run inside the verifier's own enclave instance
    (a distinct measurement from any holder enclave): received presentations
    are confined to its sealed store, and only the release-shaped match
    output leaves.
    """

    def __init__(
        self,
        keys: KeyPair,
        registry: DidRegistry,
        policy: VerifierPolicy,
        job: JobRequirement,
        taxonomy: SkillTaxonomy,
        provider,
        clock: Clock | None = None,
        alias_table: dict[str, list[str]] | None = None,
        method: str = "ler",
    ):
        self.keys = keys
        self.did, self.doc = gen_did(keys.public_key, method)
        registry.register(self.doc)
        self.registry = registry
        self.policy = policy
        self.job = job
        self.taxonomy = taxonomy
        self.provider = provider
        self.clock = clock or SystemClock()
        self.alias_table = alias_table
        self.sessions: dict[str, Session] = {}
        self._lock = threading.Lock()
        self.enclave = Enclave(
            "verifier-enclave", canonical_serialize(job.to_dict()), "1.0", clock=self.clock
        )

    def challenge(self, session_id: str | None = None) -> tuple[str, bytes]:
        """Open a session and hand out a fresh single-use nonce."""
        sid = session_id or secrets.token_hex(8)
        nonce = secrets.token_bytes(NONCE_LEN)
        with self._lock:
            session = self.sessions.get(sid)
            if session is None:
                session = Session(session_id=sid)
                self.sessions[sid] = session
            session.outstanding_nonce = nonce
            session.nonce_issued_at = self.clock.now()
            session.nonce_used = False
            session.advance(4)
        return sid, nonce

    def _claims_from(self, vp: cred.VerifiablePresentation) -> AttestedSkillClaims:
        ids = set(self.taxonomy.ids())
        names, scores = [], {}
        for claim in vp.revealed:
            if claim.key in ids:
                name = self.taxonomy.name_of(claim.key)
                names.append(name)
                scores[name] = float(claim.value)
        if not names:
            raise NoCandidateSkills("presentation reveals no skill claims")
        return AttestedSkillClaims(skill_names=names, scores=scores, verified=True)

    def handle_presentation(self, session_id: str, vp_dict: dict) -> tuple[VerifyResult, dict | None]:
        """Steps 5-6: full acceptance rule set, then skills-only matching.

        Returns the verification result and, on acceptance, the match output
        shaped by the release policy.
        """
        now = self.clock.now()
        with self._lock:
            session = self.sessions.get(session_id)
            if session is None:
                return VerifyResult(False, cred.REASON_BAD_NONCE), None
            if session.nonce_used or now - session.nonce_issued_at > self.policy.nonce_ttl:
                return VerifyResult(False, cred.REASON_BAD_NONCE), None
            session.nonce_used = True
            expected_nonce = session.outstanding_nonce
            session.advance(5)

        # presentation contents stay confined to the verifier enclave
        self.enclave.sealed_store.seal(f"presentation:{session_id}", canonical_serialize(vp_dict))
        try:
            vp = cred.VerifiablePresentation.from_dict(vp_dict)
            issuer_doc = self.registry.resolve(Did.parse(vp.credential_ref["issuer_did"]))
            holder_doc = self.registry.resolve(Did.parse(vp.credential_ref["subject_did"]))
        except (KeyError, ValueError, TypeError, NotFound):
            return VerifyResult(False, cred.REASON_BAD_ISSUER_SIG), None

        result = cred.verify(vp, issuer_doc, holder_doc, self.policy, now, expected_nonce)
        if not result.ok:
            return result, None

        try:
            claims = self._claims_from(vp)
        except NoCandidateSkills:
            return VerifyResult(False, "NoCandidateSkills"), None
        match = decide(
            claims,
            self.job,
            self.provider,
            combiner=self.policy.combiner,
            alias_table=self.alias_table,
        )
        session.advance(6)
        return VerifyResult(True), release_view(match, self.policy.release)


def release_view(match: MatchResult, release: str) -> dict:
    """Shape the verifier response: decision only, minimal score, or full."""
    if release == "decision":
        return {"decision": match.decision}
    if release == "decision+score":
        return {"decision": match.decision, "score": match.score}
    return match.to_dict()


# --- six-step workflow runners -----------------------------------------------------


def run_issuance(
    issuer: IssuerActor,
    holder: HolderActor,
    record: list[tuple[str, cred.ClaimValue]],
    transport: InProcTransport | None = None,
) -> cred.VerifiableCredential | None:
    """Step 1: issue an institutional credential into the holder wallet."""
    transport = transport or InProcTransport()

    def deliver(envelope: dict) -> dict:
        ok = holder.receive_credential(envelope["payload"]["credential"], issuer.doc)
        return {"stored": ok}

    transport.register(holder.did, deliver)
    vc = issuer.issue_record(holder.did, record)
    envelope = make_envelope(secrets.token_hex(8), 1, {"credential": vc.to_dict()}, issuer.did)
    response = transport.request(holder.did, envelope)
    return vc if response.get("stored") else None


def run_derivation(
    holder: HolderActor,
    enclave: Enclave,
    courses: list[CourseRecord],
    syllabi: dict[str, str],
    taxonomy: SkillTaxonomy,
    weights: WeightConfig,
    bundle: PolicyBundle,
    provider,
) -> cred.VerifiableCredential:
    """Step 2-3: enclave derivation, wallet storage, default policy."""
    if not any(holder.wallet[c].credential_class == cred.CLASS_INSTITUTIONAL for c in holder.wallet):
        raise NotFound("wallet holds no institutional transcript credential")
    return holder.derive(enclave, courses, syllabi, taxonomy, weights, bundle, provider)


def run_verification(
    holder: HolderActor,
    verifier: VerifierActor,
    credential_id: str,
    requested_keys: set[str],
    requested_predicates: list[Predicate] | None = None,
    transport: InProcTransport | None = None,
) -> tuple[VerifyResult, dict | None]:
    """Steps 4-6: challenge, present, verify, match, release."""
    transport = transport or InProcTransport()
    session_id, nonce = verifier.challenge()

    def receive(envelope: dict) -> dict:
        result, released = verifier.handle_presentation(
            envelope["session_id"], envelope["payload"]["presentation"]
        )
        return {"ok": result.ok, "reason": result.reason, "released": released}

    transport.register(verifier.did, receive)
    vp = holder.build_presentation(credential_id, requested_keys, requested_predicates or [], nonce)
    envelope = make_envelope(session_id, 4, {"presentation": vp.to_dict()}, holder.did)
    response = transport.request(verifier.did, envelope)
    return VerifyResult(response["ok"], response.get("reason")), response.get("released")
