import secrets

import pytest

from lerkit import credential as cred
from lerkit.canonical import canonical_serialize
from lerkit.credential import VerifyResult
from lerkit.errors import LerError, NoEvidence
from lerkit.matching import normalize_name
from lerkit.protocol import InProcTransport, run_issuance, run_verification
from lerkit.skills import WeightConfig

RECORD = [("course", "CS101"), ("grade", "A"), ("gpa", 3.7)]

JAVA_TARGET_NAMES = {
    "java (programming language)",
    "python (programming language)",
    "c++ (programming language)",
    "object-oriented programming",
    "data structures",
    "algorithms",
    "sql",
    "software engineering",
    "version control (git)",
    "operating systems",
}


# --- step 1: issuance ------------------------------------------------------------


def test_issuance_happy_path(world):
    vc = run_issuance(world.issuer, world.holder, RECORD)
    assert vc is not None
    assert len(world.holder.wallet) == 1
    stored = world.holder.wallet[vc.id]
    assert stored.credential_class == cred.CLASS_INSTITUTIONAL


def test_issuance_tampered_in_transit_not_stored(world):
    def corrupt(envelope):
        payload = dict(envelope["payload"])
        credential = dict(payload["credential"])
        credential["issued_at"] = credential["issued_at"] + 1
        payload["credential"] = credential
        return [{**envelope, "payload": payload}]

    vc = run_issuance(world.issuer, world.holder, RECORD, transport=InProcTransport(corrupt))
    assert vc is None
    assert world.holder.wallet == {}


def test_issuance_duplicate_delivery_deduplicates(world):
    replay = InProcTransport(lambda envelope: [envelope, envelope])
    vc = run_issuance(world.issuer, world.holder, RECORD, transport=replay)
    assert vc is not None
    assert len(world.holder.wallet) == 1


def test_dropped_message_raises(world):
    with pytest.raises(LerError):
        run_issuance(world.issuer, world.holder, RECORD, transport=InProcTransport(lambda e: []))


# --- step 2-3: derivation -----------------------------------------------------------


def test_derivation_populates_wallet(derived_world):
    world = derived_world
    derivative = [v for v in world.holder.wallet.values() if v.credential_class == cred.CLASS_DERIVATIVE]
    assert len(derivative) == 1
    assert all(claim.value > 0 for claim in derivative[0].claims)


def test_derivation_without_syllabi_is_no_evidence(world):
    run_issuance(world.issuer, world.holder, RECORD)
    with pytest.raises(NoEvidence):
        world.holder.derive(
            world.enclave,
            world.courses,
            {},
            world.taxonomy,
            WeightConfig.default(),
            world.bundle,
            world.provider,
        )


def test_provenance_recomputes_verifier_side(derived_world):
    from lerkit.attestation import AttestationEvidence, Provenance, check_provenance

    world = derived_world
    vc = next(v for v in world.holder.wallet.values() if v.credential_class == cred.CLASS_DERIVATIVE)
    session = world.holder.sessions[vc.id]
    evidence = session.attest(b"\x09" * 16, world.clock.now())
    assert check_provenance(Provenance.from_dict(vc.provenance), evidence)


# --- steps 4-6: verification and matching ---------------------------------------------


def derivative_id(world):
    return next(
        v.id for v in world.holder.wallet.values() if v.credential_class == cred.CLASS_DERIVATIVE
    )


def test_end_to_end_java_fixture(derived_world):
    world = derived_world
    vc_id = derivative_id(world)
    keys = {c.key for c in world.holder.wallet[vc_id].claims}
    result, released = run_verification(world.holder, world.verifier, vc_id, keys)
    assert result.ok, result.reason
    assert released["decision"] is True
    assert released["overlap"] == pytest.approx(0.80)
    matched_names = {normalize_name(name) for name, _ in released["per_skill"].values()}
    assert matched_names <= JAVA_TARGET_NAMES


def test_replayed_presentation_rejected(derived_world):
    world = derived_world
    vc_id = derivative_id(world)
    keys = {c.key for c in world.holder.wallet[vc_id].claims}
    session_id, nonce = world.verifier.challenge()
    vp = world.holder.build_presentation(vc_id, keys, [], nonce)
    first, _ = world.verifier.handle_presentation(session_id, vp.to_dict())
    assert first.ok
    second, _ = world.verifier.handle_presentation(session_id, vp.to_dict())
    assert (second.ok, second.reason) == (False, cred.REASON_BAD_NONCE)


def test_unknown_session_rejected(derived_world):
    world = derived_world
    vc_id = derivative_id(world)
    keys = {c.key for c in world.holder.wallet[vc_id].claims}
    vp = world.holder.build_presentation(vc_id, keys, [], secrets.token_bytes(16))
    result, _ = world.verifier.handle_presentation("no-such-session", vp.to_dict())
    assert (result.ok, result.reason) == (False, cred.REASON_BAD_NONCE)


# --- conjunctive acceptance: toggle one check at a time --------------------------------


def present_honestly(world, nonce=None):
    vc_id = derivative_id(world)
    keys = {c.key for c in world.holder.wallet[vc_id].claims}
    session_id, challenge = world.verifier.challenge()
    vp = world.holder.build_presentation(vc_id, keys, [], nonce or challenge)
    return session_id, challenge, vp


def verify_directly(world, vp, now=None, expected_nonce=None, policy=None):
    holder_doc = world.registry.resolve(world.holder.did)
    return cred.verify(
        vp,
        holder_doc,  # derivative: issuer is the holder
        holder_doc,
        policy or world.verifier.policy,
        now if now is not None else world.clock.now(),
        expected_nonce,
    )


def test_toggle_issuer_signature(derived_world):
    world = derived_world
    _, challenge, vp = present_honestly(world)
    sig = bytearray.fromhex(vp.credential_ref["signature"])
    sig[0] ^= 0x01
    vp.credential_ref["signature"] = bytes(sig).hex()
    result = verify_directly(world, vp, expected_nonce=challenge)
    assert (result.ok, result.reason) == (False, cred.REASON_BAD_ISSUER_SIG)


def test_toggle_digest_binding(derived_world):
    world = derived_world
    _, challenge, vp = present_honestly(world)
    claim = vp.revealed[0]
    vp.revealed[0] = cred.Claim(key=claim.key, value=float(claim.value) + 0.001, salt=claim.salt)
    result = verify_directly(world, vp, expected_nonce=challenge)
    assert (result.ok, result.reason) == (False, cred.REASON_DIGEST_MISMATCH)


def test_toggle_holder_signature(derived_world):
    world = derived_world
    _, challenge, vp = present_honestly(world)
    sig = bytearray(vp.holder_signature)
    sig[0] ^= 0x01
    vp.holder_signature = bytes(sig)
    result = verify_directly(world, vp, expected_nonce=challenge)
    assert (result.ok, result.reason) == (False, cred.REASON_BAD_HOLDER_SIG)


def test_toggle_nonce(derived_world):
    world = derived_world
    _, challenge, vp = present_honestly(world)
    result = verify_directly(world, vp, expected_nonce=b"\x00" * 16)
    assert (result.ok, result.reason) == (False, cred.REASON_BAD_NONCE)


def test_toggle_expiry(derived_world):
    world = derived_world
    _, challenge, vp = present_honestly(world)
    result = verify_directly(world, vp, now=world.clock.now() + 3601, expected_nonce=challenge)
    assert (result.ok, result.reason) == (False, cred.REASON_EXPIRED)


def test_toggle_status_freshness(derived_world):
    world = derived_world
    _, challenge, vp = present_honestly(world)
    boundary = verify_directly(world, vp, now=world.clock.now() + 300, expected_nonce=challenge)
    stale = verify_directly(world, vp, now=world.clock.now() + 301, expected_nonce=challenge)
    assert (stale.ok, stale.reason) == (False, cred.REASON_STALE_STATUS)
    # the same presentation at exactly the window boundary fails only on
    # attestation age, never on status freshness
    assert boundary.reason != cred.REASON_STALE_STATUS


def test_toggle_revocation(derived_world):
    world = derived_world
    vc_id = derivative_id(world)
    world.holder.status_list = cred.revoke(
        world.holder.status_list, vc_id, world.holder.keys, world.clock.now()
    )
    _, challenge, vp = present_honestly(world)
    result = verify_directly(world, vp, expected_nonce=challenge)
    assert (result.ok, result.reason) == (False, cred.REASON_REVOKED)


def test_toggle_attestation_missing(derived_world):
    world = derived_world
    _, challenge, vp = present_honestly(world)
    vc_id = derivative_id(world)
    policy = world.holder.policies[vc_id]
    staple = cred.staple_status(world.holder.status_list, vc_id, world.holder.keys, world.clock.now())
    bare = cred.present(
        world.holder.wallet[vc_id],
        policy,
        {c.key for c in world.holder.wallet[vc_id].claims},
        [],
        world.holder.keys,
        challenge,
        staple,
        now=world.clock.now(),
        attestation_evidence=None,
    )
    result = verify_directly(world, bare, expected_nonce=challenge)
    assert (result.ok, result.reason) == (False, cred.REASON_BAD_ATTESTATION)


def test_toggle_allowlist(derived_world):
    world = derived_world
    _, challenge, vp = present_honestly(world)
    policy = world.verifier.policy
    narrowed = cred.VerifierPolicy(
        measurement_allowlist={b"\x00" * 32},
        freshness_delta=policy.freshness_delta,
        tau=policy.tau,
        expected_policy_digest=policy.expected_policy_digest,
        enclave_trust_anchor=policy.enclave_trust_anchor,
    )
    result = verify_directly(world, vp, expected_nonce=challenge, policy=narrowed)
    assert (result.ok, result.reason) == (False, cred.REASON_NOT_ALLOWLISTED)


def test_toggle_policy_digest(derived_world):
    world = derived_world
    _, challenge, vp = present_honestly(world)
    policy = world.verifier.policy
    mismatched = cred.VerifierPolicy(
        measurement_allowlist=policy.measurement_allowlist,
        freshness_delta=policy.freshness_delta,
        tau=policy.tau,
        expected_policy_digest=b"\xde" * 32,
        enclave_trust_anchor=policy.enclave_trust_anchor,
    )
    result = verify_directly(world, vp, expected_nonce=challenge, policy=mismatched)
    assert (result.ok, result.reason) == (False, cred.REASON_POLICY_MISMATCH)


def test_toggle_attestation_age(derived_world):
    world = derived_world
    _, challenge, vp = present_honestly(world)
    policy = world.verifier.policy
    strict = cred.VerifierPolicy(
        measurement_allowlist=policy.measurement_allowlist,
        freshness_delta=policy.freshness_delta,
        tau=policy.tau,
        expected_policy_digest=policy.expected_policy_digest,
        attestation_max_age=50,
        enclave_trust_anchor=policy.enclave_trust_anchor,
    )
    result = verify_directly(world, vp, now=world.clock.now() + 51, expected_nonce=challenge, policy=strict)
    assert (result.ok, result.reason) == (False, cred.REASON_STALE_ATTESTATION)


def test_toggle_provenance_binding(derived_world):
    world = derived_world
    vc_id = derivative_id(world)
    vc = world.holder.wallet[vc_id]
    session_id, challenge = world.verifier.challenge()

    # evidence from a different session: valid attestation, wrong inputs
    foreign = world.enclave.start_session(world.bundle.policy_digest(), world.provider, salt=b"\x0f" * 16)
    from lerkit.enclave import DerivationInputs

    foreign.commit(
        DerivationInputs(
            courses=world.courses[:1],
            syllabi={world.courses[0].course_id: world.syllabi[world.courses[0].course_id]},
            taxonomy=world.taxonomy,
            weights=WeightConfig.default(),
            holder_did=world.holder.did,
            holder_keys=world.holder.keys,
            verifier_nonce=challenge,
        )
    )
    evidence = foreign.attest(challenge, world.clock.now())
    staple = cred.staple_status(world.holder.status_list, vc_id, world.holder.keys, world.clock.now())
    vp = cred.present(
        vc,
        world.holder.policies[vc_id],
        {c.key for c in vc.claims},
        [],
        world.holder.keys,
        challenge,
        staple,
        now=world.clock.now(),
        attestation_evidence=evidence.to_dict(),
    )
    result = verify_directly(world, vp, expected_nonce=challenge)
    assert (result.ok, result.reason) == (False, cred.REASON_PROVENANCE_MISMATCH)


# --- release policy ---------------------------------------------------------------------


def test_decision_only_release_is_minimal(
    tmp_path, taxonomy, provider, fixture_courses, fixture_syllabi, java_job, alias_table
):
    from conftest import build_world

    world = build_world(
        tmp_path, taxonomy, provider, fixture_courses, fixture_syllabi, java_job, alias_table,
        release="decision",
    )
    run_issuance(world.issuer, world.holder, RECORD)
    world.holder.derive(
        world.enclave, world.courses, world.syllabi, world.taxonomy,
        WeightConfig.default(), world.bundle, world.provider,
    )
    vc_id = derivative_id(world)
    keys = {c.key for c in world.holder.wallet[vc_id].claims}
    result, released = run_verification(world.holder, world.verifier, vc_id, keys)
    assert result.ok
    assert set(released) == {"decision"}
    serialized = canonical_serialize(released).decode()
    assert "score" not in serialized and "overlap" not in serialized
    for name in JAVA_TARGET_NAMES:
        assert name not in serialized.lower()


def test_verifier_enclave_is_distinct_and_confines_presentations(derived_world):
    world = derived_world
    assert world.verifier.enclave.measurement.m_e != world.enclave.measurement.m_e
    vc_id = derivative_id(world)
    keys = {c.key for c in world.holder.wallet[vc_id].claims}
    session_id, nonce = world.verifier.challenge()
    vp = world.holder.build_presentation(vc_id, keys, [], nonce)
    result, _ = world.verifier.handle_presentation(session_id, vp.to_dict())
    assert result.ok
    sealed = world.verifier.enclave.sealed_store.unseal(f"presentation:{session_id}")
    assert sealed == canonical_serialize(vp.to_dict())


def test_session_steps_advance_monotonically():
    from lerkit.protocol import Session

    session = Session(session_id="s1")
    session.advance(4)
    session.advance(5)
    with pytest.raises(LerError):
        session.advance(3)


def test_policy_bundle_digest_is_stable(world):
    assert world.bundle.policy_digest() == world.bundle.policy_digest()
    other = world.bundle
    other_digest = other.policy_digest()
    other.tau = 0.9
    assert other.policy_digest() != other_digest
