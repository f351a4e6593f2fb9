"""Acceptance suite: one test and one printed pass/fail line per criterion.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
lines inline.
"""

import json
import math
import time
from pathlib import Path
from random import Random

import numpy as np
import pytest

from conftest import build_world
from forgery import (
    CREDENTIAL_TARGETS,
    EVIDENCE_TARGETS,
    PRESENTATION_TARGETS,
    apply_random_mutation,
)
from lerkit import credential as cred
from lerkit.attestation import AttestationEvidence, verify_attestation
from lerkit.canonical import canonical_serialize
from lerkit.clock import ManualClock
from lerkit.credential import DisclosurePolicy, Predicate
from lerkit.enclave import DerivationInputs, Enclave, SealedStore, split_sentences
from lerkit.matching import (
    AttestedSkillClaims,
    binary_overlap,
    decide,
    default_z_edit_generator,
    estimate_boi,
    flip_probability_audit,
    normalize_name,
    sem_sim,
    skill_only_matcher,
    synthetic_institution_matcher,
)
from lerkit.protocol import run_issuance
from lerkit.skills import (
    CourseRecord,
    WeightConfig,
    course_vector,
    filter_pedagogical,
    personalize,
    score_skill,
    top_k,
)

DATA = Path(__file__).resolve().parent.parent / "src" / "lerkit" / "data"
NOW = 1_700_000_000


def criterion(name: str, ok: bool, detail: str = "") -> None:
    print(f"[{'PASS' if ok else 'FAIL'}] {name}" + (f"  ({detail})" if detail else ""))
    assert ok, f"{name}: {detail}"


def load_candidate(name):
    return set(json.loads((DATA / "fixtures" / name).read_text())["skills"])


@pytest.fixture(scope="module")
def module_world(tmp_path_factory, taxonomy, provider, fixture_courses, fixture_syllabi, java_job, alias_table):
    world = build_world(
        tmp_path_factory.mktemp("acceptance"),
        taxonomy, provider, fixture_courses, fixture_syllabi, java_job, alias_table,
    )
    run_issuance(world.issuer, world.holder, [("course", "CS101"), ("grade", "A")])
    world.holder.derive(
        world.enclave, world.courses, world.syllabi, world.taxonomy,
        WeightConfig.default(), world.bundle, world.provider,
    )
    return world


def derived_vc(world):
    return next(v for v in world.holder.wallet.values() if v.credential_class == cred.CLASS_DERIVATIVE)


# --- criterion 1: binary overlap on the bundled role fixtures ------------------------


def test_role_fixture_overlaps(java_job, csharp_job, alias_table):
    start = time.perf_counter()
    java = binary_overlap(load_candidate("candidate_java_role.json"), java_job, alias_table)
    csharp = binary_overlap(load_candidate("candidate_csharp_role.json"), csharp_job, alias_table)
    elapsed = time.perf_counter() - start
    criterion(
        "role-fixture overlaps: Java 0.80, C# 0.70, under 1 s",
        java == 0.80 and csharp == 0.70 and elapsed < 1.0,
        f"java={java} csharp={csharp} elapsed={elapsed:.4f}s",
    )


# --- criterion 2: exact-name semantic matches score 1.00 ------------------------------


def test_exact_name_similarity(java_job, provider):
    _, per_skill = sem_sim(load_candidate("candidate_java_role.json"), java_job, provider)
    exact = ["Java", "Data Structures", "Algorithms", "SQL", "Software Engineering",
             "Object-Oriented Programming", "Version Control (Git)", "Operating Systems"]
    worst = min(per_skill[name][1] for name in exact)
    criterion(
        "exact-name skills report per-skill similarity 1.00 (tol 1e-6)",
        all(abs(per_skill[name][1] - 1.0) <= 1e-6 for name in exact),
        f"worst={worst!r}",
    )


# --- criterion 3: stability of repeated derivations ------------------------------------


def test_derivation_stability(taxonomy, provider, fixture_courses, fixture_syllabi):
    start = time.perf_counter()
    top_sets = []
    for run in range(10):
        clock = ManualClock(NOW)
        enclave = Enclave("lerkit-enclave", b"model-bundle-v1", "1.0", clock=clock)
        session = enclave.start_session(b"\x05" * 32, provider)
        from lerkit.identity import KeyPair, gen_did

        keys = KeyPair.generate()
        did, _ = gen_did(keys.public_key)
        vc, _ = session.derive(
            DerivationInputs(
                courses=fixture_courses, syllabi=fixture_syllabi, taxonomy=taxonomy,
                weights=WeightConfig.default(), holder_did=did, holder_keys=keys,
                verifier_nonce=b"\x01" * 16,
            )
        )
        top_sets.append(frozenset(c.key for c in vc.claims))
    elapsed = time.perf_counter() - start
    criterion(
        "10 repeated derivations yield identical top-10 sets in under 30 s",
        len(set(top_sets)) == 1 and len(top_sets[0]) == 10 and elapsed < 30.0,
        f"distinct_sets={len(set(top_sets))} elapsed={elapsed:.2f}s",
    )


# --- criterion 4: scoring-pipeline oracle equivalence -----------------------------------


def brute_max_cosine(sentence_vecs, skill_vec):
    best = -2.0
    for v in sentence_vecs:
        dot = sum(float(a) * float(b) for a, b in zip(v, skill_vec))
        na = math.sqrt(sum(float(a) ** 2 for a in v))
        nb = math.sqrt(sum(float(b) ** 2 for b in skill_vec))
        best = max(best, dot / (na * nb))
    return best


def test_pipeline_matches_brute_force_oracles(taxonomy, provider, fixture_courses, fixture_syllabi):
    worst = 0.0
    weights = WeightConfig.default()
    contributing, vectors = [], []
    for course in fixture_courses:
        sentences = split_sentences(fixture_syllabi[course.course_id])
        record = CourseRecord(course.course_id, course.title, course.level, course.grade, sentences)
        vector = course_vector(record, taxonomy, provider)
        retained = filter_pedagogical(sentences)
        sentence_vecs = [provider.embed(s) for s in retained]
        for i, skill in enumerate(taxonomy.skills):
            oracle = brute_max_cosine(sentence_vecs, provider.embed(skill.descriptor_text))
            worst = max(worst, abs(float(vector.values[i]) - oracle))
        direct = score_skill(sentence_vecs, provider.embed(taxonomy.skills[0].descriptor_text))
        worst = max(worst, abs(direct - brute_max_cosine(sentence_vecs, provider.embed(taxonomy.skills[0].descriptor_text))))
        contributing.append(record)
        vectors.append(vector)

    profile = personalize(contributing, vectors, weights)
    manual = np.zeros(len(taxonomy))
    from lerkit.skills import level_band

    for course, vector in zip(contributing, vectors):
        manual = manual + vector.values * weights.grade_weights[course.grade] * weights.level_weights[level_band(course.level)]
    worst = max(worst, float(np.max(np.abs(profile.values - manual))))

    ranked = top_k(profile, taxonomy, 10)
    oracle_rank = sorted(zip(taxonomy.ids(), profile.values), key=lambda p: (-p[1], p[0]))[:10]
    rank_equal = ranked == [(s, float(x)) for s, x in oracle_rank]

    criterion(
        "pipeline equals brute-force max-cosine and weighted-sum oracles (<= 1e-9)",
        worst <= 1e-9 and rank_equal,
        f"worst_delta={worst:.2e} rank_equal={rank_equal}",
    )


# --- criterion 5: bias properties ---------------------------------------------------------


def test_bias_properties(java_job, provider, alias_table):
    candidate = load_candidate("candidate_java_role.json")
    matcher = skill_only_matcher(java_job, provider, alias_table=alias_table)
    trials = 10_000
    boi = estimate_boi(matcher, [candidate], default_z_edit_generator, trials, seed=0).value
    flips = flip_probability_audit(matcher, [candidate], default_z_edit_generator, java_job.threshold, trials, seed=1)

    synthetic = synthetic_institution_matcher()
    estimate = estimate_boi(synthetic, [candidate], default_z_edit_generator, trials, seed=2).value
    closed_form = 0.005  # enumerated over the four (b, b') outcomes
    sigma = math.sqrt(2.5e-5 / trials)
    criterion(
        "BOI = 0 and flip probability = 0 over 10^4 non-skill edits; synthetic within 3 sigma",
        boi == 0.0 and flips == 0.0 and abs(estimate - closed_form) <= 3 * sigma,
        f"boi={boi} flips={flips} synthetic={estimate:.6f} band={3 * sigma:.6f}",
    )


# --- criterion 6: unforgeability under random mutation --------------------------------------


def test_unforgeability_mutation_suite(module_world):
    world = module_world
    vc = derived_vc(world)
    top_claim = vc.claims[0]

    # presentation with every field class populated, including a predicate
    policy = DisclosurePolicy(
        policy_id="acceptance",
        allowed_claims={c.key for c in vc.claims},
        allowed_predicates=[Predicate(key=top_claim.key, op=">=", bound=0.0)],
    )
    world.holder.policies[vc.id] = policy
    session_id, challenge = world.verifier.challenge()
    vp = world.holder.build_presentation(
        vc.id, {c.key for c in vc.claims}, [Predicate(key=top_claim.key, op=">=", bound=0.0)], challenge
    )
    holder_doc = world.registry.resolve(world.holder.did)
    now = world.clock.now()

    honest = cred.verify(vp, holder_doc, holder_doc, world.verifier.policy, now, challenge)
    assert honest.ok, honest.reason

    session = world.holder.sessions[vc.id]
    evidence = session.attest(challenge, now)
    honest_evidence = verify_attestation(
        evidence, world.enclave.attestation_public_key, challenge,
        {world.enclave.measurement.m_e}, world.bundle.policy_digest(), now, 300,
    )
    assert honest_evidence.ok

    issuer_vc = next(v for v in world.holder.wallet.values() if v.credential_class == cred.CLASS_INSTITUTIONAL)
    issuer_pk = world.registry.resolve(world.issuer.did).primary_key()
    holder_pk = holder_doc.primary_key()

    rng = Random(2024)
    vp_dict = vp.to_dict()
    vc_dicts = [(vc.to_dict(), holder_pk), (issuer_vc.to_dict(), issuer_pk)]
    ev_dict = evidence.to_dict()

    rejected = 0
    correct_reason = 0
    total = 10_000
    start = time.perf_counter()
    plan = ["presentation"] * 4000 + ["credential"] * 4000 + ["evidence"] * 2000
    for kind in plan:
        if kind == "presentation":
            outcome = None
            while outcome is None:
                outcome = apply_random_mutation(rng, vp_dict, PRESENTATION_TARGETS)
            mutated, expected = outcome
            result = cred.verify(
                cred.VerifiablePresentation.from_dict(mutated),
                holder_doc, holder_doc, world.verifier.policy, now, challenge,
            )
            got = result.reason
            ok = not result.ok
        elif kind == "credential":
            doc, pk = vc_dicts[rng.randrange(2)]
            outcome = None
            while outcome is None:
                outcome = apply_random_mutation(rng, doc, CREDENTIAL_TARGETS)
            mutated, expected = outcome
            result = cred.verify_credential(cred.VerifiableCredential.from_dict(mutated), pk)
            got = result.reason
            ok = not result.ok
        else:
            outcome = None
            while outcome is None:
                outcome = apply_random_mutation(rng, ev_dict, EVIDENCE_TARGETS)
            mutated, expected = outcome
            result = verify_attestation(
                AttestationEvidence.from_dict(mutated),
                world.enclave.attestation_public_key, challenge,
                {world.enclave.measurement.m_e}, world.bundle.policy_digest(), now, 300,
            )
            got = result.reason
            ok = not result.ok
        rejected += int(ok)
        correct_reason += int(ok and got == expected)
    elapsed = time.perf_counter() - start

    criterion(
        "10^4 random mutations: 100% rejected, each with the mapped reject reason",
        rejected == total and correct_reason == total,
        f"rejected={rejected}/{total} correct_reason={correct_reason}/{total} elapsed={elapsed:.1f}s",
    )


# --- criterion 7: confidentiality ------------------------------------------------------------


def test_confidentiality_suite(taxonomy, provider, fixture_courses, fixture_syllabi):
    clock = ManualClock(NOW)
    enclave = Enclave("lerkit-enclave", b"model-bundle-v1", "1.0", clock=clock)
    session = enclave.start_session(b"\x05" * 32, provider)
    from lerkit.identity import KeyPair, gen_did

    keys = KeyPair.generate()
    did, _ = gen_did(keys.public_key)
    inputs = DerivationInputs(
        courses=fixture_courses, syllabi=fixture_syllabi, taxonomy=taxonomy,
        weights=WeightConfig.default(), holder_did=did, holder_keys=keys,
        verifier_nonce=b"\x01" * 16,
    )
    vc, evidence = session.derive(inputs)
    output = canonical_serialize(vc.to_dict()) + canonical_serialize(evidence.to_dict())

    leaked = 0
    raws = [inputs.transcript_bytes(), *inputs.syllabus_documents()]
    for size in range(8, 65):
        grams = {output[i : i + size] for i in range(len(output) - size + 1)}
        for raw in raws:
            for i in range(len(raw) - size + 1):
                if raw[i : i + size] in grams:
                    leaked += 1

    foreign = SealedStore()
    foreign.import_sealed("doc", enclave.sealed_store.export_sealed(session_label(enclave)))
    try:
        foreign.unseal("doc")
        unseal_blocked = False
    except Exception:
        unseal_blocked = True

    criterion(
        "no raw input window (8-64 bytes) in enclave outputs; foreign unseal fails",
        leaked == 0 and unseal_blocked,
        f"leaked_windows={leaked} unseal_blocked={unseal_blocked}",
    )


def session_label(enclave: Enclave) -> str:
    labels = enclave.sealed_store.labels()
    return next(l for l in labels if l.endswith(":transcript"))


# --- criterion 8: freshness boundary and nonce replay ------------------------------------------


def test_freshness_and_replay(module_world):
    world = module_world
    vc = derived_vc(world)
    session_id, challenge = world.verifier.challenge()
    vp = world.holder.build_presentation(vc.id, {c.key for c in vc.claims}, [], challenge)
    holder_doc = world.registry.resolve(world.holder.did)
    t0 = world.clock.now()

    at_delta = cred.verify(vp, holder_doc, holder_doc, world.verifier.policy, t0 + 300, challenge)
    past_delta = cred.verify(vp, holder_doc, holder_doc, world.verifier.policy, t0 + 301, challenge)

    first, _ = world.verifier.handle_presentation(session_id, vp.to_dict())
    replay, _ = world.verifier.handle_presentation(session_id, vp.to_dict())

    criterion(
        "stapled status accepted at exactly delta, rejected at delta+1s; replayed nonce rejected",
        at_delta.ok
        and (past_delta.ok, past_delta.reason) == (False, cred.REASON_STALE_STATUS)
        and first.ok
        and (replay.ok, replay.reason) == (False, cred.REASON_BAD_NONCE),
        f"at_delta={at_delta} past_delta={past_delta} replay={replay}",
    )


# --- criterion 9: matching latency ---------------------------------------------------------------


def test_match_latency(module_world, java_job, provider, alias_table):
    world = module_world
    vc = derived_vc(world)
    names = [world.taxonomy.name_of(c.key) for c in vc.claims]
    claims = AttestedSkillClaims(skill_names=names, verified=True)
    decide(claims, java_job, provider, alias_table=alias_table)  # warm any caches

    start = time.perf_counter()
    result = decide(claims, java_job, provider, combiner="overlap", alias_table=alias_table)
    elapsed = time.perf_counter() - start
    criterion(
        "verifier-side match of one job description completes in <= 0.5 s",
        elapsed <= 0.5 and result.overlap == 0.80,
        f"elapsed={elapsed:.4f}s overlap={result.overlap}",
    )
