"""Shared fixtures: keys, registry, taxonomy, fixture corpus, actor world."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import pytest

from lerkit.clock import ManualClock
from lerkit.credential import VerifierPolicy
from lerkit.enclave import Enclave
from lerkit.identity import DidRegistry, KeyPair
from lerkit.matching import load_alias_table, load_job
from lerkit.protocol import HolderActor, IssuerActor, PolicyBundle, VerifierActor, run_issuance
from lerkit.skills import HashingEmbedder, WeightConfig, load_taxonomy, load_transcript

DATA = Path(__file__).resolve().parent.parent / "src" / "lerkit" / "data"


@pytest.fixture
def clock():
    return ManualClock(start=1_700_000_000)


@pytest.fixture
def registry(tmp_path):
    return DidRegistry(tmp_path / "registry")


@pytest.fixture(scope="session")
def taxonomy():
    return load_taxonomy(DATA / "taxonomy_cs30.tsv")


@pytest.fixture(scope="session")
def provider():
    return HashingEmbedder()


@pytest.fixture(scope="session")
def alias_table():
    return load_alias_table(DATA / "skill_aliases.json")


@pytest.fixture(scope="session")
def fixture_courses():
    return load_transcript(DATA / "fixtures" / "transcript.json")


@pytest.fixture(scope="session")
def fixture_syllabi():
    return {p.stem: p.read_text(encoding="utf-8") for p in sorted((DATA / "fixtures" / "syllabi").glob("*.txt"))}


@pytest.fixture(scope="session")
def java_job():
    return load_job(DATA / "jobs" / "java_developer.json")


@pytest.fixture(scope="session")
def csharp_job():
    return load_job(DATA / "jobs" / "csharp_data_mining.json")


@dataclass
class World:
    """A wired three-actor deployment sharing one registry and clock."""

    clock: ManualClock
    registry: DidRegistry
    issuer: IssuerActor
    holder: HolderActor
    verifier: VerifierActor
    enclave: Enclave
    bundle: PolicyBundle
    taxonomy: object
    provider: object
    courses: list
    syllabi: dict


def build_world(
    tmp_path,
    taxonomy,
    provider,
    courses,
    syllabi,
    job,
    alias_table,
    *,
    combiner: str = "overlap",
    tau: float = 0.75,
    release: str = "full",
) -> World:
    clock = ManualClock(start=1_700_000_000)
    registry = DidRegistry(tmp_path / "registry")
    issuer = IssuerActor(KeyPair.generate(), registry, clock)
    holder = HolderActor(KeyPair.generate(), registry, clock)
    enclave = Enclave("lerkit-enclave", b"model-bundle-v1", "1.0", clock=clock)
    bundle = PolicyBundle(
        tau=tau,
        combiner=combiner,
        k=10,
        freshness_delta=300,
        weights=WeightConfig.default(),
        taxonomy_id=taxonomy.taxonomy_id,
    )
    policy = VerifierPolicy(
        measurement_allowlist={enclave.measurement.m_e},
        freshness_delta=300,
        tau=tau,
        expected_policy_digest=bundle.policy_digest(),
        nonce_ttl=300,
        attestation_max_age=300,
        enclave_trust_anchor=enclave.attestation_public_key,
        combiner=combiner,
        release=release,
    )
    verifier = VerifierActor(
        KeyPair.generate(), registry, policy, job, taxonomy, provider, clock=clock, alias_table=alias_table
    )
    return World(
        clock=clock,
        registry=registry,
        issuer=issuer,
        holder=holder,
        verifier=verifier,
        enclave=enclave,
        bundle=bundle,
        taxonomy=taxonomy,
        provider=provider,
        courses=courses,
        syllabi=syllabi,
    )


@pytest.fixture
def world(tmp_path, taxonomy, provider, fixture_courses, fixture_syllabi, java_job, alias_table):
    return build_world(
        tmp_path, taxonomy, provider, fixture_courses, fixture_syllabi, java_job, alias_table
    )


@pytest.fixture
def derived_world(world):
    """World after issuance and derivation: wallet holds both credentials."""
    record = [("course", "CS101"), ("grade", "A"), ("gpa", 3.7)]
    run_issuance(world.issuer, world.holder, record)
    world.holder.derive(
        world.enclave,
        world.courses,
        world.syllabi,
        world.taxonomy,
        WeightConfig.default(),
        world.bundle,
        world.provider,
    )
    return world
