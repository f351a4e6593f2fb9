"""Command-line surface: key and DID management, issuance, derivation,
presentation, verification, matching, revocation, bias audits, and services.

Exit codes: 0 success (or accept), 1 operational error (or reject), 2 usage.
"""

from __future__ import annotations

import argparse
import secrets
import sys
import time
from importlib.resources import files as package_files
from pathlib import Path

from .. import __version__
from .. import credential as cred
from ..canonical import canonical_parse, canonical_serialize
from ..credential import DisclosurePolicy, Predicate, VerifierPolicy
from ..enclave import DerivationInputs, Enclave
from ..errors import LerError
from ..identity import Did, DidRegistry, KeyPair, gen_did
from ..matching import (
    AttestedSkillClaims,
    decide,
    default_z_edit_generator,
    estimate_boi,
    flip_probability_audit,
    load_alias_table,
    load_job,
    skill_only_matcher,
    synthetic_institution_matcher,
)
from ..protocol import PolicyBundle
from ..skills import HashingEmbedder, WeightConfig, load_taxonomy, load_transcript
from .config import Config, load_keypair, save_keypair
from .service import serve_endpoints
from .wallet import WalletStore

ENCLAVE_CODE_ID = "lerkit-enclave"


def _data_path(*parts: str) -> Path:
    return Path(str(package_files("lerkit").joinpath("data", *parts)))


def _emit(args, payload: dict, text: str) -> None:
    if getattr(args, "format", "text") == "canonical":
        print(canonical_serialize(payload).decode("utf-8"))
    else:
        print(text)


def _parse_claim(raw: str) -> tuple[str, cred.ClaimValue]:
    if "=" not in raw:
        raise LerError(f"claim must look like key=value, got {raw!r}")
    key, value = raw.split("=", 1)
    for cast in (int, float):
        try:
            return key, cast(value)
        except ValueError:
            continue
    return key, value


def _parse_predicate(raw: str) -> Predicate:
    parts = raw.split(":")
    if len(parts) != 3:
        raise LerError(f"predicate must look like key:op:bound, got {raw!r}")
    return Predicate(key=parts[0], op=parts[1], bound=float(parts[2]))


def _bundle(args, taxonomy_id: str) -> PolicyBundle:
    return PolicyBundle(
        tau=args.tau,
        combiner=args.combiner,
        k=args.k,
        freshness_delta=args.delta,
        weights=WeightConfig.default(),
        taxonomy_id=taxonomy_id,
    )


# --- subcommand implementations -------------------------------------------------


def cmd_keygen(args) -> int:
    keys = KeyPair.generate()
    save_keypair(keys, args.out)
    did, _ = gen_did(keys.public_key, args.method)
    _emit(args, {"did": str(did), "public_key": keys.public_key.hex()}, f"{did}")
    return 0


def cmd_did_register(args) -> int:
    keys = load_keypair(args.key)
    metadata = dict(kv.split("=", 1) for kv in args.meta or [])
    did, doc = gen_did(keys.public_key, args.method, metadata)
    DidRegistry(args.registry).register(doc)
    _emit(args, {"did": str(did), "version": doc.version}, f"registered {did}")
    return 0


def cmd_issue(args) -> int:
    keys = load_keypair(args.issuer_key)
    issuer_did, _ = gen_did(keys.public_key, args.method)
    now = int(time.time())
    status_path = Path(args.status_list)
    if status_path.exists():
        status_list = cred.StatusList.from_dict(canonical_parse(status_path.read_bytes()))
    else:
        status_list = cred.new_status_list(keys, issuer_did, cred.LIST_INSTITUTIONAL, now)
    vc = cred.issue(
        keys,
        issuer_did,
        Did.parse(args.subject),
        [_parse_claim(c) for c in args.claim],
        cred.CLASS_INSTITUTIONAL,
        None,
        args.lifetime,
        now=now,
        status_ref=(str(status_path), 0),
    )
    status_list = cred.add_entry(status_list, vc.id, keys, now)
    status_path.write_bytes(canonical_serialize(status_list.to_dict()))
    Path(args.out).write_bytes(canonical_serialize(vc.to_dict()))
    if args.staple_out:
        staple = cred.staple_status(status_list, vc.id, keys, now)
        Path(args.staple_out).write_bytes(canonical_serialize(staple.to_dict()))
    if args.wallet:
        wallet = WalletStore(args.wallet)
        wallet.add_credential(vc)
        if args.staple_out:
            wallet.add_staple(vc.id, staple.to_dict())
    _emit(args, {"credential_id": vc.id}, f"issued {vc.id} -> {args.out}")
    return 0


def cmd_derive(args) -> int:
    keys = load_keypair(args.key)
    holder_did, holder_doc = gen_did(keys.public_key, args.method)
    DidRegistry(args.registry).register(holder_doc)
    taxonomy = load_taxonomy(args.taxonomy)
    courses = load_transcript(args.transcript)
    syllabi = {p.stem: p.read_text(encoding="utf-8") for p in sorted(Path(args.syllabi).glob("*.txt"))}
    bundle_bytes = Path(args.model_bundle).read_bytes() if args.model_bundle else b"lerkit-reference-embedder"
    enclave = Enclave(ENCLAVE_CODE_ID, bundle_bytes, __version__)
    bundle = _bundle(args, taxonomy.taxonomy_id)
    nonce = bytes.fromhex(args.nonce) if args.nonce else secrets.token_bytes(16)
    now = int(time.time())
    status_path = Path(args.status_list)
    if status_path.exists():
        status_list = cred.StatusList.from_dict(canonical_parse(status_path.read_bytes()))
    else:
        status_list = cred.new_status_list(keys, holder_did, cred.LIST_DERIVATIVE, now)
    session = enclave.start_session(bundle.policy_digest(), HashingEmbedder())
    vc, evidence = session.derive(
        DerivationInputs(
            courses=courses,
            syllabi=syllabi,
            taxonomy=taxonomy,
            weights=WeightConfig.default(),
            holder_did=holder_did,
            holder_keys=keys,
            verifier_nonce=nonce,
            status_ref=(str(status_path), 0),
            top_k=args.k,
        )
    )
    status_list = cred.add_entry(status_list, vc.id, keys, now)
    status_path.write_bytes(canonical_serialize(status_list.to_dict()))
    Path(args.out).write_bytes(canonical_serialize(vc.to_dict()))
    if args.evidence_out:
        Path(args.evidence_out).write_bytes(canonical_serialize(evidence.to_dict()))
    if args.trust_anchor_out:
        Path(args.trust_anchor_out).write_text(enclave.attestation_public_key.hex())
    if args.allowlist_out:
        Path(args.allowlist_out).write_text(enclave.measurement.m_e.hex() + "\n")
    if args.wallet:
        wallet = WalletStore(args.wallet)
        wallet.add_credential(vc)
        wallet.add_evidence(vc.id, evidence.to_dict())
        wallet.set_policy(
            vc.id, DisclosurePolicy(policy_id=f"policy:{vc.id}", allowed_claims={c.key for c in vc.claims})
        )
    _emit(
        args,
        {
            "credential_id": vc.id,
            "claims": [[c.key, c.value] for c in vc.claims],
            "policy_digest": bundle.policy_digest().hex(),
            "measurement": enclave.measurement.m_e.hex(),
            "nonce": nonce.hex(),
        },
        f"derived {vc.id} with {len(vc.claims)} skill claims -> {args.out}",
    )
    return 0


def cmd_wallet_list(args) -> int:
    entries = WalletStore(args.wallet).list_credentials()
    lines = [
        f"{e['id']}  {e['credential_class']:13s}  claims={len(e['claim_keys'])}  issued_at={e['issued_at']}"
        for e in entries
    ]
    _emit(args, {"credentials": entries}, "\n".join(lines) if lines else "(wallet empty)")
    return 0


def cmd_wallet_policy_set(args) -> int:
    wallet = WalletStore(args.wallet)
    policy = DisclosurePolicy(
        policy_id=f"policy:{args.credential}",
        allowed_claims=set(filter(None, (args.allow or "").split(","))),
        allowed_predicates=[_parse_predicate(p) for p in args.predicate or []],
    )
    wallet.set_policy(args.credential, policy)
    _emit(args, policy.to_dict(), f"policy set for {args.credential}")
    return 0


def cmd_present(args) -> int:
    wallet = WalletStore(args.wallet)
    vc = wallet.get_credential(args.credential)
    policy = wallet.get_policy(args.credential)
    nonce = bytes.fromhex(args.nonce)
    now = int(time.time())
    keys = load_keypair(args.key)
    if vc.credential_class == cred.CLASS_DERIVATIVE:
        if not args.status_list:
            raise LerError("derivative presentations need --status-list")
        status_path = Path(args.status_list)
        status_list = cred.StatusList.from_dict(canonical_parse(status_path.read_bytes()))
        staple = cred.staple_status(status_list, vc.id, keys, now)
        evidence = (
            canonical_parse(Path(args.evidence).read_bytes()) if args.evidence else wallet.get_evidence(vc.id)
        )
    else:
        if args.staple:
            staple = cred.StatusSnippet.from_dict(canonical_parse(Path(args.staple).read_bytes()))
        else:
            staple_dict = wallet.get_staple(vc.id)
            if staple_dict is None:
                raise LerError("no status staple available; pass --staple")
            staple = cred.StatusSnippet.from_dict(staple_dict)
        evidence = None
    vp = cred.present(
        vc,
        policy,
        set(filter(None, (args.reveal or "").split(","))),
        [_parse_predicate(p) for p in args.predicate or []],
        keys,
        nonce,
        staple,
        now=now,
        attestation_evidence=evidence,
    )
    Path(args.out).write_bytes(canonical_serialize(vp.to_dict()))
    _emit(
        args,
        {"revealed": sorted(c.key for c in vp.revealed)},
        f"presentation -> {args.out} (revealed {sorted(c.key for c in vp.revealed)})",
    )
    return 0


def cmd_verify(args) -> int:
    vp = cred.VerifiablePresentation.from_dict(canonical_parse(Path(args.presentation).read_bytes()))
    registry = DidRegistry(args.registry)
    issuer_doc = registry.resolve(Did.parse(vp.credential_ref["issuer_did"]))
    holder_doc = registry.resolve(Did.parse(vp.credential_ref["subject_did"]))
    allowlist = {
        bytes.fromhex(line.strip())
        for line in Path(args.allowlist).read_text().splitlines()
        if line.strip()
    } if args.allowlist else set()
    trust_anchor = bytes.fromhex(Path(args.trust_anchor).read_text().strip()) if args.trust_anchor else b""
    if args.policy_digest:
        expected = bytes.fromhex(args.policy_digest)
    else:
        taxonomy = load_taxonomy(args.taxonomy)
        expected = _bundle(args, taxonomy.taxonomy_id).policy_digest()
    policy = VerifierPolicy(
        measurement_allowlist=allowlist,
        freshness_delta=args.delta,
        tau=args.tau,
        expected_policy_digest=expected,
        enclave_trust_anchor=trust_anchor,
        combiner=args.combiner,
    )
    now = args.now if args.now is not None else int(time.time())
    result = cred.verify(vp, issuer_doc, holder_doc, policy, now, bytes.fromhex(args.nonce))
    _emit(
        args,
        {"ok": result.ok, "reason": result.reason},
        "accept" if result.ok else f"reject: {result.reason}",
    )
    return 0 if result.ok else 1


def cmd_match(args) -> int:
    candidate = canonical_parse(Path(args.candidate).read_bytes())["skills"]
    job = load_job(args.job)
    aliases = load_alias_table(args.aliases) if args.aliases else load_alias_table(_data_path("skill_aliases.json"))
    claims = AttestedSkillClaims(skill_names=list(candidate), verified=True)
    result = decide(claims, job, HashingEmbedder(), combiner=args.combiner, alias_table=aliases)
    _emit(
        args,
        result.to_dict(),
        f"overlap={result.overlap:.2f} sem_sim={result.sem_sim:.4f} "
        f"score={result.score:.4f} decision={result.decision}",
    )
    return 0


def cmd_revoke(args) -> int:
    keys = load_keypair(args.key)
    status_path = Path(args.status_list)
    status_list = cred.StatusList.from_dict(canonical_parse(status_path.read_bytes()))
    status_list = cred.revoke(status_list, args.credential, keys, int(time.time()))
    status_path.write_bytes(canonical_serialize(status_list.to_dict()))
    _emit(args, {"credential_id": args.credential, "status": "revoked"}, f"revoked {args.credential}")
    return 0


def _audit_setup(args):
    job = load_job(args.job) if args.job else load_job(_data_path("jobs", "java_developer.json"))
    candidate_path = args.candidate or _data_path("fixtures", "candidate_java_role.json")
    candidate = canonical_parse(Path(candidate_path).read_bytes())["skills"]
    aliases = load_alias_table(_data_path("skill_aliases.json"))
    if args.matcher == "skill-only":
        matcher = skill_only_matcher(job, HashingEmbedder(), alias_table=aliases)
    else:
        matcher = synthetic_institution_matcher()
    log = None
    if args.log:
        handle = open(args.log, "w", encoding="utf-8")
        log = lambda line: handle.write(line + "\n")
    return matcher, [set(candidate)], log, job


def cmd_audit_boi(args) -> int:
    matcher, samples, log, _ = _audit_setup(args)
    estimate = estimate_boi(
        matcher,
        samples,
        default_z_edit_generator,
        args.trials,
        seed=args.seed,
        matcher_id=args.matcher,
        log=log,
    )
    _emit(args, estimate.to_dict(), str(estimate.value))
    return 0


def cmd_audit_flip(args) -> int:
    matcher, samples, log, job = _audit_setup(args)
    tau = args.tau if args.tau is not None else job.threshold
    value = flip_probability_audit(
        matcher, samples, default_z_edit_generator, tau, args.trials, seed=args.seed, log=log
    )
    _emit(args, {"flip_probability": value, "trials": args.trials}, str(value))
    return 0


def cmd_serve(args) -> int:
    config = Config.load(args.config)
    service = serve_endpoints(args.role, config)
    server = service.make_server()
    host, port = server.server_address[:2]
    print(f"serving {args.role} on http://{host}:{port}", flush=True)
    server.serve_forever()
    return 0


# --- parser ----------------------------------------------------------------------


def _add_format(p: argparse.ArgumentParser) -> None:
    p.add_argument("--format", choices=["text", "canonical"], default="text")


def _add_bundle_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--tau", type=float, default=0.75)
    p.add_argument("--combiner", choices=["semsim", "overlap", "mix"], default="semsim")
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--delta", type=int, default=300)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ler", description=__doc__)
    parser.add_argument("--version", action="version", version=f"lerkit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("keygen", help="generate a signing key pair")
    p.add_argument("--out", required=True)
    p.add_argument("--method", default="ler")
    _add_format(p)
    p.set_defaults(func=cmd_keygen)

    did = sub.add_parser("did", help="decentralized identifier operations")
    did_sub = did.add_subparsers(dest="did_command", required=True)
    p = did_sub.add_parser("register", help="derive a DID and register its document")
    p.add_argument("--key", required=True)
    p.add_argument("--registry", required=True)
    p.add_argument("--method", default="ler")
    p.add_argument("--meta", action="append")
    _add_format(p)
    p.set_defaults(func=cmd_did_register)

    p = sub.add_parser("issue", help="issue an institutional credential")
    p.add_argument("--issuer-key", required=True)
    p.add_argument("--subject", required=True)
    p.add_argument("--claim", action="append", required=True)
    p.add_argument("--lifetime", type=int)
    p.add_argument("--status-list", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--staple-out")
    p.add_argument("--wallet")
    p.add_argument("--method", default="ler")
    _add_format(p)
    p.set_defaults(func=cmd_issue)

    p = sub.add_parser("derive", help="derive a skill credential inside the enclave")
    p.add_argument("--transcript", required=True)
    p.add_argument("--syllabi", required=True)
    p.add_argument("--taxonomy", required=True)
    p.add_argument("--key", required=True)
    p.add_argument("--registry", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--status-list", required=True)
    p.add_argument("--nonce")
    p.add_argument("--evidence-out")
    p.add_argument("--trust-anchor-out")
    p.add_argument("--allowlist-out")
    p.add_argument("--wallet")
    p.add_argument("--model-bundle")
    p.add_argument("--method", default="ler")
    _add_bundle_args(p)
    _add_format(p)
    p.set_defaults(func=cmd_derive)

    wallet = sub.add_parser("wallet", help="wallet operations")
    wallet_sub = wallet.add_subparsers(dest="wallet_command", required=True)
    p = wallet_sub.add_parser("list", help="list stored credentials")
    p.add_argument("--wallet", required=True)
    _add_format(p)
    p.set_defaults(func=cmd_wallet_list)
    p = wallet_sub.add_parser("policy", help="disclosure policy operations")
    policy_sub = p.add_subparsers(dest="policy_command", required=True)
    p = policy_sub.add_parser("set", help="set the disclosure policy for a credential")
    p.add_argument("--wallet", required=True)
    p.add_argument("--credential", required=True)
    p.add_argument("--allow", default="")
    p.add_argument("--predicate", action="append")
    _add_format(p)
    p.set_defaults(func=cmd_wallet_policy_set)

    p = sub.add_parser("present", help="build a selective-disclosure presentation")
    p.add_argument("--wallet", required=True)
    p.add_argument("--credential", required=True)
    p.add_argument("--key", required=True)
    p.add_argument("--reveal", default="")
    p.add_argument("--predicate", action="append")
    p.add_argument("--nonce", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--staple")
    p.add_argument("--evidence")
    p.add_argument("--status-list")
    _add_format(p)
    p.set_defaults(func=cmd_present)

    p = sub.add_parser("verify", help="verify a presentation")
    p.add_argument("--presentation", required=True)
    p.add_argument("--registry", required=True)
    p.add_argument("--nonce", required=True)
    p.add_argument("--allowlist")
    p.add_argument("--trust-anchor")
    p.add_argument("--policy-digest")
    p.add_argument("--taxonomy")
    p.add_argument("--now", type=int)
    _add_bundle_args(p)
    _add_format(p)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("match", help="skills-only matching against a job")
    p.add_argument("--candidate", required=True)
    p.add_argument("--job", required=True)
    p.add_argument("--aliases")
    p.add_argument("--combiner", choices=["semsim", "overlap", "mix"], default="semsim")
    _add_format(p)
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("revoke", help="revoke a credential on a status list")
    p.add_argument("--status-list", required=True)
    p.add_argument("--key", required=True)
    p.add_argument("--credential", required=True)
    _add_format(p)
    p.set_defaults(func=cmd_revoke)

    audit = sub.add_parser("audit", help="bias-opportunity audits")
    audit_sub = audit.add_subparsers(dest="audit_command", required=True)
    for name, fn in (("boi", cmd_audit_boi), ("flip", cmd_audit_flip)):
        p = audit_sub.add_parser(name)
        p.add_argument("--matcher", choices=["skill-only", "z-sensitive"], default="skill-only")
        p.add_argument("--trials", type=int, default=10000)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--job")
        p.add_argument("--candidate")
        p.add_argument("--log")
        if name == "flip":
            p.add_argument("--tau", type=float)
        _add_format(p)
        p.set_defaults(func=fn)

    p = sub.add_parser("serve", help="run a service role")
    p.add_argument("role", choices=["issuer", "verifier", "holder"])
    p.add_argument("--config")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except LerError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
