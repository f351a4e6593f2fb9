#!/usr/bin/env python3
"""Boot a holder service seeded for wallet-console development and tests.

Creates a throwaway workspace holding an institutional credential with
grade, ssn, and course claims under a grade-only disclosure policy, starts
the holder endpoints on an ephemeral port, and prints `URL http://...` once
ready. Blocks until killed.
"""

import sys
import tempfile
from pathlib import Path

from lerkit import credential as cred
from lerkit.credential import DisclosurePolicy
from lerkit.gateway.config import Config, save_keypair
from lerkit.gateway.service import HolderService
from lerkit.identity import DidRegistry, KeyPair, gen_did

DATA = Path(__file__).resolve().parent.parent.parent / "src" / "lerkit" / "data"


def main() -> int:
    ws = Path(tempfile.mkdtemp(prefix="ler-dev-holder-"))
    (ws / "registry").mkdir()
    save_keypair(KeyPair.generate(), ws / "holder_key.json")

    issuer_keys = KeyPair.generate()
    issuer_did, issuer_doc = gen_did(issuer_keys.public_key)
    DidRegistry(ws / "registry").register(issuer_doc)

    config = Config(
        workspace=ws,
        key_path=ws / "holder_key.json",
        registry_path=ws / "registry",
        taxonomy_path=DATA / "taxonomy_cs30.tsv",
        allowlist_path=ws / "allowlist.txt",
        trust_anchor_path=ws / "trust_anchor.txt",
        wallet_dir=ws / "wallet",
        status_list_path=ws / "holder_status.json",
    )
    service = HolderService(config)

    now = service.clock.now()
    vc = cred.issue(
        issuer_keys,
        issuer_did,
        service.did,
        [("grade", "A"), ("ssn", "123-45-6789"), ("course", "CS101")],
        now=now,
    )
    status_list = cred.new_status_list(issuer_keys, issuer_did, cred.LIST_INSTITUTIONAL, now)
    status_list = cred.add_entry(status_list, vc.id, issuer_keys, now)
    staple = cred.staple_status(status_list, vc.id, issuer_keys, now)
    service.wallet.add_credential(vc)
    service.wallet.add_staple(vc.id, staple.to_dict())
    service.wallet.set_policy(vc.id, DisclosurePolicy(policy_id="grade-only", allowed_claims={"grade"}))

    url = service.start_background()
    print(f"CREDENTIAL {vc.id}", flush=True)
    print(f"URL {url}", flush=True)
    try:
        import threading

        threading.Event().wait()
    except KeyboardInterrupt:
        pass
    return 0


if __name__ == "__main__":
    sys.exit(main())
