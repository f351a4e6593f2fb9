"""File-backed wallet: credentials, disclosure policies, pending requests.

The whole store is one canonical document written with atomic
write-then-rename, so a reload always reproduces the identical
serialization.
"""

from __future__ import annotations

import threading
import uuid
from pathlib import Path

from ..canonical import canonical_parse, canonical_serialize
from ..credential import DisclosurePolicy, VerifiableCredential
from ..errors import NotFound

_STORE_NAME = "wallet.json"


class WalletStore:
    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self._state: dict = {
            "credentials": {},
            "policies": {},
            "pending_requests": [],
            "presentations": {},
            "staples": {},
            "evidence": {},
        }
        path = self.directory / _STORE_NAME
        if path.exists():
            self._state = canonical_parse(path.read_bytes())

    def _save(self) -> None:
        path = self.directory / _STORE_NAME
        tmp = path.with_suffix(".tmp")
        tmp.write_bytes(canonical_serialize(self._state))
        tmp.replace(path)

    def serialized(self) -> bytes:
        with self._lock:
            return canonical_serialize(self._state)

    # --- credentials ---

    def add_credential(self, vc: VerifiableCredential) -> None:
        with self._lock:
            self._state["credentials"][vc.id] = vc.to_dict()
            self._save()

    def get_credential(self, credential_id: str) -> VerifiableCredential:
        with self._lock:
            d = self._state["credentials"].get(credential_id)
        if d is None:
            raise NotFound(f"wallet holds no credential {credential_id}")
        return VerifiableCredential.from_dict(d)

    def list_credentials(self) -> list[dict]:
        with self._lock:
            return [
                {
                    "id": d["id"],
                    "credential_class": d["credential_class"],
                    "issuer_did": d["issuer_did"],
                    "issued_at": d["issued_at"],
                    "expires_at": d["expires_at"],
                    "claim_keys": sorted(c["key"] for c in d.get("claims", [])),
                }
                for d in self._state["credentials"].values()
            ]

    # --- policies ---

    def set_policy(self, credential_id: str, policy: DisclosurePolicy) -> None:
        with self._lock:
            self._state["policies"][credential_id] = policy.to_dict()
            self._save()

    def get_policy(self, credential_id: str) -> DisclosurePolicy:
        with self._lock:
            d = self._state["policies"].get(credential_id)
        if d is None:
            raise NotFound(f"no disclosure policy for credential {credential_id}")
        return DisclosurePolicy.from_dict(d)

    # --- pending verifier requests (the wallet-UI queue) ---

    def queue_request(self, request: dict) -> str:
        request_id = request.get("request_id") or uuid.uuid4().hex
        request["request_id"] = request_id
        with self._lock:
            self._state["pending_requests"].append(request)
            self._save()
        return request_id

    def pending_requests(self) -> list[dict]:
        with self._lock:
            return list(self._state["pending_requests"])

    def take_request(self, request_id: str) -> dict:
        with self._lock:
            for i, request in enumerate(self._state["pending_requests"]):
                if request["request_id"] == request_id:
                    self._state["pending_requests"].pop(i)
                    self._save()
                    return request
        raise NotFound(f"no pending request {request_id}")

    def add_staple(self, credential_id: str, snippet_dict: dict) -> None:
        with self._lock:
            self._state["staples"][credential_id] = snippet_dict
            self._save()

    def get_staple(self, credential_id: str) -> dict | None:
        with self._lock:
            return self._state["staples"].get(credential_id)

    def add_evidence(self, credential_id: str, evidence_dict: dict) -> None:
        with self._lock:
            self._state["evidence"][credential_id] = evidence_dict
            self._save()

    def get_evidence(self, credential_id: str) -> dict | None:
        with self._lock:
            return self._state["evidence"].get(credential_id)

    def store_presentation(self, request_id: str, vp_dict: dict) -> None:
        with self._lock:
            self._state["presentations"][request_id] = vp_dict
            self._save()

    def get_presentation(self, request_id: str) -> dict:
        with self._lock:
            d = self._state["presentations"].get(request_id)
        if d is None:
            raise NotFound(f"no stored presentation for request {request_id}")
        return d
