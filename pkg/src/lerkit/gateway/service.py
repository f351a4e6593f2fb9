"""Issuer, verifier, and holder service endpoints over plain HTTP.

Request and response bodies are canonical-serialized documents; there is no
session crypto beyond the protocol's own signatures. Malformed input yields
a structured 4xx reject, never a crash.
"""

from __future__ import annotations

import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

from .. import credential as cred
from ..canonical import canonical_parse, canonical_serialize
from ..clock import Clock, SystemClock
from ..credential import DisclosurePolicy, Predicate, VerifierPolicy
from ..enclave import Enclave
from ..errors import LerError, NotFound
from ..identity import DidRegistry, gen_did
from ..matching import load_alias_table, load_job
from ..protocol import PolicyBundle, VerifierActor
from ..skills import HashingEmbedder, load_taxonomy
from .config import Config, load_keypair
from .wallet import WalletStore


class _JsonHandler(BaseHTTPRequestHandler):
    routes: dict[tuple[str, str], object] = {}

    def log_message(self, fmt, *args):  # quiet by default
        pass

    def _reply(self, status: int, payload: dict) -> None:
        body = canonical_serialize(payload)
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Headers", "Content-Type")
        self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
        self.end_headers()
        self.wfile.write(body)

    def _dispatch(self, method: str) -> None:
        handler = self.routes.get((method, self.path.split("?")[0]))
        if handler is None:
            self._reply(404, {"error": f"no such endpoint: {self.path}"})
            return
        body: dict = {}
        if method == "POST":
            length = int(self.headers.get("Content-Length") or 0)
            raw = self.rfile.read(length) if length else b"{}"
            try:
                body = canonical_parse(raw)
                if not isinstance(body, dict):
                    raise ValueError("body must be an object")
            except (ValueError, UnicodeDecodeError) as exc:
                self._reply(400, {"error": f"malformed request body: {exc}"})
                return
        try:
            status, payload = handler(body)  # type: ignore[operator]
        except (LerError, KeyError, TypeError, ValueError) as exc:
            self._reply(400, {"error": str(exc) or type(exc).__name__})
            return
        except Exception as exc:  # pragma: no cover - last-resort guard
            self._reply(500, {"error": f"internal error: {exc}"})
            return
        self._reply(status, payload)

    def do_GET(self):
        self._dispatch("GET")

    def do_POST(self):
        self._dispatch("POST")

    def do_OPTIONS(self):
        self._reply(200, {})


class _Service:
    """Base service: binds routes to a threaded HTTP server."""

    role = "service"

    def __init__(self, config: Config, clock: Clock | None = None):
        config.validate(self.role)
        self.config = config
        self.clock = clock or SystemClock()
        self._server: ThreadingHTTPServer | None = None

    def routes(self) -> dict:
        raise NotImplementedError

    def make_server(self) -> ThreadingHTTPServer:
        handler = type(f"{self.role.title()}Handler", (_JsonHandler,), {"routes": self.routes()})
        self._server = ThreadingHTTPServer((self.config.bind_host, self.config.bind_port), handler)
        return self._server

    def serve_forever(self) -> None:
        self.make_server().serve_forever()

    def start_background(self) -> str:
        server = self.make_server()
        thread = threading.Thread(target=server.serve_forever, daemon=True)
        thread.start()
        host, port = server.server_address[:2]
        return f"http://{host}:{port}"

    def shutdown(self) -> None:
        if self._server is not None:
            self._server.shutdown()


class IssuerService(_Service):
    role = "issuer"

    def __init__(self, config: Config, clock: Clock | None = None):
        super().__init__(config, clock)
        self.keys = load_keypair(config.key_path)
        self.did, self.doc = gen_did(self.keys.public_key)
        self.registry = DidRegistry(config.registry_path)
        self.registry.register(self.doc)
        if config.status_list_path.exists():
            self.status_list = cred.StatusList.from_dict(canonical_parse(config.status_list_path.read_bytes()))
        else:
            self.status_list = cred.new_status_list(self.keys, self.did, cred.LIST_INSTITUTIONAL, self.clock.now())
            self._persist_status()

    def _persist_status(self) -> None:
        self.config.status_list_path.write_bytes(canonical_serialize(self.status_list.to_dict()))

    def _issue(self, body: dict) -> tuple[int, dict]:
        subject = body["subject_did"]
        claims = [(k, v) for k, v in body["claims"]]
        lifetime = body.get("lifetime")
        vc = cred.issue(
            self.keys,
            self.did,
            cred.Did.parse(subject) if isinstance(subject, str) else subject,
            claims,
            cred.CLASS_INSTITUTIONAL,
            None,
            None if lifetime is None else int(lifetime),
            now=self.clock.now(),
            status_ref=(f"status:{self.did}", 0),
        )
        self.status_list = cred.add_entry(self.status_list, vc.id, self.keys, self.clock.now())
        self._persist_status()
        staple = cred.staple_status(self.status_list, vc.id, self.keys, self.clock.now())
        return 200, {"credential": vc.to_dict(), "staple": staple.to_dict()}

    def _status_list(self, _body: dict) -> tuple[int, dict]:
        return 200, self.status_list.to_dict()

    def _staple(self, body: dict) -> tuple[int, dict]:
        snippet = cred.staple_status(self.status_list, body["credential_id"], self.keys, self.clock.now())
        return 200, snippet.to_dict()

    def routes(self) -> dict:
        return {
            ("POST", "/v1/issue"): self._issue,
            ("GET", "/v1/status-list"): self._status_list,
            ("POST", "/v1/staple"): self._staple,
        }


class VerifierService(_Service):
    role = "verifier"

    def __init__(self, config: Config, clock: Clock | None = None):
        super().__init__(config, clock)
        self.keys = load_keypair(config.key_path)
        registry = DidRegistry(config.registry_path)
        taxonomy = load_taxonomy(config.taxonomy_path)
        provider = HashingEmbedder()
        allowlist = {
            bytes.fromhex(line.strip())
            for line in Path(config.allowlist_path).read_text().splitlines()
            if line.strip()
        }
        trust_anchor = bytes.fromhex(Path(config.trust_anchor_path).read_text().strip())
        bundle = PolicyBundle(
            tau=config.tau,
            combiner=config.combiner,
            k=config.k,
            freshness_delta=config.freshness_delta,
            weights=config.weights,
            taxonomy_id=taxonomy.taxonomy_id,
        )
        policy = VerifierPolicy(
            measurement_allowlist=allowlist,
            freshness_delta=config.freshness_delta,
            tau=config.tau,
            expected_policy_digest=bundle.policy_digest(),
            nonce_ttl=config.nonce_ttl,
            enclave_trust_anchor=trust_anchor,
            combiner=config.combiner,
            release=config.release,
        )
        if config.job_path is None:
            raise NotFound("verifier role needs a job_path in config")
        alias_path = config.taxonomy_path.parent / "skill_aliases.json"
        self.actor = VerifierActor(
            self.keys,
            registry,
            policy,
            load_job(config.job_path),
            taxonomy,
            provider,
            clock=self.clock,
            alias_table=load_alias_table(alias_path) if alias_path.exists() else None,
        )

    def _challenge(self, _body: dict) -> tuple[int, dict]:
        session_id, nonce = self.actor.challenge()
        return 200, {"session_id": session_id, "nonce": nonce.hex()}

    def _present(self, body: dict) -> tuple[int, dict]:
        result, released = self.actor.handle_presentation(body["session_id"], body["presentation"])
        if not result.ok:
            return 400, {"ok": False, "reason": result.reason}
        return 200, {"ok": True, "released": released}

    def _allowlist(self, _body: dict) -> tuple[int, dict]:
        return 200, {
            "measurements": sorted(m.hex() for m in self.actor.policy.measurement_allowlist)
        }

    def routes(self) -> dict:
        return {
            ("GET", "/v1/challenge"): self._challenge,
            ("POST", "/v1/present"): self._present,
            ("GET", "/v1/allowlist"): self._allowlist,
        }


class HolderService(_Service):
    """Wallet backend: pending request queue, approve/deny, inventory."""

    role = "holder"

    def __init__(self, config: Config, clock: Clock | None = None, enclave: Enclave | None = None):
        super().__init__(config, clock)
        self.keys = load_keypair(config.key_path)
        self.did, self.doc = gen_did(self.keys.public_key)
        self.registry = DidRegistry(config.registry_path)
        self.registry.register(self.doc)
        self.wallet = WalletStore(config.wallet_dir)
        self.enclave = enclave
        self.sessions: dict[str, object] = {}
        if config.status_list_path.exists():
            self.status_list = cred.StatusList.from_dict(canonical_parse(config.status_list_path.read_bytes()))
        else:
            self.status_list = cred.new_status_list(self.keys, self.did, cred.LIST_DERIVATIVE, self.clock.now())
            config.status_list_path.write_bytes(canonical_serialize(self.status_list.to_dict()))

    def _request_view(self, request: dict) -> dict:
        view = dict(request)
        try:
            policy = self.wallet.get_policy(request["credential_id"])
            permitted = sorted(policy.permitted_keys(set(request.get("requested_keys", []))))
        except NotFound:
            permitted = []
        view["permitted_keys"] = permitted
        return view

    def _requests(self, _body: dict) -> tuple[int, dict]:
        return 200, {"requests": [self._request_view(r) for r in self.wallet.pending_requests()]}

    def _queue(self, body: dict) -> tuple[int, dict]:
        for required in ("credential_id", "requested_keys", "nonce"):
            if required not in body:
                raise KeyError(f"disclosure request missing {required!r}")
        request_id = self.wallet.queue_request(dict(body))
        return 200, {"request_id": request_id}

    def _approve(self, body: dict) -> tuple[int, dict]:
        request_id = body["request_id"]
        if not body.get("approve", False):
            self.wallet.take_request(request_id)
            return 200, {"ok": True, "denied": True}
        request = self.wallet.take_request(request_id)
        credential_id = request["credential_id"]
        vc = self.wallet.get_credential(credential_id)
        policy = self.wallet.get_policy(credential_id)
        requested = set(request.get("requested_keys", []))
        chosen = set(body.get("claims", requested))
        # Server-side re-validation: the approved subset can never exceed
        # what the request asked for and the policy permits.
        reveal = chosen & requested & policy.permitted_keys(requested)
        predicates = [Predicate.from_dict(p) for p in request.get("requested_predicates", [])]
        nonce = bytes.fromhex(request["nonce"])
        now = self.clock.now()
        if vc.credential_class == cred.CLASS_DERIVATIVE:
            staple = cred.staple_status(self.status_list, credential_id, self.keys, now)
            session = self.sessions.get(credential_id)
            evidence = (
                session.attest(nonce, now).to_dict()  # type: ignore[union-attr]
                if session is not None
                else self.wallet.get_evidence(credential_id)
            )
        else:
            staple_dict = self.wallet.get_staple(credential_id)
            if staple_dict is None:
                raise NotFound(f"no status staple stored for {credential_id}")
            staple = cred.StatusSnippet.from_dict(staple_dict)
            evidence = None
        vp = cred.present(
            vc,
            policy,
            reveal,
            predicates,
            self.keys,
            nonce,
            staple,
            now=now,
            attestation_evidence=evidence,
        )
        self.wallet.store_presentation(request_id, vp.to_dict())
        return 200, {"ok": True, "presentation": vp.to_dict()}

    def _credentials(self, _body: dict) -> tuple[int, dict]:
        return 200, {"credentials": self.wallet.list_credentials()}

    def routes(self) -> dict:
        return {
            ("GET", "/v1/wallet/requests"): self._requests,
            ("POST", "/v1/wallet/requests"): self._queue,
            ("POST", "/v1/wallet/approve"): self._approve,
            ("GET", "/v1/wallet/credentials"): self._credentials,
        }


def serve_endpoints(role: str, config: Config, clock: Clock | None = None) -> _Service:
    services = {"issuer": IssuerService, "verifier": VerifierService, "holder": HolderService}
    if role not in services:
        raise NotFound(f"unknown role {role!r}; expected issuer, verifier, or holder")
    return services[role](config, clock)
