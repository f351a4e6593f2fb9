"""Service configuration: canonical JSON file, LER_CONFIG override, validation."""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

from ..canonical import canonical_parse, canonical_serialize
from ..errors import ConfigError
from ..identity import KeyPair
from ..skills import WeightConfig

ENV_CONFIG = "LER_CONFIG"


@dataclass
class Config:
    workspace: Path
    key_path: Path
    registry_path: Path
    taxonomy_path: Path
    allowlist_path: Path
    trust_anchor_path: Path
    wallet_dir: Path
    status_list_path: Path
    job_path: Path | None = None
    model_bundle_path: Path | None = None
    freshness_delta: int = 300
    tau: float = 0.75
    k: int = 10
    nonce_ttl: int = 300
    combiner: str = "semsim"
    release: str = "decision+score"
    bind_host: str = "127.0.0.1"
    bind_port: int = 0
    weights: WeightConfig = field(default_factory=WeightConfig.default)

    def validate(self, role: str) -> None:
        """Check numeric bounds and that the paths a role needs exist."""
        if self.freshness_delta <= 0:
            raise ConfigError("freshness_delta must be > 0")
        if not 0.0 <= self.tau <= 1.0:
            raise ConfigError("tau must lie in [0, 1]")
        if self.k < 1:
            raise ConfigError("k must be >= 1")
        needed = [self.key_path, self.registry_path]
        if role in ("holder", "verifier"):
            needed.append(self.taxonomy_path)
        if role == "verifier":
            needed += [self.allowlist_path, self.trust_anchor_path]
            if self.job_path is not None:
                needed.append(self.job_path)
        for path in needed:
            if not Path(path).exists():
                raise ConfigError(f"configured path does not exist: {path}")

    def to_dict(self) -> dict:
        return {
            "workspace": str(self.workspace),
            "key_path": str(self.key_path),
            "registry_path": str(self.registry_path),
            "taxonomy_path": str(self.taxonomy_path),
            "allowlist_path": str(self.allowlist_path),
            "trust_anchor_path": str(self.trust_anchor_path),
            "wallet_dir": str(self.wallet_dir),
            "status_list_path": str(self.status_list_path),
            "job_path": None if self.job_path is None else str(self.job_path),
            "model_bundle_path": None if self.model_bundle_path is None else str(self.model_bundle_path),
            "freshness_delta": self.freshness_delta,
            "tau": self.tau,
            "k": self.k,
            "nonce_ttl": self.nonce_ttl,
            "combiner": self.combiner,
            "release": self.release,
            "bind_host": self.bind_host,
            "bind_port": self.bind_port,
            "weights": self.weights.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Config":
        return cls(
            workspace=Path(d["workspace"]),
            key_path=Path(d["key_path"]),
            registry_path=Path(d["registry_path"]),
            taxonomy_path=Path(d["taxonomy_path"]),
            allowlist_path=Path(d["allowlist_path"]),
            trust_anchor_path=Path(d["trust_anchor_path"]),
            wallet_dir=Path(d["wallet_dir"]),
            status_list_path=Path(d["status_list_path"]),
            job_path=None if d.get("job_path") is None else Path(d["job_path"]),
            model_bundle_path=None if d.get("model_bundle_path") is None else Path(d["model_bundle_path"]),
            freshness_delta=int(d["freshness_delta"]),
            tau=float(d["tau"]),
            k=int(d["k"]),
            nonce_ttl=int(d["nonce_ttl"]),
            combiner=d["combiner"],
            release=d["release"],
            bind_host=d["bind_host"],
            bind_port=int(d["bind_port"]),
            weights=WeightConfig.from_dict(d["weights"]),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_bytes(canonical_serialize(self.to_dict()))

    @classmethod
    def load(cls, path: str | Path | None = None) -> "Config":
        chosen = path or os.environ.get(ENV_CONFIG)
        if chosen is None:
            raise ConfigError(f"no config path given and {ENV_CONFIG} is unset")
        target = Path(chosen)
        if not target.exists():
            raise ConfigError(f"config file not found: {target}")
        return cls.from_dict(canonical_parse(target.read_bytes()))


def save_keypair(keys: KeyPair, path: str | Path) -> None:
    Path(path).write_bytes(
        canonical_serialize(
            {
                "algorithm_id": keys.algorithm_id,
                "public_key": keys.public_key.hex(),
                "private_key": keys.private_key.hex(),
            }
        )
    )


def load_keypair(path: str | Path) -> KeyPair:
    d = canonical_parse(Path(path).read_bytes())
    return KeyPair(
        public_key=bytes.fromhex(d["public_key"]),
        private_key=bytes.fromhex(d["private_key"]),
        algorithm_id=d["algorithm_id"],
    )
