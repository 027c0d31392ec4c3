"""Verifiable random function producing the lots used by sortition.

The backend is a deterministic-signature VRF: the proof is an Ed25519
signature over a domain-separated input and the lot is SHA-256 of that
proof, read as a big-endian unsigned integer. Anyone holding the public key
can check a (lot, proof) pair; nobody without the secret key can produce
one. Unlike a standards-track ECVRF this does not stop a *key holder* from
crafting alternative valid signatures, which is acceptable for the
simulation's adversary model (adversaries here only choose what to
forward). Swapping in an ECVRF only requires replacing ``evaluate`` and
``verify``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

from .crypto import SIGNATURE_SIZE, derive_public_key, sha256, sign, verify_signature

LOT_BYTES = 32
MAX_LOT = 2**256 - 1

_KEYGEN_DOMAIN = b"fairchain/keygen/v1"
_VRF_DOMAIN = b"fairchain/vrf/v1"


@dataclass(frozen=True)
class KeyPair:
    secret_key: bytes
    public_key: bytes
    node_id: bytes

    @classmethod
    def from_secret(cls, secret_key: bytes) -> KeyPair:
        public_key = derive_public_key(secret_key)
        return cls(secret_key, public_key, node_id_for(public_key))

    def __repr__(self) -> str:
        return f"KeyPair(node_id={self.node_id.hex()[:12]}...)"


@dataclass(frozen=True)
class VrfOutput:
    lot: int
    proof: bytes


def node_id_for(public_key: bytes) -> bytes:
    return sha256(b"node-id", public_key)


def keygen(rng_seed: int) -> KeyPair:
    """Deterministically derive a key pair from a 64-bit seed."""
    seed_bytes = (rng_seed % 2**64).to_bytes(8, "big")
    return KeyPair.from_secret(sha256(_KEYGEN_DOMAIN, seed_bytes))


def evaluate(secret_key: bytes, data: bytes) -> VrfOutput:
    proof = sign(secret_key, _VRF_DOMAIN + data)
    return VrfOutput(int.from_bytes(sha256(proof), "big"), proof)


def verify(public_key: bytes, data: bytes, output: VrfOutput) -> bool:
    return _verify(public_key, data, output.lot, output.proof)


@lru_cache(maxsize=1 << 16)
def _verify(public_key: bytes, data: bytes, lot: int, proof: bytes) -> bool:
    if not isinstance(lot, int) or not 0 <= lot <= MAX_LOT:
        return False
    if len(proof) != SIGNATURE_SIZE:
        return False
    if int.from_bytes(sha256(proof), "big") != lot:
        return False
    return verify_signature(public_key, _VRF_DOMAIN + data, proof)
