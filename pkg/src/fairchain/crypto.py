"""Hashing and Ed25519 signing helpers shared by the VRF and the wire layer."""

from __future__ import annotations

import hashlib
from functools import lru_cache

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)

HASH_SIZE = 32
SIGNATURE_SIZE = 64


def sha256(*parts: bytes) -> bytes:
    h = hashlib.sha256()
    for part in parts:
        h.update(part)
    return h.digest()


@lru_cache(maxsize=4096)
def _private_key(secret_key: bytes) -> Ed25519PrivateKey:
    return Ed25519PrivateKey.from_private_bytes(secret_key)


@lru_cache(maxsize=4096)
def _public_key(public_key: bytes) -> Ed25519PublicKey | None:
    try:
        return Ed25519PublicKey.from_public_bytes(public_key)
    except ValueError:
        return None


def derive_public_key(secret_key: bytes) -> bytes:
    from cryptography.hazmat.primitives.serialization import Encoding, PublicFormat

    return _private_key(secret_key).public_key().public_bytes(Encoding.Raw, PublicFormat.Raw)


def sign(secret_key: bytes, data: bytes) -> bytes:
    # Ed25519 (RFC 8032) signatures are deterministic.
    return _private_key(secret_key).sign(data)


@lru_cache(maxsize=1 << 16)
def verify_signature(public_key: bytes, data: bytes, signature: bytes) -> bool:
    """Check an Ed25519 signature; malformed keys or signatures return False.

    Memoized: the same gossiped message is checked by every recipient.
    """
    if len(signature) != SIGNATURE_SIZE:
        return False
    key = _public_key(public_key)
    if key is None:
        return False
    try:
        key.verify(signature, data)
    except InvalidSignature:
        return False
    return True
