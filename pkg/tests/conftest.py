from __future__ import annotations

import itertools
from collections.abc import Callable

import pytest

from fairchain.reputation import ReputationTable
from fairchain.vrf import KeyPair, keygen


def find_key(predicate: Callable[[KeyPair], bool], start: int = 0, limit: int = 200_000) -> KeyPair:
    """First keygen(seed), seed >= start, satisfying ``predicate``."""
    for seed in itertools.islice(itertools.count(start), limit):
        kp = keygen(seed)
        if predicate(kp):
            return kp
    raise LookupError("no key found")


@pytest.fixture(scope="session")
def keys() -> list[KeyPair]:
    return [keygen(1000 + i) for i in range(40)]


@pytest.fixture(scope="session")
def table(keys) -> ReputationTable:
    # First 15 keys form the high-reputation pool, the rest sit at the default.
    return ReputationTable({kp.node_id: (0.9 if i < 15 else 0.5) for i, kp in enumerate(keys)})


@pytest.fixture(scope="session")
def public_keys(keys) -> dict[bytes, bytes]:
    return {kp.node_id: kp.public_key for kp in keys}


def extend(chain, keys, salt: bytes = b"", payload: bytes = b"tx" * 8):
    """Append one valid block proposed by the first selected key."""
    from fairchain.crypto import sha256
    from fairchain.ledger import make_block
    from fairchain.sortition import Role, SortitionParams, sortition

    head = chain.head
    attempt = 0
    while True:
        seed = sha256(b"test-seed", head.block_hash, salt, attempt.to_bytes(4, "big"))
        for kp in keys:
            out = sortition(kp.secret_key, Role.PROPOSAL, seed, 0.5, SortitionParams())
            if out.selected:
                block = make_block(head.height + 1, head.block_hash, kp.node_id, out.lot, out.proof, seed, payload)
                return chain.append(block)
        attempt += 1


def build_chain(length: int, keys, salt: bytes = b""):
    from fairchain.ledger import Chain

    chain = Chain()
    for _ in range(length):
        chain = extend(chain, keys, salt)
    return chain
