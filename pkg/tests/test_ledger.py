import struct

import pytest

from fairchain.crypto import sha256
from fairchain.ledger import (
    DEFAULT_BLOCK_SIZE,
    Chain,
    DecodeError,
    decode_block,
    decode_chain,
    dump_chain,
    encode_chain,
    genesis,
    load_chain,
    make_block,
    synthetic_payload,
    try_adopt,
    validate_block,
    validate_chain,
)
from fairchain.sortition import Role, SortitionParams, lot_threshold, vrf_input
from fairchain.vrf import evaluate

from .conftest import build_chain, extend, find_key

PARAMS = SortitionParams()


@pytest.fixture(scope="module")
def chain(keys):
    return build_chain(3, keys)


def test_genesis_constants():
    g = genesis()
    assert g.height == 0
    assert g.parent_hash == bytes(32)
    assert g.seed == sha256(b"genesis")
    assert g.payload == b""
    assert genesis() == g and genesis().encode() == g.encode()


def test_block_hash_covers_preceding_fields(chain):
    block = chain.head
    assert block.block_hash == sha256(block.encode()[:-32])


def test_block_encoding_layout(chain):
    b = chain.head
    expected = (
        struct.pack(">Q", b.height)
        + b.parent_hash
        + b.proposer_id
        + b.proposer_lot.to_bytes(32, "big")
        + struct.pack(">I", len(b.proposer_proof))
        + b.proposer_proof
        + b.seed
        + struct.pack(">I", len(b.payload))
        + b.payload
        + b.block_hash
    )
    assert b.encode() == expected
    assert decode_block(expected) == b


def test_chain_encoding_layout(chain):
    data = encode_chain(chain)
    count = struct.unpack(">I", data[:4])[0]
    assert count == len(chain) == 4
    first_len = struct.unpack(">I", data[4:8])[0]
    assert data[8 : 8 + first_len] == genesis().encode()
    assert decode_chain(data).blocks == chain.blocks


@pytest.mark.parametrize("cut", [0, 3, 10, -1])
def test_truncated_chain_fails_to_decode(chain, cut):
    data = encode_chain(chain)
    with pytest.raises(DecodeError):
        decode_chain(data[:cut])


def test_trailing_bytes_rejected(chain):
    with pytest.raises(DecodeError):
        decode_chain(encode_chain(chain) + b"\x00")


def test_valid_block_on_head(chain, keys, public_keys):
    longer = extend(chain, keys)
    assert validate_block(longer.head, chain, PARAMS, public_keys)


def test_wrong_parent_rejected(chain, keys, public_keys):
    longer = extend(chain, keys)
    b = longer.head
    forged = make_block(b.height, sha256(b"elsewhere"), b.proposer_id, b.proposer_lot, b.proposer_proof, b.seed, b.payload)
    assert not validate_block(forged, chain, PARAMS, public_keys)


def test_wrong_height_rejected(chain, keys, public_keys):
    b = extend(chain, keys).head
    forged = make_block(b.height + 1, b.parent_hash, b.proposer_id, b.proposer_lot, b.proposer_proof, b.seed, b.payload)
    assert not validate_block(forged, chain, PARAMS, public_keys)


def test_sub_threshold_proposer_rejected(chain, keys, public_keys):
    seed = sha256(b"sub-threshold")
    kp = find_key(lambda k: evaluate(k.secret_key, vrf_input(seed, Role.PROPOSAL)).lot < lot_threshold(0.9))
    out = evaluate(kp.secret_key, vrf_input(seed, Role.PROPOSAL))
    block = make_block(chain.height + 1, chain.head.block_hash, kp.node_id, out.lot, out.proof, seed, b"")
    assert not validate_block(block, chain, PARAMS, {**public_keys, kp.node_id: kp.public_key})


def test_oversized_payload_rejected(chain, keys, public_keys):
    b = extend(chain, keys, payload=bytes(DEFAULT_BLOCK_SIZE + 1)).head
    assert not validate_block(b, chain, PARAMS, public_keys)
    assert validate_block(b, chain, PARAMS, public_keys, block_size=DEFAULT_BLOCK_SIZE + 1)


def test_unknown_proposer_rejected(chain, keys):
    b = extend(chain, keys).head
    assert not validate_block(b, chain, PARAMS, {})


def test_synthetic_payload_is_deterministic_and_sized():
    assert synthetic_payload(3, 200_000) == synthetic_payload(3, 200_000)
    assert len(synthetic_payload(3, 200_000)) == 200_000
    assert synthetic_payload(3, 64) != synthetic_payload(4, 64)


def test_validate_chain_accepts_built_chain(chain, public_keys):
    assert validate_chain(chain, PARAMS, public_keys)


def test_chain_must_start_at_genesis(chain, public_keys):
    assert not validate_chain(Chain(chain.blocks[1:]), PARAMS, public_keys)


def test_every_byte_mutation_invalidates_chain(chain, public_keys):
    data = encode_chain(chain)
    for i in range(4, len(data)):
        mutated = data[:i] + bytes([data[i] ^ 0x01]) + data[i + 1 :]
        try:
            candidate = decode_chain(mutated)
        except DecodeError:
            continue
        assert not validate_chain(candidate, PARAMS, public_keys), f"byte {i} slipped through"


def test_try_adopt_equal_chain_keeps_local(chain, public_keys):
    assert try_adopt(chain, Chain(chain.blocks), PARAMS, public_keys) is chain


def test_try_adopt_longer_valid(chain, keys, public_keys):
    longer = extend(chain, keys)
    assert try_adopt(chain, longer, PARAMS, public_keys) is longer


def test_try_adopt_shorter_keeps_local(chain, public_keys):
    assert try_adopt(chain, Chain(chain.blocks[:2]), PARAMS, public_keys) is chain


def test_try_adopt_rejects_corrupted_mid_chain(chain, keys, public_keys):
    longer = extend(extend(chain, keys), keys)
    mid = longer.blocks[2]
    bad = make_block(mid.height, mid.parent_hash, mid.proposer_id, mid.proposer_lot, mid.proposer_proof, mid.seed, b"corrupt")
    corrupted = Chain(longer.blocks[:2] + (bad,) + longer.blocks[3:])
    assert try_adopt(chain, corrupted, PARAMS, public_keys) is chain


def test_try_adopt_fork_longer(chain, keys, public_keys):
    fork = build_chain(5, keys, salt=b"fork")
    assert fork.hash_at(1) != chain.hash_at(1)
    assert try_adopt(chain, fork, PARAMS, public_keys) is fork


def test_dump_and_load_round_trip(chain, tmp_path):
    path = tmp_path / "chain.bin"
    dump_chain(chain, path)
    assert path.read_bytes() == encode_chain(chain)
    assert load_chain(path).blocks == chain.blocks


def test_chain_helpers(chain):
    assert chain.height == 3 and len(chain) == 4
    assert chain.hash_at(0) == genesis().block_hash
    assert chain.hash_at(9) is None and chain.hash_at(-1) is None
    assert chain.digest == sha256(encode_chain(chain))
