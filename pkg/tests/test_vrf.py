import hashlib
import os
import random

import pytest
from cryptography.hazmat.primitives.asymmetric.ed25519 import Ed25519PublicKey
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from fairchain.vrf import MAX_LOT, VrfOutput, evaluate, keygen, node_id_for, verify

GOLDEN_PK_42 = "22e3ad913650095a7d09b7447a2c37bc44a6e898f1579b8c602c200ca41669d9"
GOLDEN_LOT_42 = 0xACB5F81605009226A786459FB8C192C423A37E1388A7BA59704F7CF170626B7


@pytest.fixture(scope="module")
def kp():
    return keygen(42)


@pytest.fixture(scope="module")
def lots(kp):
    rng = random.Random(0xC0FFEE)
    return [evaluate(kp.secret_key, rng.randbytes(32)).lot for _ in range(100_000)]


def test_keygen_is_deterministic():
    assert keygen(7) == keygen(7)


def test_keygen_distinct_seeds_distinct_ids():
    assert keygen(7).node_id != keygen(8).node_id


def test_keygen_golden_public_key(kp):
    assert kp.public_key.hex() == GOLDEN_PK_42
    assert kp.node_id == hashlib.sha256(b"node-id" + kp.public_key).digest()
    assert node_id_for(kp.public_key) == kp.node_id


def test_evaluate_golden_output(kp):
    out = evaluate(kp.secret_key, b"golden")
    assert out.lot == GOLDEN_LOT_42


def test_lot_is_hash_of_a_plain_ed25519_signature(kp):
    # Independent check straight against the signature scheme.
    out = evaluate(kp.secret_key, b"some input")
    Ed25519PublicKey.from_public_bytes(kp.public_key).verify(out.proof, b"fairchain/vrf/v1" + b"some input")
    assert out.lot == int.from_bytes(hashlib.sha256(out.proof).digest(), "big")
    assert 0 <= out.lot <= MAX_LOT


def test_evaluate_is_deterministic(kp):
    assert evaluate(kp.secret_key, b"x") == evaluate(kp.secret_key, b"x")


def test_no_lot_collisions_over_ten_thousand_pairs(kp):
    rng = random.Random(11)
    for _ in range(10_000):
        x, y = rng.randbytes(16), rng.randbytes(16)
        if x == y:
            continue
        assert evaluate(kp.secret_key, x).lot != evaluate(kp.secret_key, y).lot


def test_lot_mean_is_one_half(lots):
    mean = sum(lot / MAX_LOT for lot in lots) / len(lots)
    assert abs(mean - 0.5) <= 0.005


def test_lot_buckets_pass_chi_square(lots):
    counts = [0] * 256
    for lot in lots:
        counts[lot >> 248] += 1
    assert stats.chisquare(counts).pvalue > 0.001


def test_verify_round_trip(kp):
    assert verify(kp.public_key, b"x", evaluate(kp.secret_key, b"x"))


def test_verify_rejects_other_input(kp):
    assert not verify(kp.public_key, b"x", evaluate(kp.secret_key, b"y"))


def test_verify_rejects_other_key(kp):
    other = keygen(43)
    assert not verify(other.public_key, b"x", evaluate(kp.secret_key, b"x"))


def _mutate(data: bytes, index: int) -> bytes:
    return data[:index] + bytes([data[index] ^ 0x01]) + data[index + 1 :]


def test_every_single_byte_mutation_fails(kp):
    data = os.urandom(40)
    out = evaluate(kp.secret_key, data)
    lot_bytes = out.lot.to_bytes(32, "big")
    for i in range(len(out.proof)):
        assert not verify(kp.public_key, data, VrfOutput(out.lot, _mutate(out.proof, i)))
    for i in range(32):
        lot = int.from_bytes(_mutate(lot_bytes, i), "big")
        assert not verify(kp.public_key, data, VrfOutput(lot, out.proof))
    for i in range(len(data)):
        assert not verify(kp.public_key, _mutate(data, i), out)
    for i in range(len(kp.public_key)):
        assert not verify(_mutate(kp.public_key, i), data, out)


@pytest.mark.parametrize(
    "output",
    [
        VrfOutput(0, b""),
        VrfOutput(0, b"\x00" * 63),
        VrfOutput(-1, b"\x00" * 64),
        VrfOutput(MAX_LOT + 1, b"\x00" * 64),
    ],
)
def test_malformed_outputs_return_false(kp, output):
    assert verify(kp.public_key, b"x", output) is False


def test_malformed_public_key_returns_false(kp):
    assert verify(b"short", b"x", evaluate(kp.secret_key, b"x")) is False


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(min_value=0, max_value=2**64 - 1), data=st.binary(max_size=64))
def test_round_trip_property(seed, data):
    key = keygen(seed)
    out = evaluate(key.secret_key, data)
    assert verify(key.public_key, data, out)
    assert 0 <= out.lot <= MAX_LOT
