import math
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from fairchain.crypto import sha256
from fairchain.sortition import (
    Role,
    SortitionParams,
    calibrate_vote_threshold,
    lot_threshold,
    sortition,
    verify_sortition,
    vrf_input,
)
from fairchain.vrf import MAX_LOT, evaluate, keygen

from .conftest import find_key

PARAMS = SortitionParams()
SEED = sha256(b"test seed")


def seed_for(r: int) -> bytes:
    return sha256(b"round", r.to_bytes(8, "big"))


def lot_of(kp, role=Role.PROPOSAL, seed=SEED) -> int:
    return evaluate(kp.secret_key, vrf_input(seed, role)).lot


def test_role_tags_are_fixed_and_distinct():
    assert Role.PROPOSAL.tag == b"ROLE:PROPOSAL"
    assert Role.VOTE.tag == b"ROLE:VOTE"
    assert len(Role) == 2


def test_vrf_input_is_seed_then_role():
    assert vrf_input(SEED, Role.VOTE) == SEED + b"ROLE:VOTE"


@pytest.mark.parametrize("fraction", [0.0, 0.25, 0.9, 1 - 11 / 15, 1.0])
def test_lot_threshold_exact_rule(fraction):
    expected = min(math.floor(Fraction(fraction) * 2**256), MAX_LOT)
    assert lot_threshold(fraction) == expected


def test_maximal_lot_clears_every_threshold():
    assert MAX_LOT >= lot_threshold(0.9)
    assert lot_threshold(1.0) == MAX_LOT


@pytest.mark.parametrize("bad", [-0.1, 1.5, float("nan")])
def test_params_reject_out_of_range(bad):
    with pytest.raises(ValueError):
        SortitionParams(threshold_proposal=bad)


def test_high_lot_key_is_selected_and_verifies():
    kp = find_key(lambda k: lot_of(k) >= lot_threshold(0.9))
    out = sortition(kp.secret_key, Role.PROPOSAL, SEED, 0.5, PARAMS)
    assert out.selected and out.lot == lot_of(kp)
    assert verify_sortition(kp.public_key, Role.PROPOSAL, SEED, out.lot, out.proof, 0.5, PARAMS)


def test_vote_reputation_gate():
    kp = find_key(lambda k: lot_of(k, Role.VOTE) >= lot_threshold(PARAMS.threshold_vote))
    assert not sortition(kp.secret_key, Role.VOTE, SEED, 0.5, PARAMS).selected
    assert sortition(kp.secret_key, Role.VOTE, SEED, 0.9, PARAMS).selected


def test_vote_gate_is_inclusive_at_threshold():
    kp = find_key(lambda k: lot_of(k, Role.VOTE) >= lot_threshold(PARAMS.threshold_vote))
    assert sortition(kp.secret_key, Role.VOTE, SEED, 0.8, PARAMS).selected


def test_sub_threshold_lot_fails_verification():
    kp = find_key(lambda k: lot_of(k) < lot_threshold(0.9))
    assert not sortition(kp.secret_key, Role.PROPOSAL, SEED, 0.9, PARAMS).selected
    out = evaluate(kp.secret_key, vrf_input(SEED, Role.PROPOSAL))
    assert not verify_sortition(kp.public_key, Role.PROPOSAL, SEED, out.lot, out.proof, 0.9, PARAMS)


def test_proof_from_other_seed_or_role_fails():
    kp = find_key(lambda k: lot_of(k) >= lot_threshold(0.9) and lot_of(k, Role.VOTE) >= lot_threshold(0.9))
    out = sortition(kp.secret_key, Role.PROPOSAL, SEED, 0.9, PARAMS)
    mutated = bytes([SEED[0] ^ 1]) + SEED[1:]
    assert not verify_sortition(kp.public_key, Role.PROPOSAL, mutated, out.lot, out.proof, 0.9, PARAMS)
    assert not verify_sortition(kp.public_key, Role.VOTE, SEED, out.lot, out.proof, 0.9, PARAMS)


def test_garbage_claims_return_false(keys):
    kp = keys[0]
    assert not verify_sortition(kp.public_key, Role.PROPOSAL, SEED, "not a lot", b"", 0.9, PARAMS)
    assert not verify_sortition(kp.public_key, Role.PROPOSAL, SEED, MAX_LOT, b"\x00" * 64, 0.9, PARAMS)


def test_proposal_selection_rate_ten_thousand_keys():
    selected = sum(
        sortition(keygen(500_000 + i).secret_key, Role.PROPOSAL, SEED, 0.5, PARAMS).selected
        for i in range(10_000)
    )
    assert 0.09 <= selected / 10_000 <= 0.11


def test_committee_size_mean_over_thousand_rounds():
    params = SortitionParams(threshold_vote=calibrate_vote_threshold(15, 11))
    pool = [keygen(900 + i) for i in range(15)]
    sizes = [
        sum(sortition(kp.secret_key, Role.VOTE, seed_for(r), 0.9, params).selected for kp in pool)
        for r in range(1000)
    ]
    assert 10.65 <= sum(sizes) / len(sizes) <= 11.35


def test_per_key_selection_frequencies_are_equal():
    pool = [keygen(7000 + i) for i in range(50)]
    counts = [0] * len(pool)
    for r in range(1000):
        seed = seed_for(r)
        for i, kp in enumerate(pool):
            counts[i] += sortition(kp.secret_key, Role.PROPOSAL, seed, 0.5, PARAMS).selected
    assert stats.chisquare(counts).pvalue > 0.001


@pytest.mark.parametrize(
    ("eligible", "target", "expected"),
    [(15, 11, 0.2667), (10, 10, 0.0), (100, 50, 0.5)],
)
def test_calibrate_vote_threshold(eligible, target, expected):
    assert round(calibrate_vote_threshold(eligible, target), 4) == expected


@pytest.mark.parametrize(("eligible", "target"), [(10, 11), (0, 1), (5, 0)])
def test_calibrate_rejects_impossible_committees(eligible, target):
    with pytest.raises(ValueError):
        calibrate_vote_threshold(eligible, target)


@settings(max_examples=80, deadline=None)
@given(
    key_seed=st.integers(min_value=0, max_value=2**64 - 1),
    seed=st.binary(min_size=32, max_size=32),
    role=st.sampled_from(list(Role)),
    reputation=st.floats(min_value=0.0, max_value=1.0),
    threshold=st.floats(min_value=0.0, max_value=1.0),
)
def test_selection_and_verification_agree(key_seed, seed, role, reputation, threshold):
    params = SortitionParams(threshold, threshold, 0.8)
    kp = keygen(key_seed)
    outcome = sortition(kp.secret_key, role, seed, reputation, params)
    raw = evaluate(kp.secret_key, vrf_input(seed, role))
    assert verify_sortition(kp.public_key, role, seed, raw.lot, raw.proof, reputation, params) == outcome.selected
