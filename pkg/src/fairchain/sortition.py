"""Cryptographic sortition: self-selection for proposing or voting.

A node feeds ``seed || role`` to its VRF. It is a proposer when the lot
clears the proposal threshold, and a voter when its reputation clears the
reputation gate *and* the lot clears the vote threshold. Peers re-run the
same tests on the claimed (lot, proof).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

from .vrf import MAX_LOT, VrfOutput, evaluate, verify


class Role(enum.Enum):
    PROPOSAL = b"ROLE:PROPOSAL"
    VOTE = b"ROLE:VOTE"

    @property
    def tag(self) -> bytes:
        return self.value


def _check_fraction(name: str, value: float) -> None:
    if not (0.0 <= value <= 1.0) or math.isnan(value):
        raise ValueError(f"{name} must be in [0, 1], got {value!r}")


@dataclass(frozen=True)
class SortitionParams:
    threshold_proposal: float = 0.9
    threshold_vote: float = 1 - 11 / 15
    threshold_reputation: float = 0.8

    def __post_init__(self) -> None:
        _check_fraction("threshold_proposal", self.threshold_proposal)
        _check_fraction("threshold_vote", self.threshold_vote)
        _check_fraction("threshold_reputation", self.threshold_reputation)


@dataclass(frozen=True)
class SortitionOutcome:
    selected: bool
    lot: int | None = None
    proof: bytes | None = None


@lru_cache(maxsize=256)
def lot_threshold(fraction: float) -> int:
    """Smallest winning lot for a threshold fraction.

    ``floor(fraction * (MAX_LOT + 1))`` computed exactly from the binary value
    of ``fraction``, clamped to ``MAX_LOT``. Proposer and verifier share this
    rule so they never disagree on a boundary lot.
    """
    _check_fraction("threshold", fraction)
    return min(math.floor(Fraction(fraction) * (MAX_LOT + 1)), MAX_LOT)


def vrf_input(seed: bytes, role: Role) -> bytes:
    return seed + role.tag


def _passes(role: Role, lot: int, node_reputation: float, params: SortitionParams) -> bool:
    if role is Role.PROPOSAL:
        return lot >= lot_threshold(params.threshold_proposal)
    return (
        node_reputation >= params.threshold_reputation
        and lot >= lot_threshold(params.threshold_vote)
    )


def sortition(
    secret_key: bytes,
    role: Role,
    seed: bytes,
    node_reputation: float,
    params: SortitionParams,
) -> SortitionOutcome:
    out = evaluate(secret_key, vrf_input(seed, role))
    if _passes(role, out.lot, node_reputation, params):
        return SortitionOutcome(True, out.lot, out.proof)
    return SortitionOutcome(False)


def verify_sortition(
    public_key: bytes,
    role: Role,
    seed: bytes,
    lot: int,
    proof: bytes,
    node_reputation: float,
    params: SortitionParams,
) -> bool:
    try:
        if not verify(public_key, vrf_input(seed, role), VrfOutput(lot, proof)):
            return False
    except TypeError:
        return False
    return _passes(role, lot, node_reputation, params)


def calibrate_vote_threshold(eligible_high_reputation_count: int, target_committee_size: int) -> float:
    """Vote threshold giving ``target_committee_size`` voters in expectation."""
    if eligible_high_reputation_count <= 0 or target_committee_size <= 0:
        raise ValueError("counts must be positive")
    if target_committee_size > eligible_high_reputation_count:
        raise ValueError(
            f"committee of {target_committee_size} needs at least that many eligible "
            f"nodes, only {eligible_high_reputation_count} available"
        )
    return 1 - target_committee_size / eligible_high_reputation_count
