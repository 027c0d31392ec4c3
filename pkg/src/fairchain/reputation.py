"""Static reputation table standing in for an external reputation system."""

from __future__ import annotations

from collections.abc import Mapping
from types import MappingProxyType

DEFAULT_THRESHOLD = 0.8
HIGH_REPUTATION = 0.9
DEFAULT_REPUTATION = 0.5


class UnknownNodeError(KeyError):
    """A node id with no reputation entry; never treated as score 0."""


class ReputationTable:
    """Immutable node_id -> score mapping shared by every node in a run."""

    def __init__(self, scores: Mapping[bytes, float]) -> None:
        for node, score in scores.items():
            if not 0.0 <= score <= 1.0:
                raise ValueError(f"reputation for {node.hex()[:12]} out of [0, 1]: {score}")
        self._scores = MappingProxyType(dict(scores))

    @property
    def scores(self) -> Mapping[bytes, float]:
        return self._scores

    def __contains__(self, node: object) -> bool:
        return node in self._scores

    def __len__(self) -> int:
        return len(self._scores)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ReputationTable):
            return NotImplemented
        return dict(self._scores) == dict(other._scores)

    def get(self, node: bytes) -> float:
        return get_reputation(self, node)


def get_reputation(table: ReputationTable, node: bytes) -> float:
    try:
        return table.scores[node]
    except KeyError:
        raise UnknownNodeError(node.hex()) from None


def eligible_voters(table: ReputationTable, threshold: float) -> frozenset[bytes]:
    return frozenset(node for node, score in table.scores.items() if score >= threshold)
