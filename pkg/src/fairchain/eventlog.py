"""Simulation event log and the safety/finality checks run over it.

On disk the log is tab-separated, one record per line, with a header:
``timestamp_ms  event_kind  node_id  round  message_kind  message_hash``.
A ``NODE`` record per node (``message_kind`` = honest|malicious) opens every
log so checks can tell honest nodes apart.
"""

from __future__ import annotations

import csv
from collections import defaultdict
from collections.abc import Iterable, Iterator
from pathlib import Path
from typing import NamedTuple

HEADER = ("timestamp_ms", "event_kind", "node_id", "round", "message_kind", "message_hash")
CHAIN_EVENTS = ("COMMIT", "ADOPT")


class Record(NamedTuple):
    timestamp_ms: int
    event_kind: str
    node_id: str
    round: int
    message_kind: str
    message_hash: str


class EventLog:
    def __init__(self, records: Iterable[Record] = ()) -> None:
        self.records: list[Record] = list(records)

    def append(self, *fields) -> None:
        self.records.append(Record(*fields))

    def __iter__(self) -> Iterator[Record]:
        return iter(self.records)

    def __len__(self) -> int:
        return len(self.records)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, EventLog):
            return NotImplemented
        return self.records == other.records

    def lines(self) -> Iterator[str]:
        yield "\t".join(HEADER)
        for rec in self.records:
            yield "\t".join(str(v) for v in rec)

    def write(self, path: str | Path) -> None:
        path = Path(path)
        try:
            with path.open("w", newline="") as fh:
                for line in self.lines():
                    fh.write(line + "\n")
        except OSError as exc:
            raise OSError(f"cannot write event log to {path}: {exc}") from exc

    @classmethod
    def read(cls, path: str | Path) -> EventLog:
        path = Path(path)
        with path.open(newline="") as fh:
            reader = csv.reader(fh, delimiter="\t")
            header = next(reader, None)
            if header is None or tuple(header) != HEADER:
                raise ValueError(f"{path}: not an event log (bad header)")
            records = []
            for lineno, row in enumerate(reader, start=2):
                if len(row) != len(HEADER):
                    raise ValueError(f"{path}:{lineno}: expected {len(HEADER)} fields, got {len(row)}")
                records.append(Record(int(row[0]), row[1], row[2], int(row[3]), row[4], row[5]))
        return cls(records)

    def honest_nodes(self) -> set[str]:
        return {r.node_id for r in self.records if r.event_kind == "NODE" and r.message_kind == "honest"}

    def chain_entries(self, honest_only: bool = True) -> dict[str, dict[int, list[str]]]:
        """node -> height -> block hashes recorded there, in log order."""
        honest = self.honest_nodes()
        out: dict[str, dict[int, list[str]]] = defaultdict(lambda: defaultdict(list))
        for r in self.records:
            if r.event_kind in CHAIN_EVENTS and (not honest_only or r.node_id in honest):
                hashes = out[r.node_id][r.round]
                if r.message_hash not in hashes:
                    hashes.append(r.message_hash)
        return out


def check_safety(log: EventLog) -> int:
    """Count (height, honest node pair) conflicts: two nodes holding different blocks."""
    by_height: dict[int, dict[str, frozenset[str]]] = defaultdict(dict)
    for node, heights in log.chain_entries().items():
        for height, hashes in heights.items():
            by_height[height][node] = frozenset(hashes)
    conflicts = 0
    for holders in by_height.values():
        groups: dict[frozenset[str], int] = defaultdict(int)
        for hashes in holders.values():
            groups[hashes] += 1
        keys = sorted(groups, key=sorted)
        for i, a in enumerate(keys):
            # A node that itself recorded two blocks conflicts with its group too.
            if len(a) > 1:
                conflicts += groups[a] * (groups[a] - 1) // 2
            for b in keys[i + 1 :]:
                if len(a | b) > 1:
                    conflicts += groups[a] * groups[b]
    return conflicts


def check_finality(log: EventLog) -> int:
    """Count (honest node, height) slots whose block was ever replaced."""
    return sum(
        1 for heights in log.chain_entries().values() for hashes in heights.values() if len(hashes) > 1
    )
