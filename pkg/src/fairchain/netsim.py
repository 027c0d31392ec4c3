"""Deterministic discrete-event network with push gossip and adversaries.

All randomness (neighbor choice, latency, probabilistic drops) comes from
one ``random.Random`` consumed in event order, so a (seed, config) pair
always replays the same log.
"""

from __future__ import annotations

import enum
import heapq
import random
from collections.abc import Sequence
from dataclasses import dataclass, field
from typing import NamedTuple

from .eventlog import EventLog
from .protocol.messages import GOSSIP_KINDS, Message, MessageKind
from .protocol.node import Node, Outbound, Verdict

_DELIVER = 0
_TIMER = 1


@dataclass(frozen=True)
class Topology:
    fanout: int = 5
    latency_min_ms: int = 50
    latency_max_ms: int = 500
    static_overlay: bool = False

    def __post_init__(self) -> None:
        if self.fanout <= 0:
            raise ValueError("fanout must be positive")
        if not 0 <= self.latency_min_ms <= self.latency_max_ms:
            raise ValueError("latency bounds must satisfy 0 <= min <= max")


class Behavior(enum.Enum):
    WITHHOLD_BODY = "withhold_body"
    SELECTIVE_FORWARD = "selective_forward"
    STALE_VOTING = "stale_voting"


class Direction(enum.Enum):
    INBOUND = "inbound"
    OUTBOUND = "outbound"


class Action(enum.Enum):
    FORWARD = "forward"
    DROP = "drop"
    WITHHOLD = "withhold"


ALL_BEHAVIORS = frozenset(Behavior)
# Relayed traffic a selective forwarder drops by default.
DEFAULT_DROP_KINDS = frozenset({MessageKind.PROPOSAL_ANNOUNCE, MessageKind.VOTE})


@dataclass(frozen=True)
class AdversarySpec:
    malicious_ids: frozenset[bytes] = frozenset()
    behaviors: frozenset[Behavior] = ALL_BEHAVIORS
    drop_probability: float = 1.0
    drop_kinds: frozenset[MessageKind] = DEFAULT_DROP_KINDS

    def __post_init__(self) -> None:
        if not 0.0 <= self.drop_probability <= 1.0:
            raise ValueError("drop_probability must be in [0, 1]")
        if not self.drop_kinds <= GOSSIP_KINDS:
            raise ValueError("drop_kinds must be gossip message kinds")


class SimEvent(NamedTuple):
    at: int
    seq: int
    kind: int
    node: int
    payload: object
    sender: int = -1


def apply_adversary(
    node: bytes, msg: Message, direction: Direction, spec: AdversarySpec, rng: random.Random
) -> Action:
    """Decide what a malicious node does with a message crossing its boundary."""
    if node not in spec.malicious_ids:
        return Action.FORWARD
    behaviors = spec.behaviors
    kind = msg.kind
    if direction is Direction.INBOUND:
        if kind is MessageKind.SYNC_REQUEST and Behavior.STALE_VOTING in behaviors:
            return Action.DROP
        return Action.FORWARD
    own = msg.sender_id == node
    if own and kind is MessageKind.BLOCK_BODY and Behavior.WITHHOLD_BODY in behaviors:
        return Action.WITHHOLD
    if not own and kind in spec.drop_kinds and Behavior.SELECTIVE_FORWARD in behaviors:
        p = spec.drop_probability
        if p >= 1.0 or (p > 0.0 and rng.random() < p):
            return Action.DROP
    if kind is MessageKind.SYNC_RESPONSE and Behavior.STALE_VOTING in behaviors:
        return Action.DROP
    return Action.FORWARD


class Simulation:
    def __init__(
        self,
        nodes: Sequence[Node],
        topology: Topology | None = None,
        adversary: AdversarySpec | None = None,
        rng_seed: int = 0,
    ) -> None:
        self.nodes = list(nodes)
        self.topology = topology or Topology()
        self.adversary = adversary or AdversarySpec()
        self.rng = random.Random(rng_seed)
        self.index = {node.node_id: i for i, node in enumerate(self.nodes)}
        self.labels = [node.node_id.hex()[:16] for node in self.nodes]
        self.malicious = [node.node_id in self.adversary.malicious_ids for node in self.nodes]
        self.seen: list[set[bytes]] = [set() for _ in self.nodes]
        self.log = EventLog()
        self.now = 0
        self.started = False
        self.deliveries = 0
        self._queue: list[SimEvent] = []
        self._seq = 0

        n = len(self.nodes)
        self.fanout = min(self.topology.fanout, max(n - 1, 0))
        self._others = [[j for j in range(n) if j != i] for i in range(n)]
        if self.topology.static_overlay:
            self._overlay = [self.rng.sample(self._others[i], self.fanout) for i in range(n)]
        else:
            self._overlay = None

    # -- scheduling -----------------------------------------------------------

    def _push(self, at: int, kind: int, node: int, payload: object, sender: int = -1) -> SimEvent:
        ev = SimEvent(at, self._seq, kind, node, payload, sender)
        self._seq += 1
        heapq.heappush(self._queue, ev)
        return ev

    def _neighbors(self, i: int) -> list[int]:
        if self._overlay is not None:
            return self._overlay[i]
        return self.rng.sample(self._others[i], self.fanout)

    def _latency(self) -> int:
        lo, hi = self.topology.latency_min_ms, self.topology.latency_max_ms
        return lo + int(self.rng.random() * (hi - lo + 1))

    def gossip(self, origin: int, msg: Message, now: int) -> list[SimEvent]:
        """Push ``msg`` from ``origin`` to ``fanout`` random neighbors."""
        self.seen[origin].add(msg.digest)
        return [self._push(now + self._latency(), _DELIVER, j, msg, origin) for j in self._neighbors(origin)]

    def _send_direct(self, origin: int, targets: Sequence[int], msg: Message, now: int) -> None:
        for j in targets:
            self._push(now + self._latency(), _DELIVER, j, msg, origin)

    # -- node I/O ---------------------------------------------------------------

    def _record(self, i: int, kind: str, round_number: int, message_kind: str = "-", digest: str = "-") -> None:
        self.log.append(self.now, kind, self.labels[i], round_number, message_kind, digest)

    def _drain(self, i: int) -> None:
        node = self.nodes[i]
        if node.armed:
            for name, at in node.armed:
                self._push(at, _TIMER, i, name)
            node.armed.clear()
        if node.notes:
            for kind, round_number, message_kind, digest in node.notes:
                self._record(i, kind, round_number, message_kind, digest)
            node.notes.clear()

    def _emit(self, i: int, msg: Message, to: bytes | None = None) -> None:
        own = msg.sender_id == self.nodes[i].node_id
        if self.malicious[i]:
            action = apply_adversary(self.nodes[i].node_id, msg, Direction.OUTBOUND, self.adversary, self.rng)
            if action is not Action.FORWARD:
                if own:
                    self._record(i, action.name, msg.round, msg.kind.name, msg.digest.hex())
                return
        if own:
            self._record(i, "SEND", msg.round, msg.kind.name, msg.digest.hex())
        if msg.kind in GOSSIP_KINDS:
            self.gossip(i, msg, self.now)
        elif msg.kind is MessageKind.SYNC_REQUEST:
            self._send_direct(i, self._neighbors(i), msg, self.now)
        elif to is not None and to in self.index:
            self._send_direct(i, [self.index[to]], msg, self.now)

    def _emit_all(self, i: int, out: list[Outbound]) -> None:
        for ob in out:
            self._emit(i, ob.message, ob.to)
        self._drain(i)

    def _deliver(self, i: int, msg: Message) -> None:
        digest = msg.digest
        seen = self.seen[i]
        if digest in seen:
            return
        seen.add(digest)
        self.deliveries += 1
        if self.malicious[i]:
            action = apply_adversary(self.nodes[i].node_id, msg, Direction.INBOUND, self.adversary, self.rng)
            if action is not Action.FORWARD:
                return
        verdict, out = self.nodes[i].on_message(msg, self.now)
        self._record(i, verdict.name, msg.round, msg.kind.name, digest.hex())
        if verdict.forwardable and msg.kind in GOSSIP_KINDS:
            self._emit(i, msg)
        self._emit_all(i, out)

    # -- main loop ---------------------------------------------------------------

    def start(self) -> None:
        self.started = True
        for i in range(len(self.nodes)):
            self._record(i, "NODE", 0, "malicious" if self.malicious[i] else "honest")
        for i, node in enumerate(self.nodes):
            self._emit_all(i, node.start_round(0))

    def run(self, until_ms: int) -> EventLog:
        """Process every event at or before ``until_ms``; a zero horizon does nothing."""
        if until_ms <= 0:
            return self.log
        if not self.started:
            self.start()
        queue = self._queue
        while queue and queue[0].at <= until_ms:
            ev = heapq.heappop(queue)
            self.now = ev.at
            if ev.kind == _DELIVER:
                self._deliver(ev.node, ev.payload)
            else:
                self._emit_all(ev.node, self.nodes[ev.node].on_timer(ev.payload, ev.at))
        self.now = max(self.now, until_ms)
        return self.log
