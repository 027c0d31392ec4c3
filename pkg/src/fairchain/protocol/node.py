"""Per-node consensus state machine.

A round runs: sync check -> proposal phase -> voting phase -> finalize. The
node is driven by ``on_message`` and ``on_timer`` and never blocks; every
call returns the messages it wants sent. Timers it wants armed are appended
to ``armed`` and notable events to ``notes`` for the driver to drain.
"""

from __future__ import annotations

import enum
from collections.abc import Mapping
from dataclasses import dataclass, field

from ..crypto import sha256
from ..ledger import (
    DEFAULT_BLOCK_SIZE,
    Block,
    Chain,
    make_block,
    synthetic_payload,
    try_adopt,
    validate_block,
)
from ..reputation import ReputationTable, UnknownNodeError
from ..sortition import Role, SortitionOutcome, SortitionParams, sortition, verify_sortition
from ..vrf import LOT_BYTES, KeyPair
from .messages import Message, MessageKind, ProposalAnnounce, SyncRequest, Vote, make_message

FUTURE_ROUND_WINDOW = 4
FUTURE_BUFFER_LIMIT = 512


class Phase(enum.Enum):
    SYNCING = "Syncing"
    PROPOSING = "Proposing"
    VOTING = "Voting"
    FINALIZING = "Finalizing"


class Verdict(enum.Enum):
    ACCEPTED = "accept"
    BUFFERED = "buffer"
    DROPPED = "drop"

    @property
    def forwardable(self) -> bool:
        return self is not Verdict.DROPPED


@dataclass(frozen=True)
class ProtocolParams:
    proposal_timeout_ms: int = 12_000
    vote_timeout_ms: int = 8_000
    sortition: SortitionParams = field(default_factory=SortitionParams)
    expected_committee_size: int = 11
    early_advance: bool = True
    block_size: int = DEFAULT_BLOCK_SIZE
    payload_size: int = DEFAULT_BLOCK_SIZE
    # A voter still missing the top proposal's body this far into the voting
    # phase votes for the best proposal whose body it does hold.
    vote_fallback_ms: int = 4_000

    def __post_init__(self) -> None:
        if self.proposal_timeout_ms <= 0 or self.vote_timeout_ms <= 0:
            raise ValueError("phase timeouts must be positive")
        if self.expected_committee_size <= 0:
            raise ValueError("expected_committee_size must be positive")
        if not 0 <= self.payload_size <= self.block_size:
            raise ValueError("payload_size must be within block_size")
        if not 0 < self.vote_fallback_ms <= self.vote_timeout_ms:
            raise ValueError("vote_fallback_ms must fall inside the voting phase")

    @property
    def quorum(self) -> int:
        return self.expected_committee_size // 2 + 1

    @property
    def round_period_ms(self) -> int:
        return self.proposal_timeout_ms + self.vote_timeout_ms


@dataclass(frozen=True)
class Outbound:
    """A message to send. ``to=None`` means gossip (or neighbors, for sync requests)."""

    message: Message
    to: bytes | None = None


@dataclass
class Proposal:
    lot: int
    proof: bytes
    sender: bytes
    block: Block | None = None


def next_seed(head: Block, round_number: int) -> bytes:
    """Public seed for ``round_number`` on top of ``head``.

    Hashes the head's proposer lot (the genesis seed for an empty chain) with
    the round number. Empty rounds still move the seed because the round
    number moves, and a node that just synced recomputes it from its new head
    alone.
    """
    if round_number < 1:
        raise ValueError("round must be >= 1")
    if head.height == 0:
        base = head.seed
    else:
        base = head.proposer_lot.to_bytes(LOT_BYTES, "big")
    return sha256(base, round_number.to_bytes(8, "big"))


def _rank(item: tuple[bytes, Proposal]) -> tuple[int, bytes]:
    # Highest lot first; exact ties go to the smaller block hash.
    block_hash, proposal = item
    return (-proposal.lot, block_hash)


class Node:
    def __init__(
        self,
        keypair: KeyPair,
        public_keys: Mapping[bytes, bytes],
        reputation: ReputationTable,
        params: ProtocolParams | None = None,
    ) -> None:
        self.keypair = keypair
        self.node_id = keypair.node_id
        self.public_keys = public_keys
        self.reputation = reputation
        self.params = params or ProtocolParams()
        self.my_reputation = reputation.get(self.node_id)

        self.chain = Chain()
        # Heights up to here are final; the head above it is still pending.
        self.final_height = 0
        self.round = 1
        self.seed = next_seed(self.chain.head, self.round)
        self.phase = Phase.PROPOSING
        self.max_round_seen = 0
        self.max_height_seen = 0
        self.missed_commit = False
        # An empty round may hide a commit elsewhere; ask around next round.
        self.probe = False
        self.sync_requests = 0
        self.future: dict[int, list[Message]] = {}
        # Every voter whose vote this node ever counted, across all rounds.
        self.counted_voters: set[bytes] = set()

        self.timers: dict[str, int] = {}
        self.armed: list[tuple[str, int]] = []
        self.notes: list[tuple[str, int, str, str]] = []
        self._reset_round()

    def __repr__(self) -> str:
        return f"Node({self.node_id.hex()[:8]}, round={self.round}, phase={self.phase.value})"

    # -- helpers ------------------------------------------------------------

    def _reset_round(self) -> None:
        self.proposals: dict[bytes, Proposal] = {}
        self.proposers: dict[bytes, bytes] = {}
        self.votes: dict[bytes, dict[bytes, int]] = {}
        self.voters: set[bytes] = set()
        self.candidate: Block | None = None
        self.ticket: SortitionOutcome | None = None
        self.has_voted = False
        self.stash: list[Message] = []

    def _arm(self, name: str, at: int) -> None:
        self.timers[name] = at
        self.armed.append((name, at))

    def _note(self, kind: str, round_number: int, message_kind: str = "-", digest: bytes = b"") -> None:
        self.notes.append((kind, round_number, message_kind, digest.hex() if digest else "-"))

    def _send(self, kind: MessageKind, body, to: bytes | None = None) -> Outbound:
        return Outbound(make_message(kind, self.round, self.keypair, body), to)

    def best_proposal(self, with_body: bool = False) -> tuple[bytes, Proposal] | None:
        items = [kv for kv in self.proposals.items() if not with_body or kv[1].block is not None]
        if not items:
            return None
        return min(items, key=_rank)

    def quorum_block(self) -> Block | None:
        ready = [
            (h, self.proposals[h])
            for h, voters in self.votes.items()
            if len(voters) >= self.params.quorum and h in self.proposals and self.proposals[h].block is not None
        ]
        if not ready:
            return None
        return min(ready, key=_rank)[1].block

    # -- round lifecycle ----------------------------------------------------

    def is_behind(self) -> bool:
        """Whether anything seen so far shows the network ahead of this node."""
        return (
            self.max_round_seen > self.round
            or self.max_height_seen > self.chain.height + 1
            or self.missed_commit
        )

    def start_round(self, now: int) -> list[Outbound]:
        self._reset_round()
        self.timers.clear()
        self._arm("proposal", now + self.params.proposal_timeout_ms)
        self._note("ROUND_START", self.round)
        if self.is_behind():
            self.missed_commit = False
            self.probe = False
            self.phase = Phase.SYNCING
            self.sync_requests += 1
            return [self._send(MessageKind.SYNC_REQUEST, SyncRequest(self.chain.height, self.sync_requests))]

        self.phase = Phase.PROPOSING
        out: list[Outbound] = []
        if self.probe:
            self.probe = False
            self.sync_requests += 1
            out.append(self._send(MessageKind.SYNC_REQUEST, SyncRequest(self.chain.height, self.sync_requests)))
        ticket = sortition(
            self.keypair.secret_key, Role.PROPOSAL, self.seed, self.my_reputation, self.params.sortition
        )
        if ticket.selected:
            head = self.chain.head
            block = make_block(
                head.height + 1,
                head.block_hash,
                self.node_id,
                ticket.lot,
                ticket.proof,
                self.seed,
                synthetic_payload(self.round, self.params.payload_size),
            )
            self.candidate = block
            self.proposals[block.block_hash] = Proposal(ticket.lot, ticket.proof, self.node_id, block)
            self.proposers[self.node_id] = block.block_hash
            out.append(
                self._send(MessageKind.PROPOSAL_ANNOUNCE, ProposalAnnounce(block.block_hash, ticket.lot, ticket.proof))
            )
        out += self._replay_future(now)
        return out

    def end_proposal_phase(self, now: int) -> list[Outbound]:
        self._arm("vote", now + self.params.vote_timeout_ms)
        self._arm("vote_fallback", now + self.params.vote_fallback_ms)
        if self.phase is Phase.SYNCING:
            return []
        out: list[Outbound] = []
        self.phase = Phase.VOTING
        best = self.best_proposal()
        if self.candidate is not None and best is not None and best[0] == self.candidate.block_hash:
            out.append(self._send(MessageKind.BLOCK_BODY, self.candidate))
        self._draw_vote_ticket()
        out += self._maybe_vote(now, fallback=False)
        return out

    def _draw_vote_ticket(self) -> None:
        self.ticket = sortition(
            self.keypair.secret_key, Role.VOTE, self.seed, self.my_reputation, self.params.sortition
        )

    def _maybe_vote(self, now: int, fallback: bool) -> list[Outbound]:
        if self.phase is not Phase.VOTING or self.has_voted or not (self.ticket and self.ticket.selected):
            return []
        choice = self.best_proposal()
        if choice is None:
            return []
        if choice[1].block is None:
            if not fallback:
                return []
            choice = self.best_proposal(with_body=True)
            if choice is None:
                return []
        block_hash, proposal = choice
        self.has_voted = True
        self.voters.add(self.node_id)
        self.counted_voters.add(self.node_id)
        self.votes.setdefault(block_hash, {})[self.node_id] = self.ticket.lot
        out = [
            self._send(
                MessageKind.VOTE, Vote(block_hash, proposal.lot, self.ticket.lot, self.ticket.proof)
            )
        ]
        return out + self._maybe_early_finish(now)

    def _maybe_early_finish(self, now: int) -> list[Outbound]:
        if self.params.early_advance and self.phase is Phase.VOTING and self.quorum_block() is not None:
            return self._finish_round(now)
        return []

    def finalize_round(self) -> Block | None:
        self.phase = Phase.FINALIZING
        winner = self.quorum_block()
        if winner is None:
            self._note("FINALIZE", self.round)
            # A quorum for a body we never validated means the others moved on.
            self.missed_commit = any(len(v) >= self.params.quorum for v in self.votes.values())
            self.probe = True
        else:
            self._note("FINALIZE", self.round, "Block", winner.block_hash)
            self.chain = self.chain.append(winner)
            self._finalize_below_head("COMMIT")
        self.round += 1
        self.seed = next_seed(self.chain.head, self.round)
        return winner

    def _finalize_below_head(self, kind: str) -> None:
        # A block becomes final once a quorum has certified a child on it.
        for height in range(self.final_height + 1, self.chain.height):
            block = self.chain.blocks[height]
            self._note(kind, height, "Block", block.block_hash)
        self.final_height = max(self.final_height, self.chain.height - 1)

    def _finish_round(self, now: int) -> list[Outbound]:
        self.finalize_round()
        return self.start_round(now)

    def on_timer(self, name: str, now: int) -> list[Outbound]:
        if self.timers.get(name) != now:
            return []
        del self.timers[name]
        if name == "proposal":
            return self.end_proposal_phase(now)
        if name == "vote_fallback":
            return self._maybe_vote(now, fallback=True)
        if name == "vote":
            return self._finish_round(now)
        return []

    # -- message handling -------------------------------------------------

    def on_message(self, msg: Message, now: int) -> tuple[Verdict, list[Outbound]]:
        if not msg.verify_auth(self.public_keys):
            return Verdict.DROPPED, []
        kind = msg.kind
        if kind is MessageKind.SYNC_REQUEST:
            return Verdict.ACCEPTED, self.on_sync_request(msg)
        if kind is MessageKind.SYNC_RESPONSE:
            return self.on_sync_response(msg, now)
        if msg.round < self.round:
            return Verdict.DROPPED, []
        if msg.kind is MessageKind.BLOCK_BODY and msg.body.height > self.max_height_seen:
            self.max_height_seen = msg.body.height
        if msg.round > self.round:
            self.max_round_seen = max(self.max_round_seen, msg.round)
            if msg.round <= self.round + FUTURE_ROUND_WINDOW:
                pending = self.future.setdefault(msg.round, [])
                if len(pending) < FUTURE_BUFFER_LIMIT:
                    pending.append(msg)
            return Verdict.BUFFERED, []
        return self._handle_current(msg, now)

    def _handle_current(self, msg: Message, now: int) -> tuple[Verdict, list[Outbound]]:
        if msg.kind is MessageKind.PROPOSAL_ANNOUNCE:
            verdict, out = self.on_proposal_announce(msg), []
        elif msg.kind is MessageKind.BLOCK_BODY:
            verdict, out = self.on_block_body(msg, now)
        elif msg.kind is MessageKind.VOTE:
            verdict, out = self.on_vote(msg, now)
        else:
            return Verdict.DROPPED, []
        if verdict is Verdict.DROPPED and self.phase is Phase.SYNCING and len(self.stash) < FUTURE_BUFFER_LIMIT:
            # May verify once the chain (and so the seed) catches up.
            self.stash.append(msg)
        return verdict, out

    def _replay_future(self, now: int, extra: list[Message] = ()) -> list[Outbound]:
        for r in [r for r in self.future if r < self.round]:
            del self.future[r]
        out: list[Outbound] = []
        for msg in [*extra, *self.future.pop(self.round, [])]:
            if msg.round == self.round:
                out += self._handle_current(msg, now)[1]
        return out

    def on_proposal_announce(self, msg: Message) -> Verdict:
        body: ProposalAnnounce = msg.body
        if body.block_hash in self.proposals or msg.sender_id in self.proposers:
            return Verdict.DROPPED
        public_key = self.public_keys[msg.sender_id]
        if not verify_sortition(
            public_key, Role.PROPOSAL, self.seed, body.lot, body.proof, 0.0, self.params.sortition
        ):
            return Verdict.DROPPED
        self.proposals[body.block_hash] = Proposal(body.lot, body.proof, msg.sender_id)
        self.proposers[msg.sender_id] = body.block_hash
        return Verdict.ACCEPTED

    def on_block_body(self, msg: Message, now: int) -> tuple[Verdict, list[Outbound]]:
        block: Block = msg.body
        if block.proposer_id != msg.sender_id or block.seed != self.seed:
            return Verdict.DROPPED, []
        known = self.proposals.get(block.block_hash)
        if known is not None:
            if known.block is not None or (known.lot, known.proof) != (block.proposer_lot, block.proposer_proof):
                return Verdict.DROPPED, []
        elif msg.sender_id in self.proposers:
            return Verdict.DROPPED, []
        if not validate_block(block, self.chain, self.params.sortition, self.public_keys, self.params.block_size):
            return Verdict.DROPPED, []
        if known is None:
            known = Proposal(block.proposer_lot, block.proposer_proof, msg.sender_id)
            self.proposals[block.block_hash] = known
            self.proposers[msg.sender_id] = block.block_hash
        known.block = block
        return Verdict.ACCEPTED, self._maybe_vote(now, fallback=False) or self._maybe_early_finish(now)

    def on_vote(self, msg: Message, now: int) -> tuple[Verdict, list[Outbound]]:
        vote: Vote = msg.body
        if msg.sender_id in self.voters:
            return Verdict.DROPPED, []
        try:
            rep = self.reputation.get(msg.sender_id)
        except UnknownNodeError:
            return Verdict.DROPPED, []
        public_key = self.public_keys[msg.sender_id]
        if not verify_sortition(
            public_key, Role.VOTE, self.seed, vote.voter_lot, vote.voter_proof, rep, self.params.sortition
        ):
            return Verdict.DROPPED, []
        self.voters.add(msg.sender_id)
        self.counted_voters.add(msg.sender_id)
        self.votes.setdefault(vote.voted_block_hash, {})[msg.sender_id] = vote.voter_lot
        return Verdict.ACCEPTED, self._maybe_early_finish(now)

    def on_sync_request(self, msg: Message) -> list[Outbound]:
        return [self._send(MessageKind.SYNC_RESPONSE, self.chain, to=msg.sender_id)]

    def on_sync_response(self, msg: Message, now: int) -> tuple[Verdict, list[Outbound]]:
        candidate: Chain = msg.body
        adopted = try_adopt(
            self.chain, candidate, self.params.sortition, self.public_keys, self.params.block_size
        )
        if adopted is self.chain:
            return Verdict.ACCEPTED, []
        if adopted.hash_at(self.final_height) != self.chain.hash_at(self.final_height):
            # Never roll back a final block; only the pending head may change.
            return Verdict.ACCEPTED, []
        self.chain = adopted
        self._finalize_below_head("ADOPT")
        self.round = max(self.round, self.max_round_seen)
        self.seed = next_seed(adopted.head, self.round)
        stashed = self.stash
        self._reset_round()
        # Rejoin the current cycle as a listener; timers keep running.
        if "proposal" in self.timers:
            self.phase = Phase.PROPOSING
        else:
            self.phase = Phase.VOTING
            self._draw_vote_ticket()
        return Verdict.ACCEPTED, self._replay_future(now, stashed)
