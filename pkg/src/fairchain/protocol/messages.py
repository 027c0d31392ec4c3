"""Protocol messages and their canonical wire encoding.

Envelope, integers big-endian::

    kind:u8 | round:u64 | sender_id:32 | u32 len | body | u32 len | auth

``auth`` is an Ed25519 signature by the sender over
``kind:u8 | round:u64 | sha256(body)``. A message's digest, used for dedup
and in event logs, is ``sha256(kind | round | sha256(body) | sender_id | auth)``.

Bodies:

    ProposalAnnounce  block_hash:32 | lot:u256 | u32 len | proof
    BlockBody         <block encoding>
    Vote              voted_hash:32 | voted_lot:u256 | voter_lot:u256 | u32 len | voter_proof
    SyncRequest       height:u64 | nonce:u64
    SyncResponse      <chain encoding>
"""

from __future__ import annotations

import enum
import struct
from collections.abc import Mapping
from dataclasses import dataclass
from functools import cached_property
from typing import Union

from ..crypto import HASH_SIZE, sha256, sign, verify_signature
from ..ledger import Block, Chain, DecodeError, _Reader, decode_block, decode_chain
from ..vrf import LOT_BYTES, KeyPair

_U32 = struct.Struct(">I")
_U64 = struct.Struct(">Q")


class MessageKind(enum.IntEnum):
    PROPOSAL_ANNOUNCE = 1
    BLOCK_BODY = 2
    VOTE = 3
    SYNC_REQUEST = 4
    SYNC_RESPONSE = 5


GOSSIP_KINDS = frozenset({MessageKind.PROPOSAL_ANNOUNCE, MessageKind.BLOCK_BODY, MessageKind.VOTE})


@dataclass(frozen=True)
class ProposalAnnounce:
    block_hash: bytes
    lot: int
    proof: bytes


@dataclass(frozen=True)
class Vote:
    voted_block_hash: bytes
    voted_proposer_lot: int
    voter_lot: int
    voter_proof: bytes


@dataclass(frozen=True)
class SyncRequest:
    height: int
    nonce: int = 0  # distinguishes repeated requests from a stuck node


Body = Union[ProposalAnnounce, Block, Vote, SyncRequest, Chain]

_BODY_TYPES = {
    MessageKind.PROPOSAL_ANNOUNCE: ProposalAnnounce,
    MessageKind.BLOCK_BODY: Block,
    MessageKind.VOTE: Vote,
    MessageKind.SYNC_REQUEST: SyncRequest,
    MessageKind.SYNC_RESPONSE: Chain,
}


def _lot(value: int) -> bytes:
    return value.to_bytes(LOT_BYTES, "big")


def encode_body(kind: MessageKind, body: Body) -> bytes:
    if not isinstance(body, _BODY_TYPES[kind]):
        raise TypeError(f"{kind.name} body must be {_BODY_TYPES[kind].__name__}")
    if kind is MessageKind.PROPOSAL_ANNOUNCE:
        return body.block_hash + _lot(body.lot) + _U32.pack(len(body.proof)) + body.proof
    if kind is MessageKind.BLOCK_BODY:
        return body.encode()
    if kind is MessageKind.VOTE:
        return (
            body.voted_block_hash
            + _lot(body.voted_proposer_lot)
            + _lot(body.voter_lot)
            + _U32.pack(len(body.voter_proof))
            + body.voter_proof
        )
    if kind is MessageKind.SYNC_REQUEST:
        return _U64.pack(body.height) + _U64.pack(body.nonce)
    return body.encoded


def decode_body(kind: MessageKind, data: bytes) -> Body:
    if kind is MessageKind.BLOCK_BODY:
        return decode_block(data)
    if kind is MessageKind.SYNC_RESPONSE:
        return decode_chain(data)
    r = _Reader(data)
    if kind is MessageKind.PROPOSAL_ANNOUNCE:
        body: Body = ProposalAnnounce(r.take(HASH_SIZE), int.from_bytes(r.take(LOT_BYTES), "big"), r.prefixed())
    elif kind is MessageKind.VOTE:
        body = Vote(
            r.take(HASH_SIZE),
            int.from_bytes(r.take(LOT_BYTES), "big"),
            int.from_bytes(r.take(LOT_BYTES), "big"),
            r.prefixed(),
        )
    else:
        body = SyncRequest(r.u64(), r.u64())
    r.done()
    return body


@dataclass(frozen=True, eq=False)
class Message:
    kind: MessageKind
    round: int
    sender_id: bytes
    body: Body
    auth: bytes

    @cached_property
    def body_bytes(self) -> bytes:
        return encode_body(self.kind, self.body)

    @cached_property
    def body_hash(self) -> bytes:
        if "body_bytes" not in self.__dict__ and isinstance(self.body, Chain):
            # Chains are resent often; their hash is cached on the chain.
            return self.body.digest
        return sha256(self.body_bytes)

    @cached_property
    def signed_bytes(self) -> bytes:
        return signed_payload(self.kind, self.round, self.body_hash)

    @cached_property
    def wire(self) -> bytes:
        body = self.body_bytes
        return b"".join(
            (
                bytes((self.kind,)),
                _U64.pack(self.round),
                self.sender_id,
                _U32.pack(len(body)),
                body,
                _U32.pack(len(self.auth)),
                self.auth,
            )
        )

    @cached_property
    def digest(self) -> bytes:
        # Commits to every wire field without rehashing a large body.
        return sha256(self.signed_bytes, self.sender_id, self.auth)

    def encode(self) -> bytes:
        return self.wire

    def verify_auth(self, public_keys: Mapping[bytes, bytes]) -> bool:
        public_key = public_keys.get(self.sender_id)
        if public_key is None:
            return False
        return verify_signature(public_key, self.signed_bytes, self.auth)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Message):
            return NotImplemented
        return self.digest == other.digest

    def __hash__(self) -> int:
        return hash(self.digest)

    def __repr__(self) -> str:
        return f"Message({self.kind.name}, round={self.round}, sender={self.sender_id.hex()[:8]})"


def signed_payload(kind: MessageKind, round_number: int, body_hash: bytes) -> bytes:
    # Hash-then-sign keeps signing cost flat for 200 kB blocks and whole chains.
    return bytes((kind,)) + _U64.pack(round_number) + body_hash


def make_message(kind: MessageKind, round_number: int, keypair: KeyPair, body: Body) -> Message:
    unsigned = Message(kind, round_number, keypair.node_id, body, b"")
    msg = Message(kind, round_number, keypair.node_id, body, sign(keypair.secret_key, unsigned.signed_bytes))
    msg.__dict__["body_hash"] = unsigned.body_hash
    return msg


def decode_message(data: bytes) -> Message:
    r = _Reader(data)
    kind_byte = r.take(1)[0]
    try:
        kind = MessageKind(kind_byte)
    except ValueError:
        raise DecodeError(f"unknown message kind {kind_byte}") from None
    round_number = r.u64()
    sender_id = r.take(HASH_SIZE)
    body_bytes = r.prefixed()
    auth = r.prefixed()
    r.done()
    msg = Message(kind, round_number, sender_id, decode_body(kind, body_bytes), auth)
    # Keep the received bytes: re-encoding must not launder a non-canonical body.
    msg.__dict__["body_bytes"] = body_bytes
    return msg
