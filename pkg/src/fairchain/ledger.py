"""Blocks, chains, block validity and the longest-valid-chain rule.

Wire encoding (also used for sync responses and block dumps), all integers
big-endian::

    block  = height:u64 | parent_hash:32 | proposer_id:32 | proposer_lot:u256
             | u32 len | proposer_proof | seed:32 | u32 len | payload
             | block_hash:32
    chain  = u32 count | (u32 len | block)*

``block_hash`` is SHA-256 over every byte that precedes it.
"""

from __future__ import annotations

import hashlib
import struct
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from pathlib import Path

from .crypto import HASH_SIZE, sha256
from .sortition import Role, SortitionParams, verify_sortition
from .vrf import LOT_BYTES

DEFAULT_BLOCK_SIZE = 200_000
ZERO_HASH = bytes(HASH_SIZE)
GENESIS_SEED = sha256(b"genesis")

_U32 = struct.Struct(">I")
_U64 = struct.Struct(">Q")


class DecodeError(ValueError):
    """Raised for malformed wire bytes."""


@dataclass(frozen=True, eq=False)
class Block:
    height: int
    parent_hash: bytes
    proposer_id: bytes
    proposer_lot: int
    proposer_proof: bytes
    seed: bytes
    payload: bytes
    block_hash: bytes

    @cached_property
    def preimage(self) -> bytes:
        return b"".join(
            (
                _U64.pack(self.height),
                self.parent_hash,
                self.proposer_id,
                self.proposer_lot.to_bytes(LOT_BYTES, "big"),
                _U32.pack(len(self.proposer_proof)),
                self.proposer_proof,
                self.seed,
                _U32.pack(len(self.payload)),
                self.payload,
            )
        )

    @cached_property
    def hash_ok(self) -> bool:
        return sha256(self.preimage) == self.block_hash

    def encode(self) -> bytes:
        return self.preimage + self.block_hash

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Block):
            return NotImplemented
        return self.encode() == other.encode()

    def __hash__(self) -> int:
        return hash(self.block_hash)

    def __repr__(self) -> str:
        return f"Block(height={self.height}, hash={self.block_hash.hex()[:12]})"


def make_block(
    height: int,
    parent_hash: bytes,
    proposer_id: bytes,
    proposer_lot: int,
    proposer_proof: bytes,
    seed: bytes,
    payload: bytes,
) -> Block:
    draft = Block(height, parent_hash, proposer_id, proposer_lot, proposer_proof, seed, payload, ZERO_HASH)
    return Block(
        height, parent_hash, proposer_id, proposer_lot, proposer_proof, seed, payload, sha256(draft.preimage)
    )


@lru_cache(maxsize=1)
def genesis() -> Block:
    return make_block(0, ZERO_HASH, ZERO_HASH, 0, b"", GENESIS_SEED, b"")


@lru_cache(maxsize=8)
def synthetic_payload(round_number: int, size: int) -> bytes:
    """Deterministic filler standing in for a block's transactions."""
    return hashlib.shake_256(b"payload" + _U64.pack(round_number)).digest(size)


@dataclass(frozen=True)
class Chain:
    blocks: tuple[Block, ...] = field(default_factory=lambda: (genesis(),))

    @property
    def head(self) -> Block:
        return self.blocks[-1]

    @property
    def height(self) -> int:
        return self.head.height

    def __len__(self) -> int:
        return len(self.blocks)

    def append(self, block: Block) -> Chain:
        return Chain(self.blocks + (block,))

    @cached_property
    def encoded(self) -> bytes:
        return encode_chain(self)

    @cached_property
    def digest(self) -> bytes:
        return sha256(self.encoded)

    def hash_at(self, height: int) -> bytes | None:
        if 0 <= height < len(self.blocks):
            return self.blocks[height].block_hash
        return None


def validate_block(
    block: Block,
    chain: Chain,
    params: SortitionParams,
    public_keys: Mapping[bytes, bytes],
    block_size: int = DEFAULT_BLOCK_SIZE,
) -> bool:
    head = chain.head
    if block.parent_hash != head.block_hash or block.height != head.height + 1:
        return False
    if len(block.payload) > block_size or len(block.seed) != HASH_SIZE:
        return False
    if not block.hash_ok:
        return False
    public_key = public_keys.get(block.proposer_id)
    if public_key is None:
        return False
    # Proposer reputation plays no part in the PROPOSAL branch.
    return verify_sortition(
        public_key, Role.PROPOSAL, block.seed, block.proposer_lot, block.proposer_proof, 0.0, params
    )


def validate_chain(
    chain: Chain,
    params: SortitionParams,
    public_keys: Mapping[bytes, bytes],
    block_size: int = DEFAULT_BLOCK_SIZE,
) -> bool:
    if not chain.blocks or chain.blocks[0] != genesis():
        return False
    prefix = Chain(chain.blocks[:1])
    for block in chain.blocks[1:]:
        if not validate_block(block, prefix, params, public_keys, block_size):
            return False
        prefix = prefix.append(block)
    return True


def try_adopt(
    local: Chain,
    candidate: Chain,
    params: SortitionParams,
    public_keys: Mapping[bytes, bytes],
    block_size: int = DEFAULT_BLOCK_SIZE,
) -> Chain:
    """Longest-valid-chain rule; equal length keeps the local chain."""
    if candidate.height <= local.height:
        return local
    if not validate_chain(candidate, params, public_keys, block_size):
        return local
    return candidate


# -- encoding ---------------------------------------------------------------


class _Reader:
    def __init__(self, data: bytes) -> None:
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        end = self.pos + n
        if n < 0 or end > len(self.data):
            raise DecodeError("truncated input")
        out = self.data[self.pos : end]
        self.pos = end
        return out

    def u32(self) -> int:
        return _U32.unpack(self.take(4))[0]

    def u64(self) -> int:
        return _U64.unpack(self.take(8))[0]

    def prefixed(self) -> bytes:
        return self.take(self.u32())

    def done(self) -> None:
        if self.pos != len(self.data):
            raise DecodeError("trailing bytes")


def encode_block(block: Block) -> bytes:
    return block.encode()


def _read_block(r: _Reader) -> Block:
    height = r.u64()
    parent_hash = r.take(HASH_SIZE)
    proposer_id = r.take(HASH_SIZE)
    lot = int.from_bytes(r.take(LOT_BYTES), "big")
    proof = r.prefixed()
    seed = r.take(HASH_SIZE)
    payload = r.prefixed()
    block_hash = r.take(HASH_SIZE)
    return Block(height, parent_hash, proposer_id, lot, proof, seed, payload, block_hash)


def decode_block(data: bytes) -> Block:
    r = _Reader(data)
    block = _read_block(r)
    r.done()
    return block


def encode_chain(chain: Chain | Iterable[Block]) -> bytes:
    blocks = chain.blocks if isinstance(chain, Chain) else tuple(chain)
    parts = [_U32.pack(len(blocks))]
    for block in blocks:
        raw = block.encode()
        parts.append(_U32.pack(len(raw)))
        parts.append(raw)
    return b"".join(parts)


def decode_chain(data: bytes) -> Chain:
    r = _Reader(data)
    count = r.u32()
    blocks = tuple(decode_block(r.prefixed()) for _ in range(count))
    r.done()
    if not blocks:
        raise DecodeError("chain without genesis")
    return Chain(blocks)


def dump_chain(chain: Chain, path: str | Path) -> None:
    """Write committed blocks in the sync encoding for post-analysis."""
    Path(path).write_bytes(encode_chain(chain))


def load_chain(path: str | Path) -> Chain:
    return decode_chain(Path(path).read_bytes())
