from .messages import (
    GOSSIP_KINDS,
    Message,
    MessageKind,
    ProposalAnnounce,
    SyncRequest,
    Vote,
    decode_message,
    make_message,
)
from .node import Node, Outbound, Phase, ProtocolParams, Verdict, next_seed

__all__ = [
    "GOSSIP_KINDS",
    "Message",
    "MessageKind",
    "Node",
    "Outbound",
    "Phase",
    "ProposalAnnounce",
    "ProtocolParams",
    "SyncRequest",
    "Verdict",
    "Vote",
    "decode_message",
    "make_message",
    "next_seed",
]
