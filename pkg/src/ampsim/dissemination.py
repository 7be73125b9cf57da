"""Payload dissemination messages and on-demand retransmission.

Proposers best-effort-broadcast payloads to every validator. After a
decision, a validator missing an ordered payload asks all other validators
for it and retries with exponential backoff until the payload arrives; any
ordered id is held by at least one correct validator, so retrieval
eventually succeeds. Responses whose recomputed id does not match the
request are dropped.
"""

from __future__ import annotations

from dataclasses import dataclass

from .codec import encode_blob, encode_u8, encode_u64
from .types import NodeId, Payload, PayloadId, encode_payload

TAG_PAYLOAD_MSG = 0x08
TAG_RETRANSMIT_REQUEST = 0x09
TAG_RETRANSMIT_RESPONSE = 0x0A


@dataclass(frozen=True, slots=True)
class PayloadMsg:
    payload: Payload
    sender: NodeId


@dataclass(frozen=True, slots=True)
class RetransmitRequest:
    ids: tuple[PayloadId, ...]
    sender: NodeId


@dataclass(frozen=True, slots=True)
class RetransmitResponse:
    payload: Payload
    sender: NodeId


DisseminationMsg = PayloadMsg | RetransmitRequest | RetransmitResponse


def dissemination_msg_size(msg: DisseminationMsg) -> int:
    sender = encode_blob(msg.sender.encode("utf-8"))
    if isinstance(msg, PayloadMsg):
        return len(encode_u8(TAG_PAYLOAD_MSG) + sender + encode_payload(msg.payload))
    if isinstance(msg, RetransmitRequest):
        body = b"".join([encode_u8(TAG_RETRANSMIT_REQUEST), sender, encode_u64(len(msg.ids))]) + b"".join(msg.ids)
        return len(body)
    return len(encode_u8(TAG_RETRANSMIT_RESPONSE) + sender + encode_payload(msg.payload))


class Retransmitter:
    """Backoff-driven recovery of decided-but-missing payloads.

    Requests go to all other validators (never proposers: any decided id is
    attested by more than f validators, so a correct validator holds it,
    while the proposer may be long gone). Backoff starts at 2*delta and
    doubles up to a cap.
    """

    def __init__(self, delta: int, cap_factor: int = 32):
        self.initial = 2 * delta
        self.cap = cap_factor * delta
        self.outstanding: set[PayloadId] = set()
        self._delay = self.initial

    def want(self, ids) -> list[PayloadId]:
        """Register missing ids; returns the request to send now (or empty)."""
        fresh = sorted(set(ids) - self.outstanding)
        self.outstanding.update(fresh)
        return fresh

    def satisfied(self, pid: PayloadId) -> None:
        self.outstanding.discard(pid)
        if not self.outstanding:
            self._delay = self.initial

    def next_delay(self) -> int:
        d = self._delay
        self._delay = min(self._delay * 2, self.cap)
        return d
