"""Core domain types and their canonical encodings.

All types are immutable values; operations on them are pure. Identifiers
(tx_hash, payload ids, value ids, block digests) are SHA-256 over the
canonical encoding of the identified value.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional

from .codec import (
    DIGEST_SIZE,
    DecodeError,
    Reader,
    digest,
    encode_blob,
    encode_digest,
    encode_u8,
    encode_u64,
)

Height = int
Round = int
ValidatorId = int
NodeId = str
PayloadId = bytes  # 32-byte digest
Digest = bytes

# NIL vote target: the all-zero digest (keeps votes fixed-width).
NIL = b"\x00" * DIGEST_SIZE

# Distinguished proposal value for the first post-genesis height, which has
# no prior commit certificate. A single tag byte, so it is always decodable.
EMPTY_VALUE = b"\x00"

TAG_TRANSACTION = 0x01
TAG_PAYLOAD = 0x02
TAG_EXTENSION = 0x03
TAG_PRECOMMIT = 0x04
TAG_CERTIFICATE = 0x05


@dataclass(frozen=True, slots=True)
class Transaction:
    sender: str
    nonce: int
    priority_fee: int
    body: bytes
    tx_hash: bytes = b""

    def __post_init__(self):
        if not self.tx_hash:
            object.__setattr__(self, "tx_hash", digest(encode_transaction(self)))


def encode_transaction(tx: Transaction) -> bytes:
    # tx_hash is derived from this encoding, so it is not part of it.
    return b"".join(
        [
            encode_u8(TAG_TRANSACTION),
            encode_blob(tx.sender.encode("utf-8")),
            encode_u64(tx.nonce),
            encode_u64(tx.priority_fee),
            encode_blob(tx.body),
        ]
    )


def decode_transaction(r: Reader) -> Transaction:
    if r.u8() != TAG_TRANSACTION:
        raise DecodeError("not a transaction")
    sender = r.blob().decode("utf-8")
    nonce = r.u64()
    fee = r.u64()
    body = r.blob()
    return Transaction(sender, nonce, fee, body)


def transaction_hash(tx: Transaction) -> bytes:
    return digest(encode_transaction(tx))


@dataclass(frozen=True, slots=True)
class Payload:
    proposer: NodeId
    transactions: tuple[Transaction, ...]
    created_height_hint: Height = 0


def encode_payload(p: Payload) -> bytes:
    parts = [
        encode_u8(TAG_PAYLOAD),
        encode_blob(p.proposer.encode("utf-8")),
        encode_u64(p.created_height_hint),
        encode_u64(len(p.transactions)),
    ]
    parts.extend(encode_transaction(tx) for tx in p.transactions)
    return b"".join(parts)


def decode_payload(data: bytes) -> Payload:
    r = Reader(data)
    p = read_payload(r)
    r.expect_eof()
    return p


def read_payload(r: Reader) -> Payload:
    if r.u8() != TAG_PAYLOAD:
        raise DecodeError("not a payload")
    proposer = r.blob().decode("utf-8")
    hint = r.u64()
    count = r.u64()
    txs = tuple(decode_transaction(r) for _ in range(count))
    return Payload(proposer, txs, hint)


def payload_id(p: Payload) -> PayloadId:
    return digest(encode_payload(p))


@dataclass(frozen=True, slots=True)
class VoteExtension:
    """Signed set of payload ids attached to a non-NIL precommit.

    ids are stored sorted; the signature covers (height, round, value_id,
    ids) of the enclosing precommit, see extension_signing_bytes.
    """

    ids: tuple[PayloadId, ...]
    signer: ValidatorId
    signature: bytes

    @staticmethod
    def make(ids: Iterable[PayloadId], signer: ValidatorId, signature: bytes) -> "VoteExtension":
        return VoteExtension(tuple(sorted(set(ids))), signer, signature)


def extension_signing_bytes(height: Height, round_: Round, value_id: Digest, ids: Iterable[PayloadId]) -> bytes:
    ordered = sorted(set(ids))
    parts = [
        b"AMP/EXT",
        encode_u64(height),
        encode_u64(round_),
        encode_digest(value_id),
        encode_u64(len(ordered)),
    ]
    parts.extend(encode_digest(i) for i in ordered)
    return b"".join(parts)


def encode_extension(ext: VoteExtension) -> bytes:
    parts = [
        encode_u8(TAG_EXTENSION),
        encode_u64(ext.signer),
        encode_u64(len(ext.ids)),
    ]
    parts.extend(encode_digest(i) for i in ext.ids)
    parts.append(encode_blob(ext.signature))
    return b"".join(parts)


def read_extension(r: Reader) -> VoteExtension:
    if r.u8() != TAG_EXTENSION:
        raise DecodeError("not a vote extension")
    signer = r.u64()
    count = r.u64()
    ids = tuple(bytes(r.digest()) for _ in range(count))
    sig = r.blob()
    return VoteExtension(ids, signer, sig)


@dataclass(frozen=True, slots=True)
class Precommit:
    height: Height
    round: Round
    value_id: Digest
    signer: ValidatorId
    signature: bytes
    extension: Optional[VoteExtension] = None

    def __post_init__(self):
        if (self.value_id != NIL) != (self.extension is not None):
            raise ValueError("extension present iff value_id is non-NIL")


def ids_digest(ids: Iterable[PayloadId]) -> bytes:
    """Digest binding a precommit signature to its extension's id set."""
    ordered = sorted(set(ids))
    return digest(b"".join([encode_u64(len(ordered))] + [encode_digest(i) for i in ordered]))


def precommit_signing_bytes(height: Height, round_: Round, value_id: Digest, ids: Optional[Iterable[PayloadId]]) -> bytes:
    bound = ids_digest(ids) if ids is not None else NIL
    return b"".join(
        [
            b"AMP/PRECOMMIT",
            encode_u64(height),
            encode_u64(round_),
            encode_digest(value_id),
            encode_digest(bound),
        ]
    )


def encode_precommit(pc: Precommit) -> bytes:
    parts = [
        encode_u8(TAG_PRECOMMIT),
        encode_u64(pc.height),
        encode_u64(pc.round),
        encode_digest(pc.value_id),
        encode_u64(pc.signer),
        encode_blob(pc.signature),
    ]
    if pc.extension is None:
        parts.append(encode_u8(0))
    else:
        parts.append(encode_u8(1))
        parts.append(encode_extension(pc.extension))
    return b"".join(parts)


def decode_precommit(data: bytes) -> Precommit:
    r = Reader(data)
    pc = read_precommit(r)
    r.expect_eof()
    return pc


def read_precommit(r: Reader) -> Precommit:
    if r.u8() != TAG_PRECOMMIT:
        raise DecodeError("not a precommit")
    height = r.u64()
    round_ = r.u64()
    value_id = bytes(r.digest())
    signer = r.u64()
    sig = r.blob()
    has_ext = r.u8()
    ext = None
    if has_ext == 1:
        ext = read_extension(r)
    elif has_ext != 0:
        raise DecodeError("bad extension flag")
    try:
        return Precommit(height, round_, value_id, signer, sig, ext)
    except ValueError as e:
        raise DecodeError(str(e)) from e


@dataclass(frozen=True, slots=True)
class CommitCertificate:
    """>= 2f+1 identical precommits differing only in sender/signature/extension."""

    height: Height
    round: Round
    value_id: Digest
    precommits: tuple[Precommit, ...]

    @staticmethod
    def make(height: Height, round_: Round, value_id: Digest, precommits: Iterable[Precommit]) -> "CommitCertificate":
        ordered = tuple(sorted(precommits, key=lambda pc: pc.signer))
        return CommitCertificate(height, round_, value_id, ordered)


def encode_certificate(cert: CommitCertificate) -> bytes:
    parts = [
        encode_u8(TAG_CERTIFICATE),
        encode_u64(cert.height),
        encode_u64(cert.round),
        encode_digest(cert.value_id),
        encode_u64(len(cert.precommits)),
    ]
    parts.extend(encode_precommit(pc) for pc in cert.precommits)
    return b"".join(parts)


def decode_certificate(data: bytes) -> CommitCertificate:
    r = Reader(data)
    if r.u8() != TAG_CERTIFICATE:
        raise DecodeError("not a certificate")
    height = r.u64()
    round_ = r.u64()
    value_id = bytes(r.digest())
    count = r.u64()
    pcs = tuple(read_precommit(r) for _ in range(count))
    r.expect_eof()
    return CommitCertificate(height, round_, value_id, pcs)


def encode_value(cert: Optional[CommitCertificate]) -> bytes:
    """Proposal value bytes: a certificate, or the distinguished EMPTY value."""
    if cert is None:
        return EMPTY_VALUE
    return encode_certificate(cert)


def decode_value(data: bytes) -> Optional[CommitCertificate]:
    if data == EMPTY_VALUE:
        return None
    return decode_certificate(data)


def value_id_of(value: bytes) -> Digest:
    return digest(value)


def block_digest(txs: Iterable[Transaction]) -> Digest:
    """Digest of the canonical encoding of an ordered transaction list."""
    txs = list(txs)
    parts = [encode_u64(len(txs))]
    parts.extend(encode_transaction(tx) for tx in txs)
    return digest(b"".join(parts))


_ENCODERS = {
    Transaction: encode_transaction,
    Payload: encode_payload,
    Precommit: encode_precommit,
    CommitCertificate: encode_certificate,
}


def canonical_encode(value) -> bytes:
    """Single entry point over the core value types."""
    try:
        return _ENCODERS[type(value)](value)
    except KeyError:
        raise TypeError(f"no canonical encoding for {type(value).__name__}") from None
