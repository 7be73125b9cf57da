"""Shared builders for tests: keyed certificates, payloads, extensions."""

from __future__ import annotations

import random

from ampsim.keys import Keyring
from ampsim.types import (
    CommitCertificate,
    Payload,
    Precommit,
    Transaction,
    VoteExtension,
    extension_signing_bytes,
    precommit_signing_bytes,
)


def make_payload(rng: random.Random, proposer: str = "p0", txs: int = 2, fee=None) -> Payload:
    out = []
    for i in range(txs):
        out.append(
            Transaction(
                sender=f"acct-{rng.randrange(1 << 30)}",
                nonce=rng.randrange(1 << 16),
                priority_fee=rng.randrange(100) if fee is None else fee,
                body=rng.randbytes(12),
            )
        )
    return Payload(proposer, tuple(out), created_height_hint=rng.randrange(5))


def signed_precommit(
    keyring: Keyring,
    signer: int,
    height: int,
    round_: int,
    value_id: bytes,
    ids: list[bytes],
) -> Precommit:
    """A fully signed non-NIL precommit with a vote extension."""
    ordered = tuple(sorted(set(ids)))
    esig = keyring.sign(signer, extension_signing_bytes(height, round_, value_id, ordered))
    ext = VoteExtension(ordered, signer, esig)
    sig = keyring.sign(signer, precommit_signing_bytes(height, round_, value_id, ordered))
    return Precommit(height, round_, value_id, signer, sig, ext)


def build_certificate(
    keyring: Keyring,
    height: int,
    round_: int,
    value_id: bytes,
    extensions: dict[int, list[bytes]],
) -> CommitCertificate:
    pcs = [signed_precommit(keyring, s, height, round_, value_id, ids) for s, ids in extensions.items()]
    return CommitCertificate.make(height, round_, value_id, pcs)
