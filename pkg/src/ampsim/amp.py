"""Multi-proposer layer run by every validator.

Sits between the application and the dissemination/agreement layers:
payload intake and validation, the pending set and its aging policy,
vote-extension production and verification, commit-certificate validation,
sound-id extraction, decision handling, and deterministic finalization.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional

from .codec import DIGEST_SIZE, DecodeError
from .keys import Verifier
from .types import (
    NIL,
    CommitCertificate,
    Height,
    Payload,
    PayloadId,
    Precommit,
    Transaction,
    decode_value,
    encode_payload,
    encode_value,
    extension_signing_bytes,
    payload_id,
    precommit_signing_bytes,
    transaction_hash,
)


@dataclass(frozen=True, slots=True)
class AmpLimits:
    f: int
    max_payload_bytes: int = 1 << 20
    max_extension_ids: int = 1024
    pending_max_age: int = 8  # heights before an unordered id ages out of pending


@dataclass(frozen=True, slots=True)
class Mutations:
    """Deliberate protocol breakages, used only for mutation-sensitivity testing."""

    sound_ids_at_f: bool = False
    accept_short_certificates: bool = False
    unstable_sort_ties: bool = False

    @staticmethod
    def parse(name: str) -> "Mutations":
        if name in ("", "none"):
            return Mutations()
        fields = {
            "sound_ids_at_f": Mutations(sound_ids_at_f=True),
            "accept_short_certificates": Mutations(accept_short_certificates=True),
            "unstable_sort_ties": Mutations(unstable_sort_ties=True),
        }
        if name not in fields:
            raise ValueError(f"unknown mutation: {name!r}")
        return fields[name]


NO_MUTATIONS = Mutations()


def sound_ids(cert: Optional[CommitCertificate], f: int, *, at_f: bool = False) -> frozenset[PayloadId]:
    """Payload ids attested by more than f distinct validators in the certificate.

    The EMPTY value orders nothing. Set semantics throughout: the result does
    not depend on precommit order, and one validator counts once per id.
    """
    if cert is None:
        return frozenset()
    attesters: dict[PayloadId, set[int]] = {}
    for pc in cert.precommits:
        if pc.extension is None:
            continue
        for pid in set(pc.extension.ids):
            attesters.setdefault(pid, set()).add(pc.signer)
    threshold = f - 1 if at_f else f  # at_f: broken ">= f" variant
    return frozenset(pid for pid, who in attesters.items() if len(who) > threshold)


def sort_transactions(payloads: Iterable[Payload], *, unstable_ties: bool = False) -> list[Transaction]:
    """Flatten a payload set into one deterministic transaction sequence.

    Order: priority fee descending, ties broken by payload id then tx hash,
    both ascending. Duplicate transactions appearing in several payloads are
    all kept; deduplication at execution time is an application concern.
    """
    entries: list[tuple[PayloadId, Transaction]] = []
    for p in payloads:
        pid = payload_id(p)
        entries.extend((pid, tx) for tx in p.transactions)
    if unstable_ties:
        # Broken on purpose (mutation testing): stable sort on fee alone lets
        # the caller's payload iteration order leak into fee ties, which
        # differs across validators.
        entries.sort(key=lambda e: -e[1].priority_fee)
    else:
        entries.sort(key=lambda e: (-e[1].priority_fee, e[0], e[1].tx_hash))
    return [tx for _, tx in entries]


def valid_payload(p: Payload, limits: AmpLimits) -> bool:
    """Structural payload validation: no account-state semantics."""
    if not isinstance(p, Payload) or not p.transactions:
        return False
    seen: set[bytes] = set()
    for tx in p.transactions:
        if tx.nonce < 0 or tx.priority_fee < 0:
            return False
        if tx.tx_hash != transaction_hash(tx):
            return False
        if tx.tx_hash in seen:
            return False
        seen.add(tx.tx_hash)
    return len(encode_payload(p)) <= limits.max_payload_bytes


def verify_vote_extension(pc: Precommit, verifier: Verifier, limits: AmpLimits) -> bool:
    """Validate the extension attached to a non-NIL precommit.

    Checks well-formed distinct 32-byte ids, the configured size bound, the
    signer match, and the extension signature over (height, round, value_id,
    ids). A False here makes consensus disregard the whole precommit.
    """
    if pc.value_id == NIL or pc.extension is None:
        return False
    ext = pc.extension
    if ext.signer != pc.signer:
        return False
    if len(ext.ids) > limits.max_extension_ids:
        return False
    prev = b""
    for pid in ext.ids:
        if len(pid) != DIGEST_SIZE:
            return False
        if pid <= prev:  # sorted + distinct
            return False
        prev = pid
    msg = extension_signing_bytes(pc.height, pc.round, pc.value_id, ext.ids)
    return verifier.verify(ext.signer, msg, ext.signature)


def verify_precommit(pc: Precommit, verifier: Verifier) -> bool:
    ids = pc.extension.ids if pc.extension is not None else None
    msg = precommit_signing_bytes(pc.height, pc.round, pc.value_id, ids)
    return verifier.verify(pc.signer, msg, pc.signature)


def valid_commit(
    value: bytes,
    h: Height,
    n: int,
    verifier: Verifier,
    limits: AmpLimits,
    mutations: Mutations = NO_MUTATIONS,
) -> bool:
    """Validate a proposed value for height h.

    The first post-genesis height carries the distinguished EMPTY value
    (genesis is pre-agreed, so there is no certificate for it). Every later
    height must carry a commit certificate for h-1: precommits identical up
    to sender, signature, and extension, one per validator, at least 2f+1 of
    them, every signature valid and every extension valid.
    """
    try:
        cert = decode_value(value)
    except DecodeError:
        return False
    if cert is None:
        return h == 1
    if h <= 1 or cert.height != h - 1:
        return False
    if cert.value_id == NIL:
        return False
    quorum = 2 * limits.f + (0 if mutations.accept_short_certificates else 1)
    seen: set[int] = set()
    for pc in cert.precommits:
        if (pc.height, pc.round, pc.value_id) != (cert.height, cert.round, cert.value_id):
            return False
        if pc.signer in seen or not 0 <= pc.signer < n:
            return False
        seen.add(pc.signer)
        if not verify_precommit(pc, verifier):
            return False
        if not verify_vote_extension(pc, verifier, limits):
            return False
    return len(seen) >= quorum


class AmpValidator:
    """Per-validator protocol state (pending, payloads, ordered, attestations, next)."""

    def __init__(self, limits: AmpLimits, mutations: Mutations = NO_MUTATIONS):
        self.limits = limits
        self.mutations = mutations
        self.ordered: dict[Height, frozenset[PayloadId]] = {}
        self.payloads: dict[PayloadId, Payload] = {}
        self.next_height: Height = 1
        self.attestations: Optional[CommitCertificate] = None
        self.pending: set[PayloadId] = set()
        self.pending_age: dict[PayloadId, Height] = {}
        self.missing: set[PayloadId] = set()
        self._ordered_all: set[PayloadId] = set()

    # -- dissemination side -------------------------------------------------

    def deliver_payload(self, p: Payload, current_height: Height) -> tuple[str, PayloadId]:
        """Payload intake. Returns (status, id).

        Statuses: accepted (new pending id), ordered_fill (fills a decided id
        we were missing; never re-enters pending), duplicate, already_ordered,
        invalid.
        """
        pid = payload_id(p)
        if pid in self.missing:
            self.payloads[pid] = p
            self.missing.discard(pid)
            return "ordered_fill", pid
        if pid in self._ordered_all:
            return "already_ordered", pid
        if pid in self.payloads:
            return "duplicate", pid
        if not valid_payload(p, self.limits):
            return "invalid", pid
        self.pending.add(pid)
        self.payloads[pid] = p
        self.pending_age[pid] = current_height
        return "accepted", pid

    def age_pending(self, current_height: Height) -> list[PayloadId]:
        """Evict ids not ordered within pending_max_age heights of first sight.

        Evicted ids are no longer attested but their payloads stay stored, so
        retransmission requests for them can still be served.
        """
        k = self.limits.pending_max_age
        evicted = sorted(pid for pid, born in self.pending_age.items() if born + k < current_height)
        for pid in evicted:
            self.pending.discard(pid)
            del self.pending_age[pid]
        return evicted

    # -- agreement-layer callbacks -------------------------------------------

    def received_proposal(self, h: Height, n: int, value: bytes, verifier: Verifier) -> bool:
        return valid_commit(value, h, n, verifier, self.limits, self.mutations)

    def extend_vote(self, value: bytes) -> tuple[PayloadId, ...]:
        """Ids to attest: pending minus whatever the proposed value already orders."""
        try:
            cert = decode_value(value)
        except DecodeError:
            cert = None
        skip = sound_ids(cert, self.limits.f, at_f=self.mutations.sound_ids_at_f)
        ids = sorted(self.pending - skip)
        return tuple(ids[: self.limits.max_extension_ids])

    def get_value(self) -> bytes:
        """Value to propose: the commit certificate of the last decided height."""
        return encode_value(self.attestations)

    def decided(self, h: Height, value: bytes, commit: CommitCertificate) -> frozenset[PayloadId]:
        """Record a decision; returns the ordered ids whose payloads are missing."""
        cert = decode_value(value)
        sound = sound_ids(cert, self.limits.f, at_f=self.mutations.sound_ids_at_f)
        self.attestations = commit
        self.ordered[h] = sound
        self._ordered_all |= sound
        self.pending -= sound
        for pid in sound:
            self.pending_age.pop(pid, None)
        missing = frozenset(pid for pid in sound if pid not in self.payloads)
        self.missing |= missing
        return missing

    def take_finalized(self) -> list[tuple[Height, list[PayloadId], list[Transaction]]]:
        """Emit every height that is decided and fully available, in order."""
        out = []
        while self.next_height in self.ordered:
            ids = self.ordered[self.next_height]
            if any(pid not in self.payloads for pid in ids):
                break
            txs = sort_transactions(
                self._payloads_in_local_order(ids),
                unstable_ties=self.mutations.unstable_sort_ties,
            )
            out.append((self.next_height, sorted(ids), txs))
            self.next_height += 1
        return out

    def _payloads_in_local_order(self, ids: frozenset[PayloadId]) -> list[Payload]:
        # Iterate the local store in insertion (= delivery) order. The real
        # sort is order-independent; the unstable_sort_ties mutation leaks
        # this order into its output.
        return [p for pid, p in self.payloads.items() if pid in ids]
