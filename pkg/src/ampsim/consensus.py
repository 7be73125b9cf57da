"""Per-validator consensus state machine.

Single-height rounds with propose/prevote/precommit steps, 2f+1 quorums,
full lock/unlock (valid_round) machinery, round-robin assembler rotation,
vote-extension hooks invoked around non-NIL precommits, and
commit-certificate assembly with a configurable grace window for late
precommits. One engine instance per validator; all inputs arrive serially
from the surrounding event loop.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional, Protocol

from .codec import encode_blob, encode_u8, encode_u64
from .types import (
    NIL,
    CommitCertificate,
    Digest,
    Height,
    PayloadId,
    Precommit,
    Round,
    ValidatorId,
    VoteExtension,
    encode_precommit,
    extension_signing_bytes,
    precommit_signing_bytes,
    value_id_of,
)

TAG_PROPOSAL = 0x06
TAG_PREVOTE = 0x07


def assembler_for(h: Height, r: Round, n: int) -> ValidatorId:
    """Round-robin block-assembler schedule over the validator set."""
    return (h + r) % n


@dataclass(frozen=True, slots=True)
class Proposal:
    height: Height
    round: Round
    value: bytes
    valid_round: int  # -1 when proposing fresh
    signer: ValidatorId
    signature: bytes


def proposal_signing_bytes(h: Height, r: Round, value: bytes, vr: int) -> bytes:
    return b"".join(
        [b"AMP/PROPOSAL", encode_u64(h), encode_u64(r), encode_u64(vr + 1), encode_blob(value)]
    )


def encode_proposal(p: Proposal) -> bytes:
    return b"".join(
        [
            encode_u8(TAG_PROPOSAL),
            encode_u64(p.height),
            encode_u64(p.round),
            encode_u64(p.valid_round + 1),
            encode_blob(p.value),
            encode_u64(p.signer),
            encode_blob(p.signature),
        ]
    )


@dataclass(frozen=True, slots=True)
class Prevote:
    height: Height
    round: Round
    value_id: Digest
    signer: ValidatorId
    signature: bytes


def prevote_signing_bytes(h: Height, r: Round, value_id: Digest) -> bytes:
    return b"".join([b"AMP/PREVOTE", encode_u64(h), encode_u64(r), value_id])


def encode_prevote(v: Prevote) -> bytes:
    return b"".join(
        [
            encode_u8(TAG_PREVOTE),
            encode_u64(v.height),
            encode_u64(v.round),
            v.value_id,
            encode_u64(v.signer),
            encode_blob(v.signature),
        ]
    )


ConsensusMsg = Proposal | Prevote | Precommit


def consensus_msg_size(msg: ConsensusMsg) -> int:
    if isinstance(msg, Proposal):
        return len(encode_proposal(msg))
    if isinstance(msg, Prevote):
        return len(encode_prevote(msg))
    return len(encode_precommit(msg))


class Step(enum.Enum):
    PROPOSE = "propose"
    PREVOTE = "prevote"
    PRECOMMIT = "precommit"
    DECIDED = "decided"


class AppHooks(Protocol):
    """Callbacks the multi-proposer layer provides to consensus."""

    def received_proposal(self, h: Height, r: Round, value: bytes) -> bool: ...

    def extend_vote(self, h: Height, r: Round, value: bytes) -> tuple[PayloadId, ...]: ...

    def verify_vote_extension(self, pc: Precommit) -> bool: ...

    def get_value(self, h: Height) -> bytes: ...

    def decided(self, h: Height, value: bytes, commit: CommitCertificate) -> None: ...


class Env(Protocol):
    """Services the host node lends to its consensus engine."""

    def broadcast_consensus(self, msg: ConsensusMsg) -> None: ...

    def schedule(self, delay: int, name: str, data: dict) -> None: ...

    def sign(self, msg: bytes) -> bytes: ...

    def verify(self, signer: ValidatorId, msg: bytes, sig: bytes) -> bool: ...

    def trace(self, kind: str, **fields) -> None: ...

    def trace_proposal(self, h: Height, r: Round, vr: int, value: bytes) -> None: ...

    def height_decided(self, h: Height) -> None: ...


class ConsensusEngine:
    def __init__(
        self,
        me: ValidatorId,
        n: int,
        f: int,
        env: Env,
        hooks: AppHooks,
        timeout_base: int,
        timeout_step: int,
        grace: int,
    ):
        self.me = me
        self.n = n
        self.f = f
        self.quorum = 2 * f + 1
        self.env = env
        self.hooks = hooks
        self.timeout_base = timeout_base
        self.timeout_step = timeout_step
        self.grace = grace

        self.height: Height = 0  # 0 = not started
        self.round: Round = 0
        self.step = Step.PROPOSE
        self._future: dict[Height, list[ConsensusMsg]] = {}
        self._reset_height_state()

    def _reset_height_state(self) -> None:
        self.locked_value: Optional[bytes] = None
        self.locked_round: int = -1
        self.valid_value: Optional[bytes] = None
        self.valid_round: int = -1
        self.proposals: dict[Round, Proposal] = {}
        self.prevotes: dict[Round, dict[ValidatorId, Prevote]] = {}
        self.precommits: dict[Round, dict[ValidatorId, Precommit]] = {}
        self._prevoted: set[Round] = set()
        self._precommitted: set[Round] = set()
        self._tmo_prevote: set[Round] = set()
        self._tmo_precommit: set[Round] = set()
        self._valid_latched: set[Round] = set()
        self._validity: dict[Round, bool] = {}
        self._deciding: Optional[tuple[Round, Digest]] = None

    def _timeout(self, r: Round) -> int:
        return self.timeout_base + r * self.timeout_step

    # -- height / round control ----------------------------------------------

    def start_height(self, h: Height) -> None:
        self.height = h
        self._reset_height_state()
        self.step = Step.PROPOSE
        self._start_round(0)
        for msg in self._future.pop(h, []):
            self.handle(msg)

    def _start_round(self, r: Round) -> None:
        self.round = r
        self.step = Step.PROPOSE
        if assembler_for(self.height, r, self.n) == self.me:
            value = self.valid_value if self.valid_value is not None else self.hooks.get_value(self.height)
            vr = self.valid_round
            sig = self.env.sign(proposal_signing_bytes(self.height, r, value, vr))
            prop = Proposal(self.height, r, value, vr, self.me, sig)
            self.env.trace_proposal(self.height, r, vr, value)
            self.env.broadcast_consensus(prop)
            self.handle(prop)
        else:
            self.env.schedule(self._timeout(r), "timeout_propose", {"h": self.height, "r": r})

    # -- message intake --------------------------------------------------------

    def handle(self, msg: ConsensusMsg) -> None:
        if self.height == 0:
            return
        h = msg.height
        if h < self.height:
            return  # stale height; certificate already sealed
        if h > self.height:
            self._future.setdefault(h, []).append(msg)
            return
        if isinstance(msg, Proposal):
            self._on_proposal(msg)
        elif isinstance(msg, Prevote):
            self._on_prevote(msg)
        else:
            self._on_precommit(msg)

    def _on_proposal(self, msg: Proposal) -> None:
        expected = assembler_for(msg.height, msg.round, self.n)
        if msg.signer != expected:
            self.env.trace("drop", reason="proposal_wrong_signer", detail=f"h={msg.height} r={msg.round}")
            return
        if not self.env.verify(msg.signer, proposal_signing_bytes(msg.height, msg.round, msg.value, msg.valid_round), msg.signature):
            self.env.trace("drop", reason="proposal_bad_signature", detail=f"h={msg.height} r={msg.round}")
            return
        prev = self.proposals.get(msg.round)
        if prev is not None:
            if prev.value != msg.value or prev.valid_round != msg.valid_round:
                self.env.trace("equivocation", signer=msg.signer, h=msg.height, r=msg.round, msg="proposal")
            return
        self.proposals[msg.round] = msg
        self._evaluate()

    def _on_prevote(self, msg: Prevote) -> None:
        if not 0 <= msg.signer < self.n:
            return
        if not self.env.verify(msg.signer, prevote_signing_bytes(msg.height, msg.round, msg.value_id), msg.signature):
            self.env.trace("drop", reason="prevote_bad_signature", detail=f"h={msg.height} r={msg.round} s={msg.signer}")
            return
        votes = self.prevotes.setdefault(msg.round, {})
        prev = votes.get(msg.signer)
        if prev is not None:
            if prev.value_id != msg.value_id:
                self.env.trace("equivocation", signer=msg.signer, h=msg.height, r=msg.round, msg="prevote")
            return
        votes[msg.signer] = msg
        self._evaluate()

    def _on_precommit(self, msg: Precommit) -> None:
        if not 0 <= msg.signer < self.n:
            return
        ids = msg.extension.ids if msg.extension is not None else None
        if not self.env.verify(msg.signer, precommit_signing_bytes(msg.height, msg.round, msg.value_id, ids), msg.signature):
            self.env.trace("drop", reason="precommit_bad_signature", detail=f"h={msg.height} r={msg.round} s={msg.signer}")
            return
        if msg.value_id != NIL and not self.hooks.verify_vote_extension(msg):
            self.env.trace("drop", reason="bad_vote_extension", detail=f"h={msg.height} r={msg.round} s={msg.signer}")
            return
        votes = self.precommits.setdefault(msg.round, {})
        prev = votes.get(msg.signer)
        if prev is not None:
            if prev.value_id != msg.value_id:
                self.env.trace("equivocation", signer=msg.signer, h=msg.height, r=msg.round, msg="precommit")
            return
        votes[msg.signer] = msg
        self._evaluate()

    # -- timers -----------------------------------------------------------------

    def on_timer(self, name: str, data: dict) -> None:
        h, r = data.get("h"), data.get("r")
        if h != self.height:
            return
        if name == "timeout_propose":
            if r == self.round and self.step is Step.PROPOSE:
                self.env.trace("timeout", which="propose", h=h, r=r)
                self._cast_prevote(r, NIL)
        elif name == "timeout_prevote":
            if r == self.round and self.step is Step.PREVOTE:
                self.env.trace("timeout", which="prevote", h=h, r=r)
                self._cast_precommit(r, NIL, None)
        elif name == "timeout_precommit":
            if r == self.round and self._deciding is None and self.step is not Step.DECIDED:
                self.env.trace("timeout", which="precommit", h=h, r=r)
                self._start_round(r + 1)
                self._evaluate()
        elif name == "commit":
            if self._deciding is not None and (r, data["vid"]) == (self._deciding[0], self._deciding[1]):
                self._commit(r, data["vid"])

    # -- vote emission ------------------------------------------------------------

    def _cast_prevote(self, r: Round, value_id: Digest) -> None:
        if r in self._prevoted:
            return
        self._prevoted.add(r)
        sig = self.env.sign(prevote_signing_bytes(self.height, r, value_id))
        vote = Prevote(self.height, r, value_id, self.me, sig)
        self.step = Step.PREVOTE
        self.env.broadcast_consensus(vote)
        self.handle(vote)

    def _cast_precommit(self, r: Round, value_id: Digest, value: Optional[bytes]) -> None:
        if r in self._precommitted:
            return
        self._precommitted.add(r)
        ext = None
        if value_id != NIL:
            ids = self.hooks.extend_vote(self.height, r, value)
            esig = self.env.sign(extension_signing_bytes(self.height, r, value_id, ids))
            ext = VoteExtension.make(ids, self.me, esig)
            sig = self.env.sign(precommit_signing_bytes(self.height, r, value_id, ext.ids))
        else:
            sig = self.env.sign(precommit_signing_bytes(self.height, r, value_id, None))
        pc = Precommit(self.height, r, value_id, self.me, sig, ext)
        self.step = Step.PRECOMMIT
        self.env.broadcast_consensus(pc)
        self.handle(pc)

    # -- rule evaluation -------------------------------------------------------

    def _proposal_valid(self, r: Round) -> bool:
        if r not in self._validity:
            prop = self.proposals[r]
            self._validity[r] = self.hooks.received_proposal(self.height, r, prop.value)
        return self._validity[r]

    def _count_prevotes(self, r: Round, vid: Optional[Digest] = None) -> int:
        votes = self.prevotes.get(r, {})
        if vid is None:
            return len(votes)
        return sum(1 for v in votes.values() if v.value_id == vid)

    def _count_precommits(self, r: Round, vid: Optional[Digest] = None) -> int:
        votes = self.precommits.get(r, {})
        if vid is None:
            return len(votes)
        return sum(1 for v in votes.values() if v.value_id == vid)

    def _evaluate(self) -> None:
        if self.step is Step.DECIDED:
            return
        h, r = self.height, self.round
        prop = self.proposals.get(r)

        # New proposal in the propose step: prevote it or NIL (lock rules apply).
        if prop is not None and self.step is Step.PROPOSE and r not in self._prevoted:
            if prop.valid_round == -1:
                ok = self._proposal_valid(r) and (self.locked_round == -1 or self.locked_value == prop.value)
                self._cast_prevote(r, value_id_of(prop.value) if ok else NIL)
            elif 0 <= prop.valid_round < r:
                vid = value_id_of(prop.value)
                if self._count_prevotes(prop.valid_round, vid) >= self.quorum:
                    ok = self._proposal_valid(r) and (self.locked_round <= prop.valid_round or self.locked_value == prop.value)
                    self._cast_prevote(r, vid if ok else NIL)
            if self.round != r or self.step is Step.DECIDED:
                return  # casting our vote re-entered the engine and moved it on
            prop = self.proposals.get(r)

        # 2f+1 prevotes of any kind at the current round: arm the prevote timeout.
        if self.step is Step.PREVOTE and r not in self._tmo_prevote and self._count_prevotes(r) >= self.quorum:
            self._tmo_prevote.add(r)
            self.env.schedule(self._timeout(r), "timeout_prevote", {"h": h, "r": r})

        # Quorum of prevotes for the proposed value: lock it and precommit.
        if prop is not None and r not in self._valid_latched:
            vid = value_id_of(prop.value)
            if self.step in (Step.PREVOTE, Step.PRECOMMIT) and self._count_prevotes(r, vid) >= self.quorum and self._proposal_valid(r):
                self._valid_latched.add(r)
                self.valid_value = prop.value
                self.valid_round = r
                if self.step is Step.PREVOTE:
                    self.locked_value = prop.value
                    self.locked_round = r
                    self._cast_precommit(r, vid, prop.value)
                    if self.round != r or self.step is Step.DECIDED:
                        return

        # Quorum of NIL prevotes: give up on this round's value.
        if self.step is Step.PREVOTE and self._count_prevotes(r, NIL) >= self.quorum:
            self._cast_precommit(r, NIL, None)
            if self.round != r or self.step is Step.DECIDED:
                return

        # 2f+1 precommits of any kind: arm the precommit (round-advance) timeout.
        if r not in self._tmo_precommit and self._count_precommits(r) >= self.quorum:
            self._tmo_precommit.add(r)
            self.env.schedule(self._timeout(r), "timeout_precommit", {"h": h, "r": r})

        # Decision: proposal plus a precommit quorum for its value, any round.
        if self._deciding is None:
            for pr, p2 in sorted(self.proposals.items()):
                vid = value_id_of(p2.value)
                if self._count_precommits(pr, vid) >= self.quorum and self._proposal_valid(pr):
                    self._deciding = (pr, vid)
                    self.env.schedule(self.grace, "commit", {"h": h, "r": pr, "vid": vid})
                    break

        # f+1 messages from a higher round: jump forward.
        if self._deciding is None:
            for r2 in sorted(set(self.prevotes) | set(self.precommits) | set(self.proposals)):
                if r2 <= self.round:
                    continue
                senders = set(self.prevotes.get(r2, {})) | set(self.precommits.get(r2, {}))
                if r2 in self.proposals:
                    senders.add(self.proposals[r2].signer)
                if len(senders) >= self.f + 1:
                    self._start_round(r2)
                    self._evaluate()
                    return

    # -- decision ------------------------------------------------------------------

    def _commit(self, r: Round, vid: Digest) -> None:
        prop = self.proposals[r]
        matching = [pc for pc in self.precommits.get(r, {}).values() if pc.value_id == vid]
        cert = CommitCertificate.make(self.height, r, vid, matching)
        h = self.height
        self.step = Step.DECIDED
        self._deciding = None
        self.hooks.decided(h, prop.value, cert)
        self.env.height_decided(h)
