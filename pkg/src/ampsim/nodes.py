"""Validator and proposer node behaviour inside the simulator.

A validator wires together the consensus engine, the multi-proposer layer,
and retransmission, and is where validator-side adversary behaviours hook
in (they only ever change this node's own outputs). A proposer collects
synthetic user transactions into payloads on a timer and broadcasts them.
"""

from __future__ import annotations

from typing import Optional

from .amp import AmpLimits, AmpValidator, verify_vote_extension
from .consensus import ConsensusEngine, Precommit, Prevote, Proposal
from .dissemination import PayloadMsg, RetransmitRequest, RetransmitResponse, Retransmitter
from .types import (
    CommitCertificate,
    Payload,
    Transaction,
    block_digest,
    decode_value,
    encode_value,
    payload_id,
    value_id_of,
)


class ValidatorNode:
    def __init__(self, sim, index: int, specs: list):
        self.sim = sim
        self.index = index
        self.node_id = f"v{index}"
        self.crashed = False
        cfg = sim.cfg
        limits = AmpLimits(
            f=cfg.f,
            max_payload_bytes=cfg.max_payload_bytes,
            max_extension_ids=cfg.max_extension_ids,
            pending_max_age=cfg.pending_max_age,
        )
        self.amp = AmpValidator(limits, sim.mutations)
        self.engine = ConsensusEngine(
            me=index,
            n=cfg.n,
            f=cfg.f,
            env=self,
            hooks=self,
            timeout_base=cfg.timeout_base,
            timeout_step=cfg.timeout_step,
            grace=cfg.grace,
        )
        self.retrans = Retransmitter(cfg.delta)
        self.max_finalized = 0
        self.blocks: list[dict] = []

        self.censor: Optional[object] = None
        self.omit_ext: Optional[object] = None
        self.silent_retransmit = False
        for spec in specs:
            if spec.behavior == "censor_assembler":
                self.censor = spec
            elif spec.behavior == "omit_extension_ids":
                self.omit_ext = spec
            elif spec.behavior == "silent_retransmit":
                self.silent_retransmit = True

    # -- engine environment ------------------------------------------------------

    def broadcast_consensus(self, msg) -> None:
        self.sim.broadcast(self, msg)

    def schedule(self, delay: int, name: str, data: dict) -> None:
        self.sim.schedule_timer(self, delay, name, data)

    def sign(self, msg: bytes) -> bytes:
        return self.sim.keyring.sign(self.index, msg)

    def verify(self, signer: int, msg: bytes, sig: bytes) -> bool:
        return self.sim.keyring.verify(signer, msg, sig)

    def trace(self, kind: str, **fields) -> None:
        self.sim.trace_event({"kind": kind, "t": self.sim.now, "node": self.node_id, **fields})

    def trace_proposal(self, h: int, r: int, vr: int, value: bytes) -> None:
        cert = _decode_or_none(value)
        exts = "empty" if cert is None else {
            str(pc.signer): sorted(i.hex() for i in pc.extension.ids)
            for pc in cert.precommits
            if pc.extension is not None
        }
        self.trace("propose", h=h, r=r, vr=vr, vid=value_id_of(value).hex(), exts=exts)

    def height_decided(self, h: int) -> None:
        if h < self.sim.cfg.max_heights:
            self.begin_height(h + 1)

    # -- app hooks -----------------------------------------------------------------

    def received_proposal(self, h: int, r: int, value: bytes) -> bool:
        return self.amp.received_proposal(h, self.sim.cfg.n, value, self.sim.keyring)

    def extend_vote(self, h: int, r: int, value: bytes) -> tuple:
        ids = self.amp.extend_vote(value)
        if self.omit_ext is not None:
            if self.omit_ext.ids == ("all",):
                ids = ()
            else:
                omit = {bytes.fromhex(x) for x in self.omit_ext.ids}
                ids = tuple(i for i in ids if i not in omit)
        self.trace("extend", h=h, r=r, ids=[i.hex() for i in ids])
        return ids

    def verify_vote_extension(self, pc: Precommit) -> bool:
        return verify_vote_extension(pc, self.sim.keyring, self.amp.limits)

    def get_value(self, h: int) -> bytes:
        if self.censor is not None and self.amp.attestations is not None:
            return encode_value(self._censored_certificate(self.amp.attestations))
        return self.amp.get_value()

    def decided(self, h: int, value: bytes, commit: CommitCertificate) -> None:
        from .trace import cert_to_json

        missing = self.amp.decided(h, value, commit)
        self.trace(
            "decide",
            h=h,
            r=commit.round,
            vid=commit.value_id.hex(),
            value=cert_to_json(_decode_or_none(value)),
            commit=cert_to_json(commit),
            sound=sorted(i.hex() for i in self.amp.ordered[h]),
        )
        if missing:
            fresh = self.retrans.want(missing)
            if fresh:
                self._send_retransmit_request()
                self.schedule(self.retrans.next_delay(), "retransmit_retry", {})
        self._drain_finalized()

    # -- height lifecycle ---------------------------------------------------------------

    def begin_height(self, h: int) -> None:
        for pid in self.amp.age_pending(h):
            self.trace("drop", reason="aged_pending", detail=pid.hex())
        self.engine.start_height(h)

    def on_restart(self) -> None:
        resume = max(self.amp.ordered, default=0) + 1
        if resume <= self.sim.cfg.max_heights:
            self.begin_height(resume)

    # -- message handling -----------------------------------------------------------------

    def consumes(self, msg) -> bool:
        return True

    def on_message(self, msg) -> None:
        if isinstance(msg, (Proposal, Prevote, Precommit)):
            self.engine.handle(msg)
        elif isinstance(msg, PayloadMsg):
            self._payload_intake(msg.payload)
        elif isinstance(msg, RetransmitResponse):
            self._response_intake(msg.payload)
        elif isinstance(msg, RetransmitRequest):
            self._serve_request(msg)

    def _payload_intake(self, payload: Payload) -> None:
        status, pid = self.amp.deliver_payload(payload, self.engine.height)
        if status == "accepted":
            self.trace("accept", pid=pid.hex(), via="pending")
        elif status == "invalid":
            self.trace("drop", reason="invalid_payload", detail=pid.hex())
        elif status == "ordered_fill":
            self.trace("accept", pid=pid.hex(), via="fill")
            self.retrans.satisfied(pid)
            self._drain_finalized()
        # duplicate / already_ordered: idempotent, nothing to record

    def _response_intake(self, payload: Payload) -> None:
        pid = payload_id(payload)
        if pid not in self.retrans.outstanding:
            self.trace("drop", reason="response_id_mismatch", detail=pid.hex())
            return
        self._payload_intake(payload)

    def _serve_request(self, msg: RetransmitRequest) -> None:
        if self.silent_retransmit:
            self.trace("drop", reason="silent_retransmit", detail=msg.sender)
            return
        for pid in sorted(set(msg.ids)):
            payload = self.amp.payloads.get(pid)
            if payload is not None:
                self.sim.unicast(self, RetransmitResponse(payload, self.node_id), msg.sender)

    def _send_retransmit_request(self) -> None:
        ids = tuple(sorted(self.retrans.outstanding))
        if ids:
            self.sim.broadcast(self, RetransmitRequest(ids, self.node_id))

    def on_timer(self, name: str, data: dict) -> None:
        if name == "retransmit_retry":
            if self.retrans.outstanding:
                self._send_retransmit_request()
                self.schedule(self.retrans.next_delay(), "retransmit_retry", {})
            return
        self.engine.on_timer(name, data)

    # -- finalization -------------------------------------------------------------------------

    def _drain_finalized(self) -> None:
        for h, ids, txs in self.amp.take_finalized():
            record = {
                "kind": "finalize",
                "t": self.sim.now,
                "node": self.node_id,
                "h": h,
                "block": block_digest(txs).hex(),
                "pids": [i.hex() for i in ids],
                "txs": [tx.tx_hash.hex() for tx in txs],
            }
            self.sim.trace_event(record)
            self.blocks.append({"height": h, "block": record["block"], "txs": record["txs"]})
            self.max_finalized = h
        self.sim.note_finalized()

    # -- adversarial assembly --------------------------------------------------------------------

    def _censored_certificate(self, cert: CommitCertificate) -> CommitCertificate:
        """Drop up to `drop` precommits from the certificate before proposing.

        Selection prefers precommits attesting the targeted ids (omit_ids,
        'auto' = the most-attested id) or coming from targeted validators.
        Signatures cannot be forged, so whole precommits are all that can go.
        """
        spec = self.censor
        budget = spec.drop if spec.drop >= 0 else self.sim.cfg.f
        pcs = list(cert.precommits)
        if spec.omit_validators:
            victims = [pc for pc in pcs if pc.signer in spec.omit_validators]
        else:
            targets = self._censor_target_ids(cert, spec.omit_ids)
            scored = [(len(targets & set(pc.extension.ids)) if pc.extension else 0, pc) for pc in pcs]
            victims = [pc for overlap, pc in sorted(scored, key=lambda e: (-e[0], e[1].signer)) if overlap > 0]
        dropped = set()
        for pc in victims[:budget]:
            dropped.add(pc.signer)
        kept = [pc for pc in pcs if pc.signer not in dropped]
        return CommitCertificate.make(cert.height, cert.round, cert.value_id, kept)

    @staticmethod
    def _censor_target_ids(cert: CommitCertificate, omit_ids: tuple) -> set:
        if omit_ids and omit_ids != ("auto",):
            return {bytes.fromhex(x) for x in omit_ids}
        counts: dict[bytes, int] = {}
        for pc in cert.precommits:
            if pc.extension is None:
                continue
            for pid in pc.extension.ids:
                counts[pid] = counts.get(pid, 0) + 1
        if not counts:
            return set()
        top = max(counts.items(), key=lambda kv: (kv[1], kv[0]))
        return {top[0]}


class ProposerNode:
    def __init__(self, sim, index: int, specs: list):
        self.sim = sim
        self.index = index
        self.node_id = f"p{index}"
        self.crashed = False
        self.emitted = 0
        self._tx_counter = 0
        self.equivocation_pairs: list[tuple[bytes, bytes]] = []

        self.selective: Optional[object] = None
        self.equivocate: Optional[object] = None
        self.rate = 1
        for spec in specs:
            if spec.behavior == "selective_dissemination":
                self.selective = spec
            elif spec.behavior == "equivocate_proposer":
                self.equivocate = spec
            elif spec.behavior == "spam_proposer":
                self.rate = max(1, spec.rate)

    def consumes(self, msg) -> bool:
        return False

    def on_message(self, msg) -> None:  # pragma: no cover - proposers only relay
        pass

    def on_restart(self) -> None:
        # emission timers that fired while down are gone; restart the chain
        if self.emitted < self.sim.cfg.payloads_per_proposer:
            self.sim.schedule_timer(self, 1, "emit", {})

    def schedule_first_emission(self) -> None:
        if self.sim.cfg.payloads_per_proposer > 0:
            self.sim.schedule_timer(self, 1 + self.index, "emit", {})

    def on_timer(self, name: str, data: dict) -> None:
        if name != "emit":
            return
        for _ in range(self.rate):
            if self.emitted >= self.sim.cfg.payloads_per_proposer:
                break
            self._emit_one()
            self.emitted += 1
        if self.emitted < self.sim.cfg.payloads_per_proposer:
            self.sim.schedule_timer(self, self.sim.cfg.payload_interval, "emit", {})

    def _make_payload(self, salt: str = "") -> Payload:
        cfg = self.sim.cfg
        rng = self.sim.rng
        txs = []
        for _ in range(cfg.payload_txs):
            self._tx_counter += 1
            txs.append(
                Transaction(
                    sender=f"acct-{self.node_id}-{self._tx_counter}{salt}",
                    nonce=self._tx_counter,
                    priority_fee=rng.randint(0, cfg.fee_max),
                    body=rng.randbytes(24),
                )
            )
        return Payload(self.node_id, tuple(txs), created_height_hint=self.emitted)

    def _emit_one(self) -> None:
        if self.equivocate is not None:
            left, right = self.equivocate.split
            p_a = self._make_payload()
            p_b = self._make_payload(salt="-alt")
            self.equivocation_pairs.append((payload_id(p_a), payload_id(p_b)))
            self.sim.multicast(self, PayloadMsg(p_a, self.node_id), [f"v{i}" for i in left])
            self.sim.multicast(self, PayloadMsg(p_b, self.node_id), [f"v{i}" for i in right])
            return
        payload = self._make_payload()
        msg = PayloadMsg(payload, self.node_id)
        if self.selective is not None:
            self.sim.multicast(self, msg, [f"v{i}" for i in self.selective.reach])
        else:
            self.sim.broadcast(self, msg)


def _decode_or_none(value: bytes):
    try:
        return decode_value(value)
    except Exception:
        return None
