"""Deterministic seeded discrete-event simulator.

Virtual integer clock, partial synchrony (arbitrary-but-capped delays
before GST, delays <= delta after), direct or relay (expander gossip)
topologies, node lifecycle with fault injection, and complete trace
recording. The core is strictly single threaded; replaying a
(config, seed) pair reproduces the identical trace byte for byte.

Event ordering is the lexicographic key (timestamp, origin rank,
per-origin sequence number), which totally orders the execution.
"""

from __future__ import annotations

import hashlib
import heapq
import math
import random
from dataclasses import dataclass

from .adversary import PROPOSER_BEHAVIORS, AdversarySpec
from .amp import Mutations
from .consensus import Precommit, Prevote, Proposal, consensus_msg_size
from .dissemination import (
    PayloadMsg,
    RetransmitRequest,
    RetransmitResponse,
    dissemination_msg_size,
)
from .keys import Keyring
from .nodes import ProposerNode, ValidatorNode
from .trace import Trace


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SimConfig:
    n: int = 4
    f: int = 1
    proposer_count: int = 2
    gst: int = 0
    delta: int = 20
    seed: int = 1
    topology: str = "direct"  # direct | relay
    max_heights: int = 10
    payload_interval: int = 150
    payloads_per_proposer: int = 10
    payload_txs: int = 3
    fee_max: int = 50
    timeout_base: int = 400
    timeout_step: int = 200
    grace: int = 20
    pending_max_age: int = 8
    max_extension_ids: int = 64
    max_payload_bytes: int = 8192
    time_budget: int = 100_000
    sig_scheme: str = "keyed-digest"
    mutation: str = "none"
    beyond_threshold: bool = False
    adversaries: tuple[AdversarySpec, ...] = ()

    def validate(self) -> None:
        if self.n <= 3 * self.f and not self.beyond_threshold:
            raise ConfigError(f"n > 3f required, got n={self.n}, f={self.f}")
        if self.n < 1 or self.f < 0:
            raise ConfigError("need n >= 1 and f >= 0")
        if self.proposer_count < 0:
            raise ConfigError("proposer_count must be >= 0")
        if self.topology not in ("direct", "relay"):
            raise ConfigError(f"unknown topology {self.topology!r}")
        for name, lo in [
            ("delta", 1), ("gst", 0), ("max_heights", 1), ("payload_interval", 1),
            ("payloads_per_proposer", 0), ("payload_txs", 1), ("fee_max", 0),
            ("timeout_base", 1), ("timeout_step", 0), ("grace", 0),
            ("pending_max_age", 1), ("max_extension_ids", 0),
            ("max_payload_bytes", 1), ("time_budget", 1), ("seed", 0),
        ]:
            if getattr(self, name) < lo:
                raise ConfigError(f"{name} must be >= {lo}")
        Mutations.parse(self.mutation)
        validators = {f"v{i}" for i in range(self.n)}
        proposers = {f"p{i}" for i in range(self.proposer_count)}
        bad_validators: set[str] = set()
        for spec in self.adversaries:
            if spec.target not in validators | proposers:
                raise ConfigError(f"adversary targets unknown node {spec.target!r}")
            if spec.behavior in PROPOSER_BEHAVIORS:
                for v in (*spec.reach, *spec.split[0], *spec.split[1], *spec.omit_validators):
                    if not 0 <= v < self.n:
                        raise ConfigError(f"adversary references unknown validator {v}")
            if spec.target in validators:
                bad_validators.add(spec.target)
        if len(bad_validators) > self.f and not self.beyond_threshold:
            raise ConfigError(
                f"{len(bad_validators)} adversarial validators exceeds f={self.f} "
                "(set beyond_threshold for negative tests)"
            )

    def correct_validators(self) -> list[int]:
        bad = {spec.target for spec in self.adversaries}
        return [i for i in range(self.n) if f"v{i}" not in bad]


def config_digest(canonical_text: str) -> str:
    return hashlib.sha256(canonical_text.encode("utf-8")).hexdigest()


MSG_KINDS = {
    Proposal: "proposal",
    Prevote: "prevote",
    Precommit: "precommit",
    PayloadMsg: "payload",
    RetransmitRequest: "retransmit_request",
    RetransmitResponse: "retransmit_response",
}


def msg_kind(msg) -> str:
    return MSG_KINDS[type(msg)]


def msg_size(msg) -> int:
    if isinstance(msg, (Proposal, Prevote, Precommit)):
        return consensus_msg_size(msg)
    return dissemination_msg_size(msg)


def _msg_trace_fields(msg) -> dict:
    if isinstance(msg, Proposal):
        from .types import value_id_of

        return {"h": msg.height, "r": msg.round, "vid": value_id_of(msg.value).hex()}
    if isinstance(msg, (Prevote, Precommit)):
        return {"h": msg.height, "r": msg.round, "vid": msg.value_id.hex()}
    if isinstance(msg, (PayloadMsg, RetransmitResponse)):
        from .types import payload_id

        return {"pid": payload_id(msg.payload).hex()}
    return {"pids": [i.hex() for i in msg.ids]}


class Simulation:
    def __init__(self, cfg: SimConfig, canonical_config_text: str = ""):
        cfg.validate()
        self.cfg = cfg
        self.canonical_config_text = canonical_config_text
        self.rng = random.Random(cfg.seed)
        self.keyring = Keyring(cfg.sig_scheme, cfg.n, cfg.seed)
        self.mutations = Mutations.parse(cfg.mutation)
        self.now = 0
        self.events: list[dict] = []
        self._queue: list = []
        self._seq: dict[int, int] = {}
        self._mid = 0
        self._complete = False
        self._incomplete_reason = ""

        by_target: dict[str, list[AdversarySpec]] = {}
        for spec in cfg.adversaries:
            by_target.setdefault(spec.target, []).append(spec)

        self.validators = [ValidatorNode(self, i, by_target.get(f"v{i}", [])) for i in range(cfg.n)]
        self.proposers = [ProposerNode(self, i, by_target.get(f"p{i}", [])) for i in range(cfg.proposer_count)]
        self.nodes = {node.node_id: node for node in self.validators + self.proposers}
        self._ranks = {node.node_id: rank for rank, node in enumerate(self.validators + self.proposers)}
        self._flood_seen: dict[str, set[str]] = {nid: set() for nid in self.nodes}
        self.peers: dict[str, list[str]] = {}
        if cfg.topology == "relay":
            self.peers = self._build_expander()
        self.correct = cfg.correct_validators()

    # -- topology ---------------------------------------------------------------

    def _build_expander(self) -> dict[str, list[str]]:
        """Fixed pseudo-random expander over all nodes; O(log N) hops."""
        ids = [node.node_id for node in self.validators + self.proposers]
        total = len(ids)
        rng = random.Random((self.cfg.seed << 8) ^ 0x70707070)
        degree = max(2, round(math.log2(total)))
        for _ in range(200):
            edges: dict[str, set[str]] = {nid: set() for nid in ids}
            ring = list(ids)
            rng.shuffle(ring)
            for i, nid in enumerate(ring):  # ring backbone keeps it connected
                edges[nid].add(ring[(i + 1) % total])
                edges[ring[(i + 1) % total]].add(nid)
            for nid in ids:
                while len(edges[nid]) < degree:
                    other = ids[rng.randrange(total)]
                    if other != nid:
                        edges[nid].add(other)
                        edges[other].add(nid)
            if self._connected(edges, ids):
                return {nid: sorted(edges[nid]) for nid in ids}
        raise RuntimeError("could not build a connected relay topology")

    @staticmethod
    def _connected(edges: dict[str, set[str]], ids: list[str]) -> bool:
        seen = {ids[0]}
        stack = [ids[0]]
        while stack:
            for peer in edges[stack.pop()]:
                if peer not in seen:
                    seen.add(peer)
                    stack.append(peer)
        return len(seen) == len(ids)

    def _bfs_path(self, src: str, dst: str) -> list[str] | None:
        """Shortest relay path over currently alive nodes, deterministic."""
        if src == dst:
            return [src]
        prev = {src: src}
        frontier = [src]
        while frontier:
            nxt = []
            for nid in frontier:
                for peer in self.peers[nid]:
                    if peer in prev or self.nodes[peer].crashed:
                        continue
                    prev[peer] = nid
                    if peer == dst:
                        path = [dst]
                        while path[-1] != src:
                            path.append(prev[path[-1]])
                        return list(reversed(path))
                    nxt.append(peer)
            frontier = nxt
        return None

    # -- event queue --------------------------------------------------------------

    def _push(self, time: int, origin: str, item: tuple) -> None:
        rank = self._ranks[origin]
        seq = self._seq.get(rank, 0)
        self._seq[rank] = seq + 1
        heapq.heappush(self._queue, ((time, rank, seq), item))

    def schedule_timer(self, node, delay: int, name: str, data: dict) -> None:
        self._push(self.now + delay, node.node_id, ("timer", node.node_id, name, data))

    def _hop_delay(self) -> int:
        if self.now >= self.cfg.gst:
            return self.rng.randint(1, self.cfg.delta)
        horizon = (self.cfg.gst - self.now) + 10 * self.cfg.delta
        return self.rng.randint(1, horizon)

    def trace_event(self, record: dict) -> None:
        self.events.append(record)

    def _new_mid(self) -> str:
        self._mid += 1
        return f"{self._mid:012x}"

    # -- transport -------------------------------------------------------------------

    def _transmit(self, transmitter: str, to: str, msg, mid: str, size: int, origin: str, hops: int, flood: bool) -> None:
        fields = _msg_trace_fields(msg)
        self.trace_event({"kind": "send", "t": self.now, "node": transmitter, "to": to,
                          "msg": msg_kind(msg), "mid": mid, "size": size, "origin": origin, **fields})
        self._push(self.now + self._hop_delay(), transmitter,
                   ("deliver", to, msg, mid, size, origin, hops, flood))

    def broadcast(self, origin_node, msg) -> None:
        """Best-effort broadcast toward every validator (self excluded)."""
        mid = self._new_mid()
        size = msg_size(msg)
        nid = origin_node.node_id
        if self.cfg.topology == "direct":
            for v in self.validators:
                if v.node_id != nid:
                    self._transmit(nid, v.node_id, msg, mid, size, nid, 1, flood=False)
        else:
            self._flood_seen[nid].add(mid)
            for peer in self.peers[nid]:
                self._transmit(nid, peer, msg, mid, size, nid, 1, flood=True)

    def multicast(self, origin_node, msg, targets: list[str]) -> None:
        """Point-to-point fan-out to an explicit target list (adversarial sends)."""
        mid = self._new_mid()
        size = msg_size(msg)
        for target in targets:
            self.unicast(origin_node, msg, target, mid=mid, size=size)

    def unicast(self, origin_node, msg, target: str, mid: str | None = None, size: int | None = None) -> None:
        nid = origin_node.node_id
        if target == nid:
            return
        mid = mid or self._new_mid()
        size = size if size is not None else msg_size(msg)
        if self.cfg.topology == "direct":
            self._transmit(nid, target, msg, mid, size, nid, 1, flood=False)
            return
        path = self._bfs_path(nid, target)
        if path is None:
            self.trace_event({"kind": "drop", "t": self.now, "node": nid, "reason": "no_route", "detail": target})
            return
        self._push(self.now, nid, ("route", tuple(path), 0, msg, mid, size, nid))

    # -- main loop ----------------------------------------------------------------------

    def run(self) -> Trace:
        self._bootstrap()
        budget = self.cfg.time_budget
        while self._queue:
            (time, _, _), item = heapq.heappop(self._queue)
            if time > budget:
                self._incomplete_reason = "time_budget_exceeded"
                break
            self.now = time
            self._dispatch(item)
            if self._complete:
                break
        else:
            self._incomplete_reason = "queue_exhausted"
        self.trace_event({
            "kind": "end",
            "t": self.now,
            "complete": self._complete,
            "reason": "finalized_all" if self._complete else self._incomplete_reason,
            "finalized": {v.node_id: v.max_finalized for v in self.validators},
        })
        return Trace(self._header(), self.events)

    def _bootstrap(self) -> None:
        for spec in self.cfg.adversaries:
            if spec.behavior == "crash":
                if spec.at <= 0:
                    # applies before any node acts, not racing the first height
                    self.nodes[spec.target].crashed = True
                    self.trace_event({"kind": "crash", "t": 0, "node": spec.target})
                else:
                    self._push(spec.at, spec.target, ("crash", spec.target))
                if spec.restart >= 0:
                    self._push(spec.restart, spec.target, ("restart", spec.target))
        for proposer in self.proposers:
            if not proposer.crashed:
                proposer.schedule_first_emission()
        for v in self.validators:
            if not v.crashed:
                v.begin_height(1)

    def _dispatch(self, item: tuple) -> None:
        kind = item[0]
        if kind == "deliver":
            _, to, msg, mid, size, origin, hops, flood = item
            node = self.nodes[to]
            if node.crashed:
                return
            if flood:
                seen = self._flood_seen[to]
                if mid in seen:
                    return
                seen.add(mid)
                for peer in self.peers[to]:
                    if peer != origin:
                        self._transmit(to, peer, msg, mid, size, origin, hops + 1, flood=True)
            fields = _msg_trace_fields(msg)
            if node.consumes(msg):
                self.trace_event({"kind": "deliver", "t": self.now, "node": to, "from": origin,
                                  "msg": msg_kind(msg), "mid": mid, "size": size, "hops": hops, **fields})
                node.on_message(msg)
        elif kind == "route":
            _, path, idx, msg, mid, size, origin = item
            hop = path[idx]
            if self.nodes[hop].crashed and hop != origin:
                return
            if idx + 1 == len(path):
                return
            nxt = path[idx + 1]
            fields = _msg_trace_fields(msg)
            self.trace_event({"kind": "send", "t": self.now, "node": hop, "to": nxt,
                              "msg": msg_kind(msg), "mid": mid, "size": size, "origin": origin, **fields})
            if idx + 2 == len(path):
                self._push(self.now + self._hop_delay(), hop, ("deliver", nxt, msg, mid, size, origin, idx + 1, False))
            else:
                self._push(self.now + self._hop_delay(), hop, ("route", path, idx + 1, msg, mid, size, origin))
        elif kind == "timer":
            _, nid, name, data = item
            node = self.nodes[nid]
            if not node.crashed:
                node.on_timer(name, data)
        elif kind == "crash":
            node = self.nodes[item[1]]
            node.crashed = True
            self.trace_event({"kind": "crash", "t": self.now, "node": node.node_id})
        elif kind == "restart":
            node = self.nodes[item[1]]
            node.crashed = False
            self.trace_event({"kind": "restart", "t": self.now, "node": node.node_id})
            node.on_restart()

    def note_finalized(self) -> None:
        target = self.cfg.max_heights
        if all(self.validators[i].max_finalized >= target for i in self.correct):
            self._complete = True

    # -- header -----------------------------------------------------------------------------

    def _header(self) -> dict:
        cfg = self.cfg
        return {
            "kind": "header",
            "format": 1,
            "hash": "sha256",
            "sig_scheme": cfg.sig_scheme,
            "verify_keys": [k.hex() for k in self.keyring.verify_keys],
            "seed": cfg.seed,
            "config_digest": config_digest(self.canonical_config_text),
            "n": cfg.n,
            "f": cfg.f,
            "correct": self.correct,
            "max_heights": cfg.max_heights,
            "max_extension_ids": cfg.max_extension_ids,
            "gst": cfg.gst,
            "delta": cfg.delta,
            "config": self.canonical_config_text,
        }


def run_simulation(cfg: SimConfig, canonical_config_text: str = "") -> Trace:
    return Simulation(cfg, canonical_config_text).run()
