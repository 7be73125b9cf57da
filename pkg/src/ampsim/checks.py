"""Trace-based correctness checkers.

Each property is evaluated purely over a recorded trace (plus the key
material in its header); checkers never touch live node state, and they
re-derive quorum counts, certificate validity, and sound-id sets with
their own brute-force logic rather than calling the protocol code they
are judging. A FAIL always carries a minimal counterexample slice
(the indexes of the trace events that witness the violation).

Properties: agreement, termination, validity, bounded_inclusion,
monotonicity, retransmission_liveness, certificate_soundness,
finalization_order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .codec import DIGEST_SIZE
from .keys import Verifier
from .trace import Trace, cert_from_json
from .types import (
    NIL,
    encode_value,
    extension_signing_bytes,
    precommit_signing_bytes,
    value_id_of,
)

PROPERTIES = [
    "agreement",
    "termination",
    "validity",
    "bounded_inclusion",
    "monotonicity",
    "retransmission_liveness",
    "certificate_soundness",
    "finalization_order",
]


@dataclass
class PropertyResult:
    name: str
    status: str  # PASS | FAIL | N-A
    counterexample: Optional[dict] = None

    def to_json(self) -> dict:
        return {"name": self.name, "status": self.status, "counterexample": self.counterexample}


@dataclass
class PropertyReport:
    results: list[PropertyResult] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(r.status != "FAIL" for r in self.results)

    def failed(self) -> list[PropertyResult]:
        return [r for r in self.results if r.status == "FAIL"]

    def to_json(self) -> dict:
        return {"pass": self.ok, "properties": [r.to_json() for r in self.results]}


class _Index:
    """One pass over the trace, everything the checkers need, with event indexes."""

    def __init__(self, trace: Trace):
        header = trace.header
        self.correct = [f"v{i}" for i in header["correct"]]
        self.f = header["f"]
        self.n = header["n"]
        self.max_heights = header["max_heights"]
        self.max_extension_ids = header.get("max_extension_ids", 1 << 30)
        self.verifier = Verifier(header["sig_scheme"], [bytes.fromhex(k) for k in header["verify_keys"]])
        self.complete = trace.complete
        self.end_reason = trace.events[-1].get("reason") if trace.events else "missing"

        self.n_events = len(trace.events)
        self.finalize: dict[str, dict[int, tuple[int, dict]]] = {}  # node -> h -> (idx, event)
        self.finalize_seq: dict[str, list[tuple[int, dict]]] = {}
        self.finalized_height_of: dict[str, dict[str, int]] = {}  # node -> pid -> height
        self.decide: dict[str, dict[int, tuple[int, dict]]] = {}
        self.extend: dict[str, dict[int, list[tuple[int, dict]]]] = {}
        self.propose: dict[tuple[int, int], tuple[int, dict]] = {}  # (h, r) -> first propose
        self.accepts: dict[str, set[str]] = {}  # node -> pids accepted into pending
        self.payload_first_seen: dict[str, dict[str, int]] = {}  # node -> pid -> event idx
        self.request_sends: dict[str, int] = {}  # node -> first request-send idx

        for idx, e in enumerate(trace.events):
            kind = e["kind"]
            if kind == "finalize":
                self.finalize.setdefault(e["node"], {}).setdefault(e["h"], (idx, e))
                self.finalize_seq.setdefault(e["node"], []).append((idx, e))
                by_pid = self.finalized_height_of.setdefault(e["node"], {})
                for pid in e["pids"]:
                    by_pid.setdefault(pid, e["h"])
            elif kind == "decide":
                self.decide.setdefault(e["node"], {}).setdefault(e["h"], (idx, e))
            elif kind == "extend":
                self.extend.setdefault(e["node"], {}).setdefault(e["h"], []).append((idx, e))
            elif kind == "propose":
                self.propose.setdefault((e["h"], e["r"]), (idx, e))
            elif kind == "accept":
                if e.get("via") == "pending":
                    self.accepts.setdefault(e["node"], set()).add(e["pid"])
            elif kind == "deliver" and e["msg"] in ("payload", "retransmit_response") and "pid" in e:
                self.payload_first_seen.setdefault(e["node"], {}).setdefault(e["pid"], idx)
            elif kind == "send" and e["msg"] == "retransmit_request":
                self.request_sends.setdefault(e["node"], idx)


def _slice(*indexes: int) -> list[int]:
    xs = [i for i in indexes if i is not None]
    return [min(xs), max(xs)] if xs else []


def _sound_from_extensions(exts: dict[int, list[str]], f: int) -> set[str]:
    """Brute-force counting oracle: ids attested by more than f distinct signers."""
    attesters: dict[str, set[int]] = {}
    for signer, ids in exts.items():
        for pid in set(ids):
            attesters.setdefault(pid, set()).add(signer)
    return {pid for pid, who in attesters.items() if len(who) > f}


def _cert_extensions(cert_json: dict) -> dict[int, list[str]]:
    return {pc["s"]: (pc["ids"] or []) for pc in cert_json["pc"]}


def _validate_cert_json(cert_json, expect_height: int, ix: _Index) -> Optional[str]:
    """Independent certificate validity oracle; returns a failure reason or None."""
    if cert_json == "empty":
        return None if expect_height == 0 else "empty value outside first post-genesis height"
    if cert_json["h"] != expect_height:
        return f"certificate height {cert_json['h']} != expected {expect_height}"
    vid = bytes.fromhex(cert_json["vid"])
    if vid == NIL:
        return "certificate for NIL value"
    seen: set[int] = set()
    for pc in cert_json["pc"]:
        signer = pc["s"]
        if signer in seen:
            return f"duplicate signer {signer}"
        if not 0 <= signer < ix.n:
            return f"signer {signer} out of range"
        seen.add(signer)
        if pc["ids"] is None:
            return f"precommit from {signer} lacks an extension"
        ids = [bytes.fromhex(x) for x in pc["ids"]]
        if len(ids) > ix.max_extension_ids:
            return f"extension from {signer} exceeds id limit"
        if any(len(i) != DIGEST_SIZE for i in ids):
            return f"malformed id in extension from {signer}"
        if sorted(set(ids)) != ids:
            return f"extension ids from {signer} not sorted/distinct"
        pmsg = precommit_signing_bytes(cert_json["h"], cert_json["r"], vid, ids)
        if not ix.verifier.verify(signer, pmsg, bytes.fromhex(pc["sig"])):
            return f"bad precommit signature from {signer}"
        emsg = extension_signing_bytes(cert_json["h"], cert_json["r"], vid, ids)
        if not ix.verifier.verify(signer, emsg, bytes.fromhex(pc["esig"])):
            return f"bad extension signature from {signer}"
    if len(seen) < 2 * ix.f + 1:
        return f"only {len(seen)} precommits, quorum is {2 * ix.f + 1}"
    return None


def check_trace(trace: Trace) -> PropertyReport:
    ix = _Index(trace)
    report = PropertyReport()
    report.results.append(_check_agreement(ix))
    report.results.append(_check_termination(ix))
    report.results.append(_check_validity(ix))
    report.results.append(_check_bounded_inclusion(ix))
    report.results.append(_check_monotonicity(ix))
    report.results.append(_check_retransmission(ix))
    report.results.append(_check_certificate_soundness(ix))
    report.results.append(_check_finalization_order(ix))
    return report


def _check_agreement(ix: _Index) -> PropertyResult:
    heights: dict[int, dict[str, tuple[int, str]]] = {}
    for node in ix.correct:
        for h, (idx, e) in ix.finalize.get(node, {}).items():
            heights.setdefault(h, {})[node] = (idx, e["block"])
    for h in sorted(heights):
        blocks = {b for _, b in heights[h].values()}
        if len(blocks) > 1:
            return PropertyResult(
                "agreement",
                "FAIL",
                {
                    "height": h,
                    "blocks": {node: b for node, (_, b) in sorted(heights[h].items())},
                    "events": _slice(*(i for i, _ in heights[h].values())),
                },
            )
    return PropertyResult("agreement", "PASS")


def _check_termination(ix: _Index) -> PropertyResult:
    tail = _slice(ix.n_events - 1)
    if not ix.complete:
        return PropertyResult("termination", "FAIL", {"reason": ix.end_reason, "events": tail})
    for node in ix.correct:
        done = set(ix.finalize.get(node, {}))
        want = set(range(1, ix.max_heights + 1))
        if done != want:
            return PropertyResult(
                "termination", "FAIL",
                {"node": node, "missing_heights": sorted(want - done), "events": tail},
            )
    return PropertyResult("termination", "PASS")


def _check_validity(ix: _Index) -> PropertyResult:
    accepted_by_correct: set[str] = set()
    for node in ix.correct:
        accepted_by_correct |= ix.accepts.get(node, set())
    for node in ix.correct:
        for h, (idx, e) in sorted(ix.finalize.get(node, {}).items()):
            for pid in e["pids"]:
                if pid not in accepted_by_correct:
                    return PropertyResult(
                        "validity",
                        "FAIL",
                        {"node": node, "height": h, "pid": pid,
                         "detail": "finalized payload never validated by any correct validator",
                         "events": _slice(idx)},
                    )
    return PropertyResult("validity", "PASS")


def _check_bounded_inclusion(ix: _Index) -> PropertyResult:
    triggered = False
    for h in range(1, ix.max_heights):  # attestation height; finalization is h+1
        per_validator: dict[str, set[str]] = {}
        evidence: dict[str, int] = {}
        for node in ix.correct:
            ids: set[str] = set()
            for idx, e in ix.extend.get(node, {}).get(h, []):
                ids |= set(e["ids"])
                evidence.setdefault(node, idx)
            per_validator[node] = ids
        if not per_validator or not ix.correct:
            continue
        common = set.intersection(*per_validator.values()) if per_validator else set()
        for pid in sorted(common):
            triggered = True
            for node in ix.correct:
                # Finalization at h+1, or earlier if the id was already sound
                # in one of height h's own proposals.
                fh = ix.finalized_height_of.get(node, {}).get(pid)
                if fh is None or fh > h + 1:
                    entry = ix.finalize.get(node, {}).get(h + 1)
                    return PropertyResult(
                        "bounded_inclusion",
                        "FAIL",
                        {"attested_height": h, "pid": pid, "node": node,
                         "detail": "payload attested by all correct validators missing from next block",
                         "events": _slice(*evidence.values(), entry[0] if entry else None)},
                    )
    return PropertyResult("bounded_inclusion", "PASS" if triggered else "N-A")


def _check_monotonicity(ix: _Index) -> PropertyResult:
    multi_round = False
    for node in ix.correct:
        for h, entries in sorted(ix.extend.get(node, {}).items()):
            if len(entries) < 2:
                continue
            multi_round = True
            ordered = sorted(entries, key=lambda pair: pair[1]["r"])
            for i, (idx_a, ea) in enumerate(ordered):
                for idx_b, eb in ordered[i + 1 :]:
                    r_b = eb["r"]
                    prop = ix.propose.get((h, r_b))
                    exts = prop[1]["exts"] if prop is not None else "empty"
                    if exts == "empty":
                        sound = set()
                    else:
                        sound = _sound_from_extensions({int(s): v for s, v in exts.items()}, ix.f)
                    expected = set(ea["ids"]) - sound
                    if not expected <= set(eb["ids"]):
                        return PropertyResult(
                            "monotonicity",
                            "FAIL",
                            {"node": node, "height": h, "rounds": [ea["r"], r_b],
                             "missing": sorted(expected - set(eb["ids"])),
                             "events": _slice(idx_a, idx_b, prop[0] if prop else None)},
                        )
    return PropertyResult("monotonicity", "PASS" if multi_round else "N-A")


def _check_retransmission(ix: _Index) -> PropertyResult:
    cases = 0
    for node in ix.correct:
        first_seen = ix.payload_first_seen.get(node, {})
        for h, (didx, de) in sorted(ix.decide.get(node, {}).items()):
            # A retransmission case: a sound id whose payload had not been
            # delivered to this validator by decision time.
            recovered = [pid for pid in de["sound"] if first_seen.get(pid, ix.n_events) > didx]
            entry = ix.finalize.get(node, {}).get(h)
            if entry is None:
                return PropertyResult(
                    "retransmission_liveness",
                    "FAIL",
                    {"node": node, "height": h, "detail": "decided height never finalized",
                     "events": _slice(didx)},
                )
            for pid in de["sound"]:
                if pid not in entry[1]["pids"]:
                    return PropertyResult(
                        "retransmission_liveness",
                        "FAIL",
                        {"node": node, "height": h, "pid": pid,
                         "detail": "sound id missing from finalized block",
                         "events": _slice(didx, entry[0])},
                    )
            if recovered and node not in ix.request_sends:
                return PropertyResult(
                    "retransmission_liveness",
                    "FAIL",
                    {"node": node, "height": h, "pid": recovered[0],
                     "detail": "payload was missing at decision time but no request was sent",
                     "events": _slice(didx)},
                )
            cases += len(recovered)
    return PropertyResult("retransmission_liveness", "PASS" if cases > 0 else "N-A")


def _check_certificate_soundness(ix: _Index) -> PropertyResult:
    checked = False
    for node in ix.correct:
        for h, (idx, e) in sorted(ix.decide.get(node, {}).items()):
            checked = True
            reason = _validate_cert_json(e["commit"], h, ix)
            if reason is not None:
                return PropertyResult(
                    "certificate_soundness", "FAIL",
                    {"node": node, "height": h, "which": "commit", "detail": reason, "events": _slice(idx)},
                )
            reason = _validate_cert_json(e["value"], h - 1 if e["value"] != "empty" else 0, ix)
            if reason is not None or (e["value"] == "empty") != (h == 1):
                return PropertyResult(
                    "certificate_soundness", "FAIL",
                    {"node": node, "height": h, "which": "value",
                     "detail": reason or "empty value outside first post-genesis height",
                     "events": _slice(idx)},
                )
            value_bytes = encode_value(cert_from_json(e["value"]))
            if value_id_of(value_bytes).hex() != e["vid"]:
                return PropertyResult(
                    "certificate_soundness", "FAIL",
                    {"node": node, "height": h, "which": "value_digest",
                     "detail": "decided value does not hash to the certified value id",
                     "events": _slice(idx)},
                )
            if e["value"] == "empty":
                oracle_sound: set[str] = set()
            else:
                oracle_sound = _sound_from_extensions(_cert_extensions(e["value"]), ix.f)
            if oracle_sound != set(e["sound"]):
                return PropertyResult(
                    "certificate_soundness", "FAIL",
                    {"node": node, "height": h, "which": "sound_ids",
                     "detail": "recorded sound set disagrees with counting oracle",
                     "oracle": sorted(oracle_sound), "recorded": sorted(e["sound"]),
                     "events": _slice(idx)},
                )
            entry = ix.finalize.get(node, {}).get(h)
            if entry is not None and set(entry[1]["pids"]) != oracle_sound:
                return PropertyResult(
                    "certificate_soundness", "FAIL",
                    {"node": node, "height": h, "which": "finalized_set",
                     "detail": "finalized payload set disagrees with counting oracle",
                     "events": _slice(idx, entry[0])},
                )
    return PropertyResult("certificate_soundness", "PASS" if checked else "N-A")


def _check_finalization_order(ix: _Index) -> PropertyResult:
    for node in ix.correct:
        heights = [e["h"] for _, e in ix.finalize_seq.get(node, [])]
        expect = list(range(1, len(heights) + 1))
        if heights != expect:
            idxs = [i for i, _ in ix.finalize_seq.get(node, [])]
            return PropertyResult(
                "finalization_order", "FAIL",
                {"node": node, "sequence": heights, "events": _slice(*idxs)},
            )
    return PropertyResult("finalization_order", "PASS")
