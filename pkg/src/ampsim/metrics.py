"""Complexity accounting over recorded traces.

Per height: decide round, communication-step count from payload broadcast
to finalization, message and byte counts grouped by message kind, payloads
finalized, duplicate payload deliveries.

Step accounting for a payload finalized at height h: one dissemination
step, one attestation step (the extension-bearing precommit exchange of
height h-1), then three consensus steps (propose, prevote, precommit) per
round of height h. Good case: 1 + 1 + 3 = 5. The trace keeps the raw
send/deliver chains, so the figure is auditable event by event.
"""

from __future__ import annotations

from .trace import Trace

CONSENSUS_MSGS = ("proposal", "prevote", "precommit")


def measure(trace: Trace) -> dict:
    if not trace.complete:
        raise ValueError("cannot measure an incomplete trace")
    header = trace.header
    correct = set(header["correct"])
    correct_ids = {f"v{i}" for i in correct}
    max_heights = header["max_heights"]

    decide_round: dict[int, int] = {}
    decide_time: dict[int, int] = {}
    for e in trace.iter("decide"):
        if e["node"] in correct_ids:
            h = e["h"]
            decide_round[h] = min(decide_round.get(h, e["r"]), e["r"])
            decide_time[h] = min(decide_time.get(h, e["t"]), e["t"])

    finalized_pids: dict[int, list[str]] = {}
    for e in trace.iter("finalize"):
        if e["node"] in correct_ids and e["h"] not in finalized_pids:
            finalized_pids[e["h"]] = e["pids"]

    # Attestation evidence: which ids each correct validator put in its
    # extensions, per height; a payload attested by every correct validator
    # before its decision round qualifies for the good-case step count.
    attested: dict[int, dict[str, set[str]]] = {}
    for e in trace.iter("extend"):
        if e["node"] in correct_ids:
            attested.setdefault(e["h"], {}).setdefault(e["node"], set()).update(e["ids"])

    payload_steps: dict[str, int | None] = {}
    for h, pids in finalized_pids.items():
        h_att = h - 1
        per_validator = attested.get(h_att, {})
        for pid in pids:
            if len(correct_ids) > 0 and all(pid in per_validator.get(v, set()) for v in correct_ids):
                payload_steps[pid] = 2 + 3 * (decide_round.get(h, 0) + 1)
            else:
                payload_steps[pid] = None  # recovered or partially-attested path

    # Height boundaries for attributing dissemination traffic: a height's
    # window ends at the earliest correct decision for it.
    boundaries = [decide_time.get(h) for h in range(1, max_heights + 1)]

    def height_of_time(t: int) -> int:
        for h, b in enumerate(boundaries, start=1):
            if b is None or t <= b:
                return h
        return max_heights

    msgs = {h: 0 for h in range(1, max_heights + 1)}
    bytes_ = {h: 0 for h in range(1, max_heights + 1)}
    by_kind: dict[str, int] = {}
    for e in trace.iter("send"):
        h = e["h"] if e["msg"] in CONSENSUS_MSGS else height_of_time(e["t"])
        if h in msgs:
            msgs[h] += 1
            bytes_[h] += e["size"]
        by_kind[e["msg"]] = by_kind.get(e["msg"], 0) + 1

    duplicates = {h: 0 for h in range(1, max_heights + 1)}
    seen_payloads: set[tuple[str, str]] = set()
    for e in trace.iter("deliver"):
        if e["msg"] in ("payload", "retransmit_response") and "pid" in e:
            key = (e["node"], e["pid"])
            if key in seen_payloads:
                h = height_of_time(e["t"])
                if h in duplicates:
                    duplicates[h] += 1
            else:
                seen_payloads.add(key)

    heights = []
    for h in range(1, max_heights + 1):
        pids = finalized_pids.get(h, [])
        steps = [payload_steps[p] for p in pids]
        good = [s for s in steps if s is not None]
        heights.append(
            {
                "height": h,
                "decide_round": decide_round.get(h),
                "steps_to_finalize": max(good) if good and len(good) == len(steps) else None,
                "msgs": msgs.get(h, 0),
                "bytes": bytes_.get(h, 0),
                "payloads_finalized": len(pids),
                "duplicates": duplicates.get(h, 0),
            }
        )

    total_msgs = sum(r["msgs"] for r in heights)
    total_bytes = sum(r["bytes"] for r in heights)
    return {
        "heights": heights,
        "payload_steps": payload_steps,
        "totals": {
            "heights": max_heights,
            "msgs": total_msgs,
            "bytes": total_bytes,
            "msgs_per_height": total_msgs / max_heights,
            "bytes_per_height": total_bytes / max_heights,
            "msgs_by_kind": dict(sorted(by_kind.items())),
        },
    }
