"""Trace records: the simulator's only durable output.

A trace is line-delimited JSON, one event per line, in a single total
order. The first line is a header naming the hash scheme, the signature
scheme plus verification keys, the config digest and seed, and the derived
set of correct validators; everything a checker needs is in the file.
Replaying a (config, seed) pair reproduces the identical bytes.

Stable field names
------------------
header   kind, format, hash, sig_scheme, verify_keys, seed, config_digest,
         n, f, correct, max_heights, max_extension_ids, gst, delta, config
send     t, node, to, msg, mid, size, origin [, h, r, vid, pid, pids]
deliver  t, node, from, msg, mid, size, hops [, h, r, vid, pid, pids]
drop     t, node, reason [, detail]
accept   t, node, pid
timeout  t, node, which, h, r
propose  t, node, h, r, vr, vid, exts ("empty" or {signer: [pid..]})
extend   t, node, h, r, ids
equivocation  t, node, signer, h, r, msg
decide   t, node, h, r, vid, value ("empty" or cert), commit (cert), sound
finalize t, node, h, block, pids, txs
crash / restart  t, node
end      t, complete, reason, finalized

Certificates appear as {"h","r","vid","pc":[{"s","sig","ids","esig"}..]};
hex throughout.
"""

from __future__ import annotations

import json
from typing import Iterator, Optional

from .types import CommitCertificate, Precommit, VoteExtension


def dumps(record: dict) -> str:
    return json.dumps(record, sort_keys=True, separators=(",", ":"))


def cert_to_json(cert: Optional[CommitCertificate]):
    if cert is None:
        return "empty"
    return {
        "h": cert.height,
        "r": cert.round,
        "vid": cert.value_id.hex(),
        "pc": [
            {
                "s": pc.signer,
                "sig": pc.signature.hex(),
                "ids": [i.hex() for i in pc.extension.ids] if pc.extension else None,
                "esig": pc.extension.signature.hex() if pc.extension else None,
            }
            for pc in cert.precommits
        ],
    }


def cert_from_json(obj) -> Optional[CommitCertificate]:
    if obj == "empty":
        return None
    vid = bytes.fromhex(obj["vid"])
    pcs = []
    for entry in obj["pc"]:
        ext = None
        if entry["ids"] is not None:
            ext = VoteExtension(
                tuple(bytes.fromhex(i) for i in entry["ids"]),
                entry["s"],
                bytes.fromhex(entry["esig"]),
            )
        pcs.append(Precommit(obj["h"], obj["r"], vid, entry["s"], bytes.fromhex(entry["sig"]), ext))
    return CommitCertificate(obj["h"], obj["r"], vid, tuple(pcs))


class Trace:
    def __init__(self, header: dict, events: list[dict]):
        self.header = header
        self.events = events

    @property
    def complete(self) -> bool:
        return bool(self.events) and self.events[-1].get("kind") == "end" and self.events[-1]["complete"]

    def to_bytes(self) -> bytes:
        lines = [dumps(self.header)]
        lines.extend(dumps(e) for e in self.events)
        return ("\n".join(lines) + "\n").encode("utf-8")

    def iter(self, kind: str) -> Iterator[dict]:
        return (e for e in self.events if e["kind"] == kind)


class TraceParseError(ValueError):
    pass


def load_trace(path: str) -> Trace:
    with open(path, "rb") as fh:
        return parse_trace(fh.read())


def parse_trace(data: bytes) -> Trace:
    lines = data.decode("utf-8").splitlines()
    if not lines:
        raise TraceParseError("empty trace file")
    try:
        header = json.loads(lines[0])
        events = [json.loads(line) for line in lines[1:] if line]
    except json.JSONDecodeError as e:
        raise TraceParseError(f"malformed trace line: {e}") from e
    if header.get("kind") != "header":
        raise TraceParseError("first record is not a trace header")
    return Trace(header, events)
