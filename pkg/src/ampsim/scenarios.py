"""Canonical scenario families for sweeps and acceptance runs.

Each family is a template: (name, SimConfig with seed 0). Instantiate with
`with_seed`. Families cover fault-free operation, crash faults, every
adversary behaviour, pre-GST chaos, contested rounds (timeouts tuned so
prevote quorums straddle round boundaries, producing multi-round vote
extensions), fee ties, and the relay topology, at n=4 and n=7.
"""

from __future__ import annotations

from dataclasses import replace

from .adversary import parse_adversary
from .simnet import SimConfig


def _base(n: int, f: int, **kw) -> SimConfig:
    defaults = dict(
        n=n,
        f=f,
        proposer_count=2,
        gst=0,
        delta=20,
        seed=0,
        topology="direct",
        max_heights=10,
        payload_interval=60,
        payloads_per_proposer=10,
        payload_txs=3,
        fee_max=50,
        timeout_base=400,
        timeout_step=200,
        grace=20,
        pending_max_age=8,
        max_extension_ids=64,
        max_payload_bytes=8192,
        time_budget=200_000,
    )
    defaults.update(kw)
    return SimConfig(**defaults)


def _adv(*specs: str) -> tuple:
    return tuple(parse_adversary(s) for s in specs)


def standard_scenarios() -> list[tuple[str, SimConfig]]:
    out: list[tuple[str, SimConfig]] = []
    for n, f in ((4, 1), (7, 2)):
        v_cen = f"v{2 % n}"
        out.extend(
            [
                (f"fault_free_n{n}", _base(n, f)),
                (f"crash_n{n}", _base(n, f, adversaries=_adv("crash target=v1 at=200"))),
                (
                    f"crash_restart_n{n}",
                    _base(n, f, adversaries=_adv("crash target=v1 at=200 restart=600")),
                ),
                (
                    f"censor_auto_n{n}",
                    _base(n, f, adversaries=_adv(f"censor_assembler target={v_cen} omit_ids=auto")),
                ),
                (
                    f"censor_tight_n{n}",
                    _base(n, f, grace=0, adversaries=_adv(f"censor_assembler target={v_cen} omit_ids=auto")),
                ),
                (
                    f"equivocate_n{n}",
                    _base(
                        n, f, grace=0,
                        adversaries=_adv(
                            "equivocate_proposer target=p0 split="
                            + ",".join(str(i) for i in range(n // 2))
                            + "|"
                            + ",".join(str(i) for i in range(n // 2, n))
                        ),
                    ),
                ),
                (
                    # extreme availability case: one correct holder plus f
                    # byzantine attesters that refuse to retransmit
                    f"selective_n{n}",
                    _base(
                        n, f, proposer_count=1,
                        adversaries=_adv(
                            "selective_dissemination target=p0 reach=0,"
                            + ",".join(str(i) for i in range(n - f, n)),
                            *(f"silent_retransmit target=v{i}" for i in range(n - f, n)),
                        ),
                    ),
                ),
                (
                    f"omit_ext_n{n}",
                    _base(n, f, adversaries=_adv("omit_extension_ids target=v1 ids=all")),
                ),
                (
                    f"spam_n{n}",
                    _base(
                        n, f, payloads_per_proposer=40, payload_interval=30,
                        adversaries=_adv("spam_proposer target=p0 rate=5"),
                    ),
                ),
                (f"gst_n{n}", _base(n, f, gst=1500, delta=20, time_budget=10**6)),
                (f"ties_n{n}", _base(n, f, fee_max=0)),
            ]
        )
    out.extend(
        [
            # Knife-edge propose timeout: some validators prevote NIL while
            # others reach quorum, so rounds fail after extensions were cast.
            ("contested_n4", _base(4, 1, timeout_base=12, timeout_step=20, time_budget=10**6)),
            ("contested_n7", _base(7, 2, timeout_base=12, timeout_step=20, time_budget=10**6)),
            # A payload reaching a single correct validator stays pending and
            # ages out (never sound at f=1 with no byzantine attesters).
            (
                "underattested_n4",
                _base(4, 1, proposer_count=2, adversaries=_adv("selective_dissemination target=p0 reach=0")),
            ),
            ("relay_n4", _base(4, 1, topology="relay", delta=10, grace=10)),
            ("no_payloads_n4", _base(4, 1, proposer_count=0, payloads_per_proposer=0)),
        ]
    )
    return out


def with_seed(cfg: SimConfig, seed: int) -> SimConfig:
    return replace(cfg, seed=seed)


def scaling_scenario(n: int, seed: int = 1) -> SimConfig:
    """Relay-topology config for message-complexity measurements."""
    f = (n - 1) // 3
    return _base(
        n,
        f,
        seed=seed,
        topology="relay",
        proposer_count=n,
        payload_interval=150,
        payloads_per_proposer=8,
        payload_txs=1,
        delta=10,
        grace=10,
        max_heights=6,
        time_budget=500_000,
    )
