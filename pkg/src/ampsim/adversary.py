"""Fault and adversary injection.

An AdversarySpec targets exactly one node and overrides part of its
behaviour; it never touches other nodes' state directly. Validator-side
behaviours: CRASH (optionally with RESTART), CENSOR_ASSEMBLER,
OMIT_EXTENSION_IDS, SILENT_RETRANSMIT. Proposer-side behaviours:
EQUIVOCATE_PROPOSER, SELECTIVE_DISSEMINATION, SPAM_PROPOSER.
"""

from __future__ import annotations

from dataclasses import dataclass, field

BEHAVIORS = {
    "crash",
    "censor_assembler",
    "equivocate_proposer",
    "selective_dissemination",
    "omit_extension_ids",
    "spam_proposer",
    "silent_retransmit",
}

# crash faults apply to any node; the rest are role-specific
VALIDATOR_BEHAVIORS = {"crash", "censor_assembler", "omit_extension_ids", "silent_retransmit"}
PROPOSER_BEHAVIORS = {"crash", "equivocate_proposer", "selective_dissemination", "spam_proposer"}


@dataclass(frozen=True)
class AdversarySpec:
    target: str  # node id, e.g. "v2" or "p0"
    behavior: str
    # crash
    at: int = 0
    restart: int = -1  # -1: never
    # censor_assembler
    omit_ids: tuple[str, ...] = ()  # hex payload ids, or ("auto",)
    omit_validators: tuple[int, ...] = ()
    drop: int = -1  # precommits to drop; -1 = up to f
    # equivocate_proposer / selective_dissemination
    split: tuple[tuple[int, ...], tuple[int, ...]] = ((), ())
    reach: tuple[int, ...] = ()
    # spam_proposer
    rate: int = 1
    # omit_extension_ids
    ids: tuple[str, ...] = ("all",)  # hex ids or ("all",)

    def __post_init__(self):
        if self.behavior not in BEHAVIORS:
            raise ValueError(f"unknown adversary behavior: {self.behavior!r}")
        is_validator = self.target.startswith("v")
        if is_validator and self.behavior not in VALIDATOR_BEHAVIORS:
            raise ValueError(f"{self.behavior} cannot target a validator")
        if not is_validator and self.behavior not in PROPOSER_BEHAVIORS:
            raise ValueError(f"{self.behavior} cannot target a proposer")


def parse_adversary(text: str) -> AdversarySpec:
    """Parse one config-file adversary line.

    Format: ``<behavior> target=<node> [key=value ...]``, e.g.
    ``censor_assembler target=v2 omit_ids=auto drop=1`` or
    ``equivocate_proposer target=p0 split=0,1|2,3``.
    """
    parts = text.split()
    if not parts:
        raise ValueError("empty adversary spec")
    behavior = parts[0]
    kwargs: dict = {}
    for item in parts[1:]:
        if "=" not in item:
            raise ValueError(f"malformed adversary field: {item!r}")
        key, value = item.split("=", 1)
        if key == "target":
            kwargs["target"] = value
        elif key in ("at", "restart", "drop", "rate"):
            kwargs[key] = int(value)
        elif key == "omit_ids":
            kwargs["omit_ids"] = ("auto",) if value == "auto" else tuple(value.split(","))
        elif key == "omit_validators":
            kwargs["omit_validators"] = tuple(int(x) for x in value.split(","))
        elif key == "reach":
            kwargs["reach"] = tuple(int(x) for x in value.split(","))
        elif key == "split":
            left, _, right = value.partition("|")
            kwargs["split"] = (
                tuple(int(x) for x in left.split(",") if x != ""),
                tuple(int(x) for x in right.split(",") if x != ""),
            )
        elif key == "ids":
            kwargs["ids"] = ("all",) if value == "all" else tuple(value.split(","))
        else:
            raise ValueError(f"unknown adversary field: {key!r}")
    if "target" not in kwargs:
        raise ValueError("adversary spec needs target=")
    return AdversarySpec(behavior=behavior, **kwargs)


def render_adversary(spec: AdversarySpec) -> str:
    out = [spec.behavior, f"target={spec.target}"]
    if spec.behavior == "crash":
        out.append(f"at={spec.at}")
        if spec.restart >= 0:
            out.append(f"restart={spec.restart}")
    elif spec.behavior == "censor_assembler":
        if spec.omit_ids:
            out.append("omit_ids=" + ",".join(spec.omit_ids))
        if spec.omit_validators:
            out.append("omit_validators=" + ",".join(str(v) for v in spec.omit_validators))
        if spec.drop >= 0:
            out.append(f"drop={spec.drop}")
    elif spec.behavior == "equivocate_proposer":
        left, right = spec.split
        out.append("split=" + ",".join(str(v) for v in left) + "|" + ",".join(str(v) for v in right))
    elif spec.behavior == "selective_dissemination":
        out.append("reach=" + ",".join(str(v) for v in spec.reach))
    elif spec.behavior == "spam_proposer":
        out.append(f"rate={spec.rate}")
    elif spec.behavior == "omit_extension_ids":
        out.append("ids=" + ",".join(spec.ids))
    return " ".join(out)
