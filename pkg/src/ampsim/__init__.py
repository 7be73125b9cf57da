"""Multi-proposer block construction over a Tendermint-style consensus core,
with a deterministic discrete-event simulator and trace-based property checkers.
"""

from .amp import (
    AmpLimits,
    AmpValidator,
    Mutations,
    sort_transactions,
    sound_ids,
    valid_commit,
    valid_payload,
    verify_vote_extension,
)
from .consensus import assembler_for
from .scenario import load_config, parse_config, render_config, simulate
from .simnet import ConfigError, SimConfig, Simulation, run_simulation
from .types import (
    NIL,
    CommitCertificate,
    Payload,
    Precommit,
    Transaction,
    VoteExtension,
    block_digest,
    canonical_encode,
    payload_id,
)

__all__ = [
    "AmpLimits",
    "AmpValidator",
    "CommitCertificate",
    "ConfigError",
    "Mutations",
    "NIL",
    "Payload",
    "Precommit",
    "SimConfig",
    "Simulation",
    "Transaction",
    "VoteExtension",
    "assembler_for",
    "block_digest",
    "canonical_encode",
    "load_config",
    "parse_config",
    "payload_id",
    "render_config",
    "run_simulation",
    "simulate",
    "sort_transactions",
    "sound_ids",
    "valid_commit",
    "valid_payload",
    "verify_vote_extension",
]
