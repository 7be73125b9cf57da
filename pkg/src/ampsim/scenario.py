"""Scenario config files: flat key/value text, strictly validated.

Every scalar field must be present exactly once and unknown keys are
errors, so a typo cannot silently fall back to a default. Adversary lines
may repeat (one per spec). The canonical rendering of a config is what the
trace header's config digest covers.

Example::

    n = 4
    f = 1
    ...
    adversary = censor_assembler target=v2 omit_ids=auto
"""

from __future__ import annotations

from .adversary import parse_adversary, render_adversary
from .simnet import ConfigError, SimConfig, Simulation
from .trace import Trace

_INT_KEYS = [
    "n", "f", "proposer_count", "gst", "delta", "seed", "max_heights",
    "payload_interval", "payloads_per_proposer", "payload_txs", "fee_max",
    "timeout_base", "timeout_step", "grace", "pending_max_age",
    "max_extension_ids", "max_payload_bytes", "time_budget",
]
_STR_KEYS = ["topology", "sig_scheme", "mutation"]
_BOOL_KEYS = ["beyond_threshold"]
SCALAR_KEYS = sorted(_INT_KEYS + _STR_KEYS + _BOOL_KEYS)


def parse_config(text: str) -> SimConfig:
    values: dict = {}
    adversaries = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key == "adversary":
            adversaries.append(_parse_adversary(value, lineno))
            continue
        if key not in SCALAR_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        if key in _INT_KEYS:
            try:
                values[key] = int(value)
            except ValueError:
                raise ConfigError(f"line {lineno}: {key} must be an integer") from None
        elif key in _BOOL_KEYS:
            if value not in ("true", "false"):
                raise ConfigError(f"line {lineno}: {key} must be true or false")
            values[key] = value == "true"
        else:
            values[key] = value
    missing = [k for k in SCALAR_KEYS if k not in values]
    if missing:
        raise ConfigError(f"missing config keys: {', '.join(missing)}")
    cfg = SimConfig(adversaries=tuple(adversaries), **values)
    cfg.validate()
    return cfg


def _parse_adversary(value: str, lineno: int):
    try:
        return parse_adversary(value)
    except ValueError as e:
        raise ConfigError(f"line {lineno}: {e}") from None


def render_config(cfg: SimConfig) -> str:
    """Canonical text form; parse(render(cfg)) == cfg."""
    lines = [f"{key} = {_render_value(getattr(cfg, key))}" for key in SCALAR_KEYS]
    lines.extend(f"adversary = {render_adversary(spec)}" for spec in cfg.adversaries)
    return "\n".join(lines) + "\n"


def _render_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    return str(v)


def load_config(path: str) -> SimConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


def simulate(cfg: SimConfig) -> Trace:
    """Run one simulation with the canonical config text in the header."""
    cfg.validate()
    return Simulation(cfg, render_config(cfg)).run()
