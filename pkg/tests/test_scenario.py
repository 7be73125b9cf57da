"""Config file format: strict keys, round-tripping, adversary lines."""

import pytest

from ampsim.adversary import AdversarySpec, parse_adversary, render_adversary
from ampsim.scenario import load_config, parse_config, render_config
from ampsim.scenarios import standard_scenarios, with_seed
from ampsim.simnet import ConfigError, SimConfig


def test_render_parse_round_trip_all_standard_scenarios():
    for name, cfg in standard_scenarios():
        cfg = with_seed(cfg, 3)
        assert parse_config(render_config(cfg)) == cfg, name


def test_unknown_key_rejected():
    text = render_config(SimConfig()) + "mystery = 1\n"
    with pytest.raises(ConfigError, match="unknown key"):
        parse_config(text)


def test_missing_key_rejected():
    text = "\n".join(line for line in render_config(SimConfig()).splitlines() if not line.startswith("delta"))
    with pytest.raises(ConfigError, match="missing config keys"):
        parse_config(text)


def test_duplicate_key_rejected():
    text = render_config(SimConfig()) + "n = 4\n"
    with pytest.raises(ConfigError, match="duplicate"):
        parse_config(text)


def test_non_integer_value_rejected():
    text = render_config(SimConfig()).replace("delta = 20", "delta = soon")
    with pytest.raises(ConfigError, match="integer"):
        parse_config(text)


def test_comments_and_blank_lines_ignored():
    text = "# scenario file\n\n" + render_config(SimConfig())
    assert parse_config(text) == SimConfig()


def test_invalid_config_rejected_at_parse():
    text = render_config(SimConfig()).replace("n = 4", "n = 3")
    with pytest.raises(ConfigError, match="n > 3f"):
        parse_config(text)


def test_adversary_line_round_trip():
    specs = [
        "crash target=v1 at=100",
        "crash target=v1 at=100 restart=300",
        "censor_assembler target=v2 omit_ids=auto",
        "censor_assembler target=v2 omit_validators=0,3 drop=1",
        "equivocate_proposer target=p0 split=0,1|2,3",
        "selective_dissemination target=p0 reach=0,2",
        "spam_proposer target=p1 rate=7",
        "omit_extension_ids target=v3 ids=all",
        "silent_retransmit target=v2",
    ]
    for text in specs:
        spec = parse_adversary(text)
        assert parse_adversary(render_adversary(spec)) == spec


def test_adversary_behavior_target_mismatch():
    with pytest.raises(ValueError, match="cannot target"):
        parse_adversary("spam_proposer target=v1 rate=2")
    with pytest.raises(ValueError, match="cannot target"):
        parse_adversary("censor_assembler target=p0")


def test_adversary_unknown_behavior():
    with pytest.raises(ValueError, match="unknown adversary behavior"):
        AdversarySpec(target="v0", behavior="teleport")


def test_load_config_file(tmp_path):
    path = tmp_path / "a.cfg"
    cfg = with_seed(dict(standard_scenarios())["censor_auto_n4"], 9)
    path.write_text(render_config(cfg))
    assert load_config(str(path)) == cfg
