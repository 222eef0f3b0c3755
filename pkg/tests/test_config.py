import pytest

from actgap.augmentation import AugmentationSpec
from actgap.config import ConfigError, config_to_text, describe_keys, parse_config, parse_config_text
from actgap.harness import ExperimentConfig


def test_duplicate_n5():
    [cfg] = parse_config_text("env = cartpole\naugmentation = duplicate\nn = 5\n")
    assert cfg.augmentation == AugmentationSpec("duplicate", n=5)
    assert cfg.env == "cartpole" and cfg.arm == "unmodified"


def test_h_out_of_range_names_line():
    with pytest.raises(ConfigError) as info:
        parse_config_text("env = pendulum\naugmentation = semi_duplicate\nh = 1.5\n", "x.cfg")
    assert info.value.line == 3 and info.value.key == "h"
    assert "x.cfg:3" in str(info.value)


def test_empty_file_needs_env():
    with pytest.raises(ConfigError, match="env"):
        parse_config_text("")


def test_unknown_key_rejected():
    with pytest.raises(ConfigError) as info:
        parse_config_text("env = chain\n\nlearning_rte = 0.1\n")
    assert info.value.line == 3 and "learning_rte" in str(info.value)


def test_type_mismatch():
    with pytest.raises(ConfigError) as info:
        parse_config_text("env = chain\nbatch_size = many\n")
    assert info.value.line == 2 and info.value.key == "batch_size"


def test_sections_inherit_globals():
    text = """
# shared
env = pendulum
seeds = 0-2
budget = 1000

[baseline]
arm = baseline

[oracle]
arm = oracle
augmentation = duplicate
n = 5
"""
    base, oracle = parse_config_text(text)
    assert base.name == "baseline" and base.seeds == (0, 1, 2) and base.budget == 1000
    assert oracle.augmentation.n == 5 and oracle.arm == "oracle"


def test_sweeps_expand():
    text = """env = pendulum
[dup]
augmentation = duplicate
sweep.n = 5,15,50
[semi]
augmentation = semi_duplicate
sweep.h = 0.2,0.5,0.8
[base]
arm = baseline
sweep.n = 5,15
"""
    names = [c.name for c in parse_config_text(text)]
    assert names == ["dup_n5", "dup_n15", "dup_n50", "semi_h0.2", "semi_h0.5", "semi_h0.8", "base"]
    assert [c.augmentation.n for c in parse_config_text(text)[:3]] == [5, 15, 50]


def test_invalid_combination_rejected():
    with pytest.raises(ConfigError):
        parse_config_text("env = chain\narm = baseline\naugmentation = noop\n")


def test_duplicate_key_and_section():
    with pytest.raises(ConfigError, match="twice"):
        parse_config_text("env = chain\nenv = chain\n")
    with pytest.raises(ConfigError, match="duplicate section"):
        parse_config_text("env = chain\n[a]\n[a]\n")


def test_roundtrip():
    cfg = ExperimentConfig(env="pendulum", name="semi", arm="oracle",
                           augmentation=AugmentationSpec("semi_duplicate", h=0.2), seeds=(3, 4),
                           alpha=5e-4, hidden=(64, 32), normalize_by_clique=True)
    [back] = parse_config_text(config_to_text(cfg))
    assert back == cfg
    [default] = parse_config_text(config_to_text(ExperimentConfig(env="chain")))
    assert default == ExperimentConfig(env="chain")


def test_parse_config_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        parse_config(tmp_path / "nope.cfg")


def test_every_key_documented():
    text = describe_keys()
    for key in ("env", "sweep.n", "normalize_by_clique", "window"):
        assert key in text
