"""Strict INI configuration parsing."""

import pathlib

import pytest

from mzisim.config import (
    ConfigError,
    config_digest,
    default_config,
    load_config,
    parse_config,
)


def test_defaults():
    cfg = default_config()
    assert cfg.weights_mode == "pcm"
    assert cfg.material.num_levels == 256
    assert cfg.material.fom == pytest.approx(30.0)
    assert cfg.timing.symbol_period_ps == 20
    assert cfg.imperfections.pcm_levels is None
    assert cfg.arch == "clements"
    assert cfg.seed == 0
    assert cfg.weights_file is None
    assert cfg.host_input_addr == 0x10000


def test_digest_is_12_hex_chars_and_text_sensitive():
    d1 = config_digest("[run]\nseed = 1\n")
    d2 = config_digest("[run]\nseed = 2\n")
    assert len(d1) == 12 and all(c in "0123456789abcdef" for c in d1)
    assert d1 != d2
    cfg = parse_config("[run]\nseed = 1\n")
    assert cfg.digest == d1


def test_overlay_keeps_unmentioned_defaults():
    cfg = parse_config("[material]\nnum_levels = 16\n")
    assert cfg.material.num_levels == 16
    assert cfg.material.delta_n == 0.3
    assert cfg.timing.bus_cycle_ps == 1000


def test_unknown_section_and_key_rejected():
    with pytest.raises(ConfigError, match=r"unknown section \[lasers\]"):
        parse_config("[lasers]\npower = 9\n")
    with pytest.raises(ConfigError, match="unknown key 'colour'"):
        parse_config("[material]\ncolour = blue\n")


def test_bad_values_rejected():
    with pytest.raises(ConfigError, match="bad value"):
        parse_config("[material]\nnum_levels = many\n")
    with pytest.raises(ConfigError, match="weights_mode"):
        parse_config("[material]\nweights_mode = flash\n")
    with pytest.raises(ConfigError, match="arch"):
        parse_config("[run]\narch = triangle\n")
    with pytest.raises(ConfigError, match="cannot parse"):
        parse_config("material]\nbroken\n")
    # values that parse but violate model constraints surface as ConfigError
    with pytest.raises(ConfigError, match="num_levels"):
        parse_config("[material]\nnum_levels = 1\n")
    with pytest.raises(ConfigError):
        parse_config("[timing]\nbus_cycle_ps = 0\n")


def test_hex_addresses_and_optional_ints():
    cfg = parse_config("[paths]\nhost_weights_addr = 0x2000\n[imperfections]\npcm_levels = 64\n")
    assert cfg.host_weights_addr == 0x2000
    assert cfg.imperfections.pcm_levels == 64
    cfg2 = parse_config("[imperfections]\npcm_levels =\n")
    assert cfg2.imperfections.pcm_levels is None


def test_device_models_construction():
    cfg = parse_config("[material]\nweights_mode = thermo\np_pi_w = 0.05\n")
    models = cfg.device_models()
    assert models.weights_mode == "thermo"
    assert models.thermo.p_pi_w == 0.05
    assert models.pcm.num_levels == 256
    assert models.detector.mode == "coherent"


def test_load_config_reads_files(tmp_path):
    p = tmp_path / "run.ini"
    p.write_text("[run]\nseed = 7\n", encoding="utf-8")
    cfg = load_config(str(p))
    assert cfg.seed == 7


def test_shipped_config_files_parse():
    root = pathlib.Path(__file__).resolve().parent.parent / "configs"
    for name in ("pcm_default.ini", "thermo_baseline.ini"):
        cfg = load_config(str(root / name))
        assert cfg.material.num_levels >= 2
    assert load_config(str(root / "pcm_default.ini")).weights_mode == "pcm"
    assert load_config(str(root / "thermo_baseline.ini")).weights_mode == "thermo"
