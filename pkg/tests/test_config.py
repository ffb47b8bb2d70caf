import json

import pytest

from zgrsim.config import (
    KEYS,
    apply_overrides,
    config_from_dict,
    config_to_dict,
    load_config,
    load_pipeline_file,
    save_config,
    with_mode,
)
from zgrsim.errors import ConfigError


def test_defaults_roundtrip(tmp_path):
    cfg = config_from_dict({})
    flat = config_to_dict(cfg)
    assert set(flat) == set(KEYS)
    assert list(flat) == sorted(flat)
    for name in ("c.yaml", "c.json"):
        save_config(cfg, tmp_path / name)
        assert load_config(tmp_path / name) == cfg


def test_nested_and_dotted_forms_agree(tmp_path):
    (tmp_path / "a.yaml").write_text("federation:\n  gamma: 3\n  eta: 0.01\ndtc:\n  bits: 8\n")
    (tmp_path / "b.json").write_text(json.dumps({"federation.gamma": 3, "federation.eta": 0.01, "dtc.bits": 8}))
    a, b = load_config(tmp_path / "a.yaml"), load_config(tmp_path / "b.json")
    assert a == b and a.federation.gamma == 3 and a.system.dtc_bits == 8


def test_mode_propagates():
    cfg = config_from_dict({"mode": "pure_zoo"})
    assert cfg.federation.mode == "pure_zoo"
    assert with_mode(cfg, "zgr").federation.mode == "zgr"


@pytest.mark.parametrize("bad, key", [
    ({"federation.gama": 3}, "federation.gama"),
    ({"federation.gamma": "x"}, "federation.gamma"),
    ({"federation.gamma": 2.5}, "federation.gamma"),
    ({"federation.alpha": 2.0}, "federation.alpha"),
    ({"mode": "other"}, "mode"),
    ({"model.arch": [5, 10]}, "model.arch"),
    ({"federation.gamma": 500}, "federation.gamma"),
    ({"federation.local_epochs": 2}, "federation.local_epochs"),
    ({"federation.eta": None}, "federation.eta"),
    ({"pipeline.enabled": "yes"}, "pipeline.enabled"),
    ({"dtc.omega": 1.5}, "dtc.omega"),
])
def test_invalid_values_name_the_key(bad, key):
    with pytest.raises(ConfigError) as info:
        config_from_dict(bad)
    assert info.value.key == key


def test_overrides():
    cfg = apply_overrides(config_from_dict({}), {"federation.K": 4, "dtc.enabled": False})
    assert cfg.federation.K == 4 and not cfg.system.dtc


def test_bad_files(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.yaml")
    (tmp_path / "x.yaml").write_text("- 1\n- 2\n")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "x.yaml")
    (tmp_path / "y.json").write_text("{bad")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "y.json")


def test_pipeline_file(tmp_path):
    p = tmp_path / "p.yaml"
    p.write_text("pipeline:\n  L: 4\n  T_cs: 8\n  T_t: 2\n  T_cc: 1\n  transfer: cut_through\nmemory:\n  Mem0: 10\n")
    spec, mem, transfer = load_pipeline_file(p)
    assert spec.L == 4 and transfer == "cut_through" and mem.L == 4
    p.write_text("pipeline:\n  t_cs: [1, 2]\n  t_t: [1, 1]\n  t_cc: [0.5, 0.5]\n")
    spec, mem, _ = load_pipeline_file(p)
    assert spec.T_cs == 3 and mem is None
    p.write_text("other: 1\n")
    with pytest.raises(ConfigError):
        load_pipeline_file(p)


def test_minimal_config_defaults(tmp_path):
    p = tmp_path / "min.yaml"
    p.write_text("model.arch: [100, 10]\ndataset.kind: gaussian_mixture\n")
    cfg = load_config(p)
    assert cfg.federation.alpha == 0.5
    assert cfg.federation.eta == 0.1
    assert cfg.local_epochs == 1
    assert cfg.system.bandwidth_Bps == 1.25e6  # 10 Mbit/s
