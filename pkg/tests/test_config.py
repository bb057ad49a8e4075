import json

import pytest

from manoma.config import ScenarioConfig, dbm_to_mw, load_config, save_config
from manoma.errors import ConfigError


def test_published_defaults():
    cfg = ScenarioConfig()
    assert (cfg.A, cfg.D, cfg.sigma2, cfg.R_min) == (3.0, 0.5, -80.0, 0.25)
    assert (cfg.pathloss_ref_db, cfg.pathloss_exponent, cfg.distance_range_m) == (-30.0, 2.8, (50.0, 100.0))
    assert cfg.noise_mw == pytest.approx(1e-8)
    assert cfg.power_mw == pytest.approx(10.0)


@pytest.mark.parametrize(
    "changes",
    [{"M": 0}, {"A": -1.0}, {"D": 0.0}, {"trials": 0}, {"order_policy": "random"},
     {"distance_range_m": (100.0, 50.0)}, {"R_min": -0.1}, {"eps": 0.0}, {"P_s": float("inf")}],
)
def test_invalid_fields_rejected(changes):
    with pytest.raises(ConfigError):
        ScenarioConfig().replace(**changes)


def test_hash_ignores_key_order_and_tracks_values():
    d = ScenarioConfig().to_dict()
    shuffled = dict(reversed(list(d.items())))
    assert ScenarioConfig.from_dict(shuffled).config_hash() == ScenarioConfig().config_hash()
    assert ScenarioConfig(P_s=11.0).config_hash() != ScenarioConfig().config_hash()


def test_unknown_key_rejected():
    with pytest.raises(ConfigError, match="unknown"):
        ScenarioConfig.from_dict({"Mx": 3})


def test_yaml_round_trip(tmp_path):
    cfg = ScenarioConfig(M=2, P_s=15.0, distance_range_m=(60.0, 80.0))
    path = tmp_path / "cfg.yaml"
    save_config(cfg, path)
    assert load_config(path) == cfg


def test_json_file_accepted(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"K": 2, "T_max": 10.0}))
    cfg = load_config(path)
    assert cfg.K == 2 and cfg.T_max == 10


def test_dbm():
    assert dbm_to_mw(0.0) == 1.0
    assert dbm_to_mw(20.0) == pytest.approx(100.0)
