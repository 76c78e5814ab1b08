import pytest

from factory_urllc.config import ConfigError, ExperimentConfig, from_dict, load_config, parse_override


def test_defaults_match_the_factory_scenario():
    cfg = from_dict({})
    assert cfg.channel.carrier_freq_ghz == 3.0 and cfg.channel.bandwidth_hz == 1e6
    assert cfg.topology.floor_size_m == (40.0, 40.0)
    assert cfg.topology.n_clusters == 4 and cfg.topology.members_per_cluster == 4
    assert cfg.n_subbands == 2
    assert cfg.topology.speed_mps == 1.0 and cfg.topology.max_member_distance_m == 3.0
    assert cfg.power_levels_dbm == (-100.0, 20.0, 25.0, 30.0)
    assert cfg.channel.noise_figure_db == 5.0 and cfg.channel.noise_psd_dbm_per_hz == -169.0
    assert cfg.timing.latency_s == 1e-3
    assert (cfg.phase1_slots, cfg.phase2_slots) == (4, 2)
    assert min(cfg.payload_bytes) == 20 and max(cfg.payload_bytes) == 100
    assert cfg.rl.episodes == 6000 and cfg.rl.reward_u == 40.0 and cfg.rl.train_payload_bytes == 100


def test_frozen_config_round_trips(tmp_path):
    cfg = from_dict({}, ["rl.gamma=0.5", "topology.n_clusters=6", "seed=7"])
    cfg.dump(tmp_path / "c.yaml")
    again = load_config(tmp_path / "c.yaml")
    assert again == cfg
    assert again.config_hash() == cfg.config_hash()


def test_hash_changes_with_config():
    base = from_dict({})
    assert from_dict({}, ["rl.gamma=0.9"]).config_hash() == base.config_hash()
    assert from_dict({}, ["rl.gamma=0.8"]).config_hash() != base.config_hash()
    assert from_dict({}, ["seed=1"]).config_hash() != base.config_hash()


@pytest.mark.parametrize("override,key", [
    ("rl.bogus=1", "rl.bogus"),
    ("nothing=1", "nothing"),
    ("topology.n_clusters.deep=1", "topology.n_clusters.deep"),
    ("rl.episodes=abc", "rl.episodes"),
    ("rl.episodes=2.5", "rl.episodes"),
])
def test_bad_keys_are_named(override, key):
    with pytest.raises(ConfigError, match=key.replace(".", r"\.")):
        from_dict({}, [override])


def test_semantic_validation():
    with pytest.raises(ConfigError, match="n_subbands"):
        from_dict({}, ["topology.n_clusters=5"])
    from_dict({}, ["topology.n_clusters=5", "topology.allow_any_subbands=true", "topology.n_subbands=3"])
    with pytest.raises(ConfigError, match="policy"):
        from_dict({}, ["policy=best"])
    with pytest.raises(ConfigError):
        from_dict({}, ["topology.ap_positions=[[50, 50]]"])


def test_override_parsing():
    assert parse_override("--rl.gamma=0.9") == ("rl.gamma", 0.9)
    assert parse_override("payload_bytes=[20, 40]") == ("payload_bytes", [20, 40])
    with pytest.raises(ConfigError):
        parse_override("rl.gamma")
    assert from_dict({}, ["payload_bytes=60"]).payload_bytes == (60.0,)


def test_yaml_errors(tmp_path):
    p = tmp_path / "bad.yaml"
    p.write_text("rl: [unclosed")
    with pytest.raises(ConfigError):
        load_config(p)
    assert isinstance(load_config(None), ExperimentConfig)
