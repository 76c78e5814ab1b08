import numpy as np
import pytest

from factory_urllc import baselines, channel
from factory_urllc.baselines import PolicyKind
from factory_urllc.config import from_dict
from factory_urllc.env import FactoryEnv, phase1_sinr, shannon_rate

from .oracles import best_sum_rate

AP_GRID = np.array([(10.0, 10.0), (10.0, 30.0), (30.0, 10.0), (30.0, 30.0)])


def env_with(*overrides, seed=4, payload=60):
    env = FactoryEnv(from_dict({}, list(overrides)), seed=seed)
    env.reset_episode(payload)
    return env


def joint_sum_rate(env, actions):
    return float(np.sum(shannon_rate(phase1_sinr(actions, env.gains, env.noise_w), env.bandwidth_hz)))


def test_nearest_ap():
    assert baselines.nearest_aps([(10.0, 10.1)], AP_GRID).tolist() == [0]
    assert baselines.nearest_aps([(29.0, 31.0), (20.0, 20.0)], AP_GRID).tolist() == [3, 0]


def test_random_nearest_properties():
    env = env_with()
    rng = np.random.default_rng(0)
    nearest = baselines.nearest_aps(env.leader_positions, env.topology.ap_positions)
    counts = np.zeros(env.n_subbands)
    draws = 25_000  # four leaders per call: 10^5 sub-band draws
    for _ in range(draws):
        acts = baselines.random_nearest(env, rng)
        for n, a in enumerate(acts):
            assert a.ap_subset == (int(nearest[n]),)
            counts[a.subband] += 1
    freq = counts / counts.sum()
    np.testing.assert_allclose(freq, 1.0 / env.n_subbands, rtol=0.01)


def test_exhaustive_matches_oracle():
    rng = np.random.default_rng(11)
    levels = (-100.0, 20.0, 25.0, 30.0)
    for trial in range(100):
        env = env_with(seed=trial)
        env.gains = env.gains * rng.exponential(size=env.gains.shape)
        acts = baselines.centralized_exhaustive(env)
        aps = baselines.nearest_aps(env.leader_positions, env.topology.ap_positions)
        best, _ = best_sum_rate(list(aps), env.gains, env.noise_w, env.bandwidth_hz, levels, env.n_subbands)
        assert joint_sum_rate(env, acts) == pytest.approx(best, rel=1e-9)
        assert [a.ap_subset for a in acts] == [(int(k),) for k in aps]


def test_exhaustive_single_leader_uses_max_power():
    env = env_with("topology.n_clusters=1", "topology.n_subbands=2", "topology.allow_any_subbands=true")
    (act,) = baselines.centralized_exhaustive(env)
    k = int(baselines.nearest_aps(env.leader_positions, env.topology.ap_positions)[0])
    assert act.power_dbm == 30.0
    assert act.subband == int(np.argmax(env.gains[k, 0, :]))


def test_best_response_reaches_a_fixed_point():
    env = env_with("topology.n_clusters=8")
    assert env.n_subbands == 4
    acts = baselines.centralized_exhaustive(env, rng=np.random.default_rng(3))
    base = joint_sum_rate(env, acts)
    for n in range(env.n_leaders):
        for m in range(env.n_subbands):
            for p in env.power_levels_dbm:
                trial = list(acts)
                trial[n] = type(acts[n])(acts[n].ap_subset, m, p)
                assert joint_sum_rate(env, trial) <= base * (1 + 1e-9)


def test_greedy_single():
    env = env_with()
    for n, a in enumerate(baselines.greedy_single(env)):
        assert a.power_dbm == 30.0 and len(a.ap_subset) == 1
        g = env.direct_gain(n)
        assert g[a.ap_subset[0], a.subband] == g.max()


def test_greedy_multi():
    env = env_with()
    for n, a in enumerate(baselines.greedy_multi(env)):
        assert a.power_dbm == 30.0 and len(a.ap_subset) == 2
        g = env.direct_gain(n)
        k, m = np.unravel_index(np.argmax(g), g.shape)
        assert a.subband == m and k in a.ap_subset
        col = np.sort(g[:, m])[::-1]
        assert sorted(g[list(a.ap_subset), m])[::-1] == pytest.approx(col[:2])


def test_greedy_degenerate_space_matches_random_nearest():
    env = env_with(
        "topology.ap_positions=[[20, 20]]", "topology.n_clusters=2", "topology.n_subbands=1",
        "topology.allow_any_subbands=true", "power_levels_dbm=[30]",
    )
    rng = np.random.default_rng(0)
    assert baselines.greedy_single(env) == baselines.random_nearest(env, rng)


@pytest.mark.parametrize("kind", ["random", "central", "greedy1", "greedy2"])
def test_policies_produce_legal_actions(kind):
    cfg = from_dict({})
    policy = baselines.make_policy(kind, cfg)
    env = FactoryEnv(cfg, seed=0, stream_label="eval")
    policy.reset(env)
    env.reset_episode(60)
    while not env.phase1_done:
        acts = policy.act(env)
        assert len(acts) == env.n_leaders
        for a in acts:
            assert 1 <= len(a.ap_subset) <= 2 and 0 <= a.subband < env.n_subbands
            assert a.power_dbm in cfg.power_levels_dbm
        env.phase1_step(acts)


def test_marl_kinds_need_checkpoints():
    with pytest.raises(ValueError):
        baselines.make_policy("marl2", from_dict({}))
    assert PolicyKind("greedy2") is PolicyKind.greedy_multi
    with pytest.raises(ValueError):
        PolicyKind("nope")
