import math

import numpy as np
import pytest
from scipy import stats

from factory_urllc import channel
from factory_urllc.streams import SeedStreams

A1 = channel.PathLossParams(carrier_freq_ghz=3.0, a_coeff=18.7, b_coeff=46.8, c_coeff=20.0)


def test_path_loss_hand_value():
    # 18.7*1 + 46.8 + 20*log10(0.6), log10(0.6) = -0.2218
    assert channel.path_loss_db(A1, 10.0) == pytest.approx(61.06, abs=0.01)


def test_path_loss_clamped_below_min_distance():
    d0 = A1.min_distance_m
    assert channel.path_loss_db(A1, d0) == channel.path_loss_db(A1, d0 / 2)
    assert channel.path_loss_db(A1, 0.0) == channel.path_loss_db(A1, d0)


def test_path_loss_one_decade_adds_slope():
    diff = channel.path_loss_db(A1, 100.0) - channel.path_loss_db(A1, 10.0)
    assert diff == pytest.approx(18.7, abs=1e-12)


def test_path_loss_monotone():
    d = np.linspace(A1.min_distance_m, 60, 5000)
    assert np.all(np.diff(channel.path_loss_db(A1, d)) >= 0)


@pytest.mark.parametrize("kwargs", [{"carrier_freq_ghz": 0}, {"min_distance_m": 0}])
def test_path_loss_params_validated(kwargs):
    with pytest.raises(ValueError):
        channel.PathLossParams(**kwargs)


def test_shadowing_degenerate():
    rng = np.random.default_rng(1)
    assert channel.draw_shadowing_db(channel.ShadowingParams(0.0), rng) == 0.0


def test_shadowing_moments():
    rng = SeedStreams(3).generator("shadow-test")
    x = channel.draw_shadowing_db(channel.ShadowingParams(3.0), rng, size=100_000)
    assert 2.94 <= x.std() <= 3.06
    assert -0.03 <= x.mean() <= 0.03


def test_shadowing_reproducible():
    a = channel.draw_shadowing_db(channel.ShadowingParams(3.0), SeedStreams(5).generator("s"), size=10)
    b = channel.draw_shadowing_db(channel.ShadowingParams(3.0), SeedStreams(5).generator("s"), size=10)
    np.testing.assert_array_equal(a, b)


def test_rayleigh_power_statistics():
    g = channel.draw_rayleigh_power(SeedStreams(11).generator("fading"), size=100_000)
    assert np.all(g >= 0)
    assert 0.98 <= g.mean() <= 1.02
    assert abs(np.mean(g > math.log(2)) - 0.5) <= 0.01
    ks = stats.kstest(g, "expon").statistic
    assert ks < 0.01


def test_noise_power():
    assert channel.noise_power_dbm(channel.NoiseModel(-169, 5, 1e6)) == pytest.approx(-104.0)
    assert channel.noise_power_dbm(channel.NoiseModel(-169, 0, 1.0)) == pytest.approx(-169.0)
    a = channel.noise_power_dbm(channel.NoiseModel(-169, 5, 1e6))
    b = channel.noise_power_dbm(channel.NoiseModel(-169, 5, 2e6))
    assert b - a == pytest.approx(3.0103, abs=1e-4)


def test_noise_model_rejects_zero_bandwidth():
    with pytest.raises(ValueError):
        channel.NoiseModel(bandwidth_hz=0)


def test_composite_gain():
    assert channel.composite_link_gain(60, 0, [1, 1]).large_scale_linear == pytest.approx(1e-6, rel=1e-15)
    assert channel.composite_link_gain(60, -10, [1, 1]).large_scale_linear == pytest.approx(1e-5, rel=1e-15)
    # 30 dBm through -104 dB
    link = channel.composite_link_gain(100, 4, [1.0])
    rx_dbm = channel.watts_to_dbm(channel.dbm_to_watts(30) * link.composite_linear)
    assert rx_dbm[0] == pytest.approx(-74.0, abs=1e-9)


def test_composite_gain_db_identity():
    rng = np.random.default_rng(0)
    for _ in range(200):
        pl, sh = rng.uniform(40, 90), rng.normal(0, 3)
        g = rng.exponential(size=3) + 1e-6
        link = channel.composite_link_gain(pl, sh, g)
        np.testing.assert_allclose(link.composite_db, -(pl + sh) + 10 * np.log10(g), rtol=1e-9)


@pytest.mark.parametrize("args", [(np.inf, 0, [1.0]), (60, np.nan, [1.0]), (60, 0, [np.inf]), (60, 0, [0.0])])
def test_composite_gain_rejects_bad_input(args):
    with pytest.raises(ValueError):
        channel.composite_link_gain(*args)


def test_streams_are_label_separated():
    s = SeedStreams(42)
    a = s.generator("fading", 0, 1).random(4)
    b = s.generator("fading", 0, 2).random(4)
    c = s.generator("shadowing", 0, 1).random(4)
    assert not np.allclose(a, b) and not np.allclose(a, c)
    np.testing.assert_array_equal(a, SeedStreams(42).generator("fading", 0, 1).random(4))
