import math

import numpy as np
import pytest

from src.core.channel import (
    ChannelParams,
    EsTiming,
    GainTable,
    cloud_latency,
    dbm_per_hz_to_watts,
    link_gain,
    pathloss_db,
    relay_latency,
    relay_time,
    round_times,
    sample_compute_times,
    sample_gains,
    server_relay_latency,
    upload_latency,
    upload_time,
)
from src.config.experiment import ChannelSpec

PARAMS = ChannelParams()
GAIN_600M = 10.0 ** (-(128.1 + 37.6 * math.log10(0.6)) / 10.0)


def test_noise_density_conversion():
    assert dbm_per_hz_to_watts(-174.0) == pytest.approx(10.0 ** -20.4, rel=1e-12)
    assert PARAMS.noise_psd_w_hz == pytest.approx(10.0 ** -20.4, rel=1e-12)


def test_pathloss_values():
    assert pathloss_db(300.0) == pytest.approx(108.44, abs=0.01)
    assert pathloss_db(1000.0) == pytest.approx(128.1)
    assert link_gain(1000.0, 1.0) == pytest.approx(10.0 ** -12.81, rel=1e-12)
    assert link_gain(1000.0, 0.5) == pytest.approx(0.5 * 10.0 ** -12.81, rel=1e-12)


def test_upload_time_matches_independent_evaluation():
    M = 21840 * 64
    B, S, p, N0, g = 50e6, 20, 1.0, 10.0 ** -20.4, 10.0 ** -10.844
    expected = M / ((B / (2 * S)) * math.log2(1 + g * p / ((B / (2 * S)) * N0)))
    assert upload_time(S, g, PARAMS) == pytest.approx(expected, rel=1e-12)


def test_upload_time_scales_with_model_size():
    doubled = ChannelParams(model_bits=2 * PARAMS.model_bits)
    assert upload_time(20, GAIN_600M, doubled) == pytest.approx(2 * upload_time(20, GAIN_600M, PARAMS), rel=1e-12)
    assert upload_time(1, GAIN_600M, PARAMS) < upload_time(2, GAIN_600M, PARAMS)


def test_upload_time_monotonicity():
    rng = np.random.default_rng(0)
    for _ in range(100):
        B = rng.uniform(1e6, 1e8)
        M = rng.uniform(1e5, 1e7)
        S = int(rng.integers(1, 30))
        g = 10.0 ** rng.uniform(-14, -10)
        base = upload_time(S, g, ChannelParams(bandwidth_hz=B, model_bits=M))
        assert upload_time(S, g, ChannelParams(bandwidth_hz=1.5 * B, model_bits=M)) < base
        assert upload_time(S, g, ChannelParams(bandwidth_hz=B, model_bits=1.5 * M)) > base
        assert upload_time(S, 2 * g, ChannelParams(bandwidth_hz=B, model_bits=M)) < base


def test_worst_uploader_dominates():
    gains = GainTable(np.array([[1e-12], [5e-13], [2e-12]]))
    slow = upload_latency(0, [0, 1, 2], gains, PARAMS)
    assert slow == pytest.approx(upload_time(3, 5e-13, PARAMS))
    better = GainTable(np.array([[1e-12], [3e-12], [2e-12]]))
    assert upload_latency(0, [0, 1, 2], better, PARAMS) <= slow
    assert upload_latency(0, [], gains, PARAMS) == 0.0


def test_symmetric_relay_is_half_a_single_leg():
    params = ChannelParams(es_power_w=1.0)
    quarter = params.bandwidth_hz / 4
    snr = GAIN_600M * 1.0 * 4 / (params.bandwidth_hz * params.noise_psd_w_hz)
    single_leg = params.model_bits / (quarter * math.log2(1 + snr))
    assert relay_time(GAIN_600M, GAIN_600M, params) == pytest.approx(single_leg / 2, rel=1e-12)


def test_relay_is_negligible_next_to_upload():
    t_up = upload_time(20, GAIN_600M, PARAMS)
    t_relay = relay_time(GAIN_600M, GAIN_600M, PARAMS)
    assert t_up == pytest.approx(0.1446, abs=1e-3)
    assert t_relay == pytest.approx(0.00997, abs=1e-4)
    assert t_relay / t_up < 0.1


def test_relay_boundaries(make_topology):
    topo = make_topology()
    gains = sample_gains(topo, PARAMS, seed=0)
    assert relay_latency(-1, topo, gains, PARAMS) == 0.0
    assert relay_latency(topo.num_pairs, topo, gains, PARAMS) == 0.0
    assert server_relay_latency(0, topo, gains, PARAMS) == relay_latency(0, topo, gains, PARAMS, target=0)
    middle = server_relay_latency(1, topo, gains, PARAMS)
    assert middle >= relay_latency(0, topo, gains, PARAMS, target=1)
    assert middle >= relay_latency(1, topo, gains, PARAMS, target=1)


def test_split_relay_uses_each_leg(make_topology):
    topo = make_topology()
    gains = sample_gains(topo, PARAMS, seed=1)
    split = ChannelParams(relay_gain="split")
    roc = topo.relay_client(0)
    left, right = gains.gain(roc, 0), gains.gain(roc, 1)
    assert relay_latency(0, topo, gains, split, target=1) == pytest.approx(relay_time(left, right, split))
    assert relay_latency(0, topo, gains, split, target=0) == pytest.approx(relay_time(right, left, split))


def test_gains_cover_only_covering_servers(make_topology):
    topo = make_topology()
    gains = sample_gains(topo, PARAMS, seed=3)
    again = sample_gains(topo, PARAMS, seed=3)
    assert np.array_equal(gains.values, again.values, equal_nan=True)
    for k in range(topo.num_clients):
        for l in range(topo.num_servers):
            if l in topo.covering_servers(k):
                assert gains.gain(k, l) > 0
            else:
                assert math.isnan(gains.gain(k, l))


def test_compute_time_scales_with_epochs(make_topology):
    topo = make_topology()
    gains = sample_gains(topo, PARAMS, seed=0)
    tau = np.full(topo.num_clients, 0.15)
    timings = round_times(topo, gains, tau, PARAMS, [topo.coverage(l) for l in range(3)], epochs=5)
    assert all(t.t_comp == pytest.approx(0.75) for t in timings)


def test_compute_times_stay_in_range():
    tau = sample_compute_times(20, PARAMS, seed=0)
    assert ((tau >= 0.1) & (tau <= 0.2)).all()
    assert 0.5 <= 5 * tau.max() <= 1.0


def test_relays_off_and_clockless_rounds(make_topology):
    topo = make_topology()
    gains = sample_gains(topo, PARAMS, seed=0)
    tau = sample_compute_times(topo.num_clients, PARAMS, seed=0)
    uploaders = [topo.local_clients[l] for l in range(3)]
    assert all(t.t_relay == 0.0 for t in round_times(topo, gains, tau, PARAMS, uploaders, relays=False))
    assert all(t.t_edge == 0.0 for t in round_times(topo, None, None, PARAMS, uploaders))


def test_cloud_latency_is_ten_edge_rounds():
    timings = [EsTiming(0, 0.1, 0.5, 0.2, 0.0), EsTiming(1, 0.1, 0.9, 0.2, 0.0)]
    assert cloud_latency(timings, PARAMS) == pytest.approx(12.0)


def test_params_from_config_section():
    params = ChannelParams.from_spec(ChannelSpec(), num_params=100)
    assert params.model_bits == 6400
    assert params.noise_psd_w_hz == pytest.approx(10.0 ** -20.4, rel=1e-12)
