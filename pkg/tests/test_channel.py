"""Geometric channel model: path loss, arrays, taps, timing."""

import numpy as np
import pytest

from beamlink import channel as ch

C_LIGHT = 299792458.0


def test_umi_path_loss_oracle():
    # 32.4 + 21 log10(10) + 20 log10(28) recomputed here from the closed form
    want_db = 32.4 + 21.0 * np.log10(10.0) + 20.0 * np.log10(28.0)
    gain = ch.umi_path_loss(10.0, 28.0)
    assert abs(-10.0 * np.log10(gain) - want_db) < 1e-12


def test_umi_path_loss_vectorized_and_monotone():
    d = np.array([1.0, 5.0, 20.0, 100.0])
    g = ch.umi_path_loss(d, 28.0)
    assert g.shape == (4,)
    assert np.all(np.diff(g) < 0)


def test_umi_path_loss_rejects_short_range():
    with pytest.raises(ValueError):
        ch.umi_path_loss(0.5, 28.0)
    with pytest.raises(ValueError):
        ch.umi_path_loss(10.0, 0.0)


def test_angle_from_broadside_cases():
    # array axis along y: broadside is +x
    assert abs(ch.angle_from_broadside((0, 0), (5, 0), (0, 1))) < 1e-12
    assert abs(ch.angle_from_broadside((0, 0), (0, 3), (0, 1)) - np.pi / 2) < 1e-12
    assert abs(ch.angle_from_broadside((0, 0), (2, 2), (0, 1)) - np.pi / 4) < 1e-12
    with pytest.raises(ValueError):
        ch.angle_from_broadside((1, 1), (1, 1), (0, 1))


def test_array_response_phase_progression():
    arr = ch.ArrayGeometry(8, element_spacing=0.5)
    theta = 0.3
    v = ch.array_response(arr, theta)
    assert v.shape == (8,)
    np.testing.assert_allclose(np.abs(v), 1.0, atol=1e-12)
    assert abs(v[0] - 1.0) < 1e-12
    want = np.exp(2j * np.pi * 0.5 * np.arange(8) * np.sin(theta))
    np.testing.assert_allclose(v, want, atol=1e-12)


def test_array_response_batched_angles():
    arr = ch.ArrayGeometry(4)
    v = ch.array_response(arr, np.array([0.0, 0.2, -0.4]))
    assert v.shape == (3, 4)
    np.testing.assert_allclose(v[0], 1.0, atol=1e-12)


def test_array_geometry_validation():
    with pytest.raises(ValueError):
        ch.ArrayGeometry(0)
    with pytest.raises(ValueError):
        ch.ArrayGeometry(4, element_spacing=-0.1)
    with pytest.raises(ValueError):
        ch.ArrayGeometry(4, orientation=(0.0, 0.0))


# ------------------------------------------------------------- geometry


def _cluster_for_tap(bs, ue, excess_m):
    """Point on the ellipse of constant bounce length, off the LOS axis."""
    bs = np.asarray(bs, float)
    ue = np.asarray(ue, float)
    d = np.linalg.norm(ue - bs)
    a = (d + excess_m) / 2.0
    b = np.sqrt(a**2 - (d / 2.0) ** 2)
    center = (bs + ue) / 2.0
    u_hat = (ue - bs) / d
    v_hat = np.array([-u_hat[1], u_hat[0]])
    return center + a * np.cos(1.1) * u_hat + b * np.sin(1.1) * v_hat


def test_build_geometry_los_on_tap_zero():
    ts = 2e-9
    geo = ch.build_geometry((0, 0), (10, 0), np.empty((0, 2)), ts, 4, 28.0)
    assert len(geo.paths) == 1
    los = geo.paths[0]
    assert los.is_los and los.tap_index == 0
    assert abs(los.tap_power - ch.umi_path_loss(10.0, 28.0)) < 1e-15


def test_build_geometry_cluster_tap_quantization():
    ts = 2e-9
    excess = 2.0 * C_LIGHT * ts  # exactly two sample periods of extra delay
    cluster = _cluster_for_tap((0, 0), (10, 0), excess)
    geo = ch.build_geometry((0, 0), (10, 0), cluster[None, :], ts, 4, 28.0)
    assert len(geo.paths) == 2
    assert geo.paths[1].tap_index == 2
    assert geo.dropped_paths == 0


def test_build_geometry_cluster_power_includes_reflection_loss():
    ts = 2e-9
    cluster = _cluster_for_tap((0, 0), (10, 0), 1.3 * C_LIGHT * ts)
    geo = ch.build_geometry((0, 0), (10, 0), cluster[None, :], ts, 4, 28.0,
                            reflection_loss_db=10.0)
    bounce = np.linalg.norm(cluster) + np.linalg.norm(cluster - np.array([10.0, 0.0]))
    want = ch.umi_path_loss(bounce, 28.0) * 10.0 ** (-1.0)
    assert abs(geo.paths[1].tap_power - want) < 1e-15


def test_build_geometry_near_cluster_clamps_to_tap_one():
    ts = 2e-9
    # tiny excess path rounds to tap 0 and must be pushed up to tap 1
    cluster = _cluster_for_tap((0, 0), (10, 0), 0.1 * C_LIGHT * ts)
    geo = ch.build_geometry((0, 0), (10, 0), cluster[None, :], ts, 4, 28.0)
    assert geo.paths[1].tap_index == 1


def test_build_geometry_drops_late_cluster():
    ts = 2e-9
    cluster = _cluster_for_tap((0, 0), (10, 0), 9.0 * C_LIGHT * ts)  # tap 9 > L-1
    geo = ch.build_geometry((0, 0), (10, 0), cluster[None, :], ts, 4, 28.0)
    assert len(geo.paths) == 1
    assert geo.dropped_paths == 1


def test_draw_small_scale_los_deterministic():
    ts = 2e-9
    cluster = _cluster_for_tap((0, 0), (10, 0), 1.5 * C_LIGHT * ts)
    geo = ch.build_geometry((0, 0), (10, 0), cluster[None, :], ts, 4, 28.0)
    g1 = ch.draw_small_scale(geo, np.random.default_rng(0))
    g2 = ch.draw_small_scale(geo, np.random.default_rng(99))
    assert abs(g1[0] - np.sqrt(geo.paths[0].tap_power)) < 1e-15
    assert abs(g2[0] - g1[0]) < 1e-15  # LOS gain ignores the rng
    assert abs(g1[1] - g2[1]) > 0  # cluster gain does not


def test_draw_small_scale_cluster_variance():
    ts = 2e-9
    cluster = _cluster_for_tap((0, 0), (10, 0), 1.5 * C_LIGHT * ts)
    geo = ch.build_geometry((0, 0), (10, 0), cluster[None, :], ts, 4, 28.0)
    rng = np.random.default_rng(42)
    draws = np.array([ch.draw_small_scale(geo, rng)[1] for _ in range(4000)])
    var = np.mean(np.abs(draws) ** 2)
    assert abs(var / geo.paths[1].tap_power - 1.0) < 0.1
    assert abs(np.mean(draws)) < 3.0 * np.sqrt(geo.paths[1].tap_power / 4000)


def test_tap_channel_frequency_response_matches_manual_sum():
    ts = 2e-9
    cluster = _cluster_for_tap((0, 0), (10, 0), 1.8 * C_LIGHT * ts)
    geo = ch.build_geometry((0, 0), (10, 0), cluster[None, :], ts, 4, 28.0)
    rx = ch.ArrayGeometry(4)
    tx = ch.ArrayGeometry(8)
    gains = ch.draw_small_scale(geo, np.random.default_rng(1))
    tap = ch.build_tap_channel(geo, gains, rx, tx, num_taps=4)
    freq = ch.assemble_freq_channel(tap, 16)
    s = 16
    manual = np.zeros((4, 8, s), dtype=complex)  # subcarrier axis last
    for p, g in zip(geo.paths, gains):
        a_r = ch.array_response(rx, p.aoa)
        a_t = ch.array_response(tx, p.aod)
        outer = np.outer(a_r, a_t)
        for nu in range(s):
            manual[..., nu] += g * np.exp(-2j * np.pi * p.tap_index * nu / s) * outer
    np.testing.assert_allclose(freq.per_subcarrier, manual, atol=1e-12)


def test_tap_channel_rejects_out_of_budget_tap():
    ts = 2e-9
    cluster = _cluster_for_tap((0, 0), (10, 0), 2.0 * C_LIGHT * ts)
    geo = ch.build_geometry((0, 0), (10, 0), cluster[None, :], ts, 4, 28.0)
    rx, tx = ch.ArrayGeometry(2), ch.ArrayGeometry(2)
    gains = ch.draw_small_scale(geo, np.random.default_rng(2))
    with pytest.raises(ValueError):
        ch.build_tap_channel(geo, gains, rx, tx, num_taps=2)  # cluster sits on tap 2


def test_path_parameter_arrays_matches_scalar_geometry():
    ts = 2e-9
    cluster = _cluster_for_tap((0, 0), (10, 0), 1.5 * C_LIGHT * ts)
    geo = ch.build_geometry((0, 0), (10, 0), cluster[None, :], ts, 4, 28.0)
    params = ch.path_parameter_arrays(
        (0, 0), np.array([[10.0, 0.0]]), cluster[None, None, :], ts, 4, 28.0)
    for i, p in enumerate(geo.paths):
        assert abs(params["aod"][0, i] - p.aod) < 1e-12
        assert abs(params["aoa"][0, i] - p.aoa) < 1e-12
        assert params["tap_index"][0, i] == p.tap_index
        assert abs(params["tap_power"][0, i] - p.tap_power) < 1e-18
    assert params["dropped"] == 0


def test_freq_channels_from_paths_matches_per_trial_assembly():
    rng = np.random.default_rng(3)
    ts = 2e-9
    ue = np.array([[10.0, 0.0], [11.0, 1.0]])
    clusters = np.stack([
        _cluster_for_tap((0, 0), ue[0], 1.5 * C_LIGHT * ts)[None, :],
        _cluster_for_tap((0, 0), ue[1], 2.1 * C_LIGHT * ts)[None, :],
    ])
    params = ch.path_parameter_arrays((0, 0), ue, clusters, ts, 4, 28.0)
    rx, tx = ch.ArrayGeometry(4), ch.ArrayGeometry(8)
    # the stacked helper takes unit-variance draws and scales internally
    unit = (rng.standard_normal((2, 3, 2)) + 1j * rng.standard_normal((2, 3, 2)))
    out = ch.freq_channels_from_paths(params, unit, rx, tx, 16)
    assert out.shape == (2, 3, 16, 4, 8)
    for t in range(2):
        geo = ch.build_geometry((0, 0), ue[t], clusters[t], ts, 4, 28.0)
        scaled = unit[t] * np.sqrt(params["tap_power"][t])
        scaled[:, 0] = np.sqrt(params["tap_power"][t, 0])
        for n in range(3):
            tap = ch.build_tap_channel(geo, scaled[n], rx, tx, 4)
            want = ch.assemble_freq_channel(tap, 16).per_subcarrier
            np.testing.assert_allclose(out[t, n], np.moveaxis(want, -1, 0), atol=1e-12)


# --------------------------------------------------------------- timing


def test_block_clock_refresh_pattern():
    clock = ch.BlockClock(10.2e-3, 102e-3)
    assert clock.blocks_per_beam == 10
    due = [clock.q_refresh_due(b) for b in range(1, 22)]
    assert due == [True] + [False] * 9 + [True] + [False] * 9 + [True]


def test_block_clock_start_times():
    clock = ch.BlockClock(10.2e-3, 102e-3)
    assert clock.block_start_time(1) == 0.0
    assert abs(clock.block_start_time(4) - 3 * 10.2e-3) < 1e-15


def test_block_clock_validation():
    with pytest.raises(ValueError):
        ch.BlockClock(10e-3, 105e-3)  # not an integer multiple
    with pytest.raises(ValueError):
        ch.BlockClock(-1.0, 10.0)
    clock = ch.BlockClock(1e-2, 1e-1)
    with pytest.raises(ValueError):
        clock.q_refresh_due(0)


def test_ue_position_at():
    traj = ch.Trajectory((10.0, 7.0), (0.0, 5.0))
    np.testing.assert_allclose(ch.ue_position_at(traj, 0.0), [10.0, 7.0])
    np.testing.assert_allclose(ch.ue_position_at(traj, 0.2), [10.0, 8.0])
