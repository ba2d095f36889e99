"""Harness: config validation, RNG discipline, results, engine, CLI."""

import dataclasses
import json

import numpy as np
import pytest

from beamlink.harness import cli
from beamlink.harness import config as cfg
from beamlink.harness import engine
from beamlink.harness import results as res
from beamlink.harness import rng as rngs
from beamlink.harness import runners


def tiny_config(**overrides):
    """Small, fast scenario used throughout; two blocks per beam window."""
    base = dataclasses.replace(
        cfg.desk_preset(),
        num_subcarriers=32,
        num_subbands=2,
        beam_coherence_time_s=2 * 10.2e-3,
        num_blocks=4,
        trial_count=3,
        stat_draws=4,
    )
    return dataclasses.replace(base, **overrides)


# -------------------------------------------------------------- config


def test_config_dict_roundtrip():
    c = tiny_config()
    again = cfg.ScenarioConfig.from_dict(c.to_dict())
    assert again == c


def test_config_file_roundtrip(tmp_path):
    c = tiny_config(tx_power_db=11.5)
    path = tmp_path / "scenario.json"
    cfg.save_config(c, str(path))
    assert cfg.load_config(str(path)) == c


def test_config_rejects_unknown_keys():
    blob = tiny_config().to_dict()
    blob["bandwidth_ghz"] = 1.0
    with pytest.raises(cfg.ConfigError, match="bandwidth_ghz"):
        cfg.ScenarioConfig.from_dict(blob)


def test_validate_collects_all_violations():
    bad = tiny_config(num_streams=9, num_taps=99, estimator="dft")
    violations = cfg.validate(bad)
    assert len(violations) >= 3
    joined = "\n".join(violations)
    assert "num_streams" in joined
    assert "num_taps" in joined
    assert "estimator" in joined


def test_validate_blocked_offsets_capacity():
    # 17 users x 4 taps exceed 64 subcarriers
    ue = tuple((10.0 + u, 7.0) for u in range(17))
    bad = tiny_config(ue_start_positions=ue, ue_velocities=((0.0, 5.0),) * 17,
                      num_subcarriers=64, pilot_len=68)
    violations = cfg.validate(bad)
    assert any("num_users * num_taps" in v for v in violations)


def test_validate_fd_pilot_length_only_when_needed():
    mu2 = dict(
        ue_start_positions=((10.0, 7.0), (12.0, 4.0)),
        ue_velocities=((0.0, 5.0), (0.0, 5.0)),
        precoder="mmse",
    )
    ok_td = tiny_config(schemes=("ideal-dbf", "continuous"), estimator="td",
                        num_subbands=1, **mu2)
    assert cfg.validate(ok_td) == []
    needs_fd = tiny_config(schemes=("ideal-dbf", "continuous"), estimator="fd",
                           num_subbands=1, **mu2)
    assert any("pilot_len" in v for v in cfg.validate(needs_fd))
    assert cfg.validate(dataclasses.replace(needs_fd, pilot_len=8)) == []


def test_presets_are_valid():
    for name in cfg.PRESETS:
        assert cfg.validate(cfg.preset(name)) == []
    with pytest.raises(cfg.ConfigError):
        cfg.preset("nope")


def test_config_hash_tracks_content():
    a = tiny_config()
    b = tiny_config()
    assert cfg.config_hash(a) == cfg.config_hash(b)
    c = tiny_config(tx_power_db=16.0)
    assert cfg.config_hash(a) != cfg.config_hash(c)


def test_ensure_valid_raises_with_report():
    with pytest.raises(cfg.ConfigError, match="num_streams"):
        cfg.ensure_valid(tiny_config(num_streams=9))


# ----------------------------------------------------------------- rng


def test_stream_keying_is_deterministic_and_disjoint():
    a = rngs.stream(7, rngs.STAT_FADING, trial=3, block=2, extra=1)
    b = rngs.stream(7, rngs.STAT_FADING, trial=3, block=2, extra=1)
    assert np.array_equal(a.standard_normal(8), b.standard_normal(8))
    variants = [
        rngs.stream(7, rngs.WINDOW_FADING, trial=3, block=2, extra=1),
        rngs.stream(7, rngs.STAT_FADING, trial=4, block=2, extra=1),
        rngs.stream(7, rngs.STAT_FADING, trial=3, block=3, extra=1),
        rngs.stream(7, rngs.STAT_FADING, trial=3, block=2, extra=0),
        rngs.stream(8, rngs.STAT_FADING, trial=3, block=2, extra=1),
    ]
    base = rngs.stream(7, rngs.STAT_FADING, trial=3, block=2, extra=1).standard_normal(8)
    for v in variants:
        assert not np.array_equal(base, v.standard_normal(8))


def test_complex_normal_unit_variance():
    draw = rngs.complex_normal(rngs.stream(1, 0), (20000,))
    assert draw.dtype == complex
    assert abs(np.mean(np.abs(draw) ** 2) - 1.0) < 0.05
    assert abs(np.mean(draw)) < 0.05


# -------------------------------------------------------------- results


def test_running_stats_matches_numpy():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((40, 6))
    stats = res.RunningStats.from_samples(x)
    np.testing.assert_allclose(stats.mean, x.mean(axis=0), atol=1e-12)
    np.testing.assert_allclose(stats.variance, x.var(axis=0, ddof=1), atol=1e-12)
    np.testing.assert_allclose(stats.stderr, x.std(axis=0, ddof=1) / np.sqrt(40), atol=1e-12)
    assert np.all(stats.count == 40)


def test_running_stats_merge_exact():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((30, 4))
    merged = res.RunningStats.from_samples(x[:12]).merge(res.RunningStats.from_samples(x[12:]))
    direct = res.RunningStats.from_samples(x)
    np.testing.assert_allclose(merged.mean, direct.mean, atol=1e-12)
    np.testing.assert_allclose(merged.m2, direct.m2, rtol=1e-12)
    assert np.all(merged.count == 30)


def test_running_stats_merge_with_zeros():
    x = np.ones((5, 3)) * 2.5
    merged = res.RunningStats.zeros((3,)).merge(res.RunningStats.from_samples(x))
    np.testing.assert_allclose(merged.mean, 2.5, atol=0)
    assert np.all(merged.count == 5)


def _toy_result():
    stats = res.RunningStats.from_samples(np.array([[1.0, 2.0], [3.0, 4.0]]))
    return res.RunResult(
        curve_kind="toy", x_label="x", x_values=np.array([0.5, 1.5]),
        series={"a": stats}, metadata={"trial_ranges": [[0, 2]]})


def test_csv_layout_and_determinism():
    body = res.result_to_csv(_toy_result())
    lines = body.split("\n")
    assert lines[0] == "x,a_mean,a_stderr,a_count"
    assert lines[1].startswith("0.5,2.0,")
    assert body.endswith("\n")
    assert body == res.result_to_csv(_toy_result())


def test_json_roundtrip_preserves_stats():
    r = _toy_result()
    again = res.result_from_json_dict(json.loads(res.result_to_json(r)))
    assert again.curve_kind == r.curve_kind
    np.testing.assert_allclose(again.x_values, r.x_values, atol=0)
    np.testing.assert_allclose(again.series["a"].mean, r.series["a"].mean, atol=0)
    np.testing.assert_allclose(again.series["a"].m2, r.series["a"].m2, atol=0)
    assert res.result_to_json(again) == res.result_to_json(r)


def test_result_merge_combines_trial_ranges():
    a, b = _toy_result(), _toy_result()
    b.metadata = {"trial_ranges": [[2, 4]]}
    merged = a.merge(b)
    assert merged.metadata["trial_ranges"] == [[0, 2], [2, 4]]
    assert np.all(merged.series["a"].count == 4)


def test_result_merge_guards():
    a = _toy_result()
    b = _toy_result()
    b.curve_kind = "other"
    with pytest.raises(ValueError):
        a.merge(b)
    c = _toy_result()
    c.x_values = np.array([0.5, 9.9])
    with pytest.raises(ValueError):
        a.merge(c)


def test_write_result_emits_sidecar(tmp_path):
    path = tmp_path / "toy.csv"
    written = res.write_result(_toy_result(), str(path))
    assert written == [str(path), str(path) + ".meta.json"]
    with open(written[1]) as fh:
        sidecar = json.load(fh)
    assert "created_at" in sidecar
    assert sidecar["metadata"]["trial_ranges"] == [[0, 2]]
    # the body itself carries nothing wall-clock dependent
    assert "created_at" not in open(written[0]).read()


# --------------------------------------------------------------- engine


def test_trajectory_shapes_and_names():
    c = tiny_config()
    result = engine.run_trajectory(c)
    assert result.curve_kind == "trajectory"
    assert list(result.series) == list(c.schemes)
    assert result.x_values.shape == (c.num_blocks,)
    np.testing.assert_allclose(result.x_values[1], c.coherence_time_s, atol=1e-15)
    for stats in result.series.values():
        assert stats.mean.shape == (c.num_blocks,)
        assert np.all(stats.count == c.trial_count)
        assert np.all(np.isfinite(stats.mean))
    assert result.metadata["dropped_paths"] == 0
    assert result.metadata["seed"] == c.master_seed


def test_trajectory_is_deterministic():
    c = tiny_config(trial_count=2)
    a = engine.run_trajectory(c)
    b = engine.run_trajectory(c)
    for name in a.series:
        np.testing.assert_array_equal(a.series[name].mean, b.series[name].mean)
    assert a.metadata["draw_digest"] == b.metadata["draw_digest"]


def test_trajectory_scheme_subset_invariance():
    # dropping schemes must not change the draws others see
    full = engine.run_trajectory(tiny_config())
    sub = engine.run_trajectory(tiny_config(schemes=("ideal-dbf", "fixed-q-td")))
    assert sub.metadata["draw_digest"] == full.metadata["draw_digest"]
    for name in ("ideal-dbf", "fixed-q-td"):
        np.testing.assert_array_equal(sub.series[name].mean, full.series[name].mean)


def test_trajectory_shard_merge_matches_full_run():
    c = tiny_config(trial_count=4)
    full = engine.run_trajectory(c)
    lo = engine.run_trajectory(c, trial_range=(0, 2))
    hi = engine.run_trajectory(c, trial_range=(2, 4))
    merged = lo.merge(hi)
    for name in full.series:
        np.testing.assert_allclose(merged.series[name].mean, full.series[name].mean,
                                   atol=1e-12)
        np.testing.assert_allclose(merged.series[name].stderr, full.series[name].stderr,
                                   atol=1e-12)
    assert merged.metadata["trial_ranges"] == [[0, 2], [2, 4]]


def test_continuous_equals_fixed_q_at_refresh_blocks():
    c = tiny_config(schemes=("continuous", "fixed-q-td"), estimator="td")
    _, raw = engine.run_trajectory(c, return_per_trial=True)
    cont, fixed = raw["continuous"], raw["fixed-q-td"]
    # both refresh at blocks 1 and 3 (two blocks per window) on shared draws
    np.testing.assert_array_equal(cont[:, 0], fixed[:, 0])
    np.testing.assert_array_equal(cont[:, 2], fixed[:, 2])
    assert not np.array_equal(cont[:, 1], fixed[:, 1])


def test_fixed_qw_freezes_across_windows():
    c = tiny_config(schemes=("fixed-q-fd", "fixed-qw"))
    _, raw = engine.run_trajectory(c, return_per_trial=True)
    # both schemes share the refresh chain at block 1 where W is the selector
    np.testing.assert_array_equal(raw["fixed-q-fd"][:, 0], raw["fixed-qw"][:, 0])
    # at the second window start fixed-q-fd re-sounds, fixed-qw does not
    assert not np.array_equal(raw["fixed-q-fd"][:, 2], raw["fixed-qw"][:, 2])


def test_mu_trajectory_series_and_sum():
    c = tiny_config(
        ue_start_positions=((10.0, 7.0), (12.0, 4.0)),
        ue_velocities=((0.0, 5.0), (1.0, 2.0)),
        schemes=("ideal-dbf", "continuous"),
        estimator="fd",
        pilot_len=8,
        precoder="mmse",
        trial_count=2,
    )
    result, raw = engine.run_trajectory(c, return_per_trial=True)
    assert list(result.series) == [
        "ideal-dbf:ue0", "ideal-dbf:ue1", "ideal-dbf:sum",
        "continuous:ue0", "continuous:ue1", "continuous:sum",
    ]
    np.testing.assert_allclose(
        raw["continuous:sum"], raw["continuous:ue0"] + raw["continuous:ue1"], atol=1e-12)


def test_runner_user_count_guards():
    mu = tiny_config(
        ue_start_positions=((10.0, 7.0), (12.0, 4.0)),
        ue_velocities=((0.0, 5.0), (0.0, 5.0)),
        schemes=("ideal-dbf",), precoder="mmse", pilot_len=8)
    with pytest.raises(cfg.ConfigError):
        runners.run_su_trajectory(mu)
    su = tiny_config(trial_count=2, schemes=("ideal-dbf",))
    result = runners.run_mu_trajectory(su)  # one user is a valid mu run
    assert list(result.series) == ["ideal-dbf"]


def test_invalid_config_rejected_before_running():
    with pytest.raises(cfg.ConfigError):
        engine.run_trajectory(tiny_config(num_streams=9))


def test_block_one_se_flavors():
    out = engine.block_one_se(tiny_config(trial_count=3))
    assert sorted(out) == ["dbf-fd", "dbf-td", "ideal-dbf"]
    for v in out.values():
        assert v.shape == (3,)
        assert np.all(np.isfinite(v))
    # fd sounding is dropped when the pilot book cannot carry it
    mu = tiny_config(
        ue_start_positions=((10.0, 7.0), (12.0, 4.0)),
        ue_velocities=((0.0, 5.0), (0.0, 5.0)),
        schemes=("ideal-dbf", "continuous"), estimator="td",
        num_subbands=1, precoder="mmse", trial_count=2)
    out_mu = engine.block_one_se(mu)
    assert "dbf-fd:ue0" not in out_mu
    assert sorted(k for k in out_mu if k.startswith("dbf-td")) == [
        "dbf-td:sum", "dbf-td:ue0", "dbf-td:ue1"]


def test_nmse_sweep_linear_ratio_series():
    c = tiny_config(trial_count=40)
    result = runners.run_nmse_sweep(c, snr_db=(0.0, 10.0), seed=5)
    assert result.curve_kind == "nmse-sweep"
    np.testing.assert_allclose(result.x_values, [0.0, 10.0], atol=0)
    fd, td = result.series["fd"].mean, result.series["td"].mean
    t_p = c.pilot_len
    for i, snr in enumerate((0.0, 10.0)):
        p = 10.0 ** (snr / 10.0)
        assert abs(fd[i] * p * t_p - 1.0) < 0.15
    ratio = c.num_taps / c.num_subcarriers
    np.testing.assert_allclose(td / fd, ratio, rtol=0.15)
    assert "linear" in result.metadata["values"]


def test_nmse_sweep_shard_merge():
    c = tiny_config(trial_count=6)
    full = runners.run_nmse_sweep(c, snr_db=(5.0,))
    merged = runners.run_nmse_sweep(c, snr_db=(5.0,), trial_range=(0, 3)).merge(
        runners.run_nmse_sweep(c, snr_db=(5.0,), trial_range=(3, 6)))
    np.testing.assert_allclose(merged.series["fd"].mean, full.series["fd"].mean, atol=1e-15)
    np.testing.assert_allclose(merged.series["td"].mean, full.series["td"].mean, atol=1e-15)


def test_se_vs_snr_monotone_for_genie():
    c = tiny_config(trial_count=3, schemes=("ideal-dbf",))
    result = runners.run_se_vs_snr(c, snr_db=(-5.0, 5.0, 15.0))
    assert result.curve_kind == "se-vs-snr"
    means = result.series["ideal-dbf"].mean
    assert means[0] < means[1] < means[2]


# ------------------------------------------------------------------ cli


def test_cli_validate_config_ok(capsys):
    code = cli.main(["validate-config", "--preset", "desk"])
    assert code == 0
    out = capsys.readouterr().out
    assert out.startswith("ok ")
    assert cfg.config_hash(cfg.desk_preset()) in out


def test_cli_validate_config_failure(tmp_path, capsys):
    bad = tiny_config(num_streams=9)
    path = tmp_path / "bad.json"
    cfg.save_config(bad, str(path))
    code = cli.main(["validate-config", "--config", str(path)])
    assert code == 2
    err = capsys.readouterr().err
    assert "num_streams" in err


def test_cli_unreadable_config_is_exit_2(tmp_path, capsys):
    code = cli.main(["validate-config", "--config", str(tmp_path / "missing.json")])
    assert code == 2
    code = cli.main(["validate-config", "--preset", "desk",
                     "--config", str(tmp_path / "missing.json")])
    assert code == 2


def test_cli_usage_errors_exit_1(capsys):
    assert cli.main(["no-such-command"]) == 1
    assert cli.main(["nmse-sweep", "--bogus-flag"]) == 1


def test_cli_nmse_sweep_writes_files(tmp_path, capsys):
    path = tmp_path / "scenario.json"
    cfg.save_config(tiny_config(trial_count=2), str(path))
    out = tmp_path / "sweep.csv"
    code = cli.main(["nmse-sweep", "--config", str(path), "--snr", "0,10",
                     "--out", str(out)])
    assert code == 0
    assert out.exists()
    assert (tmp_path / "sweep.csv.meta.json").exists()
    header = out.read_text().splitlines()[0]
    assert header == "snr_db,fd_mean,fd_stderr,fd_count,td_mean,td_stderr,td_count"


def test_cli_trajectory_json_and_shard(tmp_path, capsys):
    path = tmp_path / "scenario.json"
    cfg.save_config(tiny_config(schemes=("ideal-dbf",), num_blocks=2), str(path))
    out = tmp_path / "traj.json"
    code = cli.main(["su-trajectory", "--config", str(path), "--trials", "1:3",
                     "--out", str(out), "--format", "json", "--seed", "99"])
    assert code == 0
    payload = json.loads(out.read_text())
    assert payload["metadata"]["trial_ranges"] == [[1, 3]]
    assert payload["metadata"]["seed"] == 99
    assert payload["series"]["ideal-dbf"]["count"] == [2, 2]


def test_cli_capacity_conflict_exits_2(tmp_path, capsys):
    # 5 users x 4 antennas want 20 tone combs; only 16 offsets exist
    mu = tiny_config(
        ue_start_positions=tuple((10.0 + u, 7.0) for u in range(5)),
        ue_velocities=((0.0, 5.0),) * 5,
        num_subcarriers=64, num_subbands=4, pilot_len=20,
        schemes=("continuous",), estimator="td", precoder="mmse")
    path = tmp_path / "mu.json"
    cfg.save_config(mu, str(path))
    code = cli.main(["validate-config", "--config", str(path)])
    assert code == 2
    assert "tone combs" in capsys.readouterr().err
