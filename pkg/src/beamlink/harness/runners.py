"""Experiment runners: each produces one mergeable RunResult curve."""

from __future__ import annotations

import dataclasses

import numpy as np

from .. import channel as ch
from .. import estimation as est
from . import rng as rngs
from .config import ScenarioConfig, ConfigError, config_hash
from .engine import _EngineContext, _draw_clusters, _resolve_trials, block_one_se, run_trajectory
from .results import RunResult, RunningStats

DEFAULT_NMSE_SNR_DB = (-5.0, 0.0, 5.0, 10.0, 15.0, 20.0, 25.0)
DEFAULT_SE_SNR_DB = (-5.0, 0.0, 5.0, 10.0, 15.0, 20.0)


def run_su_trajectory(config: ScenarioConfig, seed=None, trial_range=None,
                      return_per_trial: bool = False):
    """Single-user trajectory run; see ``engine.run_trajectory``."""
    if config.num_users != 1:
        raise ConfigError(["su-trajectory requires exactly one user"])
    return run_trajectory(config, seed, trial_range, return_per_trial)


def run_mu_trajectory(config: ScenarioConfig, seed=None, trial_range=None,
                      return_per_trial: bool = False):
    """Multi-user trajectory run. With one user this coincides exactly
    with ``run_su_trajectory``: the engine has no user-count branches."""
    return run_trajectory(config, seed, trial_range, return_per_trial)


def run_nmse_sweep(config: ScenarioConfig, snr_db=DEFAULT_NMSE_SNR_DB,
                   seed=None, trial_range=None) -> RunResult:
    """Estimation NMSE of both estimators versus pilot SNR.

    One fading realization per trial on the first user's start geometry.
    Each trial's channel is rescaled to total energy S*K*M exactly, so the
    per-trial error-to-truth energy ratio is an unbiased NMSE estimate
    whose average merges linearly across shards. Series values are linear
    ratios; plot 10*log10(mean).

    Both estimators consume the same noise field at every SNR point
    (common random numbers), so curve differences are paired.
    """
    ctx = _EngineContext(config)
    cfg = ctx.cfg
    run_seed = cfg.master_seed if seed is None else int(seed)
    trials = _resolve_trials(cfg, trial_range)
    snr = np.asarray(snr_db, dtype=float)
    if snr.ndim != 1 or snr.size == 0:
        raise ValueError("snr_db must be a non-empty sequence")
    powers = 10.0 ** (snr / 10.0)

    book = ctx.books[0].uplink_full
    if book is None:
        raise est.PilotCapacityError(
            "pilot_len cannot carry the antenna ports needed by the FD arm")
    plan = est.TdCombPlan(cfg.num_subcarriers, cfg.num_taps, ctx.books[0].td_offsets)

    s, m, k = cfg.num_subcarriers, cfg.num_bs_antennas, cfg.num_ue_antennas
    denom = float(s * k * m)
    fd_vals = np.empty((len(trials), snr.size))
    td_vals = np.empty((len(trials), snr.size))

    per_trial_bytes = 16.0 * s * (m * cfg.pilot_len + 4 * k * m)
    chunk = max(1, int(3.2e8 / per_trial_bytes))
    for lo in range(0, len(trials), chunk):
        part = trials[lo : lo + chunk]
        cl = np.stack([
            _draw_clusters(
                rngs.stream(run_seed, rngs.CLUSTERS, t, 0, 0),
                cfg.bs_position, cfg.ue_start_positions[0],
                cfg.num_clusters, cfg.sample_period_s, cfg.num_taps)
            for t in part
        ])
        gains = np.stack([
            rngs.complex_normal(rngs.stream(run_seed, rngs.STAT_FADING, t, 0, 0),
                                (1, ctx.num_paths))
            for t in part
        ])
        noise = np.stack([
            rngs.complex_normal(rngs.stream(run_seed, rngs.STAT_UL_NOISE, t, 0, 0),
                                (s, m, cfg.pilot_len))
            for t in part
        ])
        params = ch.path_parameter_arrays(
            cfg.bs_position,
            np.broadcast_to(np.asarray(cfg.ue_start_positions[0]), (len(part), 2)),
            cl, cfg.sample_period_s, cfg.num_taps, cfg.carrier_ghz,
            bs_orientation=cfg.bs_orientation, ue_orientation=cfg.ue_orientation,
            reflection_loss_db=cfg.reflection_loss_db)
        params["tap_power"] = params["tap_power"] / ctx.gain_norm
        h = ch.freq_channels_from_paths(params, gains, ctx.ue_array, ctx.bs_array, s)[:, 0]
        energy = np.sum(np.abs(h) ** 2, axis=(1, 2, 3))
        h = h * np.sqrt(denom / energy)[:, None, None, None]
        for j, p in enumerate(powers):
            fd_hat = est.fd_uplink_estimate(h, book, p, noise)
            td_hat = plan.estimate(h, p, noise)
            fd_vals[lo : lo + len(part), j] = (
                np.sum(np.abs(fd_hat - h) ** 2, axis=(1, 2, 3)) / denom)
            td_vals[lo : lo + len(part), j] = (
                np.sum(np.abs(td_hat - h) ** 2, axis=(1, 2, 3)) / denom)

    return RunResult(
        curve_kind="nmse-sweep",
        x_label="snr_db",
        x_values=snr,
        series={
            "fd": RunningStats.from_samples(fd_vals),
            "td": RunningStats.from_samples(td_vals),
        },
        metadata={
            "config_hash": config_hash(cfg),
            "seed": run_seed,
            "trial_ranges": [[trials[0], trials[-1] + 1]],
            "values": "linear NMSE ratios; dB = 10*log10(mean)",
        },
    )


def run_se_vs_snr(config: ScenarioConfig, snr_db=DEFAULT_SE_SNR_DB,
                  seed=None, trial_range=None) -> RunResult:
    """First-block SE versus SNR for the genie and both sounding domains.

    Pilot and data powers are both set to each grid point. Draws are
    keyed by (seed, trial), so every SNR point scores the same channel
    and noise realizations.
    """
    snr = np.asarray(snr_db, dtype=float)
    if snr.ndim != 1 or snr.size == 0:
        raise ValueError("snr_db must be a non-empty sequence")
    columns: dict[str, list[np.ndarray]] = {}
    for point in snr:
        cfg_point = dataclasses.replace(
            config, tx_power_db=float(point), pilot_power_db=float(point))
        ses = block_one_se(cfg_point, seed, trial_range)
        for key, values in ses.items():
            columns.setdefault(key, []).append(values)
    series = {
        key: RunningStats.from_samples(np.stack(cols, axis=1))
        for key, cols in columns.items()
    }
    run_seed = config.master_seed if seed is None else int(seed)
    trials = _resolve_trials(config, trial_range)
    return RunResult(
        curve_kind="se-vs-snr",
        x_label="snr_db",
        x_values=snr,
        series=series,
        metadata={
            "config_hash": config_hash(config),
            "seed": run_seed,
            "trial_ranges": [[trials[0], trials[-1] + 1]],
            "powers": "tx_power_db and pilot_power_db both follow the grid",
        },
    )
