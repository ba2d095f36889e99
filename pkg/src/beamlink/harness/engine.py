"""Beam-coherence trajectory engine.

Runs the two-stage combining receiver along a UE trajectory: the
first-stage combiner Q is refreshed from a dedicated sounding exchange
when a scheme's policy says so, then every coherence block is scored by
drawing a batch of fading/noise realizations conditioned on the block
geometry, rebuilding the per-draw precoder and second-stage combiner
exactly as the receiver would, and evaluating the hardening (use-and-
forget) spectral efficiency from the batch statistics.

Everything is vectorized over (trial, draw, subcarrier) stacks; loops
run only over blocks, schemes and users. All randomness is counter-keyed
(see ``rng``), with the consequences the harness relies on:

- inner fading/noise draws are keyed by trial only, so every block and
  every scheme scores against the same realizations (common random
  numbers; scheme and aging comparisons are paired), and
- sounding draws are keyed by (trial, block), so a scheme that refreshes
  at block tau sees the same sounding exchange as any other scheme
  refreshing at the same block.

A run digest (sha256 over the fading draws, per trial, in trial order)
is reported in the metadata so tests can assert that draws do not depend
on the scheme set or on sharding.

Scheme policies
---------------
ideal-dbf     genie: per-draw Q, W, F from the true channel, no overhead.
continuous    Q re-selected every block from that block's sounding.
fixed-q-td    Q held for a beam window, time-domain sounding.
fixed-q-fd    Q held for a beam window, frequency-domain sounding.
fixed-qw      Q and W frozen from the trajectory start, FD sounding.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .. import beamforming as bf
from .. import channel as ch
from .. import estimation as est
from .. import spectral_efficiency as sefx
from . import rng as rngs
from .config import ScenarioConfig, config_hash, ensure_valid
from .results import RunningStats, RunResult

CHUNK_BYTE_BUDGET = 3.2e8


@dataclass(frozen=True)
class SchemePolicy:
    name: str
    genie: bool = False
    refresh_every_block: bool = False
    refresh_first_block_only: bool = False
    estimator: str | None = None  # None: follow the config
    freeze_w: bool = False


POLICIES = {
    "ideal-dbf": SchemePolicy("ideal-dbf", genie=True),
    "continuous": SchemePolicy("continuous", refresh_every_block=True),
    "fixed-q-td": SchemePolicy("fixed-q-td", estimator="td"),
    "fixed-q-fd": SchemePolicy("fixed-q-fd", estimator="fd"),
    "fixed-qw": SchemePolicy(
        "fixed-qw", refresh_first_block_only=True, estimator="fd", freeze_w=True
    ),
}


def _refresh_due(policy: SchemePolicy, clock: ch.BlockClock, block: int) -> bool:
    if policy.genie:
        return False
    if policy.refresh_every_block:
        return True
    if policy.refresh_first_block_only:
        return block == 1
    return clock.q_refresh_due(block)


class _EngineContext:
    """Config-derived constants shared by every chunk of a run."""

    def __init__(self, config: ScenarioConfig):
        self.cfg = ensure_valid(config)
        cfg = self.cfg
        self.bs_array = ch.ArrayGeometry(
            cfg.num_bs_antennas, cfg.bs_element_spacing, cfg.bs_orientation
        )
        self.ue_array = ch.ArrayGeometry(
            cfg.num_ue_antennas, cfg.ue_element_spacing, cfg.ue_orientation
        )
        self.clock = ch.BlockClock(cfg.coherence_time_s, cfg.beam_coherence_time_s)
        self.books = est.make_mu_pilot_books(
            cfg.num_users,
            cfg.num_ue_antennas,
            cfg.num_combined,
            cfg.num_streams,
            cfg.pilot_len,
            cfg.num_subcarriers,
            cfg.num_taps,
        )
        td_used = ("fixed-q-td" in cfg.schemes) or (
            "continuous" in cfg.schemes and cfg.estimator == "td"
        )
        self.plans_full: list[est.TdCombPlan] | None = None
        self.plans_eff: list[est.TdSubbandPlan] | None = None
        if td_used:
            self.plans_full = [
                est.TdCombPlan(cfg.num_subcarriers, cfg.num_taps, b.td_offsets)
                for b in self.books
            ]
            self.plans_eff = [
                est.TdSubbandPlan(
                    cfg.num_subcarriers,
                    cfg.num_subbands,
                    cfg.effective_taps,
                    b.td_effective_offsets,
                )
                for b in self.books
            ]
        start0 = cfg.ue_start_positions[0]
        self.gain_norm = (
            ch.umi_path_loss(
                float(np.linalg.norm(np.subtract(start0, cfg.bs_position))),
                cfg.carrier_ghz,
            )
            if cfg.normalize_gain
            else 1.0
        )
        # MU downlink pilots are time-multiplexed, so the per-block pilot
        # budget charges num_users * num_streams downlink symbols.
        dl_cost = cfg.num_users * cfg.num_streams
        self.rho = {
            "fd": sefx.overhead_rho(
                sefx.OverheadModel.frequency_domain(cfg.pilot_len, dl_cost, cfg.block_len_symbols)
            ),
            "td": sefx.overhead_rho(
                sefx.OverheadModel.time_domain(
                    cfg.pilot_len, dl_cost, cfg.block_len_symbols,
                    cfg.num_taps, cfg.num_subcarriers,
                )
            ),
        }
        self.selector = bf.init_second_stage(cfg.num_combined, cfg.num_streams)
        self.num_paths = cfg.num_clusters + 1

    def chunk_size(self) -> int:
        cfg = self.cfg
        per_draw = (
            cfg.num_bs_antennas * cfg.pilot_len
            + 2 * cfg.num_ue_antennas * cfg.num_streams
            + 8 * cfg.num_ue_antennas * cfg.num_bs_antennas
            + 2 * cfg.num_combined * cfg.num_bs_antennas
            + 2 * cfg.num_bs_antennas * cfg.num_streams
        )
        per_trial = 16.0 * cfg.stat_draws * cfg.num_subcarriers * cfg.num_users * per_draw
        return max(1, int(CHUNK_BYTE_BUDGET / per_trial))


def _draw_clusters(
    rng: np.random.Generator,
    bs_position,
    ue_start,
    num_clusters: int,
    sample_period_s: float,
    num_taps: int,
) -> np.ndarray:
    """Single-bounce cluster positions with controlled excess delay.

    Clusters are placed on ellipses with foci at the BS and the UE start
    position; the excess path length is drawn uniformly over the range
    that quantizes to taps 1 .. L-1, so the delay spread actually spans
    the modeled tap window instead of depending on the street layout.
    """
    if num_clusters == 0:
        return np.zeros((0, 2))
    a = np.asarray(bs_position, dtype=float)
    b = np.asarray(ue_start, dtype=float)
    d_los = float(np.linalg.norm(b - a))
    step = ch.SPEED_OF_LIGHT * sample_period_s
    lo = 0.75
    hi = max(num_taps - 1.45, lo + 0.01)
    excess = step * (lo + (hi - lo) * rng.random(num_clusters))
    theta = 2.0 * np.pi * rng.random(num_clusters)
    a_semi = (d_los + excess) / 2.0
    b_semi = np.sqrt(np.maximum(a_semi**2 - (d_los / 2.0) ** 2, 1e-12))
    center = (a + b) / 2.0
    u_hat = (b - a) / d_los
    v_hat = np.array([-u_hat[1], u_hat[0]])
    return (
        center
        + (a_semi * np.cos(theta))[:, None] * u_hat
        + (b_semi * np.sin(theta))[:, None] * v_hat
    )


@dataclass
class _ChunkDraws:
    """Trial-keyed draws for one chunk; indexed [user][trial]."""

    clusters: list[np.ndarray]  # (T, N_cl, 2)
    stat_gains: list[np.ndarray]  # (T, n, P)
    stat_ul: list[np.ndarray]  # (T, n, S, M, t_p)
    stat_dl: list[np.ndarray]  # (T, n, S, K, N_s)
    hashers: list


def _draw_chunk(ctx: _EngineContext, seed: int, trials: list[int]) -> _ChunkDraws:
    cfg = ctx.cfg
    n, p = cfg.stat_draws, ctx.num_paths
    s, m, k = cfg.num_subcarriers, cfg.num_bs_antennas, cfg.num_ue_antennas
    clusters, stat_gains, stat_ul, stat_dl = [], [], [], []
    hashers = [hashlib.sha256() for _ in trials]
    for u in range(cfg.num_users):
        cl = np.stack(
            [
                _draw_clusters(
                    rngs.stream(seed, rngs.CLUSTERS, t, 0, u),
                    cfg.bs_position,
                    cfg.ue_start_positions[u],
                    cfg.num_clusters,
                    cfg.sample_period_s,
                    cfg.num_taps,
                )
                for t in trials
            ]
        )
        gains = np.stack(
            [
                rngs.complex_normal(rngs.stream(seed, rngs.STAT_FADING, t, 0, u), (n, p))
                for t in trials
            ]
        )
        ul = np.stack(
            [
                rngs.complex_normal(
                    rngs.stream(seed, rngs.STAT_UL_NOISE, t, 0, u),
                    (n, s, m, cfg.pilot_len),
                )
                for t in trials
            ]
        )
        dl = np.stack(
            [
                rngs.complex_normal(
                    rngs.stream(seed, rngs.STAT_DL_NOISE, t, 0, u),
                    (n, s, k, cfg.num_streams),
                )
                for t in trials
            ]
        )
        for i in range(len(trials)):
            hashers[i].update(cl[i].tobytes())
            hashers[i].update(gains[i].tobytes())
        clusters.append(cl)
        stat_gains.append(gains)
        stat_ul.append(ul)
        stat_dl.append(dl)
    return _ChunkDraws(clusters, stat_gains, stat_ul, stat_dl, hashers)


def _snap_subband(q: np.ndarray, num_subbands: int) -> np.ndarray:
    """Hold Q constant per subband (its center-subcarrier value).

    Time-domain sounding of the combined channel needs Q^H H to keep the
    tap structure of H inside each subband, which requires Q constant
    there.
    """
    lead = q.shape[:-3]
    s = q.shape[-3]
    width = s // num_subbands
    blocks = q.reshape(*lead, num_subbands, width, *q.shape[-2:])
    center = blocks[..., width // 2, :, :][..., None, :, :]
    return np.broadcast_to(center, blocks.shape).reshape(q.shape).copy()


def _estimate_full(ctx, mode, user, channels, noise):
    if mode == "fd":
        book = ctx.books[user].uplink_full
        if book is None:
            raise est.PilotCapacityError(
                "pilot_len cannot carry all users' antennas for FD sounding"
            )
        return est.fd_uplink_estimate(channels, book, ctx.cfg.pilot_power, noise)
    return ctx.plans_full[user].estimate(channels, ctx.cfg.pilot_power, noise)


def _estimate_effective(ctx, mode, user, channels, noise):
    if mode == "fd":
        book = ctx.books[user].uplink_effective
        if book is None:
            raise est.PilotCapacityError(
                "pilot_len cannot carry all users' combined ports for FD sounding"
            )
        return est.fd_uplink_estimate(channels, book, ctx.cfg.pilot_power, noise)
    return ctx.plans_eff[user].estimate(channels, ctx.cfg.pilot_power, noise)


def _precode(ctx, estimate):
    if ctx.cfg.precoder == "svd":
        f, _, _ = bf.svd_precoder_batch(estimate, ctx.cfg.num_streams, ctx.cfg.tx_power)
        return f
    mu = ctx.cfg.num_users / ctx.cfg.tx_power
    return bf.mu_mmse_precoder(estimate, mu, ctx.cfg.tx_power, ctx.cfg.num_streams)


def _depilot_downlink(ctx, true_channel, noise):
    """Downlink pilot exchange on an (..., rows, N_s) effective channel."""
    phi = ctx.books[0].downlink
    root = np.sqrt(ctx.cfg.num_streams)
    y = root * (true_channel @ phi) + noise
    return (y @ phi.conj().T) / root


def _stage_a(ctx, mode, user, h_window, noise_ul, noise_dl):
    """Beam refresh: sound the channel, precode, select Q from B-hat."""
    hhat = _estimate_full(ctx, mode, user, h_window, noise_ul)
    f = _precode(ctx, hhat)
    b_true = h_window @ f
    bhat = _depilot_downlink(ctx, b_true, noise_dl)
    q = bf.select_first_stage(bhat, ctx.cfg.num_combined)
    if mode == "td":
        q = _snap_subband(q, ctx.cfg.num_subbands)
    return q


def _stage_b(ctx, mode, q_list, h_list, h_win_list, ul_list, dl_list, refresh, freeze_w):
    """Score one block: per-draw receiver chain, then hardening SE.

    On a refresh block the sounding exchange and the data share one
    coherence block, so the channel is pinned to the window realization
    that defined Q and only the estimation noise varies across draws: F
    comes from the per-draw H-hat and W is the selector. On later blocks
    the fading is fresh per draw and only the combined channel G = Q^H H
    is re-sounded: F comes from G-hat and W from the downlink-estimated
    D-hat (unless frozen).
    """
    cfg = ctx.cfg
    users = cfg.num_users
    n = cfg.stat_draws
    g_list, f_list, w_list = [], [], []
    for u in range(users):
        if refresh:
            h = np.broadcast_to(
                h_win_list[u][:, None], (h_win_list[u].shape[0], n) + h_win_list[u].shape[1:]
            )
        else:
            h = h_list[u]
        g = np.einsum("tskc,tnskm->tnscm", q_list[u].conj(), h, optimize=True)
        if refresh:
            hhat = _estimate_full(ctx, mode, u, h, ul_list[u])
            f = _precode(ctx, hhat)
            w = np.broadcast_to(ctx.selector, g.shape[:-2] + ctx.selector.shape)
        else:
            ghat = _estimate_effective(ctx, mode, u, g, ul_list[u])
            f = _precode(ctx, ghat)
            if freeze_w:
                w = np.broadcast_to(ctx.selector, g.shape[:-2] + ctx.selector.shape)
            else:
                d_true = g @ f
                qh_n = np.einsum(
                    "tskc,tnskj->tnscj", q_list[u].conj(), dl_list[u], optimize=True
                )
                dhat = _depilot_downlink(ctx, d_true, qh_n)
                w = bf.update_second_stage(dhat, cfg.num_streams)
        g_list.append(g)
        f_list.append(f)
        w_list.append(w)
    rho = ctx.rho[mode]
    ses = []
    for u in range(users):
        wh = np.swapaxes(w_list[u], -1, -2).conj()
        own = np.moveaxis(wh @ (g_list[u] @ f_list[u]), 1, 0)
        interf = tuple(
            np.moveaxis(wh @ (g_list[u] @ f_list[i]), 1, 0)
            for i in range(users)
            if i != u
        )
        stats = sefx.effective_stats(own)
        rates = sefx.uatf_mu_rate(stats, interf)
        ses.append(rho * np.mean(rates, axis=-1))
    return ses


def _stage_genie(ctx, h_list):
    """Ideal fully digital reference: per-draw Q, W, F from the truth."""
    cfg = ctx.cfg
    users = cfg.num_users
    f_list, qw_list = [], []
    for u in range(users):
        f = _precode(ctx, h_list[u])
        b = h_list[u] @ f
        q = bf.select_first_stage(b, cfg.num_combined)
        d = np.swapaxes(q, -1, -2).conj() @ b
        w = bf.update_second_stage(d, cfg.num_streams)
        f_list.append(f)
        qw_list.append(q @ w)
    ses = []
    for u in range(users):
        wh = np.swapaxes(qw_list[u], -1, -2).conj()
        own = wh @ (h_list[u] @ f_list[u])
        interf = tuple(
            wh @ (h_list[u] @ f_list[i]) for i in range(users) if i != u
        )
        rates = sefx.perfect_rate_from_effective(own, interf)
        ses.append(np.mean(rates, axis=(1, 2)))
    return ses


def _series_names(cfg: ScenarioConfig) -> list[str]:
    if cfg.num_users == 1:
        return list(cfg.schemes)
    names = []
    for scheme in cfg.schemes:
        names += [f"{scheme}:ue{u}" for u in range(cfg.num_users)]
        names.append(f"{scheme}:sum")
    return names


def _resolve_trials(cfg: ScenarioConfig, trial_range) -> list[int]:
    if trial_range is None:
        return list(range(cfg.trial_count))
    start, stop = trial_range
    trials = list(range(int(start), int(stop)))
    if not trials:
        raise ValueError(f"empty trial range {trial_range!r}")
    return trials


def _block_channels(ctx, seed, trials, draws, block):
    """True channels and sounding draws of one block for every user."""
    cfg = ctx.cfg
    s, m, k = cfg.num_subcarriers, cfg.num_bs_antennas, cfg.num_ue_antennas
    t_s = ctx.clock.block_start_time(block)
    h_stat, h_win, win_ul, win_dl = [], [], [], []
    dropped = 0
    for u in range(cfg.num_users):
        traj = ch.Trajectory(cfg.ue_start_positions[u], cfg.ue_velocities[u])
        pos = ch.ue_position_at(traj, t_s)
        params = ch.path_parameter_arrays(
            cfg.bs_position,
            np.broadcast_to(pos, (len(trials), 2)),
            draws.clusters[u],
            cfg.sample_period_s,
            cfg.num_taps,
            cfg.carrier_ghz,
            bs_orientation=cfg.bs_orientation,
            ue_orientation=cfg.ue_orientation,
            reflection_loss_db=cfg.reflection_loss_db,
        )
        params["tap_power"] = params["tap_power"] / ctx.gain_norm
        dropped += params["dropped"]
        win_gains = np.stack(
            [
                rngs.complex_normal(
                    rngs.stream(seed, rngs.WINDOW_FADING, t, block, u), (ctx.num_paths,)
                )
                for t in trials
            ]
        )
        for i in range(len(trials)):
            draws.hashers[i].update(win_gains[i].tobytes())
        h_stat.append(
            ch.freq_channels_from_paths(
                params, draws.stat_gains[u], ctx.ue_array, ctx.bs_array, s
            )
        )
        h_win.append(
            ch.freq_channels_from_paths(
                params, win_gains[:, None, :], ctx.ue_array, ctx.bs_array, s
            )[:, 0]
        )
        win_ul.append(
            np.stack(
                [
                    rngs.complex_normal(
                        rngs.stream(seed, rngs.WINDOW_UL_NOISE, t, block, u),
                        (s, m, cfg.pilot_len),
                    )
                    for t in trials
                ]
            )
        )
        win_dl.append(
            np.stack(
                [
                    rngs.complex_normal(
                        rngs.stream(seed, rngs.WINDOW_DL_NOISE, t, block, u),
                        (s, k, cfg.num_streams),
                    )
                    for t in trials
                ]
            )
        )
    return h_stat, h_win, win_ul, win_dl, dropped


def run_trajectory(
    config: ScenarioConfig,
    seed: int | None = None,
    trial_range: tuple[int, int] | None = None,
    return_per_trial: bool = False,
):
    """Monte Carlo SE trajectory for every configured scheme.

    Returns a ``RunResult`` whose x axis is the block start time and whose
    series hold per-trial SE statistics per block (per user and summed in
    the multi-user case). With ``return_per_trial`` the raw per-trial SE
    arrays, shaped (trials, blocks), are returned alongside for paired
    statistical tests.
    """
    ctx = _EngineContext(config)
    cfg = ctx.cfg
    run_seed = cfg.master_seed if seed is None else int(seed)
    trials = _resolve_trials(cfg, trial_range)
    names = _series_names(cfg)
    blocks = range(1, cfg.num_blocks + 1)

    accum: dict[str, RunningStats] = {}
    per_trial = {name: [] for name in names} if return_per_trial else None
    trial_digests: list[bytes] = []
    dropped_total = 0

    chunk = ctx.chunk_size()
    for lo in range(0, len(trials), chunk):
        part = trials[lo : lo + chunk]
        draws = _draw_chunk(ctx, run_seed, part)
        store = {name: np.empty((len(part), cfg.num_blocks)) for name in names}
        q_state: dict[str, list[np.ndarray] | None] = {s: None for s in cfg.schemes}
        for block in blocks:
            h_stat, h_win, win_ul, win_dl, dropped = _block_channels(
                ctx, run_seed, part, draws, block
            )
            dropped_total += dropped
            for scheme in cfg.schemes:
                policy = POLICIES[scheme]
                if policy.genie:
                    ses = _stage_genie(ctx, h_stat)
                else:
                    mode = policy.estimator or cfg.estimator
                    refresh = _refresh_due(policy, ctx.clock, block)
                    if refresh:
                        q_state[scheme] = [
                            _stage_a(ctx, mode, u, h_win[u], win_ul[u], win_dl[u])
                            for u in range(cfg.num_users)
                        ]
                    ses = _stage_b(
                        ctx,
                        mode,
                        q_state[scheme],
                        h_stat,
                        h_win,
                        draws.stat_ul,
                        draws.stat_dl,
                        refresh,
                        policy.freeze_w,
                    )
                if cfg.num_users == 1:
                    store[scheme][:, block - 1] = ses[0]
                else:
                    for u in range(cfg.num_users):
                        store[f"{scheme}:ue{u}"][:, block - 1] = ses[u]
                    store[f"{scheme}:sum"][:, block - 1] = np.sum(ses, axis=0)
        for name in names:
            stats = RunningStats.from_samples(store[name])
            accum[name] = accum[name].merge(stats) if name in accum else stats
            if return_per_trial:
                per_trial[name].append(store[name])
        trial_digests += [h.digest() for h in draws.hashers]

    run_digest = hashlib.sha256(b"".join(trial_digests)).hexdigest()
    x = np.array([ctx.clock.block_start_time(b) for b in blocks])
    result = RunResult(
        curve_kind="trajectory",
        x_label="block_time_s",
        x_values=x,
        series={name: accum[name] for name in names},
        metadata={
            "config_hash": config_hash(cfg),
            "seed": run_seed,
            "trial_ranges": [[trials[0], trials[-1] + 1]],
            "schemes": list(cfg.schemes),
            "estimator": cfg.estimator,
            "num_users": cfg.num_users,
            "draw_digest": run_digest,
            "dropped_paths": dropped_total,
            "rho": {k: float(v) for k, v in ctx.rho.items()},
        },
    )
    if return_per_trial:
        raw = {name: np.concatenate(chunks, axis=0) for name, chunks in per_trial.items()}
        return result, raw
    return result


def block_one_se(
    config: ScenarioConfig,
    seed: int | None = None,
    trial_range: tuple[int, int] | None = None,
) -> dict[str, np.ndarray]:
    """Per-trial SE of the first block only, per receiver flavor.

    Returns arrays keyed 'ideal-dbf', 'dbf-td' and 'dbf-fd' (per-user
    suffixes and a ':sum' series in the multi-user case), each shaped
    (trials,). The two estimated flavors run the refresh-block chain: Q
    from the block's sounding exchange, F from the per-draw full-channel
    estimate, W the selector.
    """
    ctx = _EngineContext(config)
    cfg = ctx.cfg
    run_seed = cfg.master_seed if seed is None else int(seed)
    trials = _resolve_trials(cfg, trial_range)
    if ctx.plans_full is None:
        ctx.plans_full = [
            est.TdCombPlan(cfg.num_subcarriers, cfg.num_taps, b.td_offsets)
            for b in ctx.books
        ]
    out: dict[str, list[np.ndarray]] = {}

    def push(key, ses):
        if cfg.num_users == 1:
            out.setdefault(key, []).append(ses[0])
        else:
            for u in range(cfg.num_users):
                out.setdefault(f"{key}:ue{u}", []).append(ses[u])
            out.setdefault(f"{key}:sum", []).append(np.sum(ses, axis=0))

    chunk = ctx.chunk_size()
    for lo in range(0, len(trials), chunk):
        part = trials[lo : lo + chunk]
        draws = _draw_chunk(ctx, run_seed, part)
        h_stat, h_win, win_ul, win_dl, _ = _block_channels(ctx, run_seed, part, draws, 1)
        push("ideal-dbf", _stage_genie(ctx, h_stat))
        for mode in ("td", "fd"):
            if mode == "fd" and any(b.uplink_full is None for b in ctx.books):
                continue
            q_list = [
                _stage_a(ctx, mode, u, h_win[u], win_ul[u], win_dl[u])
                for u in range(cfg.num_users)
            ]
            ses = _stage_b(
                ctx, mode, q_list, h_stat, h_win, draws.stat_ul, draws.stat_dl,
                True, False,
            )
            push(f"dbf-{mode}", ses)
    return {key: np.concatenate(parts) for key, parts in out.items()}
