"""Pilot-based channel estimation in the frequency and time (delay) domains.

Two estimator families share one receive model. On subcarrier nu the
uplink pilot block is

    Y[nu] = sqrt(P * t_p) * H[nu]^T Phi + N[nu]

with Phi a (ports x t_p) pilot matrix with orthonormal rows and N unit
variance complex Gaussian noise. The maximum-likelihood estimate is the
de-piloted block Y Phi^+ / sqrt(P * t_p); with orthonormal rows the
pseudo-inverse is just Phi^H.

The frequency-domain (FD) estimator applies that on every subcarrier. The
time-domain (TD) estimator instead sounds only L pilot tones per transmit
port, spaced (almost) uniformly: nu_l = offset + round(S * l / L). Because
an L-tap channel is fully determined by L generalized DFT coefficients,
inverting the L x L tone/tap system and re-expanding with an S-point DFT
reconstructs all S subcarriers exactly in the noiseless case. Distinct
offsets give different ports (or different users) disjoint tone sets, so
they can be sounded simultaneously.

Pilot energy protocol: both estimators spend the same total energy. FD
puts power P on every resource element; TD concentrates the same budget
on its L tones, so each TD tone carries S/L times the FD per-tone power.

The same tone/tap inversion extends to effective (combined/precoded)
channels that are only piecewise constant in frequency: the band is split
into N_sub subbands and L_eff tones are sounded per subband, with the
tone/tap system still built on the full-S frequency grid.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .numerics import SingularMatrixError, pseudo_inverse

COND_LIMIT = 1e8
NMSE_FLOOR_DB = -300.0


class PilotCapacityError(ValueError):
    """Raised when the requested pilot layout does not fit the grid."""


@dataclass(frozen=True)
class PilotBook:
    """Pilot matrices for one user.

    ``uplink_full`` (K x t_p) sounds the full channel, ``uplink_effective``
    (N_c x t_p) the combined channel, ``downlink`` (N_s x N_s) the precoded
    channel. Uplink books have orthonormal rows, the downlink book is
    unitary. ``td_offsets`` assigns one tone-comb offset per transmit
    antenna for time-domain sounding; ``td_effective_offsets`` does the
    same per combined port.
    """

    uplink_full: np.ndarray | None
    uplink_effective: np.ndarray | None
    downlink: np.ndarray
    td_offsets: tuple[int, ...]
    td_effective_offsets: tuple[int, ...]


@dataclass(frozen=True)
class EstimateReport:
    """One estimation event: the estimate, its quality and its pilot cost."""

    estimate: np.ndarray
    nmse_db: float
    pilot_symbols_spent: int
    method_tag: str


def _dft_rows(num_rows: int, length: int, row_offset: int = 0) -> np.ndarray:
    """Rows ``row_offset .. row_offset+num_rows`` of the unitary length-point DFT."""
    rows = np.arange(row_offset, row_offset + num_rows)
    cols = np.arange(length)
    return np.exp(-2j * np.pi * np.outer(rows, cols) / length) / np.sqrt(length)


def make_pilot_books(
    num_tx: int,
    num_effective: int,
    num_streams: int,
    pilot_len: int,
    num_subcarriers: int,
    num_taps: int,
) -> PilotBook:
    """Build the pilot matrices and tone-comb offsets for a single user.

    Uplink books are the first rows of the unitary pilot_len-point DFT
    (orthonormal by construction), the downlink book is the unitary
    num_streams-point DFT. TD offsets are assigned 0, 1, 2, ... per
    transmit antenna and per combined port.

    Raises
    ------
    PilotCapacityError
        If pilot_len cannot carry the requested rows, or more tone combs
        are needed than ceil(S / L) distinct offsets provide.
    """
    if num_streams < 1 or num_effective < 1 or num_tx < 1:
        raise ValueError("port counts must be positive")
    if pilot_len < max(num_tx, num_effective):
        raise PilotCapacityError(
            f"pilot length {pilot_len} cannot carry {max(num_tx, num_effective)} "
            f"orthonormal rows"
        )
    max_offsets = -(-num_subcarriers // num_taps)
    if num_tx > max_offsets:
        raise PilotCapacityError(
            f"{num_tx} tone combs requested but only {max_offsets} distinct "
            f"offsets exist for S={num_subcarriers}, L={num_taps}"
        )
    return PilotBook(
        uplink_full=_dft_rows(num_tx, pilot_len),
        uplink_effective=_dft_rows(num_effective, pilot_len),
        downlink=_dft_rows(num_streams, num_streams),
        td_offsets=tuple(range(num_tx)),
        td_effective_offsets=tuple(range(num_effective)),
    )


def make_mu_pilot_books(
    num_users: int,
    num_tx: int,
    num_effective: int,
    num_streams: int,
    pilot_len: int,
    num_subcarriers: int,
    num_taps: int,
) -> tuple[PilotBook, ...]:
    """Per-user pilot books with pairwise-disjoint resources.

    Frequency domain: user u takes rows [u*K, (u+1)*K) of the pilot DFT
    (built only when pilot_len fits all users, otherwise left as None).
    Time domain: tone-comb offsets are blocked per user, antenna k of user
    u getting offset u*K + k, so the per-user tone sets are disjoint.

    Raises
    ------
    PilotCapacityError
        If num_users * num_taps exceeds the subcarrier count, or the
        blocked offsets run past ceil(S / L).
    """
    if num_users < 1:
        raise ValueError("need at least one user")
    if num_users * num_taps > num_subcarriers:
        raise PilotCapacityError(
            f"{num_users} users x {num_taps} pilot tones exceed "
            f"{num_subcarriers} subcarriers"
        )
    max_offsets = -(-num_subcarriers // num_taps)
    if num_users * num_tx > max_offsets:
        raise PilotCapacityError(
            f"{num_users} users x {num_tx} antennas need more tone combs than "
            f"the {max_offsets} distinct offsets available"
        )
    fd_full_ok = pilot_len >= num_users * num_tx
    fd_eff_ok = pilot_len >= num_users * num_effective
    books = []
    for u in range(num_users):
        books.append(
            PilotBook(
                uplink_full=_dft_rows(num_tx, pilot_len, u * num_tx) if fd_full_ok else None,
                uplink_effective=_dft_rows(num_effective, pilot_len, u * num_effective)
                if fd_eff_ok
                else None,
                downlink=_dft_rows(num_streams, num_streams),
                td_offsets=tuple(range(u * num_tx, (u + 1) * num_tx)),
                td_effective_offsets=tuple(
                    range(u * num_effective, (u + 1) * num_effective)
                ),
            )
        )
    return tuple(books)


def simulate_uplink_pilot_rx(
    channel: np.ndarray,
    pilots: np.ndarray,
    power: float,
    rng: np.random.Generator | None,
    noise_scale: float = 1.0,
) -> np.ndarray:
    """Received pilot block Y = sqrt(power * t_p) * channel^T @ pilots + noise.

    ``channel`` is (..., K, M); the result is (..., M, t_p). Noise entries
    are CN(0, noise_scale^2); pass ``noise_scale=0`` (rng may be None) for
    the exact noiseless block.
    """
    if power <= 0.0:
        raise ValueError("pilot power must be positive")
    ch = np.asarray(channel)
    pilot_len = pilots.shape[-1]
    signal = np.sqrt(power * pilot_len) * (np.swapaxes(ch, -1, -2) @ pilots)
    if noise_scale == 0.0:
        return signal
    if rng is None:
        raise ValueError("rng required when noise_scale > 0")
    shape = signal.shape
    noise = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    return signal + noise_scale * noise / np.sqrt(2.0)


def ml_depilot(rx_block: np.ndarray, pilots: np.ndarray, scale: float) -> np.ndarray:
    """Maximum-likelihood de-piloting: rx @ pilots^+ / scale.

    ``rx_block`` is (..., M, t_p) and ``pilots`` (R, t_p); returns the
    (..., M, R) estimate of the transposed channel. ``scale`` is the pilot
    amplitude, e.g. sqrt(P_r * t_p) uplink or sqrt(N_s) downlink.
    """
    if scale <= 0.0:
        raise ValueError("pilot scale must be positive")
    pinv = pseudo_inverse(pilots)
    return (rx_block @ pinv) / scale


def td_pilot_indices(num_subcarriers: int, num_taps: int, offset: int = 0) -> np.ndarray:
    """Tone comb nu_l = offset + round(S * l / L), l = 0 .. L-1.

    When S/L is not an integer the comb follows the rounded virtual grid of
    ceil(S/L)*L tones with the excess dropped; offsets whose comb would
    leave the grid are rejected, since they would lose observations.

    Raises
    ------
    PilotCapacityError
        If the offset is negative, at or beyond ceil(S/L), or its last
        tone falls outside the grid; also if rounding ever collided (it
        cannot for S >= L, but the invariant is enforced).
    """
    if num_taps < 1 or num_subcarriers < num_taps:
        raise ValueError("need 1 <= num_taps <= num_subcarriers")
    max_offsets = -(-num_subcarriers // num_taps)
    if not 0 <= offset < max_offsets:
        raise PilotCapacityError(
            f"offset {offset} outside the {max_offsets} available patterns"
        )
    ell = np.arange(num_taps)
    idx = offset + np.floor(num_subcarriers * ell / num_taps + 0.5).astype(int)
    if idx[-1] >= num_subcarriers:
        raise PilotCapacityError(
            f"offset {offset} pushes tone {idx[-1]} beyond the grid of "
            f"{num_subcarriers}; this pattern falls in the dropped excess "
            f"of the rounded virtual grid"
        )
    if len(np.unique(idx)) != num_taps:
        raise PilotCapacityError("tone comb collided after rounding")
    return idx


def td_conversion_matrix(pilot_indices: np.ndarray, num_taps: int, num_subcarriers: int) -> np.ndarray:
    """Generalized DFT T with T[l, j] = exp(-2j pi nu_j l / S).

    Maps tap vectors to their values on the pilot tones: h[nu_j] =
    sum_l taps[l] T[l, j].
    """
    idx = np.asarray(pilot_indices)
    ell = np.arange(num_taps)
    return np.exp(-2j * np.pi * np.outer(ell, idx) / num_subcarriers)


def _checked_inverse(t: np.ndarray, cond_limit: float) -> np.ndarray:
    cond = np.linalg.cond(t)
    if not np.isfinite(cond) or cond > cond_limit:
        raise SingularMatrixError(
            f"tone/tap system condition number {cond:.3e} exceeds {cond_limit:.1e}"
        )
    return np.linalg.inv(t)


def td_estimate(
    observations: np.ndarray,
    pilot_indices: np.ndarray,
    num_taps: int,
    num_subcarriers: int,
    scale: float,
    cond_limit: float = COND_LIMIT,
) -> np.ndarray:
    """Reconstruct all S subcarriers from L de-piloted tone observations.

    ``observations`` is (..., L) with observations[..., l] = scale *
    h[nu_l] + noise. The tap vector solves the L x L tone/tap system; the
    reconstruction applies the plain S-point DFT, so a noiseless round
    trip on a true L-tap channel is the identity.

    Returns the (..., S) reconstruction.
    """
    if scale <= 0.0:
        raise ValueError("pilot scale must be positive")
    obs = np.asarray(observations)
    idx = np.asarray(pilot_indices)
    if obs.shape[-1] != num_taps or idx.shape[-1] != num_taps:
        raise ValueError("need exactly one observation per modeled tap")
    t = td_conversion_matrix(idx, num_taps, num_subcarriers)
    taps = (obs / scale) @ _checked_inverse(t, cond_limit)
    return np.fft.fft(taps, n=num_subcarriers, axis=-1)


def td_subband_indices(
    num_subcarriers: int,
    num_subbands: int,
    taps_per_subband: int,
    offset: int = 0,
) -> np.ndarray:
    """Per-subband tone combs, shape (N_sub, L_eff), on the global grid."""
    if num_subbands < 1 or num_subcarriers % num_subbands != 0:
        raise ValueError("subcarrier count must be divisible by the subband count")
    width = num_subcarriers // num_subbands
    local = td_pilot_indices(width, taps_per_subband, offset)
    return local[None, :] + width * np.arange(num_subbands)[:, None]


def td_estimate_effective(
    observations: np.ndarray,
    pilot_indices: np.ndarray,
    num_subcarriers: int,
    scale: float,
    cond_limit: float = COND_LIMIT,
) -> np.ndarray:
    """Subband TD reconstruction of a piecewise-constant-precoded channel.

    ``observations`` is (..., N_sub, L_eff) and ``pilot_indices`` a
    matching (N_sub, L_eff) table of global tone indices, L_eff per
    subband. Within each subband the effective channel inherits the tap
    structure of the propagation channel (the precoder being constant
    there), so each subband solves its own L_eff x L_eff tone/tap system
    on the full-S frequency grid and re-expands only its own tones.

    With N_sub = 1 and L_eff = L this is exactly ``td_estimate``. Returns
    the (..., S) reconstruction.
    """
    if scale <= 0.0:
        raise ValueError("pilot scale must be positive")
    obs = np.asarray(observations)
    idx = np.asarray(pilot_indices)
    if obs.shape[-2:] != idx.shape:
        raise ValueError("observations and pilot indices disagree on layout")
    num_subbands, taps_eff = idx.shape
    if num_subcarriers % num_subbands != 0:
        raise ValueError("subcarrier count must be divisible by the subband count")
    width = num_subcarriers // num_subbands
    inv_t = np.stack(
        [
            _checked_inverse(td_conversion_matrix(idx[b], taps_eff, num_subcarriers), cond_limit)
            for b in range(num_subbands)
        ]
    )
    taps = np.einsum("...bl,blk->...bk", obs / scale, inv_t)
    global_nu = width * np.arange(num_subbands)[:, None] + np.arange(width)[None, :]
    ell = np.arange(taps_eff)
    expand = np.exp(-2j * np.pi * ell[None, :, None] * global_nu[:, None, :] / num_subcarriers)
    recon = np.einsum("...bk,bkj->...bj", taps, expand)
    return recon.reshape(*recon.shape[:-2], num_subcarriers)


def td_tone_power_boost(num_subcarriers: int, num_active_tones: int) -> float:
    """Equal-total-energy boost: per-tone power factor S / (active tones)."""
    if num_active_tones < 1 or num_active_tones > num_subcarriers:
        raise ValueError("active tone count must lie in [1, S]")
    return num_subcarriers / num_active_tones


def pilot_symbols_spent(method_tag: str, pilot_len: int, num_subcarriers: int, num_taps: int) -> int:
    """Pilot budget ledger: FD spends t_p * S resources, TD t_p * L."""
    if method_tag == "fd":
        return pilot_len * num_subcarriers
    if method_tag == "td":
        return pilot_len * num_taps
    raise ValueError(f"unknown estimator tag {method_tag!r}")


def pilot_cost_ratio(pilot_len: int, num_subcarriers: int, num_taps: int) -> Fraction:
    """Exact TD/FD pilot-cost ratio, L/S as a Fraction."""
    return Fraction(
        pilot_symbols_spent("td", pilot_len, num_subcarriers, num_taps),
        pilot_symbols_spent("fd", pilot_len, num_subcarriers, num_taps),
    )


def nmse(estimate: np.ndarray, truth: np.ndarray) -> float:
    """Normalized mean squared error in dB, floored at -300 dB.

    10 log10( ||estimate - truth||_F^2 / ||truth||_F^2 ) over the whole
    batch. An all-zero truth has no normalization and raises.
    """
    est = np.asarray(estimate)
    tru = np.asarray(truth)
    if est.shape != tru.shape:
        raise ValueError("estimate and truth shapes differ")
    denom = np.sum(np.abs(tru) ** 2)
    if denom == 0.0:
        raise ValueError("truth tensor is identically zero")
    num = np.sum(np.abs(est - tru) ** 2)
    if num == 0.0:
        return NMSE_FLOOR_DB
    return max(float(10.0 * np.log10(num / denom)), NMSE_FLOOR_DB)


# ---------------------------------------------------------------------------
# Stacked full-channel estimators used by the Monte Carlo harness. These are
# the literal simulate-then-invert pipelines, vectorized over draws and
# subcarriers; noise fields are supplied by the caller so common random
# numbers can be shared between estimators.


def fd_uplink_estimate(
    channels: np.ndarray,
    pilots: np.ndarray,
    power: float,
    noise: np.ndarray,
) -> np.ndarray:
    """FD ML estimate of (..., S, R, M) channels from a shared noise field.

    ``pilots`` is (R, t_p); ``noise`` (..., S, M, t_p) unit-variance.
    """
    pilot_len = pilots.shape[-1]
    scale = np.sqrt(power * pilot_len)
    y = scale * (np.swapaxes(channels, -1, -2) @ pilots) + noise
    est_t = y @ pseudo_inverse(pilots) / scale
    return np.swapaxes(est_t, -1, -2)


class TdCombPlan:
    """Precomputed tone combs and inversions for full-band TD sounding.

    One comb per transmit port; port p uses ``offsets[p]``. The per-tone
    amplitude realizing the equal-energy protocol at pilot power P is
    sqrt(P * S / L) per symbol, repeated over t_p symbols.
    """

    def __init__(self, num_subcarriers: int, num_taps: int, offsets: tuple[int, ...],
                 cond_limit: float = COND_LIMIT):
        self.num_subcarriers = num_subcarriers
        self.num_taps = num_taps
        self.offsets = tuple(offsets)
        combs = [td_pilot_indices(num_subcarriers, num_taps, o) for o in self.offsets]
        self.indices = np.stack(combs)  # (P, L)
        flat = self.indices.ravel()
        if len(np.unique(flat)) != flat.size:
            raise PilotCapacityError("tone combs of different ports overlap")
        self.inv_t = np.stack(
            [
                _checked_inverse(
                    td_conversion_matrix(c, num_taps, num_subcarriers), cond_limit
                )
                for c in combs
            ]
        )  # (P, L, L)

    def estimate(self, channels: np.ndarray, power: float, noise: np.ndarray) -> np.ndarray:
        """TD ML estimate of (..., S, P, M) channels.

        ``noise`` is the same (..., S, M, t_p) unit-variance field the FD
        estimator sees; TD consumes only its own tone slices. Averaging
        the t_p repeated symbols is the ML combiner, so the effective
        tone noise has variance 1 / t_p.
        """
        amp = np.sqrt(power * self.num_subcarriers / self.num_taps)
        ports = np.arange(len(self.offsets))
        tones = channels[..., self.indices, ports[:, None], :]  # (..., P, L, M)
        tone_noise = noise[..., self.indices, :, :].mean(axis=-1)  # (..., P, L, M)
        obs = amp * tones + tone_noise
        taps = np.einsum("...plm,plk->...pkm", obs / amp, self.inv_t)
        recon = np.fft.fft(taps, n=self.num_subcarriers, axis=-2)  # (..., P, S, M)
        return np.moveaxis(recon, -2, -3)


class TdSubbandPlan:
    """Precomputed per-subband tone combs for effective-channel TD sounding."""

    def __init__(self, num_subcarriers: int, num_subbands: int, taps_per_subband: int,
                 offsets: tuple[int, ...], cond_limit: float = COND_LIMIT):
        self.num_subcarriers = num_subcarriers
        self.num_subbands = num_subbands
        self.taps_per_subband = taps_per_subband
        self.offsets = tuple(offsets)
        self.width = num_subcarriers // num_subbands
        tables = [
            td_subband_indices(num_subcarriers, num_subbands, taps_per_subband, o)
            for o in self.offsets
        ]
        self.indices = np.stack(tables)  # (P, N_sub, L_eff)
        flat = self.indices.ravel()
        if len(np.unique(flat)) != flat.size:
            raise PilotCapacityError("subband tone combs of different ports overlap")
        inv = np.empty((len(self.offsets), num_subbands, taps_per_subband, taps_per_subband),
                       dtype=complex)
        for p, table in enumerate(tables):
            for b in range(num_subbands):
                inv[p, b] = _checked_inverse(
                    td_conversion_matrix(table[b], taps_per_subband, num_subcarriers),
                    cond_limit,
                )
        self.inv_t = inv
        ell = np.arange(taps_per_subband)
        global_nu = self.width * np.arange(num_subbands)[:, None] + np.arange(self.width)[None, :]
        self.expand = np.exp(
            -2j * np.pi * ell[None, :, None] * global_nu[:, None, :] / num_subcarriers
        )  # (N_sub, L_eff, width)
        self.active_tones = num_subbands * taps_per_subband

    def estimate(self, channels: np.ndarray, power: float, noise: np.ndarray) -> np.ndarray:
        """Subband TD ML estimate of (..., S, P, M) effective channels."""
        amp = np.sqrt(power * self.num_subcarriers / self.active_tones)
        ports = np.arange(len(self.offsets))
        tones = channels[..., self.indices, ports[:, None, None], :]  # (..., P, N_sub, L_eff, M)
        tone_noise = noise[..., self.indices, :, :].mean(axis=-1)
        obs = amp * tones + tone_noise
        taps = np.einsum("...pblm,pblk->...pbkm", obs / amp, self.inv_t)
        recon = np.einsum("...pbkm,bkj->...pbjm", taps, self.expand)
        shape = recon.shape[:-4] + (len(self.offsets), self.num_subcarriers, recon.shape[-1])
        recon = recon.reshape(shape)  # (..., P, S, M)
        return np.moveaxis(recon, -2, -3)
