"""Geometric wideband MIMO channel model.

A link is described by a line-of-sight path plus a small number of
single-bounce clusters. Each path i carries a complex gain alpha_i on one
delay tap ell_i, an angle of departure at the transmit array and an angle
of arrival at the receive array. The frequency response on subcarrier nu
of an S-subcarrier grid is

    H[nu] = sum_i alpha_i * exp(-2j pi ell_i nu / S) * a_r(phi_r_i) a_t(phi_t_i)^T

with a_r, a_t the uniform-linear-array response vectors. The LOS gain is
deterministic sqrt(beta_0); cluster gains are drawn CN(0, beta_i) per
coherence block. Large-scale powers beta follow the 3GPP UMi street-canyon
LOS path loss, with a fixed reflection loss for cluster paths.

Arrays are stored receive-major: a tap tensor has shape (K, M, L) and a
frequency tensor (K, M, S) for K receive and M transmit elements.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0
DEFAULT_REFLECTION_LOSS_DB = 10.0


@dataclass(frozen=True)
class ArrayGeometry:
    """Uniform linear array: element count, spacing in wavelengths, axis."""

    num_elements: int
    element_spacing: float = 0.5
    orientation: tuple[float, float] = (0.0, 1.0)

    def __post_init__(self):
        if self.num_elements < 1:
            raise ValueError("array needs at least one element")
        if self.element_spacing <= 0.0:
            raise ValueError("element spacing must be positive")
        axis = np.asarray(self.orientation, dtype=float)
        norm = np.linalg.norm(axis)
        if not np.isfinite(norm) or norm == 0.0:
            raise ValueError("array orientation must be a nonzero 2-D vector")
        object.__setattr__(self, "orientation", tuple(axis / norm))


@dataclass(frozen=True)
class PropagationPath:
    """One geometric path: angles (rad, from broadside), tap index, power."""

    aod: float
    aoa: float
    tap_index: int
    tap_power: float
    is_los: bool = False


@dataclass(frozen=True)
class PropagationGeometry:
    """All paths of one link at one block, plus a dropped-path counter."""

    paths: tuple[PropagationPath, ...]
    dropped_paths: int = 0

    @property
    def num_paths(self) -> int:
        return len(self.paths)


@dataclass(frozen=True)
class TapChannel:
    """Delay-domain channel taps, shape (K, M, L)."""

    taps: np.ndarray
    block_index: int = 1


@dataclass(frozen=True)
class FreqChannel:
    """Per-subcarrier channel matrices, shape (K, M, S)."""

    per_subcarrier: np.ndarray
    block_index: int = 1


@dataclass(frozen=True)
class Trajectory:
    """Constant-velocity UE track: position(t) = start + velocity * t."""

    start_position: tuple[float, float]
    velocity: tuple[float, float]


@dataclass(frozen=True)
class BlockClock:
    """Block-fading clock. Blocks are indexed from tau = 1.

    The channel is redrawn every coherence time T_C; the first-stage
    combiner is refreshed every beam coherence time T_B = t * T_C, i.e. on
    blocks with (tau - 1) mod t == 0.
    """

    coherence_time_s: float
    beam_coherence_time_s: float

    def __post_init__(self):
        if self.coherence_time_s <= 0.0:
            raise ValueError("coherence time must be positive")
        ratio = self.beam_coherence_time_s / self.coherence_time_s
        blocks = round(ratio)
        if blocks < 1 or abs(ratio - blocks) > 1e-9 * max(1.0, abs(ratio)):
            raise ValueError(
                f"beam coherence time must be an integer multiple of the "
                f"coherence time, got ratio {ratio!r}"
            )
        object.__setattr__(self, "_blocks_per_beam", int(blocks))

    @property
    def blocks_per_beam(self) -> int:
        return self._blocks_per_beam

    def q_refresh_due(self, block_index: int) -> bool:
        if block_index < 1:
            raise ValueError("block indices start at 1")
        return (block_index - 1) % self._blocks_per_beam == 0

    def block_start_time(self, block_index: int) -> float:
        if block_index < 1:
            raise ValueError("block indices start at 1")
        return (block_index - 1) * self.coherence_time_s


def ue_position_at(trajectory: Trajectory, time_s: float) -> np.ndarray:
    """UE position (2,) at elapsed time ``time_s`` seconds."""
    start = np.asarray(trajectory.start_position, dtype=float)
    vel = np.asarray(trajectory.velocity, dtype=float)
    return start + vel * time_s


def umi_path_loss(distance_m, carrier_ghz) -> np.ndarray | float:
    """UMi street-canyon LOS path loss as linear power gain.

    PL(dB) = 32.4 + 21 log10(d_m) + 20 log10(f_GHz), valid from 1 m up to
    the breakpoint distance (kilometres at mmWave carriers, far beyond the
    street-scale layouts simulated here). No shadow fading.

    Returns 10**(-PL/10); scalar in, scalar out.
    """
    d = np.asarray(distance_m, dtype=float)
    if np.any(d < 1.0):
        raise ValueError("path loss model is valid for distances >= 1 m")
    if carrier_ghz <= 0.0:
        raise ValueError("carrier frequency must be positive")
    pl_db = 32.4 + 21.0 * np.log10(d) + 20.0 * np.log10(carrier_ghz)
    gain = 10.0 ** (-pl_db / 10.0)
    return float(gain) if np.isscalar(distance_m) else gain


def angle_from_broadside(from_position, to_position, orientation) -> np.ndarray | float:
    """Angle of the direction from->to measured from the array broadside.

    The array axis is ``orientation``; broadside is its perpendicular. With
    unit direction d, the angle is arcsin(d . axis). Supports stacked
    positions with broadcasting over leading axes.
    """
    frm = np.asarray(from_position, dtype=float)
    to = np.asarray(to_position, dtype=float)
    diff = to - frm
    dist = np.linalg.norm(diff, axis=-1)
    if np.any(dist == 0.0):
        raise ValueError("cannot take an angle between coincident points")
    axis = np.asarray(orientation, dtype=float)
    axis = axis / np.linalg.norm(axis)
    sin_angle = np.clip((diff @ axis) / dist, -1.0, 1.0)
    out = np.arcsin(sin_angle)
    return float(out) if out.ndim == 0 else out


def array_response(geometry: ArrayGeometry, angle) -> np.ndarray:
    """ULA response: element n gets phase 2 pi * spacing * n * sin(angle).

    ``angle`` may be scalar or stacked; the element axis is appended last.
    Entries have unit modulus and element 0 is always 1.
    """
    n = np.arange(geometry.num_elements)
    ang = np.asarray(angle, dtype=float)
    phase = 2.0 * np.pi * geometry.element_spacing * np.sin(ang)[..., None] * n
    return np.exp(1j * phase)


def build_geometry(
    bs_position,
    ue_position,
    cluster_positions,
    sample_period_s: float,
    num_taps: int,
    carrier_ghz: float,
    *,
    bs_orientation=(0.0, 1.0),
    ue_orientation=(0.0, 1.0),
    reflection_loss_db: float = DEFAULT_REFLECTION_LOSS_DB,
) -> PropagationGeometry:
    """Derive the per-path angles, taps and large-scale powers of one link.

    The LOS path sits on tap 0 with power equal to the UMi LOS gain at the
    BS-UE distance. Every cluster contributes one single-bounce path: its
    excess delay (bounce length minus LOS length, over the speed of light)
    is quantized to ``round(delay / sample_period_s)`` and clamped up to
    tap 1; a path whose tap lands beyond ``num_taps - 1`` is dropped and
    counted in ``dropped_paths``. Cluster power is the UMi loss evaluated
    at the full bounce length, reduced by ``reflection_loss_db``.

    Angles are taken from each array's broadside: departure angles at the
    BS toward the UE or cluster, arrival angles at the UE toward the BS or
    cluster.
    """
    if sample_period_s <= 0.0:
        raise ValueError("sample period must be positive")
    if num_taps < 1:
        raise ValueError("need at least one tap")
    bs = np.asarray(bs_position, dtype=float)
    ue = np.asarray(ue_position, dtype=float)
    clusters = np.asarray(cluster_positions, dtype=float).reshape(-1, 2)

    los_dist = float(np.linalg.norm(ue - bs))
    paths = [
        PropagationPath(
            aod=angle_from_broadside(bs, ue, bs_orientation),
            aoa=angle_from_broadside(ue, bs, ue_orientation),
            tap_index=0,
            tap_power=umi_path_loss(los_dist, carrier_ghz),
            is_los=True,
        )
    ]
    reflection_gain = 10.0 ** (-reflection_loss_db / 10.0)
    dropped = 0
    for c in clusters:
        bounce = float(np.linalg.norm(c - bs) + np.linalg.norm(ue - c))
        excess_delay = (bounce - los_dist) / SPEED_OF_LIGHT
        tap = int(round(excess_delay / sample_period_s))
        if tap > num_taps - 1:
            dropped += 1
            continue
        tap = max(tap, 1)
        paths.append(
            PropagationPath(
                aod=angle_from_broadside(bs, c, bs_orientation),
                aoa=angle_from_broadside(ue, c, ue_orientation),
                tap_index=tap,
                tap_power=umi_path_loss(bounce, carrier_ghz) * reflection_gain,
            )
        )
    return PropagationGeometry(paths=tuple(paths), dropped_paths=dropped)


def draw_small_scale(geometry: PropagationGeometry, rng: np.random.Generator) -> np.ndarray:
    """Per-path complex gains for one coherence block.

    The LOS gain is the deterministic sqrt(beta_0); each cluster gain is
    CN(0, beta_i). Returns a vector aligned with ``geometry.paths``.
    """
    alphas = np.empty(geometry.num_paths, dtype=complex)
    for i, path in enumerate(geometry.paths):
        if path.is_los:
            alphas[i] = np.sqrt(path.tap_power)
        else:
            scale = np.sqrt(path.tap_power / 2.0)
            alphas[i] = scale * (rng.standard_normal() + 1j * rng.standard_normal())
    return alphas


def build_tap_channel(
    geometry: PropagationGeometry,
    alphas: np.ndarray,
    rx_array: ArrayGeometry,
    tx_array: ArrayGeometry,
    num_taps: int,
    block_index: int = 1,
) -> TapChannel:
    """Assemble the (K, M, L) tap tensor from per-path gains and angles."""
    if len(alphas) != geometry.num_paths:
        raise ValueError("one gain per path required")
    taps = np.zeros((rx_array.num_elements, tx_array.num_elements, num_taps), dtype=complex)
    for path, alpha in zip(geometry.paths, alphas):
        if path.tap_index >= num_taps:
            raise ValueError("path tap index outside the tap budget")
        a_r = array_response(rx_array, path.aoa)
        a_t = array_response(tx_array, path.aod)
        taps[:, :, path.tap_index] += alpha * np.outer(a_r, a_t)
    return TapChannel(taps=taps, block_index=block_index)


def assemble_freq_channel(tap_channel: TapChannel, num_subcarriers: int) -> FreqChannel:
    """DFT the tap tensor onto S subcarriers: H[nu] = sum_l taps[l] e^{-2j pi l nu / S}."""
    taps = tap_channel.taps
    num_taps = taps.shape[-1]
    if num_taps > num_subcarriers:
        raise ValueError(
            f"tap count {num_taps} exceeds subcarrier count {num_subcarriers}"
        )
    freq = np.fft.fft(taps, n=num_subcarriers, axis=-1)
    return FreqChannel(per_subcarrier=freq, block_index=tap_channel.block_index)


# ---------------------------------------------------------------------------
# Stacked helpers used by the Monte Carlo harness. Same math as the scalar
# builders above, vectorized over trials.


def path_parameter_arrays(
    bs_position,
    ue_positions: np.ndarray,
    cluster_positions: np.ndarray,
    sample_period_s: float,
    num_taps: int,
    carrier_ghz: float,
    *,
    bs_orientation=(0.0, 1.0),
    ue_orientation=(0.0, 1.0),
    reflection_loss_db: float = DEFAULT_REFLECTION_LOSS_DB,
) -> dict:
    """Per-path parameters for T trials at once.

    ``ue_positions`` is (T, 2) and ``cluster_positions`` (T, N_cl, 2).
    Returns arrays of shape (T, P) with P = N_cl + 1 and path 0 = LOS.
    Dropped paths (tap beyond the budget) keep their slot with zero power
    so shapes stay uniform; ``dropped`` counts them.
    """
    bs = np.asarray(bs_position, dtype=float)
    ue = np.asarray(ue_positions, dtype=float)
    clusters = np.asarray(cluster_positions, dtype=float)
    t_count, n_cl = clusters.shape[0], clusters.shape[1]

    los_dist = np.linalg.norm(ue - bs, axis=-1)
    d_bs_c = np.linalg.norm(clusters - bs, axis=-1)
    d_c_ue = np.linalg.norm(clusters - ue[:, None, :], axis=-1)
    bounce = d_bs_c + d_c_ue

    tap = np.rint((bounce - los_dist[:, None]) / SPEED_OF_LIGHT / sample_period_s).astype(int)
    dropped_mask = tap > num_taps - 1
    tap = np.clip(tap, 1, num_taps - 1)

    reflection_gain = 10.0 ** (-reflection_loss_db / 10.0)
    power = umi_path_loss(bounce, carrier_ghz) * reflection_gain
    power = np.where(dropped_mask, 0.0, power)

    aod = np.empty((t_count, n_cl + 1))
    aoa = np.empty((t_count, n_cl + 1))
    aod[:, 0] = angle_from_broadside(bs, ue, bs_orientation)
    aoa[:, 0] = angle_from_broadside(ue, np.broadcast_to(bs, ue.shape), ue_orientation)
    aod[:, 1:] = angle_from_broadside(bs, clusters, bs_orientation)
    aoa[:, 1:] = angle_from_broadside(ue[:, None, :], clusters, ue_orientation)

    taps = np.concatenate([np.zeros((t_count, 1), dtype=int), tap], axis=1)
    powers = np.concatenate([umi_path_loss(los_dist, carrier_ghz)[:, None], power], axis=1)
    return {
        "aod": aod,
        "aoa": aoa,
        "tap_index": taps,
        "tap_power": powers,
        "dropped": int(dropped_mask.sum()),
    }


def freq_channels_from_paths(
    params: dict,
    gains: np.ndarray,
    rx_array: ArrayGeometry,
    tx_array: ArrayGeometry,
    num_subcarriers: int,
) -> np.ndarray:
    """Stacked frequency responses (T, n, S, K, M) from path parameters.

    ``gains`` holds unit-variance fading draws of shape (T, n, P); path 0
    (LOS) ignores its draw and uses the deterministic gain. Each entry is
    scaled by sqrt(tap_power) before the per-tap phase ramp is applied.
    """
    aoa, aod = params["aoa"], params["aod"]
    tap_index, tap_power = params["tap_index"], params["tap_power"]
    a_r = array_response(rx_array, aoa)
    a_t = array_response(tx_array, aod)

    alphas = gains * np.sqrt(tap_power)[:, None, :]
    alphas[:, :, 0] = np.sqrt(tap_power[:, 0])[:, None]

    nu = np.arange(num_subcarriers)
    ramp = np.exp(-2j * np.pi * tap_index[..., None] * nu / num_subcarriers)
    coef = alphas[..., None] * ramp[:, None, :, :]
    return np.einsum("tnps,tpk,tpm->tnskm", coef, a_r, a_t, optimize=True)
