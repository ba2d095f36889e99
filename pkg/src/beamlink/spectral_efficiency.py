"""Spectral-efficiency evaluation: perfect-CSI rates and hardening bounds.

With combiners Q, W and precoder F on a subcarrier, the post-combining
signal model is y = E s + n' with effective channel E = W^H Q^H H F and
n' white (Q W has orthonormal columns). Perfect-CSI evaluation scores the
instantaneous rate log2 det(I + E E^H).

Under imperfect CSI the receiver only knows the statistics of E, and the
achievable rate is scored with the hardening (use-and-forget) bound: the
mean effective channel carries the signal, everything else is noise,

    R = log2 det( I + Ebar^H C^{-1} Ebar ),
    C = Cov[(E - Ebar) s] + sum_{i != u} E[E_i E_i^H] + I,

with the interference sum present only in the multi-user case. The
statistics are estimated from batches of effective-channel samples drawn
by the harness on common fading draws.

All SE figures are overhead-weighted: SE = (rho / S) * sum_nu R[nu] with
rho = 1 - (pilot cost + N_s) / t_c. Time-domain sounding occupies only L
of S subcarriers, so its per-subcarrier pilot cost is t_p * L / S.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import log2_det_hpd


@dataclass(frozen=True)
class OverheadModel:
    """Pilot/data split of one coherence block of t_c symbols."""

    pilot_len: int
    num_streams: int
    block_len_symbols: int
    effective_pilot_fraction: float

    @classmethod
    def frequency_domain(cls, pilot_len: int, num_streams: int, block_len_symbols: int):
        return cls(pilot_len, num_streams, block_len_symbols, float(pilot_len))

    @classmethod
    def time_domain(cls, pilot_len: int, num_streams: int, block_len_symbols: int,
                    num_taps: int, num_subcarriers: int):
        frac = pilot_len * num_taps / num_subcarriers
        return cls(pilot_len, num_streams, block_len_symbols, frac)


def overhead_rho(model: OverheadModel) -> float:
    """Fraction of the coherence block left for data.

    rho = 1 - (effective pilot cost + N_s) / t_c; the N_s term pays for
    the downlink pilots of the effective channel.
    """
    rho = 1.0 - (model.effective_pilot_fraction + model.num_streams) / model.block_len_symbols
    if rho <= 0.0:
        raise ValueError(
            f"coherence block of {model.block_len_symbols} symbols is consumed "
            f"by pilots ({model.effective_pilot_fraction} + {model.num_streams})"
        )
    return rho


@dataclass(frozen=True)
class EffectiveChannelStats:
    """Batch statistics of the effective channel E on one subcarrier.

    ``mean_channel`` is E[E] (N_s x N_s, or stacked), ``noise_covariance``
    already includes the white-noise identity: Cov[(E - Ebar) s] + I.
    """

    mean_channel: np.ndarray
    noise_covariance: np.ndarray
    sample_count: int


def effective_stats(samples: np.ndarray) -> EffectiveChannelStats:
    """Sample statistics of effective-channel draws.

    ``samples`` has the draw axis first: (n, ..., N_s, N_s) with n >= 2.
    With unit-covariance symbols, Cov[(E - Ebar) s] reduces to the mean
    outer product of the centered samples.
    """
    e = np.asarray(samples)
    if e.ndim < 3:
        raise ValueError("samples must be (draws, ..., N_s, N_s)")
    n = e.shape[0]
    if n < 2:
        raise ValueError("at least two samples are needed for a covariance")
    mean = e.mean(axis=0)
    centered = e - mean
    cov = np.einsum("n...ij,n...kj->...ik", centered, centered.conj()) / n
    eye = np.eye(e.shape[-2])
    return EffectiveChannelStats(
        mean_channel=mean,
        noise_covariance=cov + eye,
        sample_count=n,
    )


def _uatf_log2det(mean: np.ndarray, cov: np.ndarray) -> np.ndarray:
    # Hermitian-symmetrize before factorizing; sampling noise can leave
    # C a few ulp off Hermitian.
    c = 0.5 * (cov + np.swapaxes(cov, -1, -2).conj())
    solved = np.linalg.solve(c, mean)
    core = np.swapaxes(mean, -1, -2).conj() @ solved
    eye = np.eye(mean.shape[-1])
    m = eye + 0.5 * (core + np.swapaxes(core, -1, -2).conj())
    return log2_det_hpd(m)


def uatf_su_rate(stats: EffectiveChannelStats) -> np.ndarray | float:
    """Single-user hardening bound log2 det(I + Ebar^H C^{-1} Ebar).

    Accepts stacked statistics; scalar in, scalar out.
    """
    rate = _uatf_log2det(stats.mean_channel, stats.noise_covariance)
    return float(rate) if np.ndim(rate) == 0 else rate


def uatf_mu_rate(
    own_stats: EffectiveChannelStats,
    interference_samples: tuple[np.ndarray, ...] = (),
) -> np.ndarray | float:
    """Per-user hardening bound with inter-user interference.

    ``interference_samples`` holds, per interfering user i, the samples of
    E_i = W_u^H Q_u^H H_u F_i on the same fading draws as ``own_stats``
    (draw axis first). Their mean outer products enter the noise
    covariance. With no interferers this is exactly ``uatf_su_rate``.
    """
    cov = own_stats.noise_covariance
    for samples in interference_samples:
        e = np.asarray(samples)
        if e.shape[0] != own_stats.sample_count:
            raise ValueError("interference batches must match the own-channel batch")
        cov = cov + np.einsum("n...ij,n...kj->...ik", e, e.conj()) / e.shape[0]
    rate = _uatf_log2det(own_stats.mean_channel, cov)
    return float(rate) if np.ndim(rate) == 0 else rate


def perfect_rate_from_effective(
    effective: np.ndarray,
    interference: tuple[np.ndarray, ...] = (),
) -> np.ndarray:
    """Per-draw rate log2 det(I + E^H C^{-1} E) of an effective channel.

    ``effective`` is the post-combining channel E = W^H Q^H H F, stacked
    (..., N_s, N_s). With orthonormal Q W the combined noise is white, so
    C = I plus, per interfering effective channel E_i in ``interference``
    (same stacked shape), the outer product E_i E_i^H of that draw.
    """
    e = np.asarray(effective)
    eye = np.eye(e.shape[-1])
    cov = np.broadcast_to(eye, e.shape[:-2] + eye.shape).copy()
    for other in interference:
        o = np.asarray(other)
        cov = cov + o @ np.swapaxes(o, -1, -2).conj()
    solved = np.linalg.solve(cov, e)
    core = np.swapaxes(e, -1, -2).conj() @ solved
    return log2_det_hpd(eye + 0.5 * (core + np.swapaxes(core, -1, -2).conj()))


def perfect_rates(
    channel: np.ndarray,
    precoder: np.ndarray,
    first_stage: np.ndarray,
    second_stage: np.ndarray,
) -> np.ndarray:
    """Instantaneous per-subcarrier rate log2 det(I + (QW)^+ H F F^H H^H (QW)).

    Inputs are stacked matrices: channel (..., K, M), precoder (..., M,
    N_s), first_stage (..., K, N_c), second_stage (..., N_c, N_s). The
    combined QW must have full column rank; with orthonormal columns (the
    constructed case) the pseudo-inverse is the Hermitian transpose.
    """
    qw = first_stage @ second_stage
    gram = np.swapaxes(qw, -1, -2).conj() @ qw
    b = np.swapaxes(qw, -1, -2).conj() @ (channel @ precoder)
    eye = np.eye(qw.shape[-1])
    outer = b @ np.swapaxes(b, -1, -2).conj()
    if np.max(np.abs(gram - eye)) <= 1e-8:
        return log2_det_hpd(eye + outer)
    sv = np.linalg.svd(gram, compute_uv=False)
    if np.any(sv[..., -1] <= 1e-12 * sv[..., 0]):
        raise np.linalg.LinAlgError("combined Q W is rank deficient")
    # Post-combining noise is colored by (QW)^H QW, so the mutual
    # information whitens with the Gram inverse.
    sign, logdet = np.linalg.slogdet(eye + np.linalg.solve(gram, outer))
    return logdet / np.log(2.0)


def se_perfect(
    channel: np.ndarray,
    precoder: np.ndarray,
    first_stage: np.ndarray,
    second_stage: np.ndarray,
    rho: float = 1.0,
) -> float:
    """Overhead-weighted perfect-CSI SE: (rho / S) * sum over subcarriers.

    The matrices carry the subcarrier axis first: channel (S, K, M) etc.
    Expectation over fading is the caller's job; this scores one draw.
    """
    rates = perfect_rates(channel, precoder, first_stage, second_stage)
    if rates.ndim != 1:
        raise ValueError("se_perfect expects exactly one stacked axis (subcarriers)")
    return float(rho * np.mean(rates))
