"""Precoders and the two-stage digital combiner.

Single-user transmission on each subcarrier sends N_s streams through the
precoder F built from the channel estimate's top right-singular vectors,
with powers water-filled across the stream gains. The receiver combines
in two stages: a wide first stage Q (K x N_c, orthonormal columns) that
tracks the slowly varying beam-level subspace, and a small second stage W
(N_c x N_s, orthonormal columns) that tracks fast fading inside that
subspace. Q is refreshed only once per beam coherence window, W every
coherence block; at the block where Q is refreshed W starts as the
leading-dimension selector [I; 0].

Multi-user downlink replaces the SVD precoder with a per-user regularized
channel inversion (MMSE form), truncated to N_s columns and normalized to
the per-user power budget.

All constructors accept stacked inputs: shapes are written (..., rows,
cols) and every leading axis is broadcast over. Orthonormal outputs carry
the deterministic phase convention from :mod:`beamlink.numerics`.
"""

from __future__ import annotations

import numpy as np

from .numerics import (
    PowerAllocation,
    SingularMatrixError,
    phase_normalize_columns,
    water_fill_many,
)

RANK_TOL = 1e-12


def svd_precoder_batch(
    channel_estimate: np.ndarray,
    num_streams: int,
    total_power: float,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Stacked SVD precoder: returns (F, per-stream powers, water levels).

    ``channel_estimate`` is (..., R, M); F is (..., M, N_s) with columns
    sqrt(P_i) times the i-th right singular vector, so ||F||_F^2 equals
    ``total_power`` exactly on every stacked matrix.
    """
    est = np.asarray(channel_estimate)
    if num_streams < 1 or num_streams > min(est.shape[-2:]):
        raise ValueError(
            f"stream count {num_streams} outside [1, min{est.shape[-2:]}]"
        )
    if total_power <= 0.0:
        raise ValueError("total power must be positive")
    _, s, vh = np.linalg.svd(est, full_matrices=False)
    if np.any(s[..., num_streams - 1] <= RANK_TOL * s[..., 0]):
        worst = float(np.min(s[..., num_streams - 1] / s[..., 0]))
        raise SingularMatrixError(
            f"channel estimate rank deficient for {num_streams} streams "
            f"(sigma_Ns/sigma_1 = {worst:.3e})"
        )
    gains = s[..., :num_streams] ** 2
    powers, levels = water_fill_many(gains, total_power)
    v_cols = np.swapaxes(vh[..., :num_streams, :], -1, -2).conj()
    f = v_cols * np.sqrt(powers)[..., None, :]
    return f, powers, levels


def svd_precoder(
    channel_estimate: np.ndarray,
    num_streams: int,
    total_power: float,
) -> tuple[np.ndarray, PowerAllocation]:
    """SVD precoder for one channel estimate.

    Parameters
    ----------
    channel_estimate : (R, M) complex ndarray
        Channel (or effective channel) whose rows are receive ports.
    num_streams : number of spatial streams N_s, 1 <= N_s <= min(R, M).
    total_power : per-subcarrier transmit power budget.

    Returns
    -------
    (F, PowerAllocation)
        F is (M, N_s); stream i is the i-th right singular vector scaled
        by sqrt(P_i) with P water-filled over the squared singular values.
    """
    est = np.asarray(channel_estimate)
    if est.ndim != 2:
        raise ValueError("svd_precoder expects a single matrix; use svd_precoder_batch")
    f, powers, level = svd_precoder_batch(est, num_streams, total_power)
    return f, PowerAllocation(per_stream_power=powers, water_level=float(level))


def select_first_stage(precoded_estimate: np.ndarray, num_combined: int) -> np.ndarray:
    """First-stage combiner: top-N_c left singular vectors of B-hat.

    ``precoded_estimate`` is (..., K, N_s) (an estimate of H F); the
    result is (..., K, N_c) with orthonormal, phase-normalized columns.
    N_c may exceed N_s; the extra columns complete the dominant subspace
    from the full SVD basis.
    """
    b = np.asarray(precoded_estimate)
    k = b.shape[-2]
    if not 1 <= num_combined <= k:
        raise ValueError(f"combined port count {num_combined} outside [1, {k}]")
    u, _, _ = np.linalg.svd(b, full_matrices=True)
    q, _ = phase_normalize_columns(u[..., :num_combined])
    return q


def init_second_stage(num_combined: int, num_streams: int) -> np.ndarray:
    """Second-stage combiner at a beam refresh: the selector [I_Ns; 0]."""
    if not 1 <= num_streams <= num_combined:
        raise ValueError("need 1 <= N_s <= N_c")
    return np.eye(num_combined, num_streams, dtype=complex)


def update_second_stage(effective_estimate: np.ndarray, num_streams: int) -> np.ndarray:
    """Second-stage combiner: top-N_s left singular vectors of D-hat.

    ``effective_estimate`` is (..., N_c, N_s_cols); the result (..., N_c,
    N_s) has orthonormal phase-normalized columns.
    """
    d = np.asarray(effective_estimate)
    n_c = d.shape[-2]
    if not 1 <= num_streams <= min(n_c, d.shape[-1]):
        raise ValueError(
            f"stream count {num_streams} outside [1, {min(n_c, d.shape[-1])}]"
        )
    u, _, _ = np.linalg.svd(d, full_matrices=False)
    w, _ = phase_normalize_columns(u[..., :num_streams])
    return w


def mu_mmse_precoder(
    channel_estimate: np.ndarray,
    regularization: float,
    total_power: float,
    num_streams: int,
) -> np.ndarray:
    """Per-user MMSE (regularized channel inversion) precoder.

    With R = N_s this is A = Hhat^H (Hhat Hhat^H + mu I)^(-1), the
    push-through form of (Hhat^H Hhat + mu I)^(-1) Hhat^H, rescaled so
    its squared Frobenius norm is exactly ``total_power``. When the
    estimate has more rows than streams, A is restricted to the
    channel's N_s dominant modes first: the precoder columns are the top
    right singular vectors v_i weighted by sigma_i / (sigma_i^2 + mu).
    The weak modes of A itself carry the largest inversion weights, so
    keeping A's own dominant directions would pour power into the most
    noise-sensitive channel directions; restricting by channel mode
    keeps the inversion where the channel can support it.

    ``channel_estimate`` is (..., R, M); the result is (..., M, N_s).
    With mu = 0 the retained modes must be well conditioned (the
    precoder is then the exact right pseudo-inverse on them).
    """
    est = np.asarray(channel_estimate)
    r = est.shape[-2]
    if regularization < 0.0:
        raise ValueError("regularization must be non-negative")
    if total_power <= 0.0:
        raise ValueError("total power must be positive")
    if not 1 <= num_streams <= r:
        raise ValueError(f"stream count {num_streams} outside [1, {r}]")
    if r > num_streams:
        _, s, vh = np.linalg.svd(est, full_matrices=False)
        if np.any(s[..., num_streams - 1] <= RANK_TOL * s[..., 0]):
            worst = float(np.min(s[..., num_streams - 1] / s[..., 0]))
            raise SingularMatrixError(
                f"channel estimate rank deficient for {num_streams} streams "
                f"(sigma_Ns/sigma_1 = {worst:.3e})"
            )
        # Keep the factorization's own column phases: the entries of these
        # columns are near-constant modulus, so a largest-entry phase pivot
        # would hop between draws and wreck the hardened effective channel.
        v_cols = np.swapaxes(vh[..., :num_streams, :], -1, -2).conj()
        s_kept = s[..., :num_streams]
        f = v_cols * (s_kept / (s_kept**2 + regularization))[..., None, :]
    else:
        gram = est @ np.swapaxes(est, -1, -2).conj()
        gram = gram + regularization * np.eye(r)
        if regularization == 0.0:
            sv = np.linalg.svd(gram, compute_uv=False)
            if np.any(sv[..., -1] <= RANK_TOL * sv[..., 0]):
                raise SingularMatrixError(
                    "mu = 0 requires a full-row-rank channel estimate"
                )
        inv_applied = np.linalg.solve(gram, est)  # (..., R, M)
        f = np.swapaxes(inv_applied, -1, -2).conj()  # (..., M, R)
    norm = np.linalg.norm(f, axis=(-2, -1), keepdims=True)
    if np.any(norm == 0.0):
        raise SingularMatrixError("MMSE precoder collapsed to zero")
    return f * (np.sqrt(total_power) / norm)
