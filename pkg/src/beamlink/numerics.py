"""Shared dense linear algebra kernels.

Everything here is a thin, contract-checked layer over numpy.linalg. The
one piece of policy this module owns is the singular-vector phase
convention: the entry of largest magnitude in every left singular vector
is forced real and positive (the paired right vector is rotated by the
same phase, so the factorization is preserved). That removes the
per-column phase ambiguity of LAPACK output and makes downstream
beamformer matrices reproducible across runs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

RANK_TOL = 1e-12


class SingularMatrixError(np.linalg.LinAlgError):
    """Raised when a matrix is numerically rank deficient for the requested op."""


@dataclass(frozen=True)
class SvdFactorization:
    """Full singular value decomposition ``A = left @ diag(s) @ right_h``.

    ``left`` is m x m unitary, ``right_h`` is n x n unitary and ``singular``
    holds the min(m, n) singular values in descending order. ``diag(s)``
    is the rectangular m x n matrix with ``singular`` on its diagonal.
    """

    left: np.ndarray
    singular: np.ndarray
    right_h: np.ndarray

    def reconstruct(self) -> np.ndarray:
        m = self.left.shape[-1]
        n = self.right_h.shape[-1]
        sigma = np.zeros((m, n), dtype=complex)
        r = len(self.singular)
        sigma[:r, :r] = np.diag(self.singular)
        return self.left @ sigma @ self.right_h


@dataclass(frozen=True)
class PowerAllocation:
    """Water-filling result: per-stream powers (input order) and the level."""

    per_stream_power: np.ndarray
    water_level: float


def phase_normalize_columns(u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Rotate each column of ``u`` so its largest-magnitude entry is real positive.

    Accepts stacked matrices ``(..., m, k)``. Returns the rotated matrix and
    the unit phases that were removed, so callers can apply the conjugate
    rotation to paired factors.
    """
    idx = np.argmax(np.abs(u), axis=-2)
    pivot = np.take_along_axis(u, idx[..., None, :], axis=-2)[..., 0, :]
    mag = np.abs(pivot)
    # Zero columns carry no phase information; leave them untouched.
    phase = np.where(mag > 0.0, pivot / np.where(mag > 0.0, mag, 1.0), 1.0)
    return u * phase.conj()[..., None, :], phase


def svd(matrix: np.ndarray) -> SvdFactorization:
    """Full SVD with the real-positive-pivot phase convention.

    Parameters
    ----------
    matrix : (m, n) complex ndarray

    Returns
    -------
    SvdFactorization
        ``left @ diag(singular) @ right_h`` reproduces the input to
        floating-point accuracy; singular values are descending and
        non-negative.
    """
    a = np.asarray(matrix)
    if a.ndim != 2:
        raise ValueError(f"svd expects a 2-D matrix, got shape {a.shape}")
    u, s, vh = np.linalg.svd(a, full_matrices=True)
    r = len(s)
    # Rotate the paired columns jointly: u_i e^{-j t}, v_i e^{-j t} leaves
    # u_i v_i^H unchanged.
    u_r, phase = phase_normalize_columns(u[:, :r])
    u = u.astype(complex, copy=True)
    vh = vh.astype(complex, copy=True)
    u[:, :r] = u_r
    # u_i picked up phase_i^*, so row i of vh picks up phase_i to cancel.
    vh[:r, :] = phase[:, None] * vh[:r, :]
    if u.shape[1] > r:
        u[:, r:], _ = phase_normalize_columns(u[:, r:])
    return SvdFactorization(left=u, singular=s, right_h=vh)


def pseudo_inverse(matrix: np.ndarray, rank_tol: float = RANK_TOL) -> np.ndarray:
    """Moore-Penrose pseudo-inverse of a full-rank matrix.

    Raises
    ------
    SingularMatrixError
        If ``smallest/largest`` singular value is at or below ``rank_tol``;
        the message names the offending ratio.
    """
    a = np.asarray(matrix)
    if a.ndim != 2:
        raise ValueError(f"pseudo_inverse expects a 2-D matrix, got shape {a.shape}")
    u, s, vh = np.linalg.svd(a, full_matrices=False)
    if s[0] == 0.0:
        raise SingularMatrixError("pseudo_inverse: all singular values are zero")
    ratio = s[-1] / s[0]
    if ratio <= rank_tol:
        raise SingularMatrixError(
            f"pseudo_inverse: rank deficient, sigma_min/sigma_max = {ratio:.3e} "
            f"<= {rank_tol:.1e}"
        )
    return (vh.conj().T / s) @ u.conj().T


def dft_matrix(n: int) -> np.ndarray:
    """Unnormalized n x n DFT matrix, entry (a, b) = exp(-2j pi a b / n).

    Callers apply their own 1/sqrt(n) scaling where a unitary transform is
    needed.
    """
    if n < 1:
        raise ValueError(f"dft_matrix needs n >= 1, got {n}")
    idx = np.arange(n)
    return np.exp(-2j * np.pi * np.outer(idx, idx) / n)


def water_fill_many(gains: np.ndarray, budget: float) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized water-filling over the last axis of ``gains``.

    Maximizes sum(log2(1 + p_i g_i)) subject to sum(p_i) = budget, p_i >= 0.
    Non-positive gains are treated as unusable (zero power). Returns
    ``(powers, levels)`` where ``powers`` matches the input shape and
    ``levels`` drops the last axis.
    """
    g = np.asarray(gains, dtype=float)
    if budget <= 0.0:
        raise ValueError(f"water_fill budget must be positive, got {budget}")
    if not np.any(g > 0.0, axis=-1).all():
        raise ValueError("water_fill needs at least one positive gain per vector")
    inv = np.where(g > 0.0, 1.0 / np.where(g > 0.0, g, 1.0), np.inf)
    order = np.argsort(inv, axis=-1)
    inv_sorted = np.take_along_axis(inv, order, axis=-1)
    csum = np.cumsum(np.where(np.isfinite(inv_sorted), inv_sorted, 0.0), axis=-1)
    k = np.arange(1, g.shape[-1] + 1, dtype=float)
    level_k = (budget + csum) / k
    # A stream stays active iff the candidate level clears its inverse gain;
    # the optimum is the largest such prefix.
    feasible = level_k > inv_sorted
    n_active = np.sum(feasible, axis=-1)
    level = np.take_along_axis(level_k, n_active[..., None] - 1, axis=-1)[..., 0]
    powers = np.maximum(level[..., None] - inv, 0.0)
    return powers, level


def water_fill(gains: np.ndarray, budget: float) -> PowerAllocation:
    """Exact water-filling power allocation for one gain vector.

    Parameters
    ----------
    gains : (n,) array of channel power gains (SNR per unit power).
    budget : total transmit power, > 0.

    Returns
    -------
    PowerAllocation
        Powers sum to ``budget``; every active stream sits at the common
        water level ``p_i + 1/g_i == level``; inactive streams have
        ``1/g_i >= level``.
    """
    g = np.atleast_1d(np.asarray(gains, dtype=float))
    if g.ndim != 1:
        raise ValueError("water_fill expects a 1-D gain vector")
    powers, level = water_fill_many(g, budget)
    return PowerAllocation(per_stream_power=powers, water_level=float(level))


def log2_det_hpd(matrix: np.ndarray) -> np.ndarray:
    """log2 det of stacked Hermitian positive definite matrices via Cholesky."""
    chol = np.linalg.cholesky(matrix)
    diag = np.einsum("...ii->...i", chol).real
    return 2.0 * np.sum(np.log2(diag), axis=-1)
