"""Overhead accounting, hardening bounds, perfect-CSI rates."""

import numpy as np
import pytest

from beamlink import beamforming as bf
from beamlink import spectral_efficiency as sefx


def _random_complex(rng, shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


# ------------------------------------------------------------- overhead


def test_overhead_fractions():
    fd = sefx.OverheadModel.frequency_domain(4, 2, 200)
    td = sefx.OverheadModel.time_domain(4, 2, 200, 4, 64)
    assert fd.effective_pilot_fraction == 4.0
    assert td.effective_pilot_fraction == 0.25
    assert abs(sefx.overhead_rho(fd) - 0.97) < 1e-15
    assert abs(sefx.overhead_rho(td) - 0.98875) < 1e-15
    assert sefx.overhead_rho(td) > sefx.overhead_rho(fd)


def test_overhead_rho_rejects_consumed_block():
    model = sefx.OverheadModel.frequency_domain(10, 2, 12)
    with pytest.raises(ValueError):
        sefx.overhead_rho(model)


# ------------------------------------------------------------ statistics


def test_effective_stats_manual_check():
    rng = np.random.default_rng(0)
    e = _random_complex(rng, (6, 2, 2))
    stats = sefx.effective_stats(e)
    mean = e.mean(axis=0)
    np.testing.assert_allclose(stats.mean_channel, mean, atol=1e-12)
    cov = np.zeros((2, 2), dtype=complex)
    for i in range(6):
        c = e[i] - mean
        cov += c @ c.conj().T
    cov = cov / 6 + np.eye(2)
    np.testing.assert_allclose(stats.noise_covariance, cov, atol=1e-12)
    assert stats.sample_count == 6


def test_effective_stats_guards():
    with pytest.raises(ValueError):
        sefx.effective_stats(np.zeros((5, 2)))
    with pytest.raises(ValueError):
        sefx.effective_stats(np.zeros((1, 3, 2, 2)))


def test_effective_stats_stacked_axes():
    rng = np.random.default_rng(1)
    e = _random_complex(rng, (8, 3, 2, 2))
    stats = sefx.effective_stats(e)
    assert stats.mean_channel.shape == (3, 2, 2)
    assert stats.noise_covariance.shape == (3, 2, 2)
    sub = sefx.effective_stats(e[:, 1])
    np.testing.assert_allclose(stats.noise_covariance[1], sub.noise_covariance, atol=1e-12)


# -------------------------------------------------------- hardening bound


def test_uatf_su_rate_deterministic_oracle():
    # identical samples: zero fluctuation, C = I, rate = log2 det(I + E^H E)
    rng = np.random.default_rng(2)
    e0 = _random_complex(rng, (2, 2))
    stats = sefx.effective_stats(np.broadcast_to(e0, (5, 2, 2)))
    want = np.log2(np.linalg.det(np.eye(2) + e0.conj().T @ e0).real)
    assert abs(sefx.uatf_su_rate(stats) - want) < 1e-10


def test_uatf_below_mean_perfect_rate():
    rng = np.random.default_rng(3)
    mean = 2.0 * np.eye(2) + 0.3 * _random_complex(rng, (2, 2))
    n = 4000
    samples = mean + 0.4 * _random_complex(rng, (n, 2, 2))
    stats = sefx.effective_stats(samples)
    uatf = sefx.uatf_su_rate(stats)
    per_draw = sefx.perfect_rate_from_effective(samples)
    margin = 3.0 * per_draw.std() / np.sqrt(n)
    assert uatf <= per_draw.mean() + margin


def test_uatf_mu_interference_reduces_rate():
    rng = np.random.default_rng(4)
    own = 2.0 * np.eye(2) + 0.2 * _random_complex(rng, (200, 2, 2))
    interf = 0.8 * _random_complex(rng, (200, 2, 2))
    stats = sefx.effective_stats(own)
    r_su = sefx.uatf_mu_rate(stats)
    r_mu = sefx.uatf_mu_rate(stats, (interf,))
    assert abs(r_su - sefx.uatf_su_rate(stats)) < 1e-12
    assert r_mu < r_su
    with pytest.raises(ValueError):
        sefx.uatf_mu_rate(stats, (interf[:100],))


def test_uatf_rates_stacked():
    rng = np.random.default_rng(5)
    e = 1.5 * np.eye(2) + 0.3 * _random_complex(rng, (50, 4, 2, 2))
    stats = sefx.effective_stats(e)
    rates = sefx.uatf_su_rate(stats)
    assert rates.shape == (4,)
    one = sefx.uatf_su_rate(sefx.effective_stats(e[:, 2]))
    assert abs(rates[2] - one) < 1e-12


# ------------------------------------------------------- perfect rates


def test_perfect_rates_orthonormal_combiner_manual():
    rng = np.random.default_rng(6)
    h = _random_complex(rng, (4, 8))
    f, _ = bf.svd_precoder(h, 2, 2.0)
    q = bf.select_first_stage(h @ f, 3)
    w = bf.update_second_stage(q.conj().T @ h @ f, 2)
    rate = sefx.perfect_rates(h[None], f[None], q[None], w[None])[0]
    b = (q @ w).conj().T @ h @ f
    want = np.log2(np.linalg.det(np.eye(2) + b @ b.conj().T).real)
    assert abs(rate - want) < 1e-10


def test_perfect_rates_whitens_non_orthonormal_combiner():
    rng = np.random.default_rng(7)
    h = _random_complex(rng, (4, 8))
    f = _random_complex(rng, (8, 2))
    q = _random_complex(rng, (4, 3))  # deliberately not orthonormal
    w = _random_complex(rng, (3, 2))
    rate = sefx.perfect_rates(h[None], f[None], q[None], w[None])[0]
    qw = q @ w
    b = qw.conj().T @ h @ f
    # independent path: Cholesky-whiten the combined noise covariance
    chol = np.linalg.cholesky(qw.conj().T @ qw)
    b_white = np.linalg.solve(chol, b)
    want = np.log2(np.linalg.det(np.eye(2) + b_white @ b_white.conj().T).real)
    assert abs(rate - want) < 1e-10


def test_perfect_rates_rejects_rank_deficient_combiner():
    rng = np.random.default_rng(8)
    h = _random_complex(rng, (4, 8))
    f = _random_complex(rng, (8, 2))
    q = np.zeros((4, 3), dtype=complex)
    q[:, 0] = [1, 0, 0, 0]
    q[:, 1] = [1, 0, 0, 0]  # repeated column: QW cannot have full column rank
    q[:, 2] = [0, 1, 0, 0]
    w = np.eye(3, 2, dtype=complex)
    with pytest.raises(np.linalg.LinAlgError):
        sefx.perfect_rates(h[None], f[None], q[None], w[None])


def test_perfect_rate_from_effective_matches_perfect_rates():
    rng = np.random.default_rng(9)
    h = _random_complex(rng, (5, 4, 8))
    f, _, _ = bf.svd_precoder_batch(h, 2, 1.0)
    q = bf.select_first_stage(h @ f, 3)
    w = bf.update_second_stage(np.swapaxes(q, -1, -2).conj() @ h @ f, 2)
    direct = sefx.perfect_rates(h, f, q, w)
    eff = np.swapaxes(q @ w, -1, -2).conj() @ h @ f
    np.testing.assert_allclose(sefx.perfect_rate_from_effective(eff), direct, atol=1e-10)


def test_perfect_rate_from_effective_interference():
    rng = np.random.default_rng(10)
    e = _random_complex(rng, (2, 2))
    other = _random_complex(rng, (2, 2))
    rate = sefx.perfect_rate_from_effective(e[None], (other[None],))[0]
    cov = np.eye(2) + other @ other.conj().T
    core = e.conj().T @ np.linalg.solve(cov, e)
    want = np.log2(np.linalg.det(np.eye(2) + core).real)
    assert abs(rate - want) < 1e-10
    alone = sefx.perfect_rate_from_effective(e[None])[0]
    assert rate < alone


def test_se_perfect_rho_weighting():
    rng = np.random.default_rng(11)
    h = _random_complex(rng, (6, 4, 8))
    f, _, _ = bf.svd_precoder_batch(h, 2, 1.0)
    q = bf.select_first_stage(h @ f, 3)
    w = bf.update_second_stage(np.swapaxes(q, -1, -2).conj() @ h @ f, 2)
    full = sefx.se_perfect(h, f, q, w, rho=1.0)
    weighted = sefx.se_perfect(h, f, q, w, rho=0.97)
    assert abs(weighted - 0.97 * full) < 1e-12
    rates = sefx.perfect_rates(h, f, q, w)
    assert abs(full - rates.mean()) < 1e-12
    with pytest.raises(ValueError):
        sefx.se_perfect(h[None], f[None], q[None], w[None])


def test_true_csi_chain_diagonalizes():
    # with N_c = K and combiners built from the true channel the chain is
    # interference-free and the rate is the water-filled svd capacity
    rng = np.random.default_rng(12)
    h = _random_complex(rng, (4, 8))
    f, alloc = bf.svd_precoder(h, 2, 2.0)
    q = bf.select_first_stage(h @ f, 4)
    w = bf.update_second_stage(q.conj().T @ h @ f, 2)
    eff = (q @ w).conj().T @ h @ f
    off = eff - np.diag(np.diag(eff))
    assert np.max(np.abs(off)) < 1e-8
    sing = np.linalg.svd(h, compute_uv=False)[:2]
    want = np.sum(np.log2(1.0 + alloc.per_stream_power * sing**2))
    got = sefx.perfect_rates(h[None], f[None], q[None], w[None])[0]
    assert abs(got - want) < 1e-8
