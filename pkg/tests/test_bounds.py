import numpy as np
import pytest

from lsesmp.bounds import (
    crlb_lse,
    crlb_lse_smp,
    interlacing_bounds,
    score_identity_check,
)
from lsesmp.numerics import NumericsError, RandomStream, stream_for_trial


def random_support(rng, n, count):
    idx = np.argsort(rng.uniforms(n))[:count]
    b = np.zeros(n)
    b[idx] = 1.0
    return b


class TestCrlbLse:
    def test_identity_training(self):
        report = crlb_lse(np.eye(5), 1.0)
        assert np.allclose(report.cov, np.eye(5))
        assert report.trace_mse == pytest.approx(5.0)
        assert report.rank == 5

    def test_scaled_identity(self):
        report = crlb_lse(3.0 * np.eye(4), 2.0)
        assert report.trace_mse == pytest.approx(4 * 2.0 / 9.0)

    def test_matches_finite_difference_information(self):
        # numerically differentiate the log-likelihood of the linear
        # Gaussian model; its negative Hessian inverse must equal the bound
        rng = RandomStream(70)
        s = rng.normal_matrix(12, 6)
        noise_var = 0.7
        y = rng.normals(12)

        def loglik(h):
            r = y - s @ h
            return -0.5 * float(r @ r) / noise_var

        h0 = rng.normals(6)
        eps = 1e-4
        hess = np.zeros((6, 6))
        for i in range(6):
            for j in range(6):
                ei = np.zeros(6); ei[i] = eps
                ej = np.zeros(6); ej[j] = eps
                hess[i, j] = (
                    loglik(h0 + ei + ej)
                    - loglik(h0 + ei - ej)
                    - loglik(h0 - ei + ej)
                    + loglik(h0 - ei - ej)
                ) / (4 * eps * eps)
        fim = -hess
        report = crlb_lse(s, noise_var)
        assert np.allclose(report.cov, np.linalg.inv(fim), atol=1e-6)

    def test_singular_gram_rejected(self):
        s = np.ones((4, 3))
        with pytest.raises(NumericsError):
            crlb_lse(s, 1.0)


class TestCrlbLseSmp:
    def test_full_support_matches_unrestricted(self):
        rng = RandomStream(71)
        s = rng.normal_matrix(10, 6)
        full = crlb_lse(s, 0.4)
        masked = crlb_lse_smp(s, np.ones(6), 0.4)
        assert np.allclose(masked.cov, full.cov, atol=1e-10)
        assert masked.rank == 6

    def test_single_support_scalar_variance(self):
        rng = RandomStream(72)
        s = rng.normal_matrix(8, 4)
        s[:, 0] /= np.linalg.norm(s[:, 0])  # unit-norm retained column
        b = np.zeros(4)
        b[0] = 1.0
        report = crlb_lse_smp(s, b, 0.3)
        want = np.zeros((4, 4))
        want[0, 0] = 0.3
        assert np.allclose(report.cov, want, atol=1e-10)
        assert report.rank == 1

    def test_rejects_soft_support(self):
        with pytest.raises(ValueError):
            crlb_lse_smp(np.eye(3), np.array([0.5, 1.0, 0.0]), 1.0)

    def test_psd_and_symmetric(self):
        rng = RandomStream(73)
        for trial in range(20):
            s = rng.normal_matrix(14, 8)
            b = random_support(rng, 8, 1 + trial % 7)
            cov = crlb_lse_smp(s, b, 0.9).cov
            assert np.allclose(cov, cov.T, atol=1e-9)
            assert np.linalg.eigvalsh(cov).min() > -1e-9

    def test_trace_ordering_exact(self):
        rng = RandomStream(74)
        for trial in range(200):
            s = rng.normal_matrix(16, 8)
            b = random_support(rng, 8, 1 + trial % 7)
            full = crlb_lse(s, 0.5).trace_mse
            masked = crlb_lse_smp(s, b, 0.5).trace_mse
            assert masked <= full

    def test_support_growth_never_decreases_trace(self):
        rng = RandomStream(75)
        for _ in range(30):
            s = rng.normal_matrix(16, 8)
            order = np.argsort(rng.uniforms(8))
            b = np.zeros(8)
            prev = 0.0
            for j in order[:6]:
                b[j] = 1.0
                trace = crlb_lse_smp(s, b, 0.5).trace_mse
                assert trace >= prev - 1e-12
                prev = trace

    def test_interlacing(self):
        # with w masked-out coordinates, the restricted eigenvalues sit
        # within the Cauchy window [lambda_(k+w), lambda_k]
        rng = stream_for_trial(76, 0)
        for trial in range(50):
            s = rng.normal_matrix(18, 12)
            count = 1 + trial % 11
            b = random_support(rng, 12, count)
            lam, mu, w = interlacing_bounds(s, b, 0.8)
            tol = 1e-9 * lam[0]
            for k in range(count):
                assert mu[k] <= lam[k] + tol
                assert mu[k] >= lam[k + w] - tol


def test_loewner_gap_reported():
    # matrix-order comparison between the two bounds, reported but not
    # asserted: only the trace ordering is a theorem here (run with -s)
    rng = RandomStream(90)
    worst = np.inf
    for trial in range(20):
        s = rng.normal_matrix(16, 8)
        b = random_support(rng, 8, 1 + trial % 7)
        gap = crlb_lse(s, 0.5).cov - crlb_lse_smp(s, b, 0.5).cov
        worst = min(worst, float(np.linalg.eigvalsh(gap).min()))
    print(f"\nsmallest eigenvalue of (full - masked) bound gap over 20 "
          f"instances: {worst:.3e}")


class TestScoreIdentity:
    def test_noiseless_both_sides_zero(self):
        rng = RandomStream(77)
        s = rng.normal_matrix(10, 6)
        b = random_support(rng, 6, 3)
        h = rng.normals(6) * b
        y = (s * b) @ h
        assert score_identity_check(s, b, h, y, 0.5) < 1e-10

    def test_random_noisy_instances(self):
        rng = RandomStream(78)
        for _ in range(50):
            s = rng.normal_matrix(16, 12)
            b = random_support(rng, 12, 4)
            h = rng.normals(12) * b
            y = (s * b) @ h + rng.normals(16, std=0.7)
            assert score_identity_check(s, b, h, y, 0.49) < 1e-8

    def test_noise_scale_homogeneity(self):
        rng = RandomStream(79)
        s = rng.normal_matrix(12, 8)
        b = random_support(rng, 8, 3)
        h = rng.normals(8) * b
        y = (s * b) @ h + rng.normals(12)
        r1 = score_identity_check(s, b, h, y, 0.5)
        r2 = score_identity_check(s, b, h, y, 5.0)
        assert r1 < 1e-8 and r2 < 1e-8
