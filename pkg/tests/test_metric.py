import numpy as np
import pytest

from gelbrisk.errors import DimMismatch, NotPD, NotPSD, SingularCov
from gelbrisk.metric import (
    AffineMap,
    MomentPair,
    gaussian_coupling_cost,
    gelbrich_distance,
    gelbrich_distance_mahalanobis,
    gelbrich_sq_sdp_oracle,
    optimal_pushforward_map,
)

from conftest import rand_pd, rand_psd


def pair(mean, cov):
    return MomentPair(np.asarray(mean, dtype=float), np.asarray(cov, dtype=float))


def rand_pair(rng, n, pd=True):
    cov = rand_pd(rng, n) if pd else rand_psd(rng, n)
    return pair(rng.standard_normal(n), cov)


class TestMomentPair:
    def test_symmetrizes_cov(self):
        p = pair([0.0], [[2.0]])
        assert p.cov[0, 0] == 2.0 and p.dim == 1

    def test_dim_mismatch(self):
        with pytest.raises(DimMismatch):
            pair([0.0, 1.0], [[1.0]])

    def test_not_psd(self):
        with pytest.raises(NotPSD):
            pair([0.0, 0.0], [[1.0, 0.0], [0.0, -1.0]])

    def test_tiny_negative_ok(self):
        pair([0.0, 0.0], np.diag([1.0, -1e-9]))


class TestGelbrichDistance:
    def test_identity_of_indiscernibles(self, rng):
        p = rand_pair(rng, 3)
        assert gelbrich_distance(p, p) == 0.0

    def test_scalar_case(self):
        # n=1: G reduces to sqrt(dmu^2 + (s1 - s2)^2) on standard deviations
        assert gelbrich_distance(pair([0.0], [[1.0]]), pair([0.0], [[4.0]])) == pytest.approx(1.0, abs=1e-12)

    def test_commuting_diagonals(self):
        # diagonal covariances: per-axis terms (1-2)^2 and (2-1)^2 plus |mean|^2 = 9
        p1 = pair([0.0, 0.0], np.diag([1.0, 4.0]))
        p2 = pair([3.0, 0.0], np.diag([4.0, 1.0]))
        assert gelbrich_distance(p1, p2) == pytest.approx(np.sqrt(11.0), abs=1e-10)

    def test_dim_mismatch(self, rng):
        with pytest.raises(DimMismatch):
            gelbrich_distance(rand_pair(rng, 2), rand_pair(rng, 3))

    def test_metric_axioms_sampled(self, rng):
        for _ in range(200):
            n = int(rng.integers(1, 7))
            x, y, z = (rand_pair(rng, n, pd=False) for _ in range(3))
            dxy = gelbrich_distance(x, y)
            dyx = gelbrich_distance(y, x)
            assert dxy == pytest.approx(dyx, rel=1e-9, abs=1e-9)
            assert dxy >= 0.0
            assert gelbrich_distance(x, z) <= dxy + gelbrich_distance(y, z) + 1e-8
            if dxy <= 1e-7:
                assert (
                    np.linalg.norm(x.mean - y.mean) + np.linalg.norm(x.cov - y.cov)
                    <= 1e-6
                )


class TestMahalanobis:
    def test_identity_weight_matches_plain(self, rng):
        for _ in range(20):
            n = int(rng.integers(1, 5))
            p1, p2 = rand_pair(rng, n), rand_pair(rng, n)
            d = gelbrich_distance(p1, p2)
            dh = gelbrich_distance_mahalanobis(p1, p2, np.eye(n))
            assert dh == pytest.approx(d, abs=1e-12 * max(1.0, d))

    def test_scaled_identity(self, rng):
        for c in (0.25, 2.0, 9.0):
            p1, p2 = rand_pair(rng, 3), rand_pair(rng, 3)
            d = gelbrich_distance(p1, p2)
            dh = gelbrich_distance_mahalanobis(p1, p2, c * np.eye(3))
            assert dh == pytest.approx(np.sqrt(c) * d, rel=1e-10)

    def test_zero_at_identity(self, rng):
        p = rand_pair(rng, 2)
        h = rand_pd(rng, 2, jitter=0.5)
        assert gelbrich_distance_mahalanobis(p, p, h) == pytest.approx(0.0, abs=1e-7)

    def test_rejects_indefinite_weight(self, rng):
        p1, p2 = rand_pair(rng, 2), rand_pair(rng, 2)
        with pytest.raises(NotPD):
            gelbrich_distance_mahalanobis(p1, p2, np.diag([1.0, 0.0]))


class TestPushforward:
    def test_identity(self, rng):
        p = rand_pair(rng, 3)
        m = optimal_pushforward_map(p, p)
        assert np.abs(m.A - np.eye(3)).max() < 1e-7
        assert np.abs(m.b).max() < 1e-7

    def test_scalar(self):
        m = optimal_pushforward_map(pair([0.0], [[1.0]]), pair([3.0], [[4.0]]))
        assert m.A[0, 0] == pytest.approx(2.0, abs=1e-10)
        assert m.b[0] == pytest.approx(3.0, abs=1e-10)

    def test_reconstructs_target(self, rng):
        for _ in range(10):
            p1, p2 = rand_pair(rng, 3), rand_pair(rng, 3)
            m = optimal_pushforward_map(p1, p2)
            assert np.abs(m.A @ p1.cov @ m.A - p2.cov).max() < 1e-7
            assert np.abs(m.A @ p1.mean + m.b - p2.mean).max() < 1e-7

    def test_singular_source_rejected(self, rng):
        p1 = pair([0.0, 0.0], np.diag([1.0, 0.0]))
        with pytest.raises(SingularCov):
            optimal_pushforward_map(p1, rand_pair(rng, 2))


def mc_standard_error(disp, cov, samples):
    """Exact-in-distribution standard error of the centered cost estimator.

    |B z|^2 with z ~ N(0, cov) is a weighted chi-square; its variance is
    2 * sum(lambda_i^2) over the eigenvalues of B cov B'.
    """
    lam = np.linalg.eigvalsh(disp @ cov @ disp.T)
    return float(np.sqrt(2.0 * np.sum(lam**2) / samples))


class TestCouplingCost:
    def test_identity_map_is_exactly_zero(self, rng):
        p = rand_pair(rng, 3)
        m = AffineMap(np.eye(3), np.zeros(3))
        assert gaussian_coupling_cost(p, m, 100, seed=0) == 0.0

    def test_scalar_tightness(self):
        p1, p2 = pair([0.0], [[1.0]]), pair([0.0], [[4.0]])
        m = optimal_pushforward_map(p1, p2)
        cost = gaussian_coupling_cost(p1, m, 10**6, seed=7)
        se = mc_standard_error(m.A - np.eye(1), p1.cov, 10**6)
        assert abs(cost - 1.0) <= 3.0 * se

    def test_tightness_random_pair(self, rng):
        p1, p2 = rand_pair(rng, 2), rand_pair(rng, 2)
        m = optimal_pushforward_map(p1, p2)
        g2 = gelbrich_distance(p1, p2) ** 2
        cost = gaussian_coupling_cost(p1, m, 200_000, seed=3)
        se = mc_standard_error(m.A - np.eye(2), p1.cov, 200_000)
        assert abs(cost - g2) <= 3.0 * se

    def test_lower_bound_any_map(self, rng):
        # transporting p1 by ANY PSD affine map costs at least G^2 to the image
        for trial in range(25):
            n = int(rng.integers(1, 4))
            p1 = rand_pair(rng, n)
            a = rand_psd(rng, n, scale=1.5)
            b = rng.standard_normal(n)
            image = pair(a @ p1.mean + b, a @ p1.cov @ a)
            g2 = gelbrich_distance(p1, image) ** 2
            samples = 50_000
            cost = gaussian_coupling_cost(p1, AffineMap(a, b), samples, seed=trial)
            se = mc_standard_error(a - np.eye(n), p1.cov, samples)
            assert cost >= g2 - 3.0 * se

    def test_deterministic_in_seed(self, rng):
        p = rand_pair(rng, 2)
        m = AffineMap(np.eye(2) * 0.5, np.ones(2))
        c1 = gaussian_coupling_cost(p, m, 1000, seed=42)
        c2 = gaussian_coupling_cost(p, m, 1000, seed=42)
        assert c1 == c2


class TestSdpOracle:
    def test_identical_pairs(self, rng):
        p = rand_pair(rng, 2)
        assert gelbrich_sq_sdp_oracle(p, p) == pytest.approx(0.0, abs=1e-5)

    def test_scalar(self):
        val = gelbrich_sq_sdp_oracle(pair([0.0], [[1.0]]), pair([0.0], [[4.0]]))
        assert val == pytest.approx(1.0, abs=1e-4)

    def test_matches_closed_form(self, rng):
        p1, p2 = rand_pair(rng, 3), rand_pair(rng, 3)
        g2 = gelbrich_distance(p1, p2) ** 2
        assert gelbrich_sq_sdp_oracle(p1, p2) == pytest.approx(g2, abs=1e-4)

    def test_size_limit(self, rng):
        p1, p2 = rand_pair(rng, 9), rand_pair(rng, 9)
        with pytest.raises(DimMismatch):
            gelbrich_sq_sdp_oracle(p1, p2)
