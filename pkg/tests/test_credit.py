import numpy as np
import pytest

from bmilearn.credit import estimate_credit_map, make_aligned_matrix, perturb_decoder
from bmilearn.numerics import cosine_similarity, make_rng, uniform_matrix


def decoder(n=50, seed=0):
    return uniform_matrix(2, n, -2 / np.sqrt(n), 2 / np.sqrt(n), make_rng(seed))


class TestMakeAlignedMatrix:
    def test_alpha_one_returns_base(self):
        base = decoder().T
        out = make_aligned_matrix(base, 1.0, make_rng(1))
        assert np.array_equal(out, base)
        assert out is not base

    @pytest.mark.parametrize("alpha", [0.3, 0.5, 0.7, 0.9])
    def test_hits_requested_similarity(self, alpha):
        base = decoder().T
        out = make_aligned_matrix(base, alpha, make_rng(2), tol=0.02)
        assert abs(cosine_similarity(out, base) - alpha) <= 0.02

    def test_distinct_across_seeds(self):
        base = decoder().T
        a = make_aligned_matrix(base, 0.5, make_rng(3))
        b = make_aligned_matrix(base, 0.5, make_rng(4))
        assert not np.array_equal(a, b)
        assert abs(cosine_similarity(a, base) - cosine_similarity(b, base)) <= 0.04

    def test_deterministic_given_seed(self):
        base = decoder().T
        a = make_aligned_matrix(base, 0.5, make_rng(5))
        b = make_aligned_matrix(base, 0.5, make_rng(5))
        assert np.array_equal(a, b)

    @pytest.mark.parametrize("alpha", [0.4, 0.7])
    def test_norm_stays_comparable(self, alpha):
        base = decoder().T
        out = make_aligned_matrix(base, alpha, make_rng(6))
        ratio = np.linalg.norm(out) / np.linalg.norm(base)
        assert 0.75 < ratio < 1.25

    def test_alpha_out_of_range(self):
        with pytest.raises(ValueError):
            make_aligned_matrix(np.ones((2, 2)), 0.0, make_rng(0))


class TestPerturbDecoder:
    def test_alpha_one_unchanged(self):
        w = decoder()
        assert np.array_equal(perturb_decoder(w, 1.0, make_rng(0)), w)

    def test_standard_retraining_alignment(self):
        w = decoder()
        w1 = perturb_decoder(w, 0.5, make_rng(1))
        assert abs(cosine_similarity(w, w1) - 0.5) <= 0.02

    def test_subset_mask_preserved(self):
        n, readout = 200, 25
        w = np.zeros((2, n))
        cols = make_rng(2).choice(n, size=readout, replace=False)
        w[:, cols] = uniform_matrix(2, readout, -2 / np.sqrt(n), 2 / np.sqrt(n), make_rng(3))
        w1 = perturb_decoder(w, 0.5, make_rng(4))
        nonzero_cols = np.where(np.any(w1 != 0.0, axis=0))[0]
        assert set(nonzero_cols) <= set(cols.tolist())
        assert len(nonzero_cols) == readout
        assert abs(cosine_similarity(w, w1) - 0.5) <= 0.02


class TestEstimateCreditMap:
    def test_noiseless_regression_recovers_decoder(self):
        # cursor = w_bmi h exactly and k = N: the estimate is the decoder transpose
        n = 20
        rng = make_rng(0)
        w_bmi = rng.normal(size=(2, n))
        h = rng.normal(size=(300, n))
        cursor = h @ w_bmi.T
        est = estimate_credit_map([h], [cursor], k=n, ridge=0.0)
        assert cosine_similarity(est.m_hat, w_bmi.T) > 0.95
        assert est.m_hat.shape == (n, 2)

    def test_low_rank_activity_projects_decoder(self):
        n, k = 20, 3
        rng = make_rng(1)
        w_bmi = rng.normal(size=(2, n))
        basis = np.linalg.qr(rng.normal(size=(n, k)))[0]
        h = rng.normal(size=(500, k)) @ basis.T
        cursor = h @ w_bmi.T
        est = estimate_credit_map([h], [cursor], k=k, ridge=1e-9)
        projected = basis @ basis.T @ w_bmi.T
        assert cosine_similarity(est.m_hat, projected) > 0.999

    def test_k_exceeding_rank_reports(self):
        n, k = 10, 3
        rng = make_rng(2)
        basis = np.linalg.qr(rng.normal(size=(n, k)))[0]
        h = rng.normal(size=(200, k)) @ basis.T
        cursor = h[:, :2]
        with pytest.raises(ValueError, match="rank"):
            estimate_credit_map([h], [cursor], k=8)

    def test_invariant_to_uniform_activity_rescaling(self):
        n = 15
        rng = make_rng(3)
        w_bmi = rng.normal(size=(2, n))
        h = rng.normal(size=(400, n))
        cursor = h @ w_bmi.T + 0.01 * rng.normal(size=(400, 2))
        est1 = estimate_credit_map([h], [cursor], k=5)
        est2 = estimate_credit_map([3.0 * h], [cursor], k=5)
        assert cosine_similarity(est1.m_hat, est2.m_hat) > 0.999
