import numpy as np
import pytest

from helpers import make_panel, projection_matrix

from adafat import (
    compute_theta,
    decompose_theta_oracle,
    residualize,
    validate_dataset,
)
from adafat.errors import DegenerateProjectionError, SingularProjectionError


class TestResidualize:
    def test_demeaning_two_points(self):
        out = residualize(np.array([[3.0], [5.0]]), np.ones((2, 1)))
        np.testing.assert_allclose(out.ravel(), [-1.0, 1.0], atol=1e-14)

    def test_empty_and_none_w_identity(self):
        M = np.arange(12.0).reshape(4, 3)
        np.testing.assert_array_equal(residualize(M, None), M)
        np.testing.assert_array_equal(residualize(M, np.empty((4, 0))), M)

    def test_matches_dense_projection_oracle(self):
        rng = np.random.default_rng(7)
        W = rng.standard_normal((6, 2))
        M = rng.standard_normal((6, 3))
        Q = projection_matrix(W)
        np.testing.assert_allclose(residualize(M, W), Q @ M, atol=1e-12)
        # annihilation and idempotence
        np.testing.assert_allclose(residualize(W, W), np.zeros_like(W), atol=1e-12)
        np.testing.assert_allclose(
            residualize(residualize(M, W), W), residualize(M, W), atol=1e-12
        )

    @pytest.mark.parametrize("seed", range(5))
    def test_linearity_and_idempotence_random(self, seed):
        rng = np.random.default_rng(seed)
        W = rng.standard_normal((15, 3))
        A = rng.standard_normal((15, 2))
        B = rng.standard_normal((15, 2))
        c = float(rng.standard_normal())
        left = residualize(A + c * B, W)
        right = residualize(A, W) + c * residualize(B, W)
        np.testing.assert_allclose(left, right, atol=1e-12)

    def test_rank_deficient_w_raises(self):
        col = np.arange(6.0).reshape(-1, 1)
        with pytest.raises(SingularProjectionError):
            residualize(np.ones((6, 2)), np.hstack([col, 2 * col]))


class TestComputeTheta:
    def test_constant_column_sqrt_n_mean(self):
        data = validate_dataset(np.ones((4, 1)))
        dec = compute_theta(data)
        assert dec.c_n == pytest.approx(2.0)
        assert dec.theta[0] == pytest.approx(2.0)
        assert dec.zeta is None and dec.eta is None

    def test_alternating_column_zero(self):
        y = np.array([1.0, -1.0, 1.0, -1.0]).reshape(-1, 1)
        dec = compute_theta(validate_dataset(y))
        assert dec.theta[0] == pytest.approx(0.0, abs=1e-14)

    def test_exact_model_recovers_alpha(self):
        rng = np.random.default_rng(11)
        n, m, p = 50, 20, 1
        alpha = rng.standard_normal(m)
        B = rng.standard_normal((p, m))
        X = rng.standard_normal((n, p))
        Y = np.ones((n, 1)) @ alpha[None, :] + X @ B
        data = validate_dataset(Y, X)
        dec = compute_theta(data)
        np.testing.assert_allclose(dec.theta, dec.c_n * alpha, atol=1e-10)

    def test_invariant_to_span_x_shifts(self):
        rng = np.random.default_rng(12)
        n, m, p = 40, 8, 2
        X = rng.standard_normal((n, p))
        Y = rng.standard_normal((n, m))
        shift = X @ rng.standard_normal(p)
        Y2 = Y + shift[:, None]
        t1 = compute_theta(validate_dataset(Y, X)).theta
        t2 = compute_theta(validate_dataset(Y2, X)).theta
        np.testing.assert_allclose(t1, t2, atol=1e-10)

    def test_ones_nearly_in_span_of_x(self):
        # Passes the rank gate but fails the projection-size gate.
        rng = np.random.default_rng(13)
        n = 50
        X = (np.ones(n) + 1e-5 * rng.standard_normal(n)).reshape(-1, 1)
        data = validate_dataset(rng.standard_normal((n, 3)), X)
        with pytest.raises(DegenerateProjectionError):
            compute_theta(data)

    def test_c_n_matches_dense_oracle(self):
        rng = np.random.default_rng(14)
        n, p = 30, 2
        X = rng.standard_normal((n, p))
        data = validate_dataset(rng.standard_normal((n, 4)), X)
        ones = np.ones(n)
        expected = np.sqrt(ones @ projection_matrix(X) @ ones)
        assert compute_theta(data).c_n == pytest.approx(expected, abs=1e-10)


class TestDecomposeThetaOracle:
    def test_zero_factors_and_errors(self):
        rng = np.random.default_rng(15)
        n, m, q = 20, 6, 2
        alpha = rng.standard_normal(m)
        Y = np.ones((n, 1)) @ alpha[None, :]
        data = validate_dataset(Y)
        _, model, _, _, _ = make_panel(rng, n=n, m=m, q=q, p=0)
        dec = decompose_theta_oracle(data, model, np.zeros((n, q)), np.zeros((n, m)))
        np.testing.assert_allclose(dec.zeta, 0.0, atol=1e-14)
        np.testing.assert_allclose(dec.eta, 0.0, atol=1e-14)
        np.testing.assert_allclose(dec.theta, dec.c_n * alpha, atol=1e-10)

    def test_identity_holds_on_seeded_draw(self):
        rng = np.random.default_rng(16)
        data, model, _, Z, E = make_panel(rng, n=30, m=25, q=2, p=1)
        dec = decompose_theta_oracle(data, model, Z, E)
        recon = dec.c_n * model.alpha + model.Gamma.T @ dec.zeta + dec.eta
        assert np.abs(dec.theta - recon).max() < 1e-10

    def test_zeta_of_constant_factor_is_sqrt_n(self):
        rng = np.random.default_rng(17)
        n, m = 16, 5
        data, model, _, _, E = make_panel(rng, n=n, m=m, q=1, p=0)
        Z = np.ones((n, 1))
        dec = decompose_theta_oracle(data, model, Z, E)
        assert dec.zeta[0] == pytest.approx(np.sqrt(n))
