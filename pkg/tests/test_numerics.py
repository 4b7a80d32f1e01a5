import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tmeig.errors import DecompositionError, InsufficientSamplesError
from tmeig.numerics import (
    LOG_2PI,
    cholesky,
    gauss_legendre,
    gaussian_logpdf,
    generalized_eigendecomposition,
    quadratic_form_moments,
    sample_covariance,
    symmetric_eigendecomposition,
)


def random_spd(rng, n, cond=10.0):
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    return (q * np.linspace(1.0, cond, n)) @ q.T


def trapezoid_richardson(f, a, b, levels=12):
    """Romberg table built from composite trapezoid rules (reference integral)."""
    R = np.zeros((levels, levels))
    for i in range(levels):
        n = 2**i
        x = np.linspace(a, b, n + 1)
        y = f(x)
        R[i, 0] = (b - a) / n * (y.sum() - 0.5 * (y[0] + y[-1]))
        for j in range(1, i + 1):
            R[i, j] = R[i, j - 1] + (R[i, j - 1] - R[i - 1, j - 1]) / (4**j - 1)
    return R[-1, -1]


class TestSampleCovariance:
    def test_two_points(self):
        assert sample_covariance(np.array([[0.0], [2.0]]))[0, 0] == pytest.approx(2.0)

    def test_constant_samples(self):
        assert np.all(sample_covariance(np.ones((5, 3))) == 0.0)

    def test_large_sample_near_identity(self):
        z = np.random.default_rng(0).standard_normal((100_000, 3))
        c = sample_covariance(z)
        assert np.max(np.abs(c - np.eye(3))) < 3 * np.sqrt(2 / 1e5) * 3
        assert np.array_equal(c, c.T)

    def test_single_sample_rejected(self):
        with pytest.raises(InsufficientSamplesError):
            sample_covariance(np.zeros((1, 2)))


class TestGeneralizedEig:
    def test_diagonal(self):
        vals, vecs = generalized_eigendecomposition(np.diag([1.0, 2.0]), np.eye(2))
        assert np.allclose(vals, [2, 1])
        assert np.allclose(np.abs(vecs), [[0, 1], [1, 0]])

    def test_equal_pencil(self):
        a = random_spd(np.random.default_rng(1), 4)
        vals, _ = generalized_eigendecomposition(a, a)
        assert np.allclose(vals, 1.0)

    @pytest.mark.parametrize("n", [2, 5, 20, 50])
    def test_residual_and_metric(self, n):
        rng = np.random.default_rng(n)
        a = random_spd(rng, n)
        b = random_spd(rng, n, cond=100)
        vals, V = generalized_eigendecomposition(a, b)
        resid = np.linalg.norm(a @ V - b @ V * vals) / np.linalg.norm(a)
        assert resid < 1e-10
        assert np.allclose(V.T @ b @ V, np.eye(n), atol=1e-8)
        assert np.all(np.diff(vals) <= 0)

    def test_non_spd_right_matrix_names_pivot(self):
        b = np.diag([1.0, -1.0, 1.0])
        with pytest.raises(DecompositionError) as err:
            generalized_eigendecomposition(np.eye(3), b)
        assert err.value.pivot == 2
        assert "pivot" in str(err.value)

    def test_sign_convention(self):
        vals, V = symmetric_eigendecomposition(random_spd(np.random.default_rng(3), 6))
        for j in range(V.shape[1]):
            first = V[np.flatnonzero(np.abs(V[:, j]) > 1e-12)[0], j]
            assert first > 0


class TestCholesky:
    def test_jitter_rescues_semidefinite(self):
        v = np.array([[1.0], [1.0]])
        c = cholesky(v @ v.T)
        assert np.all(np.isfinite(c))

    def test_no_jitter_fails(self):
        with pytest.raises(DecompositionError):
            cholesky(np.diag([1.0, 0.0]), jitter=False)


class TestGaussLegendre:
    def test_order_one(self):
        x, w = gauss_legendre(1)
        assert np.allclose(x, [0.0]) and np.allclose(w, [2.0])

    def test_quartic(self):
        x, w = gauss_legendre(5, 0.0, 1.0)
        assert abs(w @ x**4 - 0.2) < 1e-14

    @pytest.mark.parametrize("order", [1, 3, 8, 20])
    def test_monomial_exactness(self, order):
        x, w = gauss_legendre(order, -0.5, 2.0)
        for k in range(2 * order):
            exact = (2.0 ** (k + 1) - (-0.5) ** (k + 1)) / (k + 1)
            assert abs(w @ x**k - exact) <= 1e-13 * max(1.0, abs(exact))
        assert w.sum() == pytest.approx(2.5, abs=1e-14)

    def test_softplus_integral_vs_richardson(self):
        f = lambda t: np.logaddexp(0.0, t)
        x, w = gauss_legendre(20, 0.0, 1.0)
        assert abs(w @ f(x) - trapezoid_richardson(f, 0.0, 1.0)) < 1e-12

    def test_bad_order(self):
        with pytest.raises(ValueError):
            gauss_legendre(0)


class TestGaussianLogpdf:
    def test_standard_scalar(self):
        assert gaussian_logpdf(np.zeros(1), np.zeros(1), np.eye(1)) == pytest.approx(-0.918938533, abs=1e-9)

    def test_shift_invariance(self):
        rng = np.random.default_rng(4)
        cov = random_spd(rng, 3)
        z, m, c = rng.standard_normal((3, 3))
        assert gaussian_logpdf(z + c, m + c, cov) == pytest.approx(gaussian_logpdf(z, m, cov), abs=1e-12)

    def test_direct_formula(self):
        rng = np.random.default_rng(5)
        cov = random_spd(rng, 3)
        z, m = rng.standard_normal((2, 3))
        d = z - m
        direct = -0.5 * (3 * LOG_2PI + np.log(np.linalg.det(cov)) + d @ np.linalg.solve(cov, d))
        assert abs(gaussian_logpdf(z, m, cov) - direct) < 1e-12

    def test_rows(self):
        z = np.random.default_rng(6).standard_normal((7, 2))
        out = gaussian_logpdf(z, np.zeros(2), np.eye(2))
        assert out.shape == (7,)
        assert np.allclose(out, [gaussian_logpdf(r, np.zeros(2), np.eye(2)) for r in z])

    def test_indefinite(self):
        with pytest.raises(DecompositionError):
            gaussian_logpdf(np.zeros(2), np.zeros(2), np.diag([1.0, -3.0]))


def mc_quadratic_form(cov1, cov2, n, rng):
    x = rng.multivariate_normal(np.zeros(cov1.shape[0]), cov1, size=n)
    q = np.einsum("ij,ij->i", x, np.linalg.solve(cov2, x.T).T)
    return q.mean(), q.var(ddof=1), q.std(ddof=1) / np.sqrt(n), q


class TestQuadraticFormMoments:
    def test_chi_square(self):
        assert quadratic_form_moments(np.eye(4), np.eye(4)) == pytest.approx((4.0, 8.0))

    def test_scaling(self):
        a = random_spd(np.random.default_rng(7), 3)
        assert quadratic_form_moments(2.5 * a, a) == pytest.approx((7.5, 2 * 2.5**2 * 3))

    def test_diag_23_vs_monte_carlo(self):
        mean, var = quadratic_form_moments(np.diag([2.0, 3.0]), np.eye(2))
        assert (mean, var) == pytest.approx((5.0, 26.0))
        rng = np.random.default_rng(8)
        x = rng.standard_normal((10**7, 2)) * np.sqrt([2.0, 3.0])
        q = np.sum(x**2, axis=1)
        assert abs(q.mean() - mean) < 3 * q.std() / np.sqrt(q.size)
        # variance of the sample variance for this law is estimated from the fourth central moment
        d2 = (q - q.mean()) ** 2
        assert abs(q.var() - var) < 3 * d2.std() / np.sqrt(q.size)

    def test_random_pencils_vs_monte_carlo(self):
        rng = np.random.default_rng(9)
        n_draw = 10**6
        hits = 0
        for _ in range(20):
            n = int(rng.integers(1, 5))
            a, b = random_spd(rng, n, 5.0), random_spd(rng, n, 5.0)
            mean, var = quadratic_form_moments(a, b)
            m, v, se, q = mc_quadratic_form(a, b, n_draw, rng)
            d2 = (q - q.mean()) ** 2
            hits += abs(m - mean) < 3 * se and abs(v - var) < 3 * d2.std() / np.sqrt(n_draw)
        # 40 three-sigma checks; allow one chance exceedance
        assert hits >= 19

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            quadratic_form_moments(np.eye(2), np.eye(3))


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_eigen_descending_orthonormal(n, seed):
    a = random_spd(np.random.default_rng(seed), n)
    vals, V = symmetric_eigendecomposition(a)
    assert np.all(np.diff(vals) <= 1e-12)
    assert np.allclose(V.T @ V, np.eye(n), atol=1e-10)
