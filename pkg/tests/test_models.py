import numpy as np
import pytest

from tmeig.errors import CapabilityError
from tmeig.models import (
    FocusedModel,
    ImplicitModel,
    JointSampleSet,
    LinearGaussianModel,
    MoessbauerModel,
    closed_form_eig,
    forward_jacobian,
    log_likelihood,
    make_linear_gaussian,
    sample_joint,
    squared_exp_covariance,
)
from tmeig.numerics import LOG_2PI, logdet_spd
from tmeig.seeding import derive_seed, make_rng


def scalar_model(g=1.0):
    return LinearGaussianModel(np.array([[g]]), np.eye(1), np.eye(1))


class TestSeeding:
    def test_deterministic_and_distinct(self):
        assert derive_seed(3, "a", 1) == derive_seed(3, "a", 1)
        assert derive_seed(3, "a", 1) != derive_seed(3, "a", 2)
        assert derive_seed(3, "a", 1) != derive_seed(4, "a", 1)

    def test_streams_reproducible(self):
        a = make_rng(5, "x").standard_normal(4)
        b = make_rng(5, "x").standard_normal(4)
        assert np.array_equal(a, b)


class TestSquaredExp:
    def test_single_point(self):
        assert np.array_equal(squared_exp_covariance([0.3], 0.7, 1.0), [[0.7]])

    def test_coincident(self):
        assert np.allclose(squared_exp_covariance([0.2, 0.2, 0.2], 0.5, 0.1), 0.5)

    def test_equispaced_setup(self):
        K = squared_exp_covariance(np.linspace(0, 1, 20), 0.1, 0.1)
        assert np.allclose(np.diag(K), 0.1)
        assert K[0, 1] == pytest.approx(0.1 * np.exp(-((1 / 19) ** 2) / 0.01), rel=1e-14)

    @pytest.mark.parametrize("sigma,length", [(0.0, 1.0), (1.0, -1.0)])
    def test_bad_parameters(self, sigma, length):
        with pytest.raises(ValueError):
            squared_exp_covariance([0.0, 1.0], sigma, length)


class TestLinearModel:
    def test_singular_values(self):
        m = make_linear_gaussian(20, 10, 0.8, seed=1)
        sv = np.linalg.svd(m.G, compute_uv=False)
        assert np.allclose(sv, 0.8 ** np.arange(10), atol=1e-10)
        assert np.allclose(m.noise_cov, 0.01 * np.eye(10))

    def test_deterministic(self):
        a, b = make_linear_gaussian(6, 3, seed=4), make_linear_gaussian(6, 3, seed=4)
        assert np.array_equal(a.G, b.G) and np.array_equal(a.prior_cov, b.prior_cov)

    def test_decay_one(self):
        sv = np.linalg.svd(make_linear_gaussian(5, 3, 1.0).G, compute_uv=False)
        assert np.allclose(sv, 1.0)

    def test_too_many_outputs(self):
        with pytest.raises(ValueError):
            make_linear_gaussian(3, 4)

    def test_empirical_prior_covariance(self):
        m = make_linear_gaussian(8, 4)
        d = sample_joint(m, 100_000, 0)
        scale = np.sqrt(np.outer(np.diag(m.prior_cov), np.diag(m.prior_cov)))
        err = np.abs(np.cov(d.X, rowvar=False) - m.prior_cov) / scale
        assert err.max() < 5 * np.sqrt(2 / 1e5)

    def test_sampling_deterministic(self):
        m = make_linear_gaussian(4, 2)
        assert np.array_equal(sample_joint(m, 50, 9).Y, sample_joint(m, 50, 9).Y)

    def test_loglik_maximum(self):
        m = make_linear_gaussian(4, 2)
        x = np.ones(4)
        expected = -0.5 * (logdet_spd(m.noise_cov) + 2 * LOG_2PI)
        assert log_likelihood(m, m.G @ x, x) == pytest.approx(expected, abs=1e-12)

    def test_loglik_translation(self):
        m = make_linear_gaussian(4, 2)
        rng = np.random.default_rng(0)
        x, d = rng.standard_normal((2, 4))
        y = rng.standard_normal(2)
        assert log_likelihood(m, y + m.G @ d, x + d) == pytest.approx(log_likelihood(m, y, x), abs=1e-10)

    def test_loglik_dimension_mismatch(self):
        with pytest.raises(ValueError):
            log_likelihood(make_linear_gaussian(4, 2), np.zeros(3), np.zeros(4))

    def test_jacobian_constant(self):
        m = make_linear_gaussian(4, 2)
        assert np.array_equal(forward_jacobian(m, np.ones(4)), m.G)

    def test_average_loglik_reproducible(self):
        m = make_linear_gaussian(8, 4)
        vals = []
        for _ in range(2):
            d = sample_joint(m, 100_000, 12)
            vals.append(np.mean(log_likelihood(m, d.Y, d.X)))
        assert np.isfinite(vals[0]) and vals[0] == vals[1]


class TestClosedForm:
    def test_scalar(self):
        assert closed_form_eig(scalar_model()) == pytest.approx(0.5 * np.log(2), abs=1e-15)

    def test_zero_operator(self):
        assert closed_form_eig(scalar_model(0.0)) == 0.0

    def test_full_projection(self):
        m = make_linear_gaussian(6, 3)
        assert abs(closed_form_eig(m, np.eye(6), np.eye(3)) - closed_form_eig(m)) < 1e-12

    def test_noise_monotone(self):
        for seed in range(3):
            m = make_linear_gaussian(6, 3, seed=seed)
            vals = [
                closed_form_eig(LinearGaussianModel(m.G, m.prior_cov, c * m.noise_cov))
                for c in (1, 2, 4)
            ]
            assert vals[0] >= vals[1] >= vals[2]

    def test_data_processing(self):
        m = make_linear_gaussian(6, 3, seed=2)
        rng = np.random.default_rng(0)
        full = closed_form_eig(m)
        for r in range(1, 7):
            for s in range(1, 4):
                U = np.linalg.qr(rng.standard_normal((6, r)))[0]
                V = np.linalg.qr(rng.standard_normal((3, s)))[0]
                assert closed_form_eig(m, U, V) <= full + 1e-12

    def test_requires_linear_model(self):
        with pytest.raises(CapabilityError):
            closed_form_eig(MoessbauerModel())


class TestMoessbauer:
    def test_median_width(self):
        m = MoessbauerModel()
        x = m.sample_prior(100_000, make_rng(0))
        assert np.median(np.exp(x[:, 1])) == pytest.approx(1.0, abs=0.01)
        assert m.n_x == 4 and m.n_y == 3

    def test_offset_only_signal(self):
        m = MoessbauerModel()
        offset = 2.5
        x = np.array([0.0, 0.0, np.log(1e-300), np.log(offset)])
        assert np.allclose(m.forward(x), offset)
        y = np.full(3, offset)
        # residual is the (vanishing) Lorentzian term, so the likelihood is maximal
        expected = -0.5 * (3 * LOG_2PI + 3 * np.log(0.01))
        assert log_likelihood(m, y, x) == pytest.approx(expected, abs=1e-12)

    def test_peak_symmetry(self):
        m = MoessbauerModel()
        for i, d in enumerate(m.velocities):
            J = m.jacobian(np.array([d, 0.1, -0.2, 1.0]))
            assert abs(J[i, 0]) < 1e-14

    def test_jacobian_finite_differences(self):
        m = MoessbauerModel()
        rng = np.random.default_rng(3)
        h = 1e-5
        for x in m.sample_prior(20, rng):
            J = m.jacobian(x)
            fd = np.column_stack(
                [(m.forward(x + h * e) - m.forward(x - h * e)) / (2 * h) for e in np.eye(4)]
            )
            assert np.allclose(J, fd, rtol=1e-5, atol=1e-7)

    def test_batched_jacobian(self):
        m = MoessbauerModel()
        x = m.sample_prior(5, make_rng(1))
        assert m.jacobian(x).shape == (5, 3, 4)


class TestCapabilities:
    def test_focused(self):
        f = FocusedModel(MoessbauerModel(), (0,))
        x, y = f.sample(10, make_rng(0))
        assert x.shape == (10, 1) and y.shape == (10, 3)
        with pytest.raises(CapabilityError):
            log_likelihood(f, y, x)
        with pytest.raises(CapabilityError):
            forward_jacobian(f, x)
        assert np.all(np.isfinite(f.prior_logpdf(x)))

    def test_implicit(self):
        imp = ImplicitModel(make_linear_gaussian(3, 2))
        with pytest.raises(CapabilityError):
            log_likelihood(imp, np.zeros(2), np.zeros(3))
        with pytest.raises(CapabilityError):
            imp.prior_logpdf(np.zeros(3))


class TestJointSampleSet:
    def test_split(self):
        d = JointSampleSet(np.zeros((10, 2)), np.zeros((10, 1)), 0, 4)
        assert d.N + d.M == d.L == 10
        assert d.train[0].shape[0] == 4 and d.eval[0].shape[0] == 6

    def test_bad_split(self):
        with pytest.raises(ValueError):
            JointSampleSet(np.zeros((3, 1)), np.zeros((3, 1)), 0, 5)
        with pytest.raises(ValueError):
            JointSampleSet(np.zeros((3, 1)), np.zeros((4, 1)), 0, 0)
