import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from tmeig.errors import DivergenceError
from tmeig.training import fit_triangular_map
from tmeig.transport import (
    IDENTITY_SLOPE_COEFF,
    BlockTriangularMap,
    MonotoneComponent,
    MultiIndexSet,
    TriangularMap,
    component_invert,
    hermite_features,
    map_forward,
    map_invert,
    rectified_component_eval,
    softplus,
)


def random_component(rng, dim, degree, scale=0.3):
    idx = MultiIndexSet.total_degree(dim, degree)
    return MonotoneComponent(idx, scale * rng.standard_normal(len(idx)))


def banana(n, rng, dim=5):
    z = rng.standard_normal((n, dim))
    z[:, 1] += 0.5 * z[:, 0] ** 2
    z[:, 3] = z[:, 3] * np.exp(0.3 * z[:, 2])
    return z


@pytest.fixture(scope="module")
def trained_5d():
    rng = np.random.default_rng(0)
    tmap, _ = fit_triangular_map(banana(4000, rng), 2)
    return tmap


class TestMultiIndex:
    def test_total_degree_size(self):
        for dim, deg in [(1, 3), (3, 2), (5, 1), (7, 2)]:
            assert len(MultiIndexSet.total_degree(dim, deg)) == math.comb(dim + deg, deg)

    def test_downward_closed(self):
        assert MultiIndexSet.total_degree(4, 3).is_downward_closed()
        assert not MultiIndexSet(np.array([[0, 0], [0, 2]])).is_downward_closed()

    def test_duplicates_rejected(self):
        with pytest.raises(ValueError):
            MultiIndexSet(np.array([[1, 0], [1, 0]]))


class TestHermiteFeatures:
    def test_constant(self):
        v, d = hermite_features(MultiIndexSet(np.array([[0]])), np.array([0.7]))
        assert v[0] == 1.0 and d[0] == 0.0

    def test_linear(self):
        v, d = hermite_features(MultiIndexSet(np.array([[1]])), np.array([2.0]))
        assert v[0] == 2.0 and d[0] == 1.0

    def test_product_and_partial(self):
        idx = MultiIndexSet(np.array([[2, 1]]))
        z = np.array([1.0, 0.5])
        v, d = hermite_features(idx, z)
        assert v[0] == pytest.approx((1.0**2 - 1) / np.sqrt(2) * 0.5, abs=1e-15)
        h = 1e-6
        fd = (hermite_features(idx, z + [0, h])[0] - hermite_features(idx, z - [0, h])[0]) / (2 * h)
        assert abs(d[0] - fd[0]) < 1e-7

    def test_orthonormal_under_gaussian(self):
        idx = MultiIndexSet.total_degree(1, 5)
        x, w = np.polynomial.hermite_e.hermegauss(20)
        v, _ = hermite_features(idx, x[:, None])
        gram = (v * (w / np.sqrt(2 * np.pi))[:, None]).T @ v
        assert np.allclose(gram, np.eye(6), atol=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            hermite_features(MultiIndexSet.total_degree(2, 1), np.zeros(3))


class TestRectifiedComponent:
    def test_affine(self):
        comp = MonotoneComponent(MultiIndexSet(np.array([[0], [1]])), np.array([0.4, -1.2]))
        for z in (-2.0, 0.0, 3.5):
            s, ds = rectified_component_eval(comp, np.array([z]))
            assert s == pytest.approx(0.4 + softplus(-1.2) * z, abs=1e-14)
            assert ds == pytest.approx(softplus(-1.2), abs=1e-15)

    def test_zero_coefficients(self):
        comp = MonotoneComponent(MultiIndexSet.total_degree(2, 3), np.zeros(10))
        s, ds = rectified_component_eval(comp, np.array([0.3, -1.7]))
        assert s == pytest.approx(np.log(2) * -1.7, abs=1e-14)
        assert ds == pytest.approx(np.log(2))

    def test_cubic_vs_adaptive_quadrature(self):
        rng = np.random.default_rng(1)
        comp = random_component(rng, 2, 3)
        idx = comp.index_set
        for z in rng.standard_normal((5, 2)) * 1.5:

            def f(p, t):
                return hermite_features(idx, np.array([p, t]))[0] @ comp.coeffs

            def df(p, t):
                return hermite_features(idx, np.array([p, t]))[1] @ comp.coeffs

            ref = f(z[0], 0.0) + quad(lambda t: softplus(df(z[0], t)), 0.0, z[1], epsabs=1e-14, epsrel=1e-14)[0]
            s, _ = rectified_component_eval(comp, z)
            assert abs(s - ref) < 1e-10

    def test_positive_partials(self):
        rng = np.random.default_rng(2)
        comp = random_component(rng, 2, 3, scale=2.0)
        _, ds = comp.evaluate(rng.standard_normal((1000, 2)) * 3)
        assert np.all(ds > 0)

    def test_negative_last_coordinate(self):
        comp = MonotoneComponent(MultiIndexSet(np.array([[0], [1], [2]])), np.array([0.0, 0.5, 0.4]))
        s_neg, _ = comp.evaluate(np.array([[-1.0]]))
        s_zero, _ = comp.evaluate(np.array([[0.0]]))
        assert s_neg[0] < s_zero[0]


class TestMapForward:
    def test_identity(self):
        tmap = TriangularMap.identity(3)
        z = np.random.default_rng(3).standard_normal((10, 3))
        image, logdet = map_forward(tmap, z)
        assert np.allclose(image, z, atol=1e-14)
        assert np.allclose(logdet, 0.0, atol=1e-14)
        assert IDENTITY_SLOPE_COEFF == pytest.approx(np.log(np.e - 1))

    def test_permutation_changes_output(self, trained_5d):
        z = np.array([0.3, -1.0, 0.8, 0.1, 2.0])
        assert not np.allclose(map_forward(trained_5d, z)[0], map_forward(trained_5d, z[::-1])[0])

    def test_logdet_vs_fd_jacobian(self, trained_5d):
        rng = np.random.default_rng(4)
        h = 1e-6
        for z in banana(5, rng):
            J = np.column_stack(
                [
                    (map_forward(trained_5d, z + h * e)[0] - map_forward(trained_5d, z - h * e)[0]) / (2 * h)
                    for e in np.eye(5)
                ]
            )
            assert map_forward(trained_5d, z)[1] == pytest.approx(np.linalg.slogdet(J)[1], abs=1e-5)

    def test_triangular(self, trained_5d):
        rng = np.random.default_rng(5)
        z = banana(50, rng)
        base, _ = trained_5d.forward(z)
        for j in range(5):
            zp = z.copy()
            zp[:, j] += rng.standard_normal(50)
            out, _ = trained_5d.forward(zp)
            assert np.array_equal(out[:, :j], base[:, :j])

    def test_non_finite_rejected(self, trained_5d):
        with pytest.raises(ValueError):
            trained_5d.forward(np.array([0, np.nan, 0, 0, 0]))

    def test_positivity_on_random_points(self, trained_5d):
        z = np.random.default_rng(6).standard_normal((10_000, 5)) * 2
        zh = trained_5d.standardize(z)
        for k, comp in enumerate(trained_5d.components):
            assert np.all(comp.evaluate(zh[:, : k + 1])[1] > 0)

    def test_quadrature_consistency(self, trained_5d):
        z = banana(200, np.random.default_rng(7))
        zh = trained_5d.standardize(z)
        for k, comp in enumerate(trained_5d.components):
            fine = MonotoneComponent(comp.index_set, comp.coeffs, quad_order=2 * comp.quad_order)
            a = comp.evaluate(zh[:, : k + 1])[0]
            b = fine.evaluate(zh[:, : k + 1])[0]
            assert np.max(np.abs(a - b)) < 1e-9


class TestInversion:
    def test_affine_component(self):
        comp = MonotoneComponent(MultiIndexSet(np.array([[1]])), np.array([np.log(np.expm1(2.0))]))
        assert component_invert(comp, np.zeros(0), 3.0) == pytest.approx(1.5, abs=1e-10)

    def test_target_at_origin(self):
        rng = np.random.default_rng(8)
        comp = random_component(rng, 3, 2)
        p = rng.standard_normal(2)
        s0, _ = comp.evaluate(np.append(p, 0.0)[None])
        assert abs(component_invert(comp, p, s0[0])) < 1e-9

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(1, 4), st.integers(1, 3))
    def test_component_round_trip(self, seed, dim, degree):
        rng = np.random.default_rng(seed)
        comp = random_component(rng, dim, degree)
        z = rng.standard_normal(dim)
        s, _ = comp.evaluate(z[None])
        assert abs(component_invert(comp, z[:-1], s[0]) - z[-1]) < 1e-9

    def test_one_d_map(self):
        comp = MonotoneComponent(MultiIndexSet.total_degree(1, 3), np.array([0.1, 0.5, 0.2, 0.3]))
        tmap = TriangularMap([comp], np.zeros(1), np.ones(1))
        w = tmap.forward(np.array([3.0]))[0]
        assert map_invert(tmap, w)[0] == pytest.approx(3.0, abs=1e-9)

    def test_identity_inverse(self):
        w = np.random.default_rng(9).standard_normal((20, 3))
        assert np.allclose(map_invert(TriangularMap.identity(3), w), w, atol=1e-10)

    def test_trained_round_trip(self, trained_5d):
        w = np.random.default_rng(10).standard_normal((1000, 5))
        z = map_invert(trained_5d, w)
        assert np.max(np.abs(map_forward(trained_5d, z)[0] - w)) < 1e-8
        zz = banana(1000, np.random.default_rng(11))
        back = map_invert(trained_5d, map_forward(trained_5d, zz)[0])
        assert np.max(np.abs(back - zz)) < 1e-8

    def test_divergence(self):
        # slope vanishes far from the origin so the bracket cannot reach the target
        comp = MonotoneComponent(MultiIndexSet(np.array([[0], [1], [2]])), np.array([0.0, -40.0, -400.0]))
        with pytest.raises(DivergenceError):
            component_invert(comp, np.zeros(0), 1e3)


class TestBlockMap:
    def test_serialization_round_trip(self, tmp_path):
        rng = np.random.default_rng(12)
        z = banana(2000, rng, dim=4)
        from tmeig.training import fit_block_map

        bmap, _ = fit_block_map(z[:, :2], z[:, 2:], 2, ordering="X-then-Y")
        path = tmp_path / "map.json"
        bmap.save(path, report={"note": "test"})
        loaded = BlockTriangularMap.load(path)
        q = banana(10, rng, dim=4)
        assert np.array_equal(loaded.forward(q)[0], bmap.forward(q)[0])
        assert loaded.leading_variable == "X"
        doc = json.loads(path.read_text())
        assert doc["version"] == 1 and doc["ordering"] == "X-then-Y"
        w = rng.standard_normal((5, 4))
        assert np.allclose(loaded.forward(loaded.invert(w))[0], w, atol=1e-8)

    def test_bad_ordering(self):
        with pytest.raises(ValueError):
            BlockTriangularMap("Z-then-X", 1, 1)

    def test_version_check(self):
        with pytest.raises(ValueError):
            BlockTriangularMap.from_dict({"format": "tmeig-block-map", "version": 99})
