import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from enes.geometry import (
    CHORDAL_DISTANCE,
    EUCLIDEAN_DISTANCE,
    INDICATOR,
    DegeneratePairError,
    DegenerateRetractionError,
    GeometryError,
    Manifold,
    Semimetric,
    euclidean,
    metric_norm,
    retract,
    riemannian_gradient,
    semimetric_value,
    semimetric_value_and_grad,
    sphere,
    tangent_project,
    unit_square,
)

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def unit_vectors():
    return (
        st.tuples(finite, finite, finite)
        .map(np.asarray)
        .filter(lambda v: np.linalg.norm(v) > 1e-3)
        .map(lambda v: v / np.linalg.norm(v))
    )


class TestManifold:
    def test_unit_square_dims(self):
        m = unit_square()
        assert m.ambient_dim == 2
        assert m.intrinsic_dim == 2

    def test_sphere_dims(self):
        m = sphere()
        assert m.ambient_dim == 3
        assert m.intrinsic_dim == 2

    def test_bad_kind_rejected(self):
        with pytest.raises(GeometryError):
            Manifold("torus")

    def test_bad_extent_rejected(self):
        with pytest.raises(GeometryError):
            euclidean([[1.0, 0.0]])

    def test_check_point_dimension(self):
        with pytest.raises(GeometryError):
            unit_square().check_point(np.zeros(3))

    def test_check_point_sphere_norm(self):
        with pytest.raises(GeometryError):
            sphere().check_point(np.array([1.0, 1.0, 0.0]))


class TestTangent:
    @given(unit_vectors(), st.tuples(finite, finite, finite).map(np.asarray))
    @settings(max_examples=50, deadline=None)
    def test_sphere_projection_is_tangential(self, p, t):
        tp = tangent_project(sphere(), p, t)
        assert abs(np.dot(tp, p)) < 1e-9

    @given(unit_vectors(), st.tuples(finite, finite, finite).map(np.asarray))
    @settings(max_examples=50, deadline=None)
    def test_sphere_projection_idempotent(self, p, t):
        m = sphere()
        tp = tangent_project(m, p, t)
        assert np.allclose(tangent_project(m, p, tp), tp, atol=1e-12)

    def test_euclidean_projection_identity(self):
        t = np.array([0.3, -0.7])
        assert np.array_equal(tangent_project(unit_square(), np.array([0.5, 0.5]), t), t)

    def test_metric_norm_euclidean(self):
        # [TRIVIAL] identity metric
        assert metric_norm(unit_square(), np.array([0.5, 0.5]), np.array([3.0, 4.0])) == 5.0

    def test_metric_norm_sphere_projects_first(self):
        p = np.array([0.0, 0.0, 1.0])
        t = np.array([1.0, 0.0, 5.0])  # radial part must be discarded
        assert np.isclose(metric_norm(sphere(), p, t), 1.0)

    def test_riemannian_gradient_sphere(self):
        p = np.array([1.0, 0.0, 0.0])
        g = riemannian_gradient(sphere(), p, np.array([2.0, 3.0, 0.0]))
        assert np.allclose(g, [0.0, 3.0, 0.0])


class TestRetract:
    def test_euclidean_clamps_to_extent(self):
        q = retract(unit_square(), np.array([0.9, 0.5]), np.array([0.5, 0.0]))
        assert np.allclose(q, [1.0, 0.5])

    def test_zero_tangent_fixed_point(self):
        p = np.array([0.25, 0.75])
        assert np.array_equal(retract(unit_square(), p, np.zeros(2)), p)

    @given(unit_vectors(), st.tuples(finite, finite, finite).map(np.asarray))
    @settings(max_examples=50, deadline=None)
    def test_sphere_retraction_stays_on_sphere(self, p, t):
        try:
            q = retract(sphere(), p, t)
        except DegenerateRetractionError:
            return
        assert abs(np.linalg.norm(q) - 1.0) < 1e-12

    def test_sphere_retraction_degenerate(self):
        p = np.array([1.0, 0.0, 0.0])
        with pytest.raises(DegenerateRetractionError):
            retract(sphere(), p, -p)

    @given(unit_vectors())
    @settings(max_examples=25, deadline=None)
    def test_sphere_zero_tangent_fixed_point(self, p):
        assert np.allclose(retract(sphere(), p, np.zeros(3)), p, atol=1e-15)


class TestSemimetric:
    def test_zero_on_diagonal(self):
        d = Semimetric(EUCLIDEAN_DISTANCE)
        p = np.array([0.3, 0.4])
        assert semimetric_value(d, p, p) == 0.0

    @given(
        st.tuples(finite, finite).map(np.asarray),
        st.tuples(finite, finite).map(np.asarray),
    )
    @settings(max_examples=50, deadline=None)
    def test_symmetry(self, s, r):
        d = Semimetric(EUCLIDEAN_DISTANCE)
        assert semimetric_value(d, s, r) == semimetric_value(d, r, s)

    def test_value_example(self):
        # [TRIVIAL] 3-4-5 triangle
        d = Semimetric(EUCLIDEAN_DISTANCE)
        assert semimetric_value(d, np.array([0.0, 0.0]), np.array([3.0, 4.0])) == 5.0

    def test_gradient_matches_finite_differences(self):
        # [DERIVED: central finite differences on |s - r|]
        d = Semimetric(EUCLIDEAN_DISTANCE)
        rng = np.random.default_rng(0)
        for _ in range(20):
            s = rng.uniform(0, 1, 2)
            r = rng.uniform(0, 1, 2)
            if np.linalg.norm(s - r) < 1e-2:
                continue
            val, gs, gr = semimetric_value_and_grad(d, s, r)
            h = 1e-6
            for i in range(2):
                e = np.zeros(2)
                e[i] = h
                fd = (semimetric_value(d, s + e, r) - semimetric_value(d, s - e, r)) / (2 * h)
                assert abs(fd - gs[i]) < 1e-8
                fd = (semimetric_value(d, s, r + e) - semimetric_value(d, s, r - e)) / (2 * h)
                assert abs(fd - gr[i]) < 1e-8

    def test_gradients_opposite(self):
        d = Semimetric(EUCLIDEAN_DISTANCE)
        _, gs, gr = semimetric_value_and_grad(d, np.array([0.1, 0.2]), np.array([0.8, 0.9]))
        assert np.allclose(gs, -gr)
        assert np.isclose(np.linalg.norm(gs), 1.0)

    def test_degenerate_pair_raises(self):
        d = Semimetric(EUCLIDEAN_DISTANCE, epsilon=1e-6)
        p = np.array([0.5, 0.5])
        with pytest.raises(DegeneratePairError):
            semimetric_value_and_grad(d, p, p + 1e-9)

    def test_indicator_straight_through(self):
        d = Semimetric(INDICATOR)
        val, gs, gr = semimetric_value_and_grad(d, np.array([0.0, 0.0]), np.array([0.5, 0.0]))
        assert val == 1.0
        assert not gs.any() and not gr.any()
        val, _, _ = semimetric_value_and_grad(d, np.zeros(2), np.zeros(2))
        assert val == 0.0

    def test_chordal_is_ambient_distance(self):
        d = Semimetric(CHORDAL_DISTANCE)
        a = np.array([1.0, 0.0, 0.0])
        b = np.array([0.0, 1.0, 0.0])
        assert np.isclose(semimetric_value(d, a, b), np.sqrt(2.0))

    def test_unknown_kind(self):
        with pytest.raises(GeometryError):
            Semimetric("taxicab")
