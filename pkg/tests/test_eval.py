import numpy as np
import pytest

from enes.evaluate import (
    EvalError,
    EvalReport,
    GeodesicPath,
    geodesic_trace,
    greatcircle_deviation,
    metrics,
    path_minimum_velocity,
    recovered_velocity,
    steerability_check,
    straightline_deviation,
)
from enes.field import ConstantField, LinearGradientField
from enes.geometry import metric_norm
from enes.groups import SE2, identity, random_element
from enes.model import EnesModel, desk_config, init_latents


@pytest.fixture(scope="module")
def model():
    return EnesModel(desk_config(v_min=1.0, v_max=2.0), seed=0)


@pytest.fixture(scope="module")
def latents(model):
    return init_latents(model.cfg, seed=1)


class TestMetrics:
    def test_exact_prediction_is_zero(self):
        ref = np.array([1.0, 2.0, 3.0])
        assert metrics(ref, ref) == (0.0, 0.0)

    def test_known_values(self):
        # [TRIVIAL] RMAE = (0.1 + 0.1) / 2, RE = sqrt(0.02 / 2)
        ref = np.array([1.0, 1.0])
        pred = np.array([1.1, 0.9])
        re, rmae = metrics(pred, ref)
        assert np.isclose(re, 0.1)
        assert np.isclose(rmae, 0.1)

    def test_uniform_scaling(self):
        ref = np.random.default_rng(0).uniform(0.5, 2.0, 50)
        re, rmae = metrics(1.1 * ref, ref)
        assert np.isclose(re, 0.1)
        assert np.isclose(rmae, 0.1)

    def test_literal_mode(self):
        ref = np.array([1.0, 1.0])
        pred = np.array([1.1, 0.9])
        re, _ = metrics(pred, ref, re_mode="literal")
        assert np.isclose(re, np.sqrt(0.2 / 2.0))

    def test_per_source_averaging(self):
        ref = np.ones((2, 4))
        pred = ref.copy()
        pred[0] *= 1.2  # one source 20% off, the other exact
        re, rmae = metrics(pred, ref)
        assert np.isclose(re, 0.1)
        assert np.isclose(rmae, 0.1)

    def test_shape_mismatch(self):
        with pytest.raises(EvalError):
            metrics(np.ones(3), np.ones(4))

    def test_zero_reference(self):
        with pytest.raises(EvalError):
            metrics(np.ones(3), np.zeros(3))

    def test_unknown_mode(self):
        with pytest.raises(EvalError):
            metrics(np.ones(3), np.ones(3), re_mode="max")


class TestEvalReport:
    def test_aggregates_and_csv(self, tmp_path):
        rep = EvalReport(["a", "b"], [0.1, 0.3], [0.05, 0.15], fit_seconds=1.5, n_probes=64)
        assert np.isclose(rep.mean_re, 0.2)
        assert np.isclose(rep.mean_rmae, 0.1)
        path = tmp_path / "report.csv"
        rep.write_csv(path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "field,re,rmae"
        assert lines[1].startswith("a,0.1")
        assert any(l.startswith("mean,") for l in lines)


class TestSteerability:
    def test_identity_is_exactly_zero(self, model, latents):
        rng = np.random.default_rng(2)
        S = rng.uniform(0, 1, (20, 2))
        R = rng.uniform(0, 1, (20, 2))
        assert steerability_check(model, latents, identity(SE2), (S, R)) == 0.0

    def test_random_elements_below_tolerance(self, model, latents):
        rng = np.random.default_rng(3)
        for _ in range(10):
            g = random_element(SE2, rng, translation_scale=0.3)
            S = rng.uniform(0, 1, (20, 2))
            R = rng.uniform(0, 1, (20, 2))
            assert steerability_check(model, latents, g, (S, R)) < 1e-9


class TestRecoveredVelocity:
    def test_matches_gradient_norm(self, model, latents):
        rng = np.random.default_rng(4)
        s = rng.uniform(0.1, 0.9, 2)
        r = rng.uniform(0.1, 0.9, 2)
        v = recovered_velocity(model, latents, s, r)
        _, gs, _ = model.travel_time_with_gradients(s, r, latents)
        assert np.isclose(v, 1.0 / metric_norm(model.cfg.manifold, s, gs))
        assert np.isfinite(v) and v > 0


class TestGeodesics:
    def test_trace_converges_and_connects(self, model, latents):
        s = np.array([0.40, 0.50])
        r = np.array([0.60, 0.50])
        path = geodesic_trace(model, latents, s, r, alpha=1e-3)
        assert isinstance(path, GeodesicPath)
        assert path.converged
        assert np.allclose(path.points[0], s)
        assert np.allclose(path.points[-1], r)
        assert path.terminal_gap < 2e-3
        # points stay inside the domain
        assert np.all(path.points >= -1e-12) and np.all(path.points <= 1 + 1e-12)

    def test_budget_exhaustion_flags_partial(self, model, latents):
        path = geodesic_trace(model, latents, np.array([0.1, 0.1]), np.array([0.9, 0.9]), alpha=1e-5, max_steps=10)
        assert not path.converged
        assert path.steps == 10

    def test_trivial_pair_converges_immediately(self, model, latents):
        p = np.array([0.5, 0.5])
        path = geodesic_trace(model, latents, p, p + 1e-5, alpha=1e-3)
        assert path.converged and path.steps == 0


class TestPathScores:
    def test_straightline_zero_on_segment(self):
        pts = np.linspace([0, 0], [1, 1], 20)
        assert straightline_deviation(pts) < 1e-12

    def test_straightline_known_offset(self):
        pts = np.array([[0.0, 0.0], [0.5, 0.25], [1.0, 0.0]])
        assert np.isclose(straightline_deviation(pts), 0.25)

    def test_straightline_degenerate(self):
        with pytest.raises(EvalError):
            straightline_deviation(np.zeros((3, 2)))

    def test_greatcircle_zero_on_equator(self):
        lon = np.linspace(0, np.pi / 2, 15)
        pts = np.stack([np.cos(lon), np.sin(lon), np.zeros_like(lon)], axis=-1)
        assert greatcircle_deviation(pts) < 1e-12

    def test_greatcircle_known_angle(self):
        a = np.array([1.0, 0.0, 0.0])
        b = np.array([0.0, 1.0, 0.0])
        lifted = np.array([np.cos(0.1) / np.sqrt(2), np.cos(0.1) / np.sqrt(2), np.sin(0.1)])
        pts = np.stack([a, lifted, b])
        assert np.isclose(greatcircle_deviation(pts), 0.1)

    def test_greatcircle_antipodal_rejected(self):
        pts = np.array([[1.0, 0.0, 0.0], [0.0, 0.0, 1.0], [-1.0, 0.0, 0.0]])
        with pytest.raises(EvalError):
            greatcircle_deviation(pts)

    def test_path_minimum_velocity(self):
        fld = LinearGradientField(1.0, 1.0, [[0.0, 1.0], [0.0, 1.0]])
        pts = np.array([[0.5, 0.2], [0.5, 0.8]])
        assert np.isclose(path_minimum_velocity(pts, fld), 1.2)

    def test_path_minimum_velocity_constant(self):
        fld = ConstantField(1.7, [[0.0, 1.0], [0.0, 1.0]])
        pts = np.random.default_rng(5).uniform(0, 1, (10, 2))
        assert path_minimum_velocity(pts, fld) == 1.7
