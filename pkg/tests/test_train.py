import numpy as np
import pytest

from enes.field import ConstantField
from enes.geometry import sphere, unit_square
from enes.model import EnesModel, desk_config, init_latents, sphere_config
from enes.train import (
    FIT_AUTODECODE,
    FIT_META,
    TrainConfig,
    TrainResult,
    TrainingDivergedError,
    autodecode,
    fit_latents,
    make_residual_loss,
    meta_train,
    sample_pairs,
)

UNIT = [[0.0, 1.0], [0.0, 1.0]]


@pytest.fixture(scope="module")
def small_model():
    return EnesModel(desk_config(n_latents=4, context_dim=8, hidden=32, v_min=0.5, v_max=2.0), seed=0)


class TestConfig:
    def test_unknown_loss_rejected(self):
        with pytest.raises(ValueError):
            TrainConfig(loss="huber")

    def test_defaults(self):
        cfg = TrainConfig()
        assert cfg.steps == 3000
        assert cfg.inner_steps == 5


class TestSamplePairs:
    def test_within_extent(self):
        rng = np.random.default_rng(0)
        S, R = sample_pairs(unit_square(), 256, rng)
        for arr in (S, R):
            assert arr.shape == (256, 2)
            assert np.all(arr >= 0) and np.all(arr <= 1)

    def test_non_degenerate(self):
        rng = np.random.default_rng(1)
        S, R = sample_pairs(unit_square(), 512, rng, epsilon=1e-6)
        assert np.all(np.linalg.norm(S - R, axis=-1) >= 1e-5)

    def test_sphere_points_normalized(self):
        rng = np.random.default_rng(2)
        S, R = sample_pairs(sphere(), 128, rng)
        assert np.allclose(np.linalg.norm(S, axis=-1), 1.0, atol=1e-12)
        assert np.allclose(np.linalg.norm(R, axis=-1), 1.0, atol=1e-12)

    def test_deterministic_per_seed(self):
        a = sample_pairs(unit_square(), 16, np.random.default_rng(3))
        b = sample_pairs(unit_square(), 16, np.random.default_rng(3))
        assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])


class TestResidualLoss:
    def test_zero_for_perfectly_recovered_field(self, small_model):
        # the loss |v^2 |grad T|^2 - 1| vanishes iff the slowness is exact;
        # an untrained network gives a strictly positive residual
        import jax.numpy as jnp

        loss_fn = make_residual_loss(small_model, "abs")
        rng = np.random.default_rng(4)
        S, R = sample_pairs(unit_square(), 32, rng)
        V = np.full(32, 1.0)
        z = init_latents(small_model.cfg, seed=0)
        val = float(
            loss_fn(small_model.params, jnp.asarray(z.poses), jnp.asarray(z.contexts), jnp.asarray(S), jnp.asarray(R), jnp.asarray(V))
        )
        assert val > 0

    def test_logcosh_below_abs_for_large_residuals(self, small_model):
        import jax.numpy as jnp

        rng = np.random.default_rng(5)
        S, R = sample_pairs(unit_square(), 32, rng)
        V = np.full(32, 1.7)
        z = init_latents(small_model.cfg, seed=0)
        args = (small_model.params, jnp.asarray(z.poses), jnp.asarray(z.contexts), jnp.asarray(S), jnp.asarray(R), jnp.asarray(V))
        l_abs = float(make_residual_loss(small_model, "abs")(*args))
        l_lc = float(make_residual_loss(small_model, "logcosh")(*args))
        assert 0 < l_lc <= l_abs + np.log(2.0)


class TestAutodecode:
    def test_loss_decreases_on_constant_field(self, small_model):
        fld = ConstantField(1.3, UNIT, v_min=0.5, v_max=2.0)
        cfg = TrainConfig(steps=120, pairs_per_field=32, seed=0, log_every=20)
        result = autodecode(small_model, [fld], cfg)
        assert isinstance(result, TrainResult)
        first = result.history[0]["train_loss"]
        last = result.history[-1]["train_loss"]
        assert last < first * 0.5
        assert len(result.latents) == 1

    def test_validation_split_with_many_fields(self, small_model):
        fields = [ConstantField(v, UNIT, v_min=0.5, v_max=2.0) for v in (0.8, 1.0, 1.2, 1.4, 1.6)]
        cfg = TrainConfig(steps=30, pairs_per_field=16, seed=0, log_every=10, val_every=10)
        result = autodecode(small_model, fields, cfg)
        assert len(result.latents) == 5
        assert result.best_val < np.inf
        assert any(h.get("val_loss") is not None for h in result.history)

    def test_empty_field_list_rejected(self, small_model):
        with pytest.raises(ValueError):
            autodecode(small_model, [], TrainConfig(steps=1))

    def test_divergence_raises(self, small_model):
        fld = ConstantField(1.3, UNIT, v_min=0.5, v_max=2.0)
        cfg = TrainConfig(steps=50, pairs_per_field=8, seed=0, lr_params=1e12, lr_context=1e12, lr_pose=1e12)
        with pytest.raises(TrainingDivergedError):
            autodecode(small_model, [fld], cfg)


class TestFitLatents:
    def test_autodecode_mode_reduces_loss(self, small_model):
        fld = ConstantField(0.9, UNIT, v_min=0.5, v_max=2.0)
        cfg = TrainConfig(steps=80, pairs_per_field=32, seed=1)
        z, losses = fit_latents(small_model, fld, cfg, mode=FIT_AUTODECODE)
        assert z.poses.shape[0] == small_model.cfg.n_latents
        assert losses[-1] < losses[0]

    def test_meta_mode_runs_inner_steps(self, small_model):
        fld = ConstantField(1.1, UNIT, v_min=0.5, v_max=2.0)
        cfg = TrainConfig(inner_steps=5, pairs_per_field=32, seed=2)
        z, losses = fit_latents(small_model, fld, cfg, mode=FIT_META)
        assert len(losses) == 5

    def test_unknown_mode(self, small_model):
        fld = ConstantField(1.0, UNIT, v_min=0.5, v_max=2.0)
        with pytest.raises(ValueError):
            fit_latents(small_model, fld, TrainConfig(), mode="oneshot")


class TestMetaTrain:
    def test_short_run_returns_learned_rates(self, small_model):
        fields = [ConstantField(v, UNIT, v_min=0.5, v_max=2.0) for v in (0.8, 1.2, 1.6)]
        cfg = TrainConfig(steps=10, pairs_per_field=16, inner_steps=2, seed=0, log_every=5)
        result = meta_train(small_model, fields, cfg)
        assert result.log_inner_lrs is not None
        assert result.log_inner_lrs.shape == (2,)
        assert np.all(np.isfinite(result.log_inner_lrs))

    def test_adaptation_uses_learned_rates(self, small_model):
        fld = ConstantField(1.4, UNIT, v_min=0.5, v_max=2.0)
        cfg = TrainConfig(inner_steps=3, pairs_per_field=16, seed=1)
        lrs = np.log([10.0, 1.0])
        z, losses = fit_latents(small_model, fld, cfg, mode=FIT_META, log_inner_lrs=lrs)
        assert len(losses) == 3
        assert np.all(np.isfinite(z.poses)) and np.all(np.isfinite(z.contexts))


class TestSphereTraining:
    def test_short_sphere_run(self):
        model = EnesModel(sphere_config(n_latents=3, context_dim=8, hidden=32, v_min=0.5, v_max=2.0), seed=0)
        fld = ConstantField(1.0, None, v_min=0.5, v_max=2.0)
        cfg = TrainConfig(steps=40, pairs_per_field=32, seed=0, log_every=10)
        result = autodecode(model, [fld], cfg)
        assert result.history[-1]["train_loss"] < result.history[0]["train_loss"]
