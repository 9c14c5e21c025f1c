import numpy as np
import pytest

from enes.field import (
    ConstantField,
    FieldError,
    GaussianObstacleField,
    GridField,
    LayeredField,
    LinearGradientField,
    SphereGridField,
    TimeGrid,
    VgridMagicError,
    VgridTruncatedError,
    VgridVersionError,
    generate,
    load_vgrid,
    read_vgrid,
    save_vgrid,
    to_grid,
    write_vgrid,
)

UNIT = [[0.0, 1.0], [0.0, 1.0]]


class TestAnalyticFields:
    def test_constant_value_everywhere(self):
        fld = ConstantField(1.7, UNIT)
        pts = np.random.default_rng(0).uniform(0, 1, (50, 2))
        assert np.all(fld.sample(pts) == 1.7)

    def test_constant_outside_declared_bounds(self):
        with pytest.raises(FieldError):
            ConstantField(5.0, UNIT, v_min=0.1, v_max=2.0)

    def test_linear_gradient_values(self):
        fld = LinearGradientField(1.0, 0.5, UNIT)
        assert np.isclose(fld.sample(np.array([0.3, 0.0])), 1.0)
        assert np.isclose(fld.sample(np.array([0.9, 1.0])), 1.5)
        assert fld.v_min == 1.0 and fld.v_max == 1.5

    def test_linear_gradient_must_stay_positive(self):
        with pytest.raises(FieldError):
            LinearGradientField(0.5, -1.0, UNIT)

    def test_layered_lookup(self):
        fld = LayeredField([0.4, 0.7], [1.0, 2.0, 3.0], UNIT)
        assert fld.sample(np.array([0.5, 0.1])) == 1.0
        assert fld.sample(np.array([0.5, 0.5])) == 2.0
        assert fld.sample(np.array([0.5, 0.9])) == 3.0

    def test_layered_shape_mismatch(self):
        with pytest.raises(FieldError):
            LayeredField([0.5], [1.0, 2.0, 3.0], UNIT)

    def test_obstacle_extremes(self):
        mu = np.array([0.0, 0.0, 1.0])
        fld = GaussianObstacleField(mu, 3.0, lo=0.1, hi=10.0)
        assert np.isclose(fld.sample(mu), 0.1)
        assert np.isclose(fld.sample(-mu), 10.0)

    def test_clamping_to_extent(self):
        fld = LinearGradientField(1.0, 1.0, UNIT)
        assert np.isclose(fld.sample(np.array([0.5, 5.0])), fld.sample(np.array([0.5, 1.0])))

    def test_sphere_query_renormalized(self):
        mu = np.array([1.0, 0.0, 0.0])
        fld = GaussianObstacleField(mu, 2.0)
        assert np.isclose(fld.sample(2.0 * mu), fld.sample(mu))

    def test_nonfinite_query_rejected(self):
        with pytest.raises(FieldError):
            ConstantField(1.0, UNIT).sample(np.array([np.nan, 0.5]))

    def test_bad_bounds(self):
        with pytest.raises(FieldError):
            LayeredField([], [1.0], UNIT, v_min=-1.0, v_max=2.0)


class TestGridFields:
    def test_bilinear_reproduces_linear_exactly(self):
        # [DERIVED] bilinear interpolation is exact on affine data
        base = LinearGradientField(1.0, 0.5, UNIT)
        grid = to_grid(base, dims=8)
        pts = np.random.default_rng(1).uniform(0, 1, (100, 2))
        assert np.allclose(grid.sample(pts), base.sample(pts), atol=1e-6)

    def test_node_values_exact(self):
        rng = np.random.default_rng(2)
        vals = rng.uniform(1, 2, (5, 7)).astype(np.float32)
        grid = GridField(vals, UNIT)
        xs, ys = grid.node_coordinates()
        pts = np.stack([xs, ys], axis=-1)
        assert np.allclose(grid.sample(pts), vals, atol=1e-7)

    def test_trilinear_on_affine(self):
        ext3 = [[0.0, 1.0]] * 3
        base = LinearGradientField(1.0, 0.8, ext3)
        grid = to_grid(base, dims=6)
        pts = np.random.default_rng(3).uniform(0, 1, (50, 3))
        assert np.allclose(grid.sample(pts), base.sample(pts), atol=1e-6)

    def test_too_small_grid(self):
        with pytest.raises(FieldError):
            GridField(np.ones((1, 4), dtype=np.float32), UNIT)

    def test_extent_rank_mismatch(self):
        with pytest.raises(FieldError):
            GridField(np.ones((4, 4), dtype=np.float32), [[0.0, 1.0]] * 3)

    def test_sphere_grid_node_values(self):
        vals = np.linspace(1, 2, 8 * 16).reshape(8, 16).astype(np.float32)
        fld = SphereGridField(vals)
        # an exact grid node gets (almost) all the interpolation weight
        lat, lon = fld.lats[3], fld.lons[5]
        p = np.array([np.cos(lat) * np.cos(lon), np.cos(lat) * np.sin(lon), np.sin(lat)])
        assert abs(fld.sample(p) - vals[3, 5]) < 1e-6

    def test_sphere_grid_constant(self):
        fld = SphereGridField(np.full((6, 12), 1.3, dtype=np.float32))
        pts = np.random.default_rng(4).normal(size=(40, 3))
        pts /= np.linalg.norm(pts, axis=-1, keepdims=True)
        assert np.allclose(fld.sample(pts), 1.3, atol=1e-6)


class TestGenerate:
    @pytest.mark.parametrize("kind", ["constant", "linear_gradient", "layered", "gaussian_obstacle"])
    def test_deterministic_per_seed(self, kind):
        a = generate(kind, seed=7)
        b = generate(kind, seed=7)
        p = np.array([0.3, 0.6]) if a.extent is not None else np.array([0.0, 0.6, 0.8]) / np.linalg.norm([0.0, 0.6, 0.8])
        assert a.sample(p) == b.sample(p)

    def test_different_seeds_differ(self):
        vals = {float(generate("constant", seed=s).value) for s in range(8)}
        assert len(vals) > 1

    def test_bounds_respected(self):
        for s in range(10):
            fld = generate("layered", seed=s)
            pts = np.random.default_rng(s).uniform(0, 1, (64, 2))
            v = fld.sample(pts)
            assert np.all(v >= fld.v_min) and np.all(v <= fld.v_max)

    def test_unknown_kind(self):
        with pytest.raises(FieldError):
            generate("perlin")


class TestVgrid:
    def test_grid_round_trip_bit_exact(self):
        rng = np.random.default_rng(5)
        vals = rng.uniform(1, 2, (9, 11)).astype(np.float32)
        fld = GridField(vals, UNIT)
        back = read_vgrid(write_vgrid(fld))
        assert np.array_equal(back.values, vals)
        assert np.array_equal(back.extent, fld.extent)
        assert back.v_min == fld.v_min and back.v_max == fld.v_max

    def test_analytic_rasterized_on_write(self):
        fld = LinearGradientField(1.0, 0.5, UNIT)
        back = read_vgrid(write_vgrid(fld, dims=16))
        assert isinstance(back, GridField)
        pts = np.random.default_rng(6).uniform(0, 1, (30, 2))
        assert np.allclose(back.sample(pts), fld.sample(pts), atol=1e-6)

    def test_sphere_round_trip(self):
        vals = np.random.default_rng(7).uniform(1, 3, (6, 12)).astype(np.float32)
        back = read_vgrid(write_vgrid(SphereGridField(vals)))
        assert isinstance(back, SphereGridField)
        assert np.array_equal(back.values, vals)

    def test_time_grid_round_trip(self):
        times = np.abs(np.random.default_rng(8).normal(size=(5, 5))).astype(np.float32)
        tg = TimeGrid(times.astype(np.float64), np.asarray(UNIT, dtype=np.float64), float(times.min()), float(times.max()))
        back = read_vgrid(write_vgrid(tg))
        assert isinstance(back, TimeGrid)
        assert np.allclose(back.times, times, atol=1e-7)

    def test_magic_error(self):
        data = b"XXXX" + write_vgrid(ConstantField(1.0, UNIT))[4:]
        with pytest.raises(VgridMagicError):
            read_vgrid(data)

    def test_version_error(self):
        data = bytearray(write_vgrid(ConstantField(1.0, UNIT)))
        data[4] = 99
        with pytest.raises(VgridVersionError):
            read_vgrid(bytes(data))

    def test_truncation_errors(self):
        data = write_vgrid(ConstantField(1.0, UNIT))
        with pytest.raises(VgridTruncatedError):
            read_vgrid(data[:6])
        with pytest.raises(VgridTruncatedError):
            read_vgrid(data[:-10])

    def test_file_round_trip(self, tmp_path):
        fld = generate("layered", seed=3)
        path = tmp_path / "f.vgrid"
        save_vgrid(fld, path, dims=32)
        back = load_vgrid(path)
        pts = np.random.default_rng(9).uniform(0, 1, (20, 2))
        # float32 rounding of the generator makes node values match exactly
        assert np.all(np.abs(back.sample(pts) - fld.sample(pts)) <= np.max(fld.speeds) * 0.2)

    def test_generator_survives_round_trip_at_nodes(self):
        fld = generate("linear_gradient", seed=4)
        grid = to_grid(fld, dims=16)
        back = read_vgrid(write_vgrid(grid))
        assert np.array_equal(back.values, grid.values)
