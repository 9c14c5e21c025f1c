"""Velocity field representations, synthetic generators and the VGRID format.

Fields are immutable after construction and clamp both query coordinates (to
the domain extent) and returned values (to [v_min, v_max]).  Grid samples are
stored float32, matching the on-disk format, while interpolation runs in
float64.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .geometry import Manifold, SPHERE2, euclidean, sphere

_MAGIC = b"VGRD"
_VERSION = 1

_KIND_CODES = {"grid2": 0, "grid3": 1, "sphere_grid": 2, "time_grid2": 3}
_CODE_KINDS = {v: k for k, v in _KIND_CODES.items()}


class FieldError(ValueError):
    """Contract violation in a field operation."""


class VgridError(FieldError):
    """Malformed VGRID payload."""


class VgridMagicError(VgridError):
    pass


class VgridVersionError(VgridError):
    pass


class VgridTruncatedError(VgridError):
    pass


class VelocityField:
    """Positive scalar field on the domain with declared [v_min, v_max]."""

    def __init__(self, kind: str, v_min: float, v_max: float, extent=None):
        if not (0 < v_min <= v_max):
            raise FieldError(f"need 0 < v_min <= v_max, got {v_min}, {v_max}")
        self.kind = kind
        self.v_min = float(v_min)
        self.v_max = float(v_max)
        self.extent = None if extent is None else np.asarray(extent, dtype=np.float64).reshape(-1, 2)

    # subclasses implement _evaluate on clamped coordinates
    def _evaluate(self, p: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _clamp_coords(self, p: np.ndarray) -> np.ndarray:
        if self.extent is not None:
            return np.clip(p, self.extent[:, 0], self.extent[:, 1])
        # spherical domains: renormalize instead of clamping
        nrm = np.linalg.norm(p, axis=-1, keepdims=True)
        return p / np.where(nrm > 0, nrm, 1.0)

    def sample(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=np.float64)
        if np.any(~np.isfinite(p)):
            raise FieldError("NaN/inf query point")
        v = self._evaluate(self._clamp_coords(p))
        return np.clip(v, self.v_min, self.v_max)

    @property
    def manifold(self) -> Manifold:
        if self.extent is not None:
            return euclidean(self.extent)
        return sphere()


class ConstantField(VelocityField):
    def __init__(self, value: float, extent=None, v_min: float | None = None, v_max: float | None = None):
        self.value = float(value)
        super().__init__(
            "constant",
            self.value if v_min is None else v_min,
            self.value if v_max is None else v_max,
            extent,
        )
        if not (self.v_min <= self.value <= self.v_max):
            raise FieldError("constant value outside declared bounds")

    def _evaluate(self, p):
        return np.full(p.shape[:-1], self.value)


class LinearGradientField(VelocityField):
    """v(x) = v0 + slope * depth, depth being the last coordinate."""

    def __init__(self, v0: float, slope: float, extent):
        self.v0 = float(v0)
        self.slope = float(slope)
        ext = np.asarray(extent, dtype=np.float64).reshape(-1, 2)
        corners = self.v0 + self.slope * ext[-1]
        if np.min(corners) <= 0:
            raise FieldError("linear-gradient field must stay positive over the extent")
        super().__init__("linear_gradient", float(np.min(corners)), float(np.max(corners)), ext)

    def _evaluate(self, p):
        return self.v0 + self.slope * p[..., -1]


class LayeredField(VelocityField):
    """Piecewise-constant speed in depth: speeds[k] below interfaces[k-1]."""

    def __init__(self, interfaces, speeds, extent, v_min=None, v_max=None):
        self.interfaces = np.asarray(interfaces, dtype=np.float64)
        self.speeds = np.asarray(speeds, dtype=np.float64)
        if self.speeds.shape[0] != self.interfaces.shape[0] + 1:
            raise FieldError("need len(speeds) == len(interfaces) + 1")
        super().__init__(
            "layered",
            float(np.min(self.speeds)) if v_min is None else v_min,
            float(np.max(self.speeds)) if v_max is None else v_max,
            extent,
        )

    def _evaluate(self, p):
        idx = np.searchsorted(self.interfaces, p[..., -1], side="right")
        return self.speeds[idx]


class GaussianObstacleField(VelocityField):
    """Low-velocity bump on the sphere from a von Mises-Fisher profile.

    The density exp(kappa (mu . x - 1)) is rescaled so the obstacle center
    hits lo and the antipode hits hi.
    """

    def __init__(self, mu, kappa: float, lo: float = 0.1, hi: float = 10.0):
        mu = np.asarray(mu, dtype=np.float64)
        self.mu = mu / np.linalg.norm(mu)
        self.kappa = float(kappa)
        self.lo = float(lo)
        self.hi = float(hi)
        super().__init__("gaussian_obstacle", lo, hi, None)

    def _evaluate(self, p):
        u = np.exp(self.kappa * (p @ self.mu - 1.0))
        u_min = np.exp(-2.0 * self.kappa)
        w = (u - u_min) / (1.0 - u_min)
        return self.hi - w * (self.hi - self.lo)


class GridField(VelocityField):
    """Bilinear / trilinear interpolated grid field; axis i of the value
    array spans extent row i with values[...] given at the grid nodes."""

    def __init__(self, values, extent, v_min=None, v_max=None):
        values = np.ascontiguousarray(values, dtype=np.float32)
        if values.ndim not in (2, 3) or min(values.shape) < 2:
            raise FieldError("grid needs 2 or 3 axes with >= 2 nodes each")
        self.values = values
        kind = "grid2" if values.ndim == 2 else "grid3"
        super().__init__(
            kind,
            float(values.min()) if v_min is None else v_min,
            float(values.max()) if v_max is None else v_max,
            extent,
        )
        if self.extent.shape[0] != values.ndim:
            raise FieldError("extent rows must match grid dimensionality")
        self.spacing = (self.extent[:, 1] - self.extent[:, 0]) / (np.array(values.shape) - 1)

    def node_coordinates(self):
        axes = [np.linspace(self.extent[i, 0], self.extent[i, 1], n) for i, n in enumerate(self.values.shape)]
        return np.meshgrid(*axes, indexing="ij")

    def _evaluate(self, p):
        dims = np.array(self.values.shape)
        u = (p - self.extent[:, 0]) / self.spacing
        i0 = np.clip(np.floor(u).astype(int), 0, dims - 2)
        f = u - i0
        vals = self.values.astype(np.float64)
        if self.values.ndim == 2:
            fx, fy = f[..., 0], f[..., 1]
            v00 = vals[i0[..., 0], i0[..., 1]]
            v10 = vals[i0[..., 0] + 1, i0[..., 1]]
            v01 = vals[i0[..., 0], i0[..., 1] + 1]
            v11 = vals[i0[..., 0] + 1, i0[..., 1] + 1]
            return (
                v00 * (1 - fx) * (1 - fy)
                + v10 * fx * (1 - fy)
                + v01 * (1 - fx) * fy
                + v11 * fx * fy
            )
        fx, fy, fz = f[..., 0], f[..., 1], f[..., 2]
        out = np.zeros(p.shape[:-1])
        for dx in (0, 1):
            for dy in (0, 1):
                for dz in (0, 1):
                    w = (
                        (fx if dx else 1 - fx)
                        * (fy if dy else 1 - fy)
                        * (fz if dz else 1 - fz)
                    )
                    out += w * vals[i0[..., 0] + dx, i0[..., 1] + dy, i0[..., 2] + dz]
        return out


class SphereGridField(VelocityField):
    """Lat-lon sample grid on the unit sphere.

    Queries are interpolated with inverse cosine-distance weights over the 4
    nearest grid nodes (deterministic, parameter-free).
    """

    def __init__(self, values, v_min=None, v_max=None):
        values = np.ascontiguousarray(values, dtype=np.float32)
        if values.ndim != 2 or min(values.shape) < 2:
            raise FieldError("sphere grid needs (nlat, nlon) with >= 2 nodes each")
        self.values = values
        super().__init__(
            "sphere_grid",
            float(values.min()) if v_min is None else v_min,
            float(values.max()) if v_max is None else v_max,
            None,
        )
        nlat, nlon = values.shape
        self.lats = np.linspace(-np.pi / 2, np.pi / 2, nlat)
        self.lons = np.linspace(-np.pi, np.pi, nlon, endpoint=False)
        lat, lon = np.meshgrid(self.lats, self.lons, indexing="ij")
        self.nodes = np.stack(
            [np.cos(lat) * np.cos(lon), np.cos(lat) * np.sin(lon), np.sin(lat)], axis=-1
        ).reshape(-1, 3)
        self.flat_values = values.reshape(-1).astype(np.float64)

    def _evaluate(self, p):
        flat = p.reshape(-1, 3)
        cosd = np.clip(flat @ self.nodes.T, -1.0, 1.0)
        idx = np.argpartition(-cosd, 4, axis=1)[:, :4]
        d = np.arccos(np.take_along_axis(cosd, idx, axis=1))
        w = 1.0 / np.maximum(d, 1e-12)
        w /= w.sum(axis=1, keepdims=True)
        out = np.sum(w * self.flat_values[idx], axis=1)
        return out.reshape(p.shape[:-1])


# ---------------------------------------------------------------------------
# Rasterization

_DEFAULT_EUCLIDEAN_RES = 64
_DEFAULT_SPHERE_RES = (64, 128)


def to_grid(fld: VelocityField, dims=None):
    """Sample an analytic field onto the matching grid representation."""
    if isinstance(fld, (GridField, SphereGridField)):
        return fld
    if fld.extent is None:
        nlat, nlon = dims or _DEFAULT_SPHERE_RES
        lats = np.linspace(-np.pi / 2, np.pi / 2, nlat)
        lons = np.linspace(-np.pi, np.pi, nlon, endpoint=False)
        lat, lon = np.meshgrid(lats, lons, indexing="ij")
        pts = np.stack([np.cos(lat) * np.cos(lon), np.cos(lat) * np.sin(lon), np.sin(lat)], axis=-1)
        return SphereGridField(fld.sample(pts).astype(np.float32), fld.v_min, fld.v_max)
    ndim = fld.extent.shape[0]
    if dims is None:
        dims = (_DEFAULT_EUCLIDEAN_RES,) * ndim
    elif np.isscalar(dims):
        dims = (int(dims),) * ndim
    axes = [np.linspace(fld.extent[i, 0], fld.extent[i, 1], dims[i]) for i in range(ndim)]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    return GridField(fld.sample(pts).astype(np.float32), fld.extent, fld.v_min, fld.v_max)


# ---------------------------------------------------------------------------
# Generators

def generate(kind: str, params: dict | None = None, seed: int = 0) -> VelocityField:
    """Deterministic synthetic field generator.

    Kinds: constant (v ~ U(0.1, 2.0) on a Euclidean extent or the sphere),
    linear_gradient, layered (2-4 piecewise-constant depth layers) and
    gaussian_obstacle (low-speed bump on the sphere, values in [0.1, 10]).
    Drawn parameters are rounded through float32 so a field and its VGRID
    round trip evaluate identically.
    """
    params = dict(params or {})
    rng = np.random.default_rng(seed)
    if kind == "constant":
        value = params.get("value", rng.uniform(0.1, 2.0))
        value = float(np.float32(value))
        v_min = params.get("v_min", 0.1)
        v_max = params.get("v_max", 2.0)
        if params.get("manifold") == SPHERE2:
            return ConstantField(value, None, v_min, v_max)
        extent = params.get("extent", [[0.0, 1.0], [0.0, 1.0]])
        return ConstantField(value, extent, v_min, v_max)
    if kind == "linear_gradient":
        v0 = float(np.float32(params.get("v0", rng.uniform(0.5, 1.5))))
        slope = float(np.float32(params.get("slope", rng.uniform(0.2, 1.5))))
        extent = params.get("extent", [[0.0, 1.0], [0.0, 1.0]])
        return LinearGradientField(v0, slope, extent)
    if kind == "layered":
        extent = np.asarray(params.get("extent", [[0.0, 1.0], [0.0, 1.0]]), dtype=np.float64)
        n_layers = int(params.get("n_layers", rng.integers(2, 5)))
        lo, hi = extent[-1]
        cuts = np.sort(rng.uniform(lo + 0.15 * (hi - lo), hi - 0.15 * (hi - lo), n_layers - 1))
        speeds = params.get("speeds")
        if speeds is None:
            speeds = rng.uniform(1.0, 3.0, n_layers)
        speeds = np.float32(speeds).astype(np.float64)
        cuts = np.float32(cuts).astype(np.float64)
        return LayeredField(cuts, speeds, extent, params.get("v_min", 1.0), params.get("v_max", 3.0))
    if kind == "gaussian_obstacle":
        mu = params.get("mu")
        if mu is None:
            mu = rng.normal(size=3)
        mu = np.float32(np.asarray(mu) / np.linalg.norm(mu)).astype(np.float64)
        kappa = float(np.float32(params.get("kappa", rng.uniform(1.0, 5.0))))
        return GaussianObstacleField(mu, kappa, params.get("lo", 0.1), params.get("hi", 10.0))
    raise FieldError(f"unknown generator kind {kind!r}")


# ---------------------------------------------------------------------------
# VGRID on-disk format

@dataclass(frozen=True)
class TimeGrid:
    """Travel-time grid payload (VGRID kind byte 3)."""

    times: np.ndarray
    extent: np.ndarray
    t_min: float
    t_max: float


def _pack(kind_code: int, dims, extent, lo_val: float, hi_val: float, samples: np.ndarray) -> bytes:
    dims = tuple(int(d) for d in dims)
    header = _MAGIC + struct.pack("<HBB", _VERSION, kind_code, len(dims))
    header += struct.pack(f"<{len(dims)}I", *dims)
    for lo, hi in extent:
        header += struct.pack("<dd", lo, hi)
    header += struct.pack("<dd", lo_val, hi_val)
    body = np.ascontiguousarray(samples, dtype="<f4").tobytes()
    return header + body


def write_vgrid(obj, dims=None) -> bytes:
    """Serialize a field (or travel-time grid) to VGRID bytes.

    Analytic fields are rasterized first; grid fields serialize their samples
    bit-exactly.
    """
    if isinstance(obj, TimeGrid):
        return _pack(_KIND_CODES["time_grid2"], obj.times.shape, obj.extent, obj.t_min, obj.t_max, obj.times)
    fld = to_grid(obj, dims)
    if isinstance(fld, SphereGridField):
        extent = [(-np.pi / 2, np.pi / 2), (-np.pi, np.pi)]
        return _pack(_KIND_CODES["sphere_grid"], fld.values.shape, extent, fld.v_min, fld.v_max, fld.values)
    code = _KIND_CODES[fld.kind]
    return _pack(code, fld.values.shape, fld.extent, fld.v_min, fld.v_max, fld.values)


def read_vgrid(data: bytes):
    """Parse VGRID bytes into a GridField / SphereGridField / TimeGrid."""
    if len(data) < 8:
        raise VgridTruncatedError("payload shorter than the fixed header")
    if data[:4] != _MAGIC:
        raise VgridMagicError(f"bad magic {data[:4]!r}")
    version, kind_code, ndim = struct.unpack_from("<HBB", data, 4)
    if version != _VERSION:
        raise VgridVersionError(f"unsupported version {version}")
    if kind_code not in _CODE_KINDS:
        raise VgridError(f"unknown kind byte {kind_code}")
    off = 8
    need = ndim * 4 + ndim * 16 + 16
    if len(data) < off + need:
        raise VgridTruncatedError("header truncated")
    dims = struct.unpack_from(f"<{ndim}I", data, off)
    off += ndim * 4
    extent = np.array(struct.unpack_from(f"<{2 * ndim}d", data, off)).reshape(ndim, 2)
    off += ndim * 16
    lo_val, hi_val = struct.unpack_from("<dd", data, off)
    off += 16
    count = int(np.prod(dims))
    if len(data) < off + 4 * count:
        raise VgridTruncatedError(f"expected {count} samples, payload ends early")
    samples = np.frombuffer(data, dtype="<f4", count=count, offset=off).reshape(dims)
    kind = _CODE_KINDS[kind_code]
    if kind == "sphere_grid":
        return SphereGridField(samples, lo_val, hi_val)
    if kind == "time_grid2":
        return TimeGrid(samples.astype(np.float64), extent, lo_val, hi_val)
    return GridField(samples, extent, lo_val, hi_val)


def save_vgrid(obj, path, dims=None) -> None:
    with open(path, "wb") as fh:
        fh.write(write_vgrid(obj, dims))


def load_vgrid(path):
    with open(path, "rb") as fh:
        return read_vgrid(fh.read())
