"""Steerable travel-time network.

The network factorizes T(s, r; z) = d(s, r) * tau(s, r; z) where tau is a
cross-attention encoder over a pose-context latent cloud followed by a
bounded projection head.  The encoder only ever sees the canonicalized
coordinates (g_i^-1 s, g_i^-1 r), so acting on the latent poses is exactly
equivalent to acting inversely on the query points: steerability holds for
any parameter values, trained or not.  Symmetrizing the embedded invariants
over the (s, r) swap makes T symmetric bit-for-bit, and the d factor pins
T(s, s) = 0.

Forward evaluation is pure jax; the public wrapper accepts numpy inputs.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import jax
import jax.numpy as jnp
import numpy as np

from .autodiff import gaussian_adaptive, gelu, layer_norm
from .geometry import (
    CHORDAL_DISTANCE,
    EUCLIDEAN_DISTANCE,
    INDICATOR,
    DegeneratePairError,
    Manifold,
    Semimetric,
    euclidean,
    sphere,
)
from .groups import (
    SE2,
    SE3,
    SO2_ABOUT_Z,
    GroupError,
    PoseContextCloud,
)

_MAGIC = b"ENES"
_CKPT_VERSION = 1

_MANIFOLD_CODES = {"euclidean2": 0, "euclidean3": 1, "sphere2": 2}
_GROUP_CODES = {SE2: 0, SE3: 1, SO2_ABOUT_Z: 2}
_SEMIMETRIC_CODES = {EUCLIDEAN_DISTANCE: 0, CHORDAL_DISTANCE: 1, INDICATOR: 2}


@dataclass(frozen=True)
class ModelConfig:
    """Architecture and domain configuration (fixed for one checkpoint)."""

    manifold_kind: str = "euclidean2"
    extent: tuple = ((0.0, 1.0), (0.0, 1.0))
    group_kind: str = SE2
    n_latents: int = 9
    context_dim: int = 32
    hidden: int = 128
    heads: int = 2
    rff_scale_query: float = 0.05
    rff_scale_value: float = 0.2
    semimetric: str = EUCLIDEAN_DISTANCE
    v_min: float = 0.1
    v_max: float = 2.0

    def __post_init__(self):
        if self.hidden % (2 * self.heads) != 0:
            raise ValueError("hidden width must be divisible by 2 * heads")
        if self.n_latents < 1:
            raise ValueError("need at least one latent")
        if not (0 < self.v_min <= self.v_max):
            raise ValueError("need 0 < v_min <= v_max")
        expected = {"euclidean2": SE2, "euclidean3": SE3, "sphere2": SO2_ABOUT_Z}
        if expected[self.manifold_kind] != self.group_kind:
            raise GroupError(f"group {self.group_kind} does not act on {self.manifold_kind}")

    @property
    def ambient_dim(self) -> int:
        return {"euclidean2": 2, "euclidean3": 3, "sphere2": 3}[self.manifold_kind]

    @property
    def manifold(self) -> Manifold:
        if self.manifold_kind == "sphere2":
            return sphere()
        return euclidean(np.asarray(self.extent), self.manifold_kind)

    @property
    def semimetric_obj(self) -> Semimetric:
        return Semimetric(self.semimetric)


def desk_config(**overrides) -> ModelConfig:
    """Reduced preset (half width, fewer latents) for CPU-scale runs."""
    base = dict(hidden=64, heads=2, n_latents=9, context_dim=16)
    base.update(overrides)
    return ModelConfig(**base)


def sphere_config(**overrides) -> ModelConfig:
    base = dict(
        manifold_kind="sphere2",
        group_kind=SO2_ABOUT_Z,
        extent=None,
        semimetric=CHORDAL_DISTANCE,
        n_latents=4,
        context_dim=16,
        hidden=64,
        heads=1,
    )
    base.update(overrides)
    return ModelConfig(**base)


# ---------------------------------------------------------------------------
# Parameters

def _dense(key, shape, scale=None):
    if scale is None:
        scale = 1.0 / np.sqrt(shape[-2] if len(shape) > 1 else shape[-1])
    return scale * jax.random.normal(key, shape, dtype=jnp.float64)


def _ffn(key, n_in, n_hidden, n_out):
    k1, k2 = jax.random.split(key)
    return {
        "w1": _dense(k1, (n_in, n_hidden)),
        "b1": jnp.zeros(n_hidden),
        "w2": _dense(k2, (n_hidden, n_out)),
        "b2": jnp.zeros(n_out),
    }


def init_params(cfg: ModelConfig, seed: int = 0) -> dict:
    key = jax.random.PRNGKey(seed)
    keys = jax.random.split(key, 12)
    D, H = cfg.hidden, cfg.heads
    dk = D // H
    k2 = 2 * cfg.ambient_dim
    d = cfg.context_dim
    params = {
        "rff_q": cfg.rff_scale_query * jax.random.normal(keys[0], (D // 2, k2), dtype=jnp.float64),
        "rff_v": cfg.rff_scale_value * jax.random.normal(keys[1], (D // 2, k2), dtype=jnp.float64),
        "W_q": _dense(keys[2], (H, D, dk)),
        "W_c": _dense(keys[3], (d, D)),
        "W_k": _dense(keys[4], (H, D, dk)),
        "W_v": _dense(keys[5], (H, D, dk)),
        "ffn_gamma": _ffn(keys[6], D, D, D),
        "ffn_beta": _ffn(keys[7], D, D, D),
        "ffn_v": {
            "w1": _dense(keys[8], (H, dk, dk)),
            "b1": jnp.zeros((H, dk)),
            "w2": _dense(keys[9], (H, dk, dk)),
            "b2": jnp.zeros((H, dk)),
        },
        "ffn_e": _ffn(keys[10], D, D, D),
        "ffn_p": _ffn(keys[11], D, D, 1),
        "adaptive_alpha": jnp.ones(D),
        "log_alpha0": jnp.zeros(()),
    }
    return params


def init_latents(cfg: ModelConfig, seed: int = 0) -> PoseContextCloud:
    """Equidistant pose lattice, uniform orientations, unit-norm contexts."""
    rng = np.random.default_rng(seed)
    N, d = cfg.n_latents, cfg.context_dim
    if cfg.group_kind == SE2:
        m = int(np.ceil(np.sqrt(N)))
        ext = np.asarray(cfg.extent)
        centers = [(ext[a, 0] + (ext[a, 1] - ext[a, 0]) * (i + 0.5) / m) for a in (0, 1) for i in range(m)]
        xs, ys = centers[:m], centers[m:]
        grid = np.array([(x, y) for y in ys for x in xs])[:N]
        theta = rng.uniform(-np.pi, np.pi, (N, 1))
        poses = np.concatenate([grid, theta], axis=1)
    elif cfg.group_kind == SE3:
        m = int(np.ceil(N ** (1.0 / 3.0) - 1e-9))
        ext = np.asarray(cfg.extent)
        axes = [ext[a, 0] + (ext[a, 1] - ext[a, 0]) * (np.arange(m) + 0.5) / m for a in range(3)]
        grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)[:N]
        yaw = rng.uniform(-np.pi, np.pi, (N, 1))
        pitch = rng.uniform(-np.pi / 2, np.pi / 2, (N, 1))
        roll = rng.uniform(-np.pi, np.pi, (N, 1))
        poses = np.concatenate([grid, yaw, pitch, roll], axis=1)
    elif cfg.group_kind == SO2_ABOUT_Z:
        theta = -np.pi + 2 * np.pi * (np.arange(N) + 0.5) / N
        poses = theta.reshape(N, 1) + rng.uniform(-0.1, 0.1, (N, 1))
    else:
        raise GroupError(f"unsupported latent group kind {cfg.group_kind}")
    contexts = np.ones((N, d)) / np.sqrt(d)
    return PoseContextCloud(cfg.group_kind, poses, contexts)


# ---------------------------------------------------------------------------
# Forward pass (pure jnp, single pair; batching via vmap)

def _canonicalize(group_kind: str, poses, x):
    """(N, k): x expressed in each latent pose's frame, g_i^-1 x."""
    if group_kind == SE2:
        d = x[None, :] - poses[:, :2]
        c, s = jnp.cos(poses[:, 2]), jnp.sin(poses[:, 2])
        return jnp.stack([c * d[:, 0] + s * d[:, 1], -s * d[:, 0] + c * d[:, 1]], axis=-1)
    if group_kind == SE3:
        d = x[None, :] - poses[:, :3]
        cy, sy = jnp.cos(poses[:, 3]), jnp.sin(poses[:, 3])
        cp, sp = jnp.cos(poses[:, 4]), jnp.sin(poses[:, 4])
        cr, sr = jnp.cos(poses[:, 5]), jnp.sin(poses[:, 5])
        # rows of R = Rz Ry Rx; R^T d computed row-by-row
        r0 = jnp.stack([cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr], axis=-1)
        r1 = jnp.stack([sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr], axis=-1)
        r2 = jnp.stack([-sp, cp * sr, cp * cr], axis=-1)
        R = jnp.stack([r0, r1, r2], axis=1)  # (N, 3, 3)
        return jnp.einsum("nij,ni->nj", R, d)
    if group_kind == SO2_ABOUT_Z:
        c, s = jnp.cos(poses[:, 0]), jnp.sin(poses[:, 0])
        return jnp.stack([c * x[0] + s * x[1], -s * x[0] + c * x[1], jnp.broadcast_to(x[2], c.shape)], axis=-1)
    raise GroupError(f"unsupported group kind {group_kind}")


def _rff(freqs, x):
    ang = 2.0 * jnp.pi * x @ freqs.T
    return jnp.concatenate([jnp.cos(ang), jnp.sin(ang)], axis=-1)


def _ffn_apply(p, x):
    return gelu(x @ p["w1"] + p["b1"]) @ p["w2"] + p["b2"]


def _semimetric(kind_code: int, s, r):
    if kind_code == _SEMIMETRIC_CODES[INDICATOR]:
        return jnp.asarray(1.0)
    return jnp.sqrt(jnp.sum((s - r) ** 2))


class EnesModel:
    """Configured travel-time network with numpy-facing helpers.

    Heavy paths (batched travel times, gradients) are jit-compiled once per
    input shape.  Parameters and latents are treated as immutable during
    evaluation.
    """

    def __init__(self, cfg: ModelConfig, params: dict | None = None, seed: int = 0):
        self.cfg = cfg
        self.params = params if params is not None else init_params(cfg, seed)
        k2 = cfg.ambient_dim
        if cfg.manifold_kind == "sphere2":
            self._center = jnp.zeros(k2)
            self._halfwidth = jnp.ones(k2)
        else:
            ext = jnp.asarray(cfg.extent)
            self._center = (ext[:, 0] + ext[:, 1]) / 2.0
            self._halfwidth = (ext[:, 1] - ext[:, 0]) / 2.0
        self._sm_code = _SEMIMETRIC_CODES[cfg.semimetric]
        self._build_compiled()

    # -- core forward pieces ------------------------------------------------

    def _rescale(self, x):
        return (x - self._center) / self._halfwidth

    def encode_fn(self, params, poses, ctx, s, r):
        cfg = self.cfg
        H = cfg.heads
        D = cfg.hidden
        dk = D // H
        inv_s = self._rescale(_canonicalize(cfg.group_kind, poses, s))
        inv_r = self._rescale(_canonicalize(cfg.group_kind, poses, r))
        pair_sr = jnp.concatenate([inv_s, inv_r], axis=-1)
        pair_rs = jnp.concatenate([inv_r, inv_s], axis=-1)
        # Reynolds symmetrization over the (s, r) swap
        a_q = (_rff(params["rff_q"], pair_sr) + _rff(params["rff_q"], pair_rs)) / 2.0
        a_v = (_rff(params["rff_v"], pair_sr) + _rff(params["rff_v"], pair_rs)) / 2.0
        q = jnp.einsum("nd,hdk->hnk", a_q, params["W_q"])
        ck = layer_norm(ctx @ params["W_c"])
        k = jnp.einsum("nd,hdk->hnk", ck, params["W_k"])
        logits = jnp.sum(q * k, axis=-1) / jnp.sqrt(float(dk))
        alpha = jax.nn.softmax(logits, axis=-1)  # (H, N)
        base = jnp.einsum("nd,hdm->hnm", ck, params["W_v"])
        gam = _ffn_apply(params["ffn_gamma"], a_v).reshape(-1, H, dk).transpose(1, 0, 2)
        bet = _ffn_apply(params["ffn_beta"], a_v).reshape(-1, H, dk).transpose(1, 0, 2)
        pre = base * (1.0 + gam) + bet
        fv = params["ffn_v"]
        hid = gelu(jnp.einsum("hnm,hmo->hno", pre, fv["w1"]) + fv["b1"][:, None, :])
        val = jnp.einsum("hnm,hmo->hno", hid, fv["w2"]) + fv["b2"][:, None, :]
        pooled = jnp.einsum("hn,hnm->hm", alpha, val).reshape(D)
        return _ffn_apply(params["ffn_e"], pooled)

    def project_fn(self, params, h):
        fp = params["ffn_p"]
        hid = gaussian_adaptive(h @ fp["w1"] + fp["b1"], params["adaptive_alpha"])
        out = (hid @ fp["w2"] + fp["b2"])[0]
        alpha0 = jnp.exp(params["log_alpha0"])
        lo, hi = 1.0 / self.cfg.v_max, 1.0 / self.cfg.v_min
        return (hi - lo) * jax.nn.sigmoid(alpha0 * out) + lo

    def tau_fn(self, params, poses, ctx, s, r):
        return self.project_fn(params, self.encode_fn(params, poses, ctx, s, r))

    def travel_time_fn(self, params, poses, ctx, s, r):
        return _semimetric(self._sm_code, s, r) * self.tau_fn(params, poses, ctx, s, r)

    def value_and_input_grads_fn(self, params, poses, ctx, s, r):
        """One forward-linearized pass: value plus all input tangents."""
        f = lambda s_, r_: self.travel_time_fn(params, poses, ctx, s_, r_)
        val, jvp = jax.linearize(f, s, r)
        k = s.shape[0]
        eye = jnp.eye(2 * k)
        tangents = jax.vmap(lambda e: jvp(e[:k], e[k:]))(eye)
        gs, gr = tangents[:k], tangents[k:]
        if self.cfg.manifold_kind == "sphere2":
            gs = gs - jnp.dot(gs, s) * s
            gr = gr - jnp.dot(gr, r) * r
        return val, gs, gr

    def source_grad_fn(self, params, poses, ctx, s, r):
        """Value and grad_s only (the residual loss never needs grad_r)."""
        f = lambda s_: self.travel_time_fn(params, poses, ctx, s_, r)
        val, jvp = jax.linearize(f, s)
        gs = jax.vmap(jvp)(jnp.eye(s.shape[0]))
        if self.cfg.manifold_kind == "sphere2":
            gs = gs - jnp.dot(gs, s) * s
        return val, gs

    def _build_compiled(self):
        tt = lambda params, poses, ctx, s, r: self.travel_time_fn(params, poses, ctx, s, r)
        self._tt_batch = jax.jit(jax.vmap(tt, in_axes=(None, None, None, 0, 0)))
        vig = lambda params, poses, ctx, s, r: self.value_and_input_grads_fn(params, poses, ctx, s, r)
        self._vig_batch = jax.jit(jax.vmap(vig, in_axes=(None, None, None, 0, 0)))
        self._encode_one = jax.jit(lambda params, poses, ctx, s, r: self.encode_fn(params, poses, ctx, s, r))

    # -- numpy-facing API ---------------------------------------------------

    def _latent_arrays(self, z: PoseContextCloud):
        if z.kind != self.cfg.group_kind:
            raise GroupError(f"latent kind {z.kind} does not match model group {self.cfg.group_kind}")
        return jnp.asarray(z.poses), jnp.asarray(z.contexts)

    def travel_time(self, s, r, z: PoseContextCloud):
        """T(s, r; z) for a single pair or a batch of pairs."""
        poses, ctx = self._latent_arrays(z)
        s = np.asarray(s, dtype=np.float64)
        r = np.asarray(r, dtype=np.float64)
        single = s.ndim == 1
        S = s.reshape(-1, self.cfg.ambient_dim)
        R = r.reshape(-1, self.cfg.ambient_dim)
        out = np.asarray(self._tt_batch(self.params, poses, ctx, jnp.asarray(S), jnp.asarray(R)))
        return float(out[0]) if single else out.reshape(s.shape[:-1])

    def travel_time_with_gradients(self, s, r, z: PoseContextCloud):
        """(T, grad_s, grad_r); sphere gradients are tangentially projected."""
        poses, ctx = self._latent_arrays(z)
        s = np.asarray(s, dtype=np.float64)
        r = np.asarray(r, dtype=np.float64)
        single = s.ndim == 1
        S = s.reshape(-1, self.cfg.ambient_dim)
        R = r.reshape(-1, self.cfg.ambient_dim)
        sm = self.cfg.semimetric_obj
        if sm.kind != INDICATOR:
            dists = np.linalg.norm(S - R, axis=-1)
            if np.any(dists < sm.epsilon):
                raise DegeneratePairError("gradient query at a pair below the semimetric epsilon")
        val, gs, gr = self._vig_batch(self.params, poses, ctx, jnp.asarray(S), jnp.asarray(R))
        val, gs, gr = np.asarray(val), np.asarray(gs), np.asarray(gr)
        if single:
            return float(val[0]), gs[0], gr[0]
        return val.reshape(s.shape[:-1]), gs.reshape(s.shape), gr.reshape(r.shape)

    def encode(self, s, r, z: PoseContextCloud) -> np.ndarray:
        poses, ctx = self._latent_arrays(z)
        return np.asarray(self._encode_one(self.params, poses, ctx, jnp.asarray(s, dtype=jnp.float64), jnp.asarray(r, dtype=jnp.float64)))

    def attention_weights(self, s, r, z: PoseContextCloud) -> np.ndarray:
        """(H, N) softmax weights, exposed for invariant checks."""
        poses, ctx = self._latent_arrays(z)
        cfg = self.cfg
        params = self.params
        dk = cfg.hidden // cfg.heads
        s = jnp.asarray(s, dtype=jnp.float64)
        r = jnp.asarray(r, dtype=jnp.float64)
        inv_s = self._rescale(_canonicalize(cfg.group_kind, poses, s))
        inv_r = self._rescale(_canonicalize(cfg.group_kind, poses, r))
        pair_sr = jnp.concatenate([inv_s, inv_r], axis=-1)
        pair_rs = jnp.concatenate([inv_r, inv_s], axis=-1)
        a_q = (_rff(params["rff_q"], pair_sr) + _rff(params["rff_q"], pair_rs)) / 2.0
        q = jnp.einsum("nd,hdk->hnk", a_q, params["W_q"])
        ck = layer_norm(jnp.asarray(z.contexts) @ params["W_c"])
        k = jnp.einsum("nd,hdk->hnk", ck, params["W_k"])
        logits = jnp.sum(q * k, axis=-1) / jnp.sqrt(float(dk))
        return np.asarray(jax.nn.softmax(logits, axis=-1))

    def with_params(self, params) -> "EnesModel":
        return EnesModel(self.cfg, params)


# ---------------------------------------------------------------------------
# Checkpoint format: magic "ENES", version, manifest of named sections, then
# little-endian float64 blobs.

def flatten_params(params: dict, prefix: str = "params") -> dict[str, np.ndarray]:
    flat = {}
    for key, val in params.items():
        name = f"{prefix}/{key}"
        if isinstance(val, dict):
            flat.update(flatten_params(val, name))
        else:
            flat[name] = np.asarray(val, dtype=np.float64)
    return flat


def unflatten_params(flat: dict[str, np.ndarray], prefix: str = "params") -> dict:
    tree: dict = {}
    for name, val in flat.items():
        if not name.startswith(prefix + "/"):
            continue
        parts = name[len(prefix) + 1 :].split("/")
        node = tree
        for p in parts[:-1]:
            node = node.setdefault(p, {})
        node[parts[-1]] = jnp.asarray(val)
    return tree


def _config_sections(cfg: ModelConfig) -> dict[str, np.ndarray]:
    ext = np.zeros((3, 2)) if cfg.extent is None else np.asarray(cfg.extent, dtype=np.float64)
    scalars = np.array(
        [
            _MANIFOLD_CODES[cfg.manifold_kind],
            _GROUP_CODES[cfg.group_kind],
            _SEMIMETRIC_CODES[cfg.semimetric],
            cfg.n_latents,
            cfg.context_dim,
            cfg.hidden,
            cfg.heads,
            cfg.rff_scale_query,
            cfg.rff_scale_value,
            cfg.v_min,
            cfg.v_max,
            0.0 if cfg.extent is None else 1.0,
        ],
        dtype=np.float64,
    )
    return {"config/scalars": scalars, "config/extent": ext}


def _config_from_sections(sections: dict[str, np.ndarray]) -> ModelConfig:
    sc = sections["config/scalars"]
    inv_m = {v: k for k, v in _MANIFOLD_CODES.items()}
    inv_g = {v: k for k, v in _GROUP_CODES.items()}
    inv_s = {v: k for k, v in _SEMIMETRIC_CODES.items()}
    has_extent = sc[11] > 0.5
    mk = inv_m[int(sc[0])]
    ndim = {"euclidean2": 2, "euclidean3": 3, "sphere2": 3}[mk]
    extent = tuple(map(tuple, sections["config/extent"][:ndim])) if has_extent else None
    return ModelConfig(
        manifold_kind=mk,
        extent=extent,
        group_kind=inv_g[int(sc[1])],
        n_latents=int(sc[3]),
        context_dim=int(sc[4]),
        hidden=int(sc[5]),
        heads=int(sc[6]),
        rff_scale_query=float(sc[7]),
        rff_scale_value=float(sc[8]),
        semimetric=inv_s[int(sc[2])],
        v_min=float(sc[9]),
        v_max=float(sc[10]),
    )


def write_checkpoint(cfg: ModelConfig, params: dict, latents=None, extra=None) -> bytes:
    sections = {}
    sections.update(_config_sections(cfg))
    sections.update(flatten_params(params))
    for i, z in enumerate(latents or []):
        sections[f"latents/{i}/poses"] = np.asarray(z.poses, dtype=np.float64)
        sections[f"latents/{i}/contexts"] = np.asarray(z.contexts, dtype=np.float64)
    for name, arr in (extra or {}).items():
        sections[f"extra/{name}"] = np.asarray(arr, dtype=np.float64)

    names = sorted(sections)
    manifest = b""
    blobs = b""
    entries = []
    for name in names:
        # note: ascontiguousarray would promote 0-d entries to 1-d
        arr = np.asarray(sections[name], dtype="<f8", order="C")
        entries.append((name, blobs.__len__(), arr))
        blobs += arr.tobytes()
    header = _MAGIC + struct.pack("<HI", _CKPT_VERSION, len(names))
    for name, offset, arr in entries:
        nb = name.encode()
        manifest += struct.pack("<H", len(nb)) + nb
        manifest += struct.pack("<BB", 0, arr.ndim)  # dtype 0 = float64
        manifest += struct.pack(f"<{arr.ndim}I", *arr.shape) if arr.ndim else b""
        manifest += struct.pack("<QQ", offset, arr.nbytes)
    return header + manifest + blobs


def read_checkpoint(data: bytes):
    if data[:4] != _MAGIC:
        raise ValueError(f"bad checkpoint magic {data[:4]!r}")
    version, n = struct.unpack_from("<HI", data, 4)
    if version != _CKPT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    off = 10
    entries = []
    for _ in range(n):
        (nlen,) = struct.unpack_from("<H", data, off)
        off += 2
        name = data[off : off + nlen].decode()
        off += nlen
        dtype_code, ndim = struct.unpack_from("<BB", data, off)
        off += 2
        shape = struct.unpack_from(f"<{ndim}I", data, off) if ndim else ()
        off += 4 * ndim
        blob_off, blob_len = struct.unpack_from("<QQ", data, off)
        off += 16
        entries.append((name, shape, blob_off, blob_len))
    blob_start = off
    sections = {}
    for name, shape, blob_off, blob_len in entries:
        start = blob_start + blob_off
        arr = np.frombuffer(data, dtype="<f8", count=blob_len // 8, offset=start).reshape(shape)
        sections[name] = arr.copy()
    cfg = _config_from_sections(sections)
    params = unflatten_params(sections)
    latents = []
    i = 0
    while f"latents/{i}/poses" in sections:
        latents.append(
            PoseContextCloud(cfg.group_kind, sections[f"latents/{i}/poses"], sections[f"latents/{i}/contexts"])
        )
        i += 1
    extra = {k[len("extra/") :]: v for k, v in sections.items() if k.startswith("extra/")}
    return cfg, params, latents, extra


def save_checkpoint(path, cfg, params, latents=None, extra=None) -> None:
    with open(path, "wb") as fh:
        fh.write(write_checkpoint(cfg, params, latents, extra))


def load_checkpoint(path):
    with open(path, "rb") as fh:
        return read_checkpoint(fh.read())
