"""Training loops.

Supervision is the PDE residual only: at sampled point pairs the squared
metric norm of the source-side travel-time gradient must equal the squared
slowness, v(s)^2 |grad_s T|^2 = 1.  No reference travel times are used.

Two regimes are provided: joint autodecoding (shared network weights plus one
latent cloud per velocity field, all trained together) and first-order
meta-learning (the network is trained so that a handful of inner SGD steps on
a fresh latent suffice for a new field; the inner step sizes are themselves
learned).  ``fit_latents`` adapts a latent to an unseen field with the
network frozen.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import jax
import jax.numpy as jnp
import numpy as np

from .field import VelocityField
from .geometry import SPHERE2
from .groups import PoseContextCloud
from .model import EnesModel, init_latents

LOSS_ABS = "abs"
LOSS_LOGCOSH = "logcosh"


class TrainingDivergedError(RuntimeError):
    """A training step produced a non-finite loss or gradient."""


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 3000
    pairs_per_field: int = 64
    lr_params: float = 1e-4
    lr_context: float = 1e-2
    lr_pose: float = 1e-3
    loss: str = LOSS_ABS
    seed: int = 0
    log_every: int = 100
    val_every: int = 100
    val_pairs: int = 256
    # meta-learning
    inner_steps: int = 5
    inner_lr_context: float = 30.0
    inner_lr_pose: float = 2.0
    outer_lr_max: float = 1e-4
    outer_lr_min: float = 1e-6

    def __post_init__(self):
        if self.loss not in (LOSS_ABS, LOSS_LOGCOSH):
            raise ValueError(f"unknown loss kind {self.loss!r}")


@dataclass
class TrainResult:
    params: dict
    latents: list
    history: list
    best_step: int
    best_val: float
    log_inner_lrs: np.ndarray | None = None


# ---------------------------------------------------------------------------
# Sampling

def sample_pairs(manifold, n: int, rng: np.random.Generator, epsilon: float = 1e-6):
    """n well-separated point pairs, uniform on the domain."""

    def draw(k):
        if manifold.kind == SPHERE2:
            p = rng.normal(size=(k, 3))
            return p / np.linalg.norm(p, axis=-1, keepdims=True)
        ext = manifold.extent
        return rng.uniform(ext[:, 0], ext[:, 1], size=(k, ext.shape[0]))

    s = draw(n)
    r = draw(n)
    for _ in range(100):
        bad = np.linalg.norm(s - r, axis=-1) < 10 * epsilon
        if not bad.any():
            return s, r
        r[bad] = draw(int(bad.sum()))
    raise TrainingDivergedError("could not sample non-degenerate pairs")


def _field_batch(fld: VelocityField, manifold, n, rng):
    s, r = sample_pairs(manifold, n, rng)
    v = np.asarray(fld.sample(s), dtype=np.float64)
    return s, r, v


# ---------------------------------------------------------------------------
# Loss

def make_residual_loss(model: EnesModel, kind: str):
    """Mean eikonal residual penalty over a batch of (s, r, v(s)) triples."""

    def penalty(res):
        if kind == LOSS_ABS:
            return jnp.abs(res)
        # log cosh, written to avoid overflow
        a = jnp.abs(res)
        return a + jnp.log1p(jnp.exp(-2.0 * a)) - jnp.log(2.0)

    def pointwise(params, poses, ctx, s, r, v):
        _, gs = model.source_grad_fn(params, poses, ctx, s, r)
        res = v**2 * jnp.sum(gs**2) - 1.0
        return penalty(res)

    def batch_loss(params, poses, ctx, S, R, V):
        vals = jax.vmap(pointwise, in_axes=(None, None, None, 0, 0, 0))(params, poses, ctx, S, R, V)
        return jnp.mean(vals)

    return batch_loss


# ---------------------------------------------------------------------------
# Minimal pytree Adam

def adam_init(tree):
    zeros = jax.tree_util.tree_map(jnp.zeros_like, tree)
    return {"m": zeros, "v": jax.tree_util.tree_map(jnp.zeros_like, tree), "t": jnp.zeros(())}


def adam_update(tree, grads, state, lr, b1=0.9, b2=0.999, eps=1e-8):
    t = state["t"] + 1.0
    m = jax.tree_util.tree_map(lambda m_, g: b1 * m_ + (1 - b1) * g, state["m"], grads)
    v = jax.tree_util.tree_map(lambda v_, g: b2 * v_ + (1 - b2) * g * g, state["v"], grads)
    mh = jax.tree_util.tree_map(lambda m_: m_ / (1 - b1**t), m)
    vh = jax.tree_util.tree_map(lambda v_: v_ / (1 - b2**t), v)
    new = jax.tree_util.tree_map(lambda p, m_, v_: p - lr * m_ / (jnp.sqrt(v_) + eps), tree, mh, vh)
    return new, {"m": m, "v": v, "t": t}


# ---------------------------------------------------------------------------
# Autodecoding

def _stack_latents(latents):
    return (
        jnp.stack([jnp.asarray(z.poses) for z in latents]),
        jnp.stack([jnp.asarray(z.contexts) for z in latents]),
    )


def _unstack_latents(kind, poses, ctx):
    return [PoseContextCloud(kind, np.asarray(p), np.asarray(c)) for p, c in zip(poses, ctx)]


def autodecode(
    model: EnesModel,
    fields: list[VelocityField],
    cfg: TrainConfig,
    initial_latents: list[PoseContextCloud] | None = None,
    log_path=None,
) -> TrainResult:
    """Jointly fit shared weights and one latent cloud per field.

    With five or more fields, roughly the last 20% are held out: their
    latents are still adapted (with the weights frozen for them), and the
    residual on those fields selects the best checkpoint.
    """
    mcfg = model.cfg
    manifold = mcfg.manifold
    L = len(fields)
    if L < 1:
        raise ValueError("need at least one training field")
    n_val = max(1, round(0.2 * L)) if L >= 5 else 0
    n_train = L - n_val

    rng = np.random.default_rng(cfg.seed)
    if initial_latents is None:
        initial_latents = [init_latents(mcfg, seed=cfg.seed + 1 + i) for i in range(L)]
    poses_all, ctx_all = _stack_latents(initial_latents)
    params = model.params
    loss_fn = make_residual_loss(model, cfg.loss)

    def mean_over_fields(params_, poses_, ctx_, S, R, V):
        per = jax.vmap(loss_fn, in_axes=(None, 0, 0, 0, 0, 0))(params_, poses_, ctx_, S, R, V)
        return jnp.mean(per)

    @jax.jit
    def train_step(params_, poses_, ctx_, opt_p, opt_z, S, R, V):
        (value, _), grads = jax.value_and_grad(
            lambda p_, po_, c_: (mean_over_fields(p_, po_[:n_train], c_[:n_train], S[:n_train], R[:n_train], V[:n_train]), 0.0),
            argnums=(0, 1, 2),
            has_aux=True,
        )(params_, poses_, ctx_)
        g_params, g_poses, g_ctx = grads
        if n_val:
            # held-out latents follow their own residual with frozen weights
            g_val = jax.grad(
                lambda po_, c_: mean_over_fields(params_, po_, c_, S[n_train:], R[n_train:], V[n_train:]),
                argnums=(0, 1),
            )(poses_[n_train:], ctx_[n_train:])
            g_poses = g_poses.at[n_train:].set(g_val[0])
            g_ctx = g_ctx.at[n_train:].set(g_val[1])
        params_, opt_p = adam_update(params_, g_params, opt_p, cfg.lr_params)
        z = {"poses": poses_, "ctx": ctx_}
        gz = {"poses": g_poses, "ctx": g_ctx}
        # distinct step sizes for the pose and context halves of the latent
        m = jax.tree_util.tree_map(lambda m_, g: 0.9 * m_ + 0.1 * g, opt_z["m"], gz)
        v = jax.tree_util.tree_map(lambda v_, g: 0.999 * v_ + 0.001 * g * g, opt_z["v"], gz)
        t = opt_z["t"] + 1.0
        lr = {"poses": cfg.lr_pose, "ctx": cfg.lr_context}
        new_z = {
            k: z[k]
            - lr[k] * (m[k] / (1 - 0.9**t)) / (jnp.sqrt(v[k] / (1 - 0.999**t)) + 1e-8)
            for k in z
        }
        return params_, new_z["poses"], new_z["ctx"], opt_p, {"m": m, "v": v, "t": t}, value

    @jax.jit
    def eval_loss(params_, poses_, ctx_, S, R, V):
        return mean_over_fields(params_, poses_, ctx_, S, R, V)

    opt_p = adam_init(params)
    opt_z = adam_init({"poses": poses_all, "ctx": ctx_all})
    history = []
    best = (0, np.inf, params, poses_all, ctx_all)
    writer = None
    fh = None
    if log_path is not None:
        fh = open(log_path, "w", newline="")
        writer = csv.writer(fh)
        writer.writerow(["step", "train_loss", "val_loss"])

    try:
        for step in range(1, cfg.steps + 1):
            S = np.empty((L, cfg.pairs_per_field, mcfg.ambient_dim))
            R = np.empty_like(S)
            V = np.empty((L, cfg.pairs_per_field))
            for i, fld in enumerate(fields):
                S[i], R[i], V[i] = _field_batch(fld, manifold, cfg.pairs_per_field, rng)
            params, poses_all, ctx_all, opt_p, opt_z, value = train_step(
                params, poses_all, ctx_all, opt_p, opt_z, jnp.asarray(S), jnp.asarray(R), jnp.asarray(V)
            )
            value = float(value)
            if not math.isfinite(value):
                raise TrainingDivergedError(f"non-finite loss at step {step}")

            if step % cfg.val_every == 0 or step == cfg.steps:
                idx = range(n_train, L) if n_val else range(L)
                Sv = np.empty((len(list(idx)), cfg.val_pairs, mcfg.ambient_dim))
                Rv = np.empty_like(Sv)
                Vv = np.empty(Sv.shape[:2])
                sel = list(range(n_train, L)) if n_val else list(range(L))
                for k, i in enumerate(sel):
                    Sv[k], Rv[k], Vv[k] = _field_batch(fields[i], manifold, cfg.val_pairs, rng)
                po = poses_all[n_train:] if n_val else poses_all
                cx = ctx_all[n_train:] if n_val else ctx_all
                val = float(eval_loss(params, po, cx, jnp.asarray(Sv), jnp.asarray(Rv), jnp.asarray(Vv)))
                if not math.isfinite(val):
                    raise TrainingDivergedError(f"non-finite validation loss at step {step}")
                if val < best[1]:
                    best = (step, val, params, poses_all, ctx_all)
                history.append({"step": step, "train_loss": value, "val_loss": val})
                if writer:
                    writer.writerow([step, value, val])
            elif step % cfg.log_every == 0:
                history.append({"step": step, "train_loss": value, "val_loss": None})
                if writer:
                    writer.writerow([step, value, ""])
    finally:
        if fh:
            fh.close()

    best_step, best_val, params, poses_all, ctx_all = best
    latents = _unstack_latents(mcfg.group_kind, poses_all, ctx_all)
    return TrainResult(params, latents, history, best_step, best_val)


# ---------------------------------------------------------------------------
# Meta-learning

def _cosine_lr(step, total, lr_max, lr_min):
    frac = min(step / max(total, 1), 1.0)
    return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + math.cos(math.pi * frac))


def make_inner_adapter(model: EnesModel, cfg: TrainConfig):
    """The few-step latent adaptation shared by meta-training and inference.

    Returns adapt(params, poses0, ctx0, batches, log_lrs) -> (poses, ctx).
    ``batches`` is a (S, R, V) triple with a leading inner-step axis.  Only
    the final inner step keeps a differentiable dependence on the step sizes,
    and the weights enter through a stop-gradient, so outer differentiation
    stays first-order.
    """
    loss_fn = make_residual_loss(model, cfg.loss)
    S_in = cfg.inner_steps

    def adapt(params, poses, ctx, batches, log_lrs):
        p_const = jax.lax.stop_gradient(params)
        Sb, Rb, Vb = batches
        for t in range(S_in):
            g_po, g_cx = jax.grad(loss_fn, argnums=(1, 2))(p_const, poses, ctx, Sb[t], Rb[t], Vb[t])
            if t == S_in - 1:
                lr_cx = jnp.exp(log_lrs[0])
                lr_po = jnp.exp(log_lrs[1])
                g_po = jax.lax.stop_gradient(g_po)
                g_cx = jax.lax.stop_gradient(g_cx)
            else:
                lr_cx = jnp.exp(jax.lax.stop_gradient(log_lrs[0]))
                lr_po = jnp.exp(jax.lax.stop_gradient(log_lrs[1]))
            poses = poses - lr_po * g_po
            ctx = ctx - lr_cx * g_cx
        return poses, ctx

    return adapt


def meta_train(
    model: EnesModel,
    fields: list[VelocityField],
    cfg: TrainConfig,
    log_path=None,
) -> TrainResult:
    """First-order episodic training: adapt a fresh latent with a few inner
    SGD steps per field, then update the weights (and the learned inner step
    sizes) against the post-adaptation residual under a cosine schedule."""
    mcfg = model.cfg
    manifold = mcfg.manifold
    L = len(fields)
    rng = np.random.default_rng(cfg.seed)
    params = model.params
    loss_fn = make_residual_loss(model, cfg.loss)
    adapt = make_inner_adapter(model, cfg)
    z0 = init_latents(mcfg, seed=cfg.seed)
    poses0 = jnp.asarray(z0.poses)
    ctx0 = jnp.asarray(z0.contexts)
    log_lrs = jnp.log(jnp.asarray([cfg.inner_lr_context, cfg.inner_lr_pose]))

    def episode_loss(params_, log_lrs_, Sb, Rb, Vb, So, Ro, Vo):
        poses, ctx = adapt(params_, poses0, ctx0, (Sb, Rb, Vb), log_lrs_)
        return loss_fn(params_, poses, ctx, So, Ro, Vo)

    @jax.jit
    def meta_step(params_, log_lrs_, opt, lr, Sb, Rb, Vb, So, Ro, Vo):
        def total(p_, ll_):
            per = jax.vmap(episode_loss, in_axes=(None, None, 0, 0, 0, 0, 0, 0))(
                p_, ll_, Sb, Rb, Vb, So, Ro, Vo
            )
            return jnp.mean(per)

        value, grads = jax.value_and_grad(total, argnums=(0, 1))(params_, log_lrs_)
        tree = {"theta": params_, "log_lrs": log_lrs_}
        gtree = {"theta": grads[0], "log_lrs": grads[1]}
        tree, opt = adam_update(tree, gtree, opt, lr)
        return tree["theta"], tree["log_lrs"], opt, value

    opt = adam_init({"theta": params, "log_lrs": log_lrs})
    history = []
    best = (0, np.inf, params, log_lrs)
    writer = None
    fh = None
    if log_path is not None:
        fh = open(log_path, "w", newline="")
        writer = csv.writer(fh)
        writer.writerow(["step", "outer_loss", "lr"])

    try:
        for step in range(1, cfg.steps + 1):
            lr = _cosine_lr(step - 1, cfg.steps, cfg.outer_lr_max, cfg.outer_lr_min)
            B = cfg.pairs_per_field
            Sb = np.empty((L, cfg.inner_steps, B, mcfg.ambient_dim))
            Rb = np.empty_like(Sb)
            Vb = np.empty((L, cfg.inner_steps, B))
            So = np.empty((L, B, mcfg.ambient_dim))
            Ro = np.empty_like(So)
            Vo = np.empty((L, B))
            for i, fld in enumerate(fields):
                for t in range(cfg.inner_steps):
                    Sb[i, t], Rb[i, t], Vb[i, t] = _field_batch(fld, manifold, B, rng)
                So[i], Ro[i], Vo[i] = _field_batch(fld, manifold, B, rng)
            params, log_lrs, opt, value = meta_step(
                params, log_lrs, opt, lr,
                jnp.asarray(Sb), jnp.asarray(Rb), jnp.asarray(Vb),
                jnp.asarray(So), jnp.asarray(Ro), jnp.asarray(Vo),
            )
            value = float(value)
            if not math.isfinite(value):
                raise TrainingDivergedError(f"non-finite outer loss at step {step}")
            if value < best[1]:
                best = (step, value, params, log_lrs)
            if step % cfg.log_every == 0 or step == cfg.steps:
                history.append({"step": step, "outer_loss": value, "lr": lr})
                if writer:
                    writer.writerow([step, value, lr])
    finally:
        if fh:
            fh.close()

    best_step, best_val, params, log_lrs = best
    return TrainResult(params, [z0], history, best_step, best_val, np.asarray(log_lrs))


FIT_AUTODECODE = "autodecode_steps"
FIT_META = "meta_inner"


def fit_latents(
    model: EnesModel,
    fld: VelocityField,
    cfg: TrainConfig,
    mode: str = FIT_AUTODECODE,
    log_inner_lrs: np.ndarray | None = None,
    initial: PoseContextCloud | None = None,
) -> tuple[PoseContextCloud, list[float]]:
    """Adapt a latent cloud to one unseen field with the weights frozen."""
    mcfg = model.cfg
    manifold = mcfg.manifold
    rng = np.random.default_rng(cfg.seed)
    z = initial if initial is not None else init_latents(mcfg, seed=cfg.seed)
    poses = jnp.asarray(z.poses)
    ctx = jnp.asarray(z.contexts)
    params = model.params
    losses: list[float] = []

    # the compiled step depends only on the model architecture and the loss
    # kind, so cache it on the model: repeated few-step fits (the meta-learning
    # deployment path) then pay jit compilation once, not once per field
    cache = getattr(model, "_fit_step_cache", None)
    if cache is None:
        cache = {}
        model._fit_step_cache = cache

    if mode == FIT_META:
        lrs = (
            np.log([cfg.inner_lr_context, cfg.inner_lr_pose])
            if log_inner_lrs is None
            else np.asarray(log_inner_lrs)
        )
        lr_cx, lr_po = float(np.exp(lrs[0])), float(np.exp(lrs[1]))

        if (cfg.loss, mode) not in cache:
            loss_fn = make_residual_loss(model, cfg.loss)

            @jax.jit
            def sgd_step(params_, poses_, ctx_, lr_po_, lr_cx_, S, R, V):
                value, (g_po, g_cx) = jax.value_and_grad(loss_fn, argnums=(1, 2))(params_, poses_, ctx_, S, R, V)
                return poses_ - lr_po_ * g_po, ctx_ - lr_cx_ * g_cx, value

            cache[(cfg.loss, mode)] = sgd_step
        sgd_step = cache[(cfg.loss, mode)]

        for _ in range(cfg.inner_steps):
            S, R, V = _field_batch(fld, manifold, cfg.pairs_per_field, rng)
            poses, ctx, value = sgd_step(params, poses, ctx, lr_po, lr_cx,
                                         jnp.asarray(S), jnp.asarray(R), jnp.asarray(V))
            losses.append(float(value))
    elif mode == FIT_AUTODECODE:
        opt = adam_init({"poses": poses, "ctx": ctx})

        if (cfg.loss, mode) not in cache:
            loss_fn = make_residual_loss(model, cfg.loss)

            @jax.jit
            def adam_step(params_, poses_, ctx_, opt_, lr_po_, lr_cx_, S, R, V):
                value, (g_po, g_cx) = jax.value_and_grad(loss_fn, argnums=(1, 2))(params_, poses_, ctx_, S, R, V)
                gz = {"poses": g_po, "ctx": g_cx}
                zt = {"poses": poses_, "ctx": ctx_}
                m = jax.tree_util.tree_map(lambda m_, g: 0.9 * m_ + 0.1 * g, opt_["m"], gz)
                v = jax.tree_util.tree_map(lambda v_, g: 0.999 * v_ + 0.001 * g * g, opt_["v"], gz)
                t = opt_["t"] + 1.0
                lr = {"poses": lr_po_, "ctx": lr_cx_}
                new = {
                    k: zt[k] - lr[k] * (m[k] / (1 - 0.9**t)) / (jnp.sqrt(v[k] / (1 - 0.999**t)) + 1e-8)
                    for k in zt
                }
                return new["poses"], new["ctx"], {"m": m, "v": v, "t": t}, value

            cache[(cfg.loss, mode)] = adam_step
        adam_step = cache[(cfg.loss, mode)]

        for _ in range(cfg.steps):
            S, R, V = _field_batch(fld, manifold, cfg.pairs_per_field, rng)
            poses, ctx, opt, value = adam_step(params, poses, ctx, opt, cfg.lr_pose, cfg.lr_context,
                                               jnp.asarray(S), jnp.asarray(R), jnp.asarray(V))
            losses.append(float(value))
    else:
        raise ValueError(f"unknown fit mode {mode!r}")

    if losses and not math.isfinite(losses[-1]):
        raise TrainingDivergedError("latent fitting diverged")
    return PoseContextCloud(mcfg.group_kind, np.asarray(poses), np.asarray(ctx)), losses
