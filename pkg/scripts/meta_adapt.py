"""Meta-train the network on a family of layered fields, then measure how
much a few inner SGD steps on held-out fields reduce the eikonal residual.

Example:
    python3 scripts/meta_adapt.py --outer-steps 300 --n-train 8 --n-holdout 4
"""

import argparse
import time

import jax.numpy as jnp
import numpy as np

from enes.field import generate
from enes.model import EnesModel, desk_config, init_latents, save_checkpoint
from enes.train import (
    FIT_META,
    TrainConfig,
    fit_latents,
    make_residual_loss,
    meta_train,
    sample_pairs,
)


def residual(model, fld, z, seed=0, n=512):
    loss_fn = make_residual_loss(model, "logcosh")
    rng = np.random.default_rng(seed)
    S, R = sample_pairs(model.cfg.manifold, n, rng)
    V = np.asarray(fld.sample(S), dtype=np.float64)
    return float(
        loss_fn(model.params, jnp.asarray(z.poses), jnp.asarray(z.contexts),
                jnp.asarray(S), jnp.asarray(R), jnp.asarray(V))
    )


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n-train", type=int, default=8)
    ap.add_argument("--n-holdout", type=int, default=4)
    ap.add_argument("--outer-steps", type=int, default=300)
    ap.add_argument("--inner-steps", type=int, default=5)
    ap.add_argument("--pairs", type=int, default=64)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="meta.enes")
    args = ap.parse_args()

    train_fields = [generate("layered", seed=200 + i) for i in range(args.n_train)]
    holdout = [generate("layered", seed=300 + i) for i in range(args.n_holdout)]
    cfg = desk_config(v_min=1.0, v_max=3.0)
    model = EnesModel(cfg, seed=args.seed)
    tcfg = TrainConfig(
        steps=args.outer_steps, pairs_per_field=args.pairs,
        inner_steps=args.inner_steps, loss="logcosh", seed=args.seed,
        log_every=max(args.outer_steps // 10, 1),
    )

    t0 = time.time()
    result = meta_train(model, train_fields, tcfg)
    print(f"meta-trained {args.outer_steps} outer steps in {time.time() - t0:.1f} s")
    for row in result.history:
        print(row)
    print("learned inner lrs:", np.exp(result.log_inner_lrs))

    model = model.with_params(result.params)
    save_checkpoint(args.out, cfg, result.params, result.latents,
                    extra={"log_inner_lrs": result.log_inner_lrs})

    reductions, fit_times = [], []
    for i, fld in enumerate(holdout):
        z0 = init_latents(cfg, seed=args.seed + 50 + i)
        before = residual(model, fld, z0, seed=900 + i)
        t0 = time.time()
        z, _ = fit_latents(model, fld, tcfg, mode=FIT_META,
                           log_inner_lrs=result.log_inner_lrs, initial=z0)
        fit_times.append(time.time() - t0)
        after = residual(model, fld, z, seed=900 + i)
        reductions.append(1.0 - after / before)
        print(f"holdout {i}: residual {before:.4f} -> {after:.4f} "
              f"({100 * reductions[-1]:.1f}% reduction, {fit_times[-1]:.2f} s)")
    print(f"mean reduction {100 * np.mean(reductions):.1f}%, "
          f"mean fit time {np.mean(fit_times):.3f} s/field")


if __name__ == "__main__":
    main()
