"""Fit the travel-time network on a family of layered 2D velocity fields.

Trains shared weights plus one pose--context latent cloud per field purely
from the eikonal residual, then scores every field against a fast-marching
reference at a handful of sources.

Example:
    python3 scripts/train_layered.py --steps 2500 --out layered.enes
"""

import argparse
import time

import numpy as np

from enes.evaluate import metrics
from enes.field import generate
from enes.model import EnesModel, desk_config, save_checkpoint
from enes.oracle import fmm_solve
from enes.train import TrainConfig, autodecode


def evaluate_against_fmm(model, fields, latents, sources, dims=(48, 48)):
    """Per-field relative error of the network against fast marching."""
    res = []
    for fld, z in zip(fields, latents):
        preds, refs = [], []
        for src in sources:
            ref = fmm_solve(fld, src, dims=dims)
            nodes = np.stack(ref.node_coordinates(), axis=-1).reshape(-1, 2)
            keep = np.linalg.norm(nodes - np.asarray(src), axis=-1) > 1e-9
            t_hat = model.travel_time(nodes[keep], np.broadcast_to(src, nodes[keep].shape), z)
            preds.append(t_hat)
            refs.append(ref.times.reshape(-1)[keep])
        re, _ = metrics(np.stack(preds), np.stack(refs))
        res.append(re)
    return res


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n-fields", type=int, default=8)
    ap.add_argument("--steps", type=int, default=2500)
    ap.add_argument("--pairs", type=int, default=64)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="layered.enes")
    args = ap.parse_args()

    fields = [generate("layered", seed=100 + i) for i in range(args.n_fields)]
    cfg = desk_config(v_min=1.0, v_max=3.0)
    model = EnesModel(cfg, seed=args.seed)
    tcfg = TrainConfig(steps=args.steps, pairs_per_field=args.pairs, seed=args.seed)

    t0 = time.time()
    result = autodecode(model, fields, tcfg)
    dt = time.time() - t0
    print(f"trained {args.steps} steps on {args.n_fields} fields in {dt:.1f} s")
    for row in result.history:
        print(row)
    print(f"best step {result.best_step}, best val {result.best_val:.5f}")

    model = model.with_params(result.params)
    save_checkpoint(args.out, cfg, result.params, latents=result.latents)

    sources = [(0.25, 0.25), (0.75, 0.25), (0.25, 0.75), (0.75, 0.75)]
    res = evaluate_against_fmm(model, fields, result.latents, sources)
    for i, re in enumerate(res):
        print(f"field {i}: RE vs fast marching = {re:.4f}")
    print(f"mean RE = {np.mean(res):.4f}")


if __name__ == "__main__":
    main()
