"""Fit the travel-time network on constant-speed fields over the 2-sphere
and score against great-circle closed forms.

Example:
    python3 scripts/train_sphere.py --steps 800 --out sphere.enes
"""

import argparse
import time

import numpy as np

from enes.evaluate import metrics
from enes.field import ConstantField
from enes.geometry import sphere
from enes.model import EnesModel, save_checkpoint, sphere_config
from enes.oracle import analytic_constant
from enes.train import TrainConfig, autodecode, sample_pairs


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--speed", type=float, default=1.0)
    ap.add_argument("--steps", type=int, default=800)
    ap.add_argument("--pairs", type=int, default=64)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="sphere.enes")
    args = ap.parse_args()

    fld = ConstantField(args.speed, None, v_min=0.5 * args.speed, v_max=2.0 * args.speed)
    cfg = sphere_config(v_min=fld.v_min, v_max=fld.v_max)
    model = EnesModel(cfg, seed=args.seed)
    tcfg = TrainConfig(steps=args.steps, pairs_per_field=args.pairs, seed=args.seed)

    t0 = time.time()
    result = autodecode(model, [fld], tcfg)
    print(f"trained {args.steps} steps in {time.time() - t0:.1f} s")
    for row in result.history:
        print(row)

    model = model.with_params(result.params)
    save_checkpoint(args.out, cfg, result.params, latents=result.latents)

    rng = np.random.default_rng(args.seed + 3000)
    S, R = sample_pairs(sphere(), 2048, rng)
    pred = model.travel_time(S, R, result.latents[0])
    ref = analytic_constant(args.speed, S, R, sphere())
    re, rmae = metrics(pred, ref)
    print(f"RE vs great-circle closed form = {re:.5f} (RMAE {rmae:.5f})")


if __name__ == "__main__":
    main()
