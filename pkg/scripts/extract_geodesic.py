"""Extract a geodesic between two points from a fitted checkpoint by
bidirectional gradient backtracking, and report path quality scores.

Example:
    python3 scripts/extract_geodesic.py --checkpoint layered.enes \
        --start 0.1,0.1 --end 0.9,0.9 --out path.csv
"""

import argparse

import numpy as np

from enes.evaluate import geodesic_trace, greatcircle_deviation, straightline_deviation
from enes.model import EnesModel, load_checkpoint


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--checkpoint", required=True)
    ap.add_argument("--latent", type=int, default=0)
    ap.add_argument("--start", default="0.1,0.1")
    ap.add_argument("--end", default="0.9,0.9")
    ap.add_argument("--alpha", type=float, default=1e-3)
    ap.add_argument("--max-steps", type=int, default=10_000)
    ap.add_argument("--out", default="path.csv")
    args = ap.parse_args()

    cfg, params, latents, _ = load_checkpoint(args.checkpoint)
    if not latents:
        raise SystemExit("checkpoint holds no latents; run a fit first")
    model = EnesModel(cfg, params)
    s = np.asarray([float(x) for x in args.start.split(",")])
    r = np.asarray([float(x) for x in args.end.split(",")])
    if cfg.manifold_kind == "sphere2":
        s, r = s / np.linalg.norm(s), r / np.linalg.norm(r)

    path = geodesic_trace(model, latents[args.latent], s, r,
                          alpha=args.alpha, max_steps=args.max_steps)
    np.savetxt(args.out, path.points, delimiter=",")
    print(f"{path.points.shape[0]} points, {path.steps} steps, "
          f"gap {path.terminal_gap:.3e}, converged={path.converged}")
    if cfg.manifold_kind == "sphere2":
        print(f"great-circle deviation: {np.degrees(greatcircle_deviation(path.points)):.3f} deg")
    else:
        print(f"straight-line deviation: {100 * straightline_deviation(path.points):.3f}% of chord")
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
