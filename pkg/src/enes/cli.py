"""Command-line interface.

Subcommands: gen, train, meta-train, fit, eval, steer, geodesic, fmm,
selftest.  Exit codes: 0 success, 1 usage error, 2 numeric failure (diverged
training, non-convergence).

Configuration precedence is defaults < config file (``key = value`` lines,
``#`` comments) < explicit flags; the effective configuration is printed at
startup and a manifest (config hash, seed, package versions) is written
beside the outputs before any long computation begins.  All randomness flows
from the single ``--seed`` through fixed named substreams.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NUMERIC = 2

# fixed offsets carving named substreams out of the run seed
SUBSTREAM = {"sampler": 0, "init": 1000, "meta": 2000, "probe": 3000}


class UsageError(Exception):
    pass


def _parse_config_file(path: str) -> dict:
    if not os.path.exists(path):
        raise UsageError(f"config file not found: {path}")
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key = value")
            key, val = (part.strip() for part in line.split("=", 1))
            out[key.replace("-", "_")] = val
    return out


def _coerce(value, like):
    if like is None or isinstance(like, str):
        return value
    if isinstance(like, bool):
        return str(value).lower() in ("1", "true", "yes")
    if isinstance(like, int):
        return int(value)
    if isinstance(like, float):
        return float(value)
    return value


def _effective_config(defaults: dict, args: argparse.Namespace) -> dict:
    cfg = dict(defaults)
    file_path = getattr(args, "config", None)
    if file_path:
        for key, val in _parse_config_file(file_path).items():
            if key not in cfg:
                raise UsageError(f"unknown config key {key!r}")
            cfg[key] = _coerce(val, cfg[key])
    for key in cfg:
        flag_val = getattr(args, key, None)
        if flag_val is not None:
            cfg[key] = flag_val
    return cfg


def _print_config(command: str, cfg: dict) -> None:
    print(f"[enes] command: {command}")
    for key in sorted(cfg):
        print(f"[enes]   {key} = {cfg[key]}")


def _write_manifest(out_path: str, command: str, cfg: dict) -> None:
    import numpy
    import jax

    blob = json.dumps({"command": command, "config": {k: str(v) for k, v in sorted(cfg.items())}}, sort_keys=True)
    manifest = {
        "command": command,
        "config": {k: str(v) for k, v in sorted(cfg.items())},
        "config_hash": hashlib.sha256(blob.encode()).hexdigest(),
        "seed": cfg.get("seed"),
        "versions": {
            "python": sys.version.split()[0],
            "numpy": numpy.__version__,
            "jax": jax.__version__,
        },
    }
    path = out_path + ".manifest.json"
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)


def _parse_point(text: str):
    import numpy as np

    return np.asarray([float(x) for x in text.split(",")], dtype=np.float64)


def _load_fields(paths_text: str):
    from . import field as field_mod

    fields = []
    for path in paths_text.split(","):
        path = path.strip()
        if not os.path.exists(path):
            raise UsageError(f"field file not found: {path}")
        fields.append(field_mod.load_vgrid(path))
    if not fields:
        raise UsageError("no field files given")
    return fields


def _model_config_for(fields, cfg):
    from .geometry import CHORDAL_DISTANCE
    from .groups import SE2, SE3, SO2_ABOUT_Z
    from .model import ModelConfig

    fld = fields[0]
    v_min = min(f.v_min for f in fields)
    v_max = max(f.v_max for f in fields)
    if fld.extent is None:
        return ModelConfig(
            manifold_kind="sphere2",
            extent=None,
            group_kind=SO2_ABOUT_Z,
            semimetric=CHORDAL_DISTANCE,
            n_latents=cfg["n_latents"],
            context_dim=cfg["context_dim"],
            hidden=cfg["hidden"],
            heads=cfg["heads"],
            v_min=v_min,
            v_max=v_max,
        )
    ndim = fld.extent.shape[0]
    return ModelConfig(
        manifold_kind=f"euclidean{ndim}",
        extent=tuple(map(tuple, fld.extent)),
        group_kind=SE2 if ndim == 2 else SE3,
        n_latents=cfg["n_latents"],
        context_dim=cfg["context_dim"],
        hidden=cfg["hidden"],
        heads=cfg["heads"],
        v_min=v_min,
        v_max=v_max,
    )


def _train_config(cfg, **extra):
    from .train import TrainConfig

    kwargs = dict(
        steps=cfg["steps"],
        pairs_per_field=cfg["pairs"],
        lr_params=cfg["lr_params"],
        lr_context=cfg["lr_context"],
        lr_pose=cfg["lr_pose"],
        loss=cfg["loss"],
        seed=cfg["seed"] + SUBSTREAM["sampler"],
    )
    kwargs.update(extra)
    return kwargs


# ---------------------------------------------------------------------------
# Subcommands

_GEN_DEFAULTS = {"kind": "constant", "seed": 0, "out": "field.vgrid", "dims": "", "manifold": "euclidean2"}


def _cmd_gen(cfg):
    from . import field as field_mod

    _write_manifest(cfg["out"], "gen", cfg)
    params = {}
    if cfg["manifold"] == "sphere2":
        params["manifold"] = "sphere2"
    fld = field_mod.generate(cfg["kind"], params, seed=cfg["seed"])
    dims = tuple(int(x) for x in cfg["dims"].split("x")) if cfg["dims"] else None
    field_mod.save_vgrid(fld, cfg["out"], dims)
    print(f"[enes] wrote {cfg['out']} (kind={cfg['kind']}, v in [{fld.v_min}, {fld.v_max}])")
    return EXIT_OK


_FMM_DEFAULTS = {"field": "", "source": "0.5,0.5", "dims": "96x96", "out": "times.vgrid", "seed": 0}


def _cmd_fmm(cfg):
    from . import field as field_mod
    from .oracle import fmm_solve

    if not cfg["field"]:
        raise UsageError("fmm requires --field")
    fld = _load_fields(cfg["field"])[0]
    _write_manifest(cfg["out"], "fmm", cfg)
    dims = tuple(int(x) for x in cfg["dims"].split("x"))
    grid = fmm_solve(fld, _parse_point(cfg["source"]), dims)
    field_mod.save_vgrid(grid.to_time_grid(), cfg["out"])
    print(f"[enes] wrote {cfg['out']} (t_max={grid.times.max():.6g})")
    return EXIT_OK


_TRAIN_DEFAULTS = {
    "fields": "",
    "out": "model.enes",
    "log": "",
    "seed": 0,
    "steps": 3000,
    "pairs": 64,
    "lr_params": 1e-4,
    "lr_context": 1e-2,
    "lr_pose": 1e-3,
    "loss": "abs",
    "n_latents": 9,
    "context_dim": 16,
    "hidden": 64,
    "heads": 2,
}


def _cmd_train(cfg):
    from .model import EnesModel, save_checkpoint
    from .train import TrainConfig, TrainingDivergedError, autodecode

    if not cfg["fields"]:
        raise UsageError("train requires --fields")
    fields = _load_fields(cfg["fields"])
    _write_manifest(cfg["out"], "train", cfg)
    mcfg = _model_config_for(fields, cfg)
    model = EnesModel(mcfg, seed=cfg["seed"] + SUBSTREAM["init"])
    tcfg = TrainConfig(**_train_config(cfg))
    try:
        result = autodecode(model, fields, tcfg, log_path=cfg["log"] or None)
    except TrainingDivergedError as exc:
        print(f"[enes] numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    save_checkpoint(cfg["out"], mcfg, result.params, result.latents)
    print(f"[enes] wrote {cfg['out']} (best step {result.best_step}, val loss {result.best_val:.6g})")
    return EXIT_OK


_META_DEFAULTS = dict(_TRAIN_DEFAULTS)
_META_DEFAULTS.update({"loss": "logcosh", "inner_steps": 5, "inner_lr_context": 30.0, "inner_lr_pose": 2.0})


def _cmd_meta_train(cfg):
    import numpy as np

    from .model import EnesModel, save_checkpoint
    from .train import TrainConfig, TrainingDivergedError, meta_train

    if not cfg["fields"]:
        raise UsageError("meta-train requires --fields")
    fields = _load_fields(cfg["fields"])
    _write_manifest(cfg["out"], "meta-train", cfg)
    mcfg = _model_config_for(fields, cfg)
    model = EnesModel(mcfg, seed=cfg["seed"] + SUBSTREAM["init"])
    tcfg = TrainConfig(
        **_train_config(
            cfg,
            inner_steps=cfg["inner_steps"],
            inner_lr_context=cfg["inner_lr_context"],
            inner_lr_pose=cfg["inner_lr_pose"],
        )
    )
    try:
        result = meta_train(model, fields, tcfg, log_path=cfg["log"] or None)
    except TrainingDivergedError as exc:
        print(f"[enes] numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    save_checkpoint(
        cfg["out"], mcfg, result.params, result.latents,
        extra={"log_inner_lrs": np.asarray(result.log_inner_lrs)},
    )
    print(f"[enes] wrote {cfg['out']} (best outer loss {result.best_val:.6g})")
    return EXIT_OK


_FIT_DEFAULTS = {
    "checkpoint": "",
    "field": "",
    "out": "fitted.enes",
    "mode": "autodecode_steps",
    "steps": 500,
    "pairs": 64,
    "seed": 0,
    "lr_context": 1e-2,
    "lr_pose": 1e-3,
    "loss": "abs",
}


def _cmd_fit(cfg):
    from .model import EnesModel, load_checkpoint, save_checkpoint
    from .train import FIT_META, TrainConfig, TrainingDivergedError, fit_latents

    if not cfg["checkpoint"] or not cfg["field"]:
        raise UsageError("fit requires --checkpoint and --field")
    if not os.path.exists(cfg["checkpoint"]):
        raise UsageError(f"checkpoint not found: {cfg['checkpoint']}")
    mcfg, params, _, extra = load_checkpoint(cfg["checkpoint"])
    fld = _load_fields(cfg["field"])[0]
    _write_manifest(cfg["out"], "fit", cfg)
    model = EnesModel(mcfg, params)
    tcfg = TrainConfig(
        steps=cfg["steps"],
        pairs_per_field=cfg["pairs"],
        lr_context=cfg["lr_context"],
        lr_pose=cfg["lr_pose"],
        loss=cfg["loss"],
        seed=cfg["seed"] + SUBSTREAM["sampler"],
    )
    lrs = extra.get("log_inner_lrs") if cfg["mode"] == FIT_META else None
    try:
        z, losses = fit_latents(model, fld, tcfg, mode=cfg["mode"], log_inner_lrs=lrs)
    except TrainingDivergedError as exc:
        print(f"[enes] numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    save_checkpoint(cfg["out"], mcfg, params, [z], extra=extra)
    tail = losses[-1] if losses else float("nan")
    print(f"[enes] wrote {cfg['out']} (final residual {tail:.6g})")
    return EXIT_OK


_EVAL_DEFAULTS = {
    "checkpoint": "",
    "field": "",
    "sources": "0.25,0.25;0.75,0.75",
    "probes": 256,
    "dims": "96x96",
    "re_mode": "squared",
    "out": "report.csv",
    "seed": 0,
}


def _cmd_eval(cfg):
    import numpy as np

    from .evaluate import EvalReport, metrics
    from .model import EnesModel, load_checkpoint
    from .oracle import fmm_solve, sphere_shortest_path
    from .train import sample_pairs

    if not cfg["checkpoint"] or not cfg["field"]:
        raise UsageError("eval requires --checkpoint and --field")
    if not os.path.exists(cfg["checkpoint"]):
        raise UsageError(f"checkpoint not found: {cfg['checkpoint']}")
    mcfg, params, latents, _ = load_checkpoint(cfg["checkpoint"])
    if not latents:
        raise UsageError("checkpoint holds no latents; run fit or train first")
    fld = _load_fields(cfg["field"])[0]
    _write_manifest(cfg["out"], "eval", cfg)
    model = EnesModel(mcfg, params)
    z = latents[0]
    manifold = mcfg.manifold
    rng = np.random.default_rng(cfg["seed"] + SUBSTREAM["probe"])
    probes, _ = sample_pairs(manifold, cfg["probes"], rng)
    t0 = time.time()
    re_list, rmae_list, names = [], [], []
    for text in cfg["sources"].split(";"):
        src = _parse_point(text)
        if manifold.kind == "sphere2":
            src = src / np.linalg.norm(src)
            ref = sphere_shortest_path(fld, src).interpolate(probes)
        else:
            dims = tuple(int(x) for x in cfg["dims"].split("x"))
            ref = fmm_solve(fld, src, dims).interpolate(probes)
        pred = model.travel_time(np.broadcast_to(src, probes.shape), probes, z)
        re_, rmae_ = metrics(pred, ref, cfg["re_mode"])
        re_list.append(re_)
        rmae_list.append(rmae_)
        names.append(text)
    report = EvalReport(names, re_list, rmae_list, time.time() - t0, cfg["probes"])
    report.write_csv(cfg["out"])
    print(f"[enes] mean RE {report.mean_re:.6g}, mean RMAE {report.mean_rmae:.6g} -> {cfg['out']}")
    return EXIT_OK


_STEER_DEFAULTS = {
    "checkpoint": "",
    "group_params": "0,0,1.5707963267948966",
    "probes": 256,
    "seed": 0,
    "out": "steer.csv",
}


def _cmd_steer(cfg):
    import numpy as np

    from .evaluate import steerability_check
    from .groups import pseudo_exp
    from .model import EnesModel, load_checkpoint
    from .train import sample_pairs

    if not cfg["checkpoint"]:
        raise UsageError("steer requires --checkpoint")
    if not os.path.exists(cfg["checkpoint"]):
        raise UsageError(f"checkpoint not found: {cfg['checkpoint']}")
    mcfg, params, latents, _ = load_checkpoint(cfg["checkpoint"])
    if not latents:
        raise UsageError("checkpoint holds no latents")
    _write_manifest(cfg["out"], "steer", cfg)
    model = EnesModel(mcfg, params)
    g = pseudo_exp(mcfg.group_kind, _parse_point(cfg["group_params"]))
    rng = np.random.default_rng(cfg["seed"] + SUBSTREAM["probe"])
    S, R = sample_pairs(mcfg.manifold, cfg["probes"], rng)
    dev = steerability_check(model, latents[0], g, (S, R))
    with open(cfg["out"], "w") as fh:
        fh.write("max_abs_deviation\n")
        fh.write(f"{dev!r}\n")
    print(f"[enes] steerability deviation {dev:.3e} over {cfg['probes']} probes -> {cfg['out']}")
    return EXIT_OK


_GEODESIC_DEFAULTS = {
    "checkpoint": "",
    "start": "0.1,0.1",
    "end": "0.9,0.9",
    "alpha": 1e-3,
    "max_steps": 10_000,
    "out": "path.csv",
    "seed": 0,
}


def _cmd_geodesic(cfg):
    import numpy as np

    from .evaluate import geodesic_trace
    from .model import EnesModel, load_checkpoint

    if not cfg["checkpoint"]:
        raise UsageError("geodesic requires --checkpoint")
    if not os.path.exists(cfg["checkpoint"]):
        raise UsageError(f"checkpoint not found: {cfg['checkpoint']}")
    mcfg, params, latents, _ = load_checkpoint(cfg["checkpoint"])
    if not latents:
        raise UsageError("checkpoint holds no latents")
    _write_manifest(cfg["out"], "geodesic", cfg)
    model = EnesModel(mcfg, params)
    s = _parse_point(cfg["start"])
    r = _parse_point(cfg["end"])
    if mcfg.manifold_kind == "sphere2":
        s = s / np.linalg.norm(s)
        r = r / np.linalg.norm(r)
    path = geodesic_trace(model, latents[0], s, r, alpha=cfg["alpha"], max_steps=cfg["max_steps"])
    np.savetxt(cfg["out"], path.points, delimiter=",")
    print(
        f"[enes] path with {path.points.shape[0]} points, gap {path.terminal_gap:.3e}, "
        f"{'converged' if path.converged else 'NOT converged'} -> {cfg['out']}"
    )
    return EXIT_OK if path.converged else EXIT_NUMERIC


_SELFTEST_DEFAULTS = {"seed": 0}


def _cmd_selftest(cfg):
    import numpy as np

    from . import field as field_mod
    from .evaluate import metrics, steerability_check
    from .groups import SE2, act_point, compose, identity, inverse, random_element
    from .model import EnesModel, ModelConfig, init_latents
    from .oracle import analytic_constant, fmm_solve
    from .train import sample_pairs

    rng = np.random.default_rng(cfg["seed"])
    failures = []

    def check(name, ok):
        print(f"[enes] selftest {name}: {'ok' if ok else 'FAIL'}")
        if not ok:
            failures.append(name)

    g = random_element(SE2, rng)
    h = random_element(SE2, rng)
    p = rng.uniform(0, 1, 2)
    check("group action axiom", np.allclose(act_point(compose(g, h), p), act_point(g, act_point(h, p)), atol=1e-12))
    check("group inverse", np.allclose(act_point(inverse(g), act_point(g, p)), p, atol=1e-12))
    check("group identity", np.allclose(act_point(identity(SE2), p), p))

    fld = field_mod.generate("constant", {"value": 1.5}, seed=cfg["seed"])
    rt = field_mod.read_vgrid(field_mod.write_vgrid(fld, 4))
    pts = rng.uniform(0, 1, (32, 2))
    check("vgrid round trip", np.allclose(rt.sample(pts), fld.sample(pts), atol=1e-6))

    grid = fmm_solve(fld, np.array([0.5, 0.5]), (33, 33))
    X, Y = grid.node_coordinates()
    ref = analytic_constant(1.5, np.stack([X, Y], -1), np.array([0.5, 0.5]))
    check("fmm constant field", float(np.max(np.abs(grid.times - ref))) < 1e-3)

    mcfg = ModelConfig(n_latents=4, context_dim=8, hidden=32, heads=2, v_min=1.5, v_max=1.5)
    model = EnesModel(mcfg, seed=cfg["seed"])
    z = init_latents(mcfg, seed=cfg["seed"])
    S, R = sample_pairs(mcfg.manifold, 64, rng)
    dev = steerability_check(model, z, random_element(SE2, rng), (S, R))
    check("steerability", dev < 1e-9)
    check("symmetry", np.array_equal(model.travel_time(S, R, z), model.travel_time(R, S, z)))
    check("metrics identity", metrics(np.ones(4), np.ones(4)) == (0.0, 0.0))

    return EXIT_OK if not failures else EXIT_USAGE


_COMMANDS = {
    "gen": (_cmd_gen, _GEN_DEFAULTS, "generate a synthetic velocity field (VGRID)"),
    "train": (_cmd_train, _TRAIN_DEFAULTS, "autodecode shared weights + per-field latents"),
    "meta-train": (_cmd_meta_train, _META_DEFAULTS, "first-order meta-learning of weights and inner step sizes"),
    "fit": (_cmd_fit, _FIT_DEFAULTS, "adapt a latent to one field with frozen weights"),
    "eval": (_cmd_eval, _EVAL_DEFAULTS, "score a fitted checkpoint against the oracle suite"),
    "steer": (_cmd_steer, _STEER_DEFAULTS, "verify the steerability identity on a checkpoint"),
    "geodesic": (_cmd_geodesic, _GEODESIC_DEFAULTS, "extract a geodesic path by gradient backtracking"),
    "fmm": (_cmd_fmm, _FMM_DEFAULTS, "solve first-arrival times with factored fast marching"),
    "selftest": (_cmd_selftest, _SELFTEST_DEFAULTS, "run the quick invariant suite"),
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="enes", description=__doc__)
    sub = parser.add_subparsers(dest="command")
    for name, (_, defaults, help_text) in _COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="key = value config file")
        p.add_argument("--threads", type=int, help="worker threads (1 = deterministic)")
        for key, default in defaults.items():
            kind = type(default)
            p.add_argument(
                f"--{key.replace('_', '-')}",
                dest=key,
                type=str if kind is str else kind,
                default=None,
                help=f"default: {default!r}",
            )
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)

    # honor thread limits before any numeric backend spins up
    threads = None
    if "--threads" in argv:
        idx = argv.index("--threads")
        if idx + 1 < len(argv):
            threads = argv[idx + 1]
    threads = threads or os.environ.get("ENES_THREADS")
    if threads:
        os.environ.setdefault("XLA_FLAGS", f"--xla_cpu_multi_thread_eigen=false intra_op_parallelism_threads={int(threads)}")
        os.environ["OMP_NUM_THREADS"] = str(int(threads))

    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    if not args.command:
        parser.print_help()
        return EXIT_USAGE
    handler, defaults, _ = _COMMANDS[args.command]
    try:
        cfg = _effective_config(defaults, args)
        _print_config(args.command, cfg)
        return handler(cfg)
    except UsageError as exc:
        print(f"[enes] usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, ArithmeticError) as exc:
        print(f"[enes] numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
