"""Metrics, steerability / recovered-velocity verification, and geodesic
extraction by bidirectional gradient backtracking."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .geometry import (
    metric_norm,
    retract,
    riemannian_gradient,
    semimetric_value,
)
from .groups import GroupElement, PoseContextCloud, act_latents, act_point, inverse
from .model import EnesModel

RE_SQUARED = "squared"
RE_LITERAL = "literal"


class EvalError(ValueError):
    """Contract violation in an evaluation routine."""


def metrics(pred, ref, re_mode: str = RE_SQUARED) -> tuple[float, float]:
    """(RE, RMAE) between predicted and reference times.

    Inputs may carry leading source axes; both metrics are computed per
    source over the trailing probe axis and then averaged.  The default RE is
    the relative L2 error sqrt(sum (T - That)^2 / sum T^2); ``literal`` keeps
    the unsquared numerator under the root.
    """
    pred = np.asarray(pred, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    if pred.shape != ref.shape or pred.size == 0:
        raise EvalError("pred and ref must be same-shape, non-empty")
    if re_mode not in (RE_SQUARED, RE_LITERAL):
        raise EvalError(f"unknown RE mode {re_mode!r}")
    p = pred.reshape(-1, pred.shape[-1]) if pred.ndim > 1 else pred.reshape(1, -1)
    r = ref.reshape(-1, ref.shape[-1]) if ref.ndim > 1 else ref.reshape(1, -1)
    denom_sq = np.sum(r**2, axis=-1)
    denom_abs = np.sum(np.abs(r), axis=-1)
    if np.any(denom_sq == 0) or np.any(denom_abs == 0):
        raise EvalError("reference times are all zero for some source")
    diff = p - r
    if re_mode == RE_SQUARED:
        re_per = np.sqrt(np.sum(diff**2, axis=-1) / denom_sq)
    else:
        re_per = np.sqrt(np.sum(np.abs(diff), axis=-1) / denom_sq)
    rmae_per = np.sum(np.abs(diff), axis=-1) / denom_abs
    return float(np.mean(re_per)), float(np.mean(rmae_per))


@dataclass
class EvalReport:
    """Per-field scores plus aggregates and timing."""

    field_names: list
    re: list
    rmae: list
    fit_seconds: float
    n_probes: int

    @property
    def mean_re(self) -> float:
        return float(np.mean(self.re))

    @property
    def mean_rmae(self) -> float:
        return float(np.mean(self.rmae))

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["field", "re", "rmae"])
            for name, re_, rmae_ in zip(self.field_names, self.re, self.rmae):
                w.writerow([name, re_, rmae_])
            w.writerow(["mean", self.mean_re, self.mean_rmae])
            w.writerow(["fit_seconds", self.fit_seconds, ""])
            w.writerow(["n_probes", self.n_probes, ""])


def steerability_check(model: EnesModel, z: PoseContextCloud, g: GroupElement, probes) -> float:
    """max over probe pairs of |T(s, r; g z) - T(g^-1 s, g^-1 r; z)|."""
    S, R = probes
    S = np.asarray(S, dtype=np.float64)
    R = np.asarray(R, dtype=np.float64)
    gz = act_latents(g, z)
    ginv = inverse(g)
    lhs = model.travel_time(S, R, gz)
    rhs = model.travel_time(act_point(ginv, S), act_point(ginv, R), z)
    return float(np.max(np.abs(np.atleast_1d(lhs - rhs))))


def recovered_velocity(model: EnesModel, z: PoseContextCloud, s, r) -> float | np.ndarray:
    """v_hat(s) = 1 / |grad_s T(s, r; z)| (metric norm; +inf where the
    gradient vanishes)."""
    m = model.cfg.manifold
    _, gs, _ = model.travel_time_with_gradients(s, r, z)
    nrm = np.asarray(metric_norm(m, np.asarray(s, dtype=np.float64), gs))
    with np.errstate(divide="ignore"):
        out = np.where(nrm > 0, 1.0 / np.maximum(nrm, 1e-300), np.inf)
    return float(out) if out.ndim == 0 else out


@dataclass
class GeodesicPath:
    """Backtracked path between two endpoints."""

    points: np.ndarray  # (n, ambient_dim), ordered from s to r
    converged: bool
    steps: int
    terminal_gap: float


def geodesic_trace(
    model: EnesModel,
    z: PoseContextCloud,
    s,
    r,
    alpha: float = 1e-3,
    max_steps: int = 10_000,
    stop_threshold: float | None = None,
) -> GeodesicPath:
    """Bidirectional backtracking along the learned travel time.

    Both endpoints walk downhill toward each other: each update retracts a
    point along -alpha * |grad T| * grad T, so the step length in domain
    units is alpha * |grad T|^2 = alpha / v^2 for a well-fitted field.  The
    walk stops when the semimetric gap drops below the threshold (default
    2 * alpha); hitting the step budget returns a partial path flagged as
    unconverged.
    """
    m = model.cfg.manifold
    sm = model.cfg.semimetric_obj
    if stop_threshold is None:
        stop_threshold = 2.0 * alpha
    s = m.check_point(np.asarray(s, dtype=np.float64)).copy()
    r = m.check_point(np.asarray(r, dtype=np.float64)).copy()
    fwd = [s.copy()]
    bwd = [r.copy()]
    gap = semimetric_value(sm, s, r)
    converged = gap < stop_threshold
    steps = 0
    while not converged and steps < max_steps:
        _, gs, gr = model.travel_time_with_gradients(s, r, z)
        gs = riemannian_gradient(m, s, gs)
        gr = riemannian_gradient(m, r, gr)
        s = retract(m, s, -alpha * np.linalg.norm(gs) * gs)
        r = retract(m, r, -alpha * np.linalg.norm(gr) * gr)
        fwd.append(s.copy())
        bwd.append(r.copy())
        steps += 1
        gap = np.linalg.norm(s - r)
        if gap < stop_threshold:
            converged = True
    points = np.concatenate([np.asarray(fwd), np.asarray(bwd)[::-1]], axis=0)
    return GeodesicPath(points, converged, steps, float(gap))


# ---------------------------------------------------------------------------
# Geometric helpers for scoring extracted paths

def straightline_deviation(points: np.ndarray) -> float:
    """Max perpendicular distance to the endpoint chord, as a fraction of the
    chord length."""
    a, b = points[0], points[-1]
    chord = b - a
    L = np.linalg.norm(chord)
    if L == 0:
        raise EvalError("degenerate path endpoints")
    u = chord / L
    rel = points - a
    perp = rel - np.outer(rel @ u, u)
    return float(np.max(np.linalg.norm(perp, axis=-1)) / L)


def greatcircle_deviation(points: np.ndarray) -> float:
    """Max angular deviation (radians) of path points from the great circle
    through the endpoints."""
    a, b = points[0], points[-1]
    n = np.cross(a, b)
    nn = np.linalg.norm(n)
    if nn < 1e-12:
        raise EvalError("endpoints are (anti)parallel; great circle undefined")
    n = n / nn
    sines = np.clip(points @ n, -1.0, 1.0)
    return float(np.max(np.abs(np.arcsin(sines))))


def path_minimum_velocity(points: np.ndarray, fld) -> float:
    return float(np.min(fld.sample(points)))
