"""Riemannian manifold primitives.

Metric norms, Euclidean-to-Riemannian gradient conversion, retractions and
the factorization semimetrics.  Euclidean domains carry the identity metric;
the 2-sphere is embedded in R^3 with the induced metric, so tangent vectors
are measured after projection onto the tangent plane.

All operations are pure functions of their inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

EUCLIDEAN1 = "euclidean1"
EUCLIDEAN2 = "euclidean2"
EUCLIDEAN3 = "euclidean3"
SPHERE2 = "sphere2"

_EUCLIDEAN_DIMS = {EUCLIDEAN1: 1, EUCLIDEAN2: 2, EUCLIDEAN3: 3}

_UNIT_TOL = 1e-9


class GeometryError(ValueError):
    """Contract violation in a geometry operation."""


class DegeneratePairError(GeometryError):
    """Semimetric evaluated on a pair closer than its epsilon threshold."""


class DegenerateRetractionError(GeometryError):
    """Sphere retraction hit the origin: p + t has vanishing norm."""


@dataclass(frozen=True)
class Manifold:
    """Domain of the eikonal problem.

    ``kind`` is one of the module-level constants.  ``extent`` holds per-axis
    (lower, upper) bounds for Euclidean kinds and is ignored for the sphere,
    whose points are unit vectors in R^3.
    """

    kind: str
    extent: np.ndarray | None = None

    def __post_init__(self):
        if self.kind in _EUCLIDEAN_DIMS:
            ext = np.asarray(
                self.extent if self.extent is not None else [[0.0, 1.0]] * _EUCLIDEAN_DIMS[self.kind],
                dtype=np.float64,
            ).reshape(_EUCLIDEAN_DIMS[self.kind], 2)
            if not np.all(ext[:, 0] < ext[:, 1]):
                raise GeometryError(f"extent lower bounds must be < upper bounds, got {ext}")
            object.__setattr__(self, "extent", ext)
        elif self.kind == SPHERE2:
            object.__setattr__(self, "extent", None)
        else:
            raise GeometryError(f"unknown manifold kind {self.kind!r}")

    @property
    def ambient_dim(self) -> int:
        return 3 if self.kind == SPHERE2 else _EUCLIDEAN_DIMS[self.kind]

    @property
    def intrinsic_dim(self) -> int:
        return 2 if self.kind == SPHERE2 else _EUCLIDEAN_DIMS[self.kind]

    def check_point(self, p: np.ndarray) -> np.ndarray:
        p = np.asarray(p, dtype=np.float64)
        if p.shape[-1] != self.ambient_dim:
            raise GeometryError(f"point has dimension {p.shape[-1]}, expected {self.ambient_dim}")
        if self.kind == SPHERE2:
            nrm = np.linalg.norm(p, axis=-1)
            if not np.all(np.abs(nrm - 1.0) <= 1e-7):
                raise GeometryError("sphere points must be unit vectors")
        return p


def euclidean(extent, kind: str | None = None) -> Manifold:
    ext = np.asarray(extent, dtype=np.float64).reshape(-1, 2)
    if kind is None:
        kind = {1: EUCLIDEAN1, 2: EUCLIDEAN2, 3: EUCLIDEAN3}[ext.shape[0]]
    return Manifold(kind, ext)


def sphere() -> Manifold:
    return Manifold(SPHERE2)


def unit_square() -> Manifold:
    return euclidean([[0.0, 1.0], [0.0, 1.0]])


def _check_tangent(m: Manifold, t) -> np.ndarray:
    t = np.asarray(t, dtype=np.float64)
    if t.shape[-1] != m.ambient_dim:
        raise GeometryError(f"tangent has dimension {t.shape[-1]}, expected {m.ambient_dim}")
    return t


def tangent_project(m: Manifold, p: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Project ambient coordinates onto T_p M (identity for Euclidean kinds)."""
    p = m.check_point(p)
    t = _check_tangent(m, t)
    if m.kind == SPHERE2:
        return t - np.sum(t * p, axis=-1, keepdims=True) * p
    return t


def metric_norm(m: Manifold, p, t) -> float | np.ndarray:
    """sqrt(G_p(t, t)); on the sphere t is first projected onto T_p S^2."""
    tp = tangent_project(m, p, t)
    return np.linalg.norm(tp, axis=-1)


def riemannian_gradient(m: Manifold, p, euclid_grad) -> np.ndarray:
    """Convert an ambient Euclidean gradient into the Riemannian gradient.

    Identity for Euclidean kinds; tangential projection (I - p p^T) grad for
    the embedded sphere.
    """
    return tangent_project(m, p, euclid_grad)


def retract(m: Manifold, p, t) -> np.ndarray:
    """First-order retraction: p + t (clamped to the extent) or sphere projection."""
    p = m.check_point(p)
    t = _check_tangent(m, t)
    if m.kind == SPHERE2:
        q = p + t
        nrm = np.linalg.norm(q, axis=-1)
        if np.any(nrm < 1e-12):
            raise DegenerateRetractionError("p + t is (numerically) the origin")
        return q / nrm[..., None] if q.ndim > 1 else q / nrm
    q = p + t
    return np.clip(q, m.extent[:, 0], m.extent[:, 1])


# ---------------------------------------------------------------------------
# Semimetrics

EUCLIDEAN_DISTANCE = "euclidean_distance"
CHORDAL_DISTANCE = "chordal_distance"
INDICATOR = "indicator"

_SEMIMETRIC_KINDS = (EUCLIDEAN_DISTANCE, CHORDAL_DISTANCE, INDICATOR)


@dataclass(frozen=True)
class Semimetric:
    """Symmetric two-point function vanishing exactly on the diagonal.

    The distance kinds measure |s - r| in ambient coordinates (on the sphere
    this is the chord length).  The indicator kind returns 1 for s != r with
    zero derivative (straight-through).  ``epsilon`` marks the degenerate-pair
    threshold below which distance kinds refuse to differentiate; samplers
    must resample such pairs rather than clamp.
    """

    kind: str = EUCLIDEAN_DISTANCE
    epsilon: float = 1e-6

    def __post_init__(self):
        if self.kind not in _SEMIMETRIC_KINDS:
            raise GeometryError(f"unknown semimetric kind {self.kind!r}")
        if not self.epsilon > 0:
            raise GeometryError("epsilon must be > 0")


def semimetric_value_and_grad(d: Semimetric, s, r):
    """Return (value, grad_s, grad_r) of the semimetric at a point pair."""
    s = np.asarray(s, dtype=np.float64)
    r = np.asarray(r, dtype=np.float64)
    if s.shape != r.shape:
        raise GeometryError("s and r must have the same shape")
    diff = s - r
    if d.kind == INDICATOR:
        val = 1.0 if np.any(diff != 0.0) else 0.0
        zero = np.zeros_like(s)
        return val, zero, zero
    dist = float(np.linalg.norm(diff))
    if dist < d.epsilon:
        raise DegeneratePairError(f"|s - r| = {dist:g} < epsilon = {d.epsilon:g}")
    g = diff / dist
    return dist, g, -g


def semimetric_value(d: Semimetric, s, r) -> float:
    s = np.asarray(s, dtype=np.float64)
    r = np.asarray(r, dtype=np.float64)
    if d.kind == INDICATOR:
        return 1.0 if np.any(s != r) else 0.0
    return float(np.linalg.norm(s - r))
