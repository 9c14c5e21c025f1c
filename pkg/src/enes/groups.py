"""Lie group elements and their actions.

Covers SE(2), SE(3), rotations about the z-axis acting on the 2-sphere, and
the positive scaling group on the line.  Besides the group operations this
module houses the fundamental joint invariants Inv(s, r, g) = (g^-1 s, g^-1 r),
the pseudo-exponential chart used to optimize poses, and the steered velocity
action (isometric and conformal closed forms).

All groups here act affinely in ambient coordinates, so the differential of
left translation is a constant matrix.  GroupElement values are immutable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import field as field_mod
from .geometry import Manifold

SE2 = "se2"
SE3 = "se3"
SO2_ABOUT_Z = "so2z"
POS_SCALING = "scale1"

GROUP_KINDS = (SE2, SE3, SO2_ABOUT_Z, POS_SCALING)

#: width of the pseudo-exponential parameter vector per kind
POSE_PARAM_DIM = {SE2: 3, SE3: 6, SO2_ABOUT_Z: 1, POS_SCALING: 1}

#: ambient dimension of the manifold each group acts on
ACTION_DIM = {SE2: 2, SE3: 3, SO2_ABOUT_Z: 3, POS_SCALING: 1}

ISOMETRIC = "isometric"
CONFORMAL = "conformal"

_ORTHO_TOL = 1e-9


class GroupError(ValueError):
    """Kind mismatch or malformed group element."""


@dataclass(frozen=True)
class GroupElement:
    """One element of SE(2), SE(3), SO(2)-about-z or the positive scalings.

    SE kinds store (translation, rotation matrix); the z-rotation stores an
    angle and the scaling group a positive factor.
    """

    kind: str
    translation: np.ndarray | None = None
    rotation: np.ndarray | None = None
    angle: float | None = None
    scale: float | None = None

    def __post_init__(self):
        if self.kind in (SE2, SE3):
            n = ACTION_DIM[self.kind]
            t = np.asarray(self.translation, dtype=np.float64).reshape(n)
            R = np.asarray(self.rotation, dtype=np.float64).reshape(n, n)
            if np.max(np.abs(R @ R.T - np.eye(n))) > 1e-8 or np.linalg.det(R) < 0:
                raise GroupError("rotation block must be orthonormal with det +1")
            object.__setattr__(self, "translation", t)
            object.__setattr__(self, "rotation", R)
        elif self.kind == SO2_ABOUT_Z:
            if self.angle is None:
                raise GroupError("so2z element needs an angle")
            object.__setattr__(self, "angle", float(self.angle))
        elif self.kind == POS_SCALING:
            if self.scale is None or not self.scale > 0:
                raise GroupError("scaling factor must be > 0")
            object.__setattr__(self, "scale", float(self.scale))
        else:
            raise GroupError(f"unknown group kind {self.kind!r}")


def rot2(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def rotz3(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def euler_zyx_to_matrix(yaw: float, pitch: float, roll: float) -> np.ndarray:
    """Intrinsic Z-Y-X Euler angles: R = Rz(yaw) Ry(pitch) Rx(roll)."""
    cy, sy = np.cos(yaw), np.sin(yaw)
    cp, sp = np.cos(pitch), np.sin(pitch)
    cr, sr = np.cos(roll), np.sin(roll)
    rz = np.array([[cy, -sy, 0], [sy, cy, 0], [0, 0, 1]], dtype=np.float64)
    ry = np.array([[cp, 0, sp], [0, 1, 0], [-sp, 0, cp]], dtype=np.float64)
    rx = np.array([[1, 0, 0], [0, cr, -sr], [0, sr, cr]], dtype=np.float64)
    return rz @ ry @ rx


def matrix_to_euler_zyx(R: np.ndarray) -> tuple[float, float, float]:
    """Inverse of euler_zyx_to_matrix on the principal range.

    yaw, roll in (-pi, pi], pitch in [-pi/2, pi/2].  Near gimbal lock
    (|pitch| = pi/2) the decomposition is not unique; we pin roll = 0 there.
    """
    sp = -R[2, 0]
    sp = np.clip(sp, -1.0, 1.0)
    pitch = np.arcsin(sp)
    if abs(sp) > 1.0 - 1e-12:
        yaw = np.arctan2(-R[0, 1], R[1, 1])
        roll = 0.0
    else:
        yaw = np.arctan2(R[1, 0], R[0, 0])
        roll = np.arctan2(R[2, 1], R[2, 2])
    return float(yaw), float(pitch), float(roll)


def identity(kind: str) -> GroupElement:
    if kind in (SE2, SE3):
        n = ACTION_DIM[kind]
        return GroupElement(kind, translation=np.zeros(n), rotation=np.eye(n))
    if kind == SO2_ABOUT_Z:
        return GroupElement(kind, angle=0.0)
    if kind == POS_SCALING:
        return GroupElement(kind, scale=1.0)
    raise GroupError(f"unknown group kind {kind!r}")


def compose(g: GroupElement, h: GroupElement) -> GroupElement:
    """Group product g h; for SE(n): (t, R)(t', R') = (t + R t', R R')."""
    if g.kind != h.kind:
        raise GroupError(f"kind mismatch: {g.kind} vs {h.kind}")
    if g.kind in (SE2, SE3):
        return GroupElement(
            g.kind,
            translation=g.translation + g.rotation @ h.translation,
            rotation=g.rotation @ h.rotation,
        )
    if g.kind == SO2_ABOUT_Z:
        return GroupElement(g.kind, angle=g.angle + h.angle)
    return GroupElement(g.kind, scale=g.scale * h.scale)


def inverse(g: GroupElement) -> GroupElement:
    if g.kind in (SE2, SE3):
        return GroupElement(g.kind, translation=-(g.rotation.T @ g.translation), rotation=g.rotation.T)
    if g.kind == SO2_ABOUT_Z:
        return GroupElement(g.kind, angle=-g.angle)
    return GroupElement(g.kind, scale=1.0 / g.scale)


def linear_part(g: GroupElement) -> np.ndarray:
    """Matrix of the differential of p -> g . p (constant for affine actions)."""
    if g.kind in (SE2, SE3):
        return g.rotation
    if g.kind == SO2_ABOUT_Z:
        return rotz3(g.angle)
    return np.array([[g.scale]])


def act_point(g: GroupElement, p, m: Manifold | None = None) -> np.ndarray:
    """Left action on a domain point (batched over leading axes)."""
    p = np.asarray(p, dtype=np.float64)
    n = ACTION_DIM[g.kind]
    if p.shape[-1] != n:
        raise GroupError(f"{g.kind} acts on {n}-dimensional points, got {p.shape[-1]}")
    if m is not None and m.ambient_dim != n:
        raise GroupError(f"{g.kind} is incompatible with manifold kind {m.kind}")
    if g.kind in (SE2, SE3):
        return p @ g.rotation.T + g.translation
    if g.kind == SO2_ABOUT_Z:
        return p @ rotz3(g.angle).T
    return p * g.scale


def invariants(s, r, g: GroupElement) -> tuple[np.ndarray, np.ndarray]:
    """Fundamental joint invariants (g^-1 s, g^-1 r).

    Invariant under the diagonal action: acting with any h on s, r and g
    simultaneously leaves the output unchanged, and two triples share the
    same invariants iff they lie on the same orbit.
    """
    ginv = inverse(g)
    return act_point(ginv, s), act_point(ginv, r)


# ---------------------------------------------------------------------------
# Pseudo-exponential chart

def pseudo_exp(kind: str, params) -> GroupElement:
    """Map pseudo-exponential coordinates to a group element.

    SE(2): (tx, ty, theta); SE(3): (t, Z-Y-X Euler angles); z-rotation: theta;
    scaling: log-scale.  The chart treats SE(n) as R^n x SO(n), i.e. the
    translation block is taken literally rather than through the SE(n)
    exponential.
    """
    params = np.asarray(params, dtype=np.float64).reshape(POSE_PARAM_DIM[kind])
    if not np.all(np.isfinite(params)):
        raise GroupError("pose parameters must be finite")
    if kind == SE2:
        return GroupElement(kind, translation=params[:2], rotation=rot2(params[2]))
    if kind == SE3:
        return GroupElement(
            kind,
            translation=params[:3],
            rotation=euler_zyx_to_matrix(params[3], params[4], params[5]),
        )
    if kind == SO2_ABOUT_Z:
        return GroupElement(kind, angle=float(params[0]))
    if kind == POS_SCALING:
        return GroupElement(kind, scale=float(np.exp(params[0])))
    raise GroupError(f"unknown group kind {kind!r}")


def pseudo_log(g: GroupElement) -> np.ndarray:
    """Inverse chart; angles land in the principal range."""
    if g.kind == SE2:
        theta = np.arctan2(g.rotation[1, 0], g.rotation[0, 0])
        return np.array([g.translation[0], g.translation[1], theta])
    if g.kind == SE3:
        yaw, pitch, roll = matrix_to_euler_zyx(g.rotation)
        return np.concatenate([g.translation, [yaw, pitch, roll]])
    if g.kind == SO2_ABOUT_Z:
        wrapped = np.arctan2(np.sin(g.angle), np.cos(g.angle))
        return np.array([wrapped])
    return np.array([np.log(g.scale)])


def random_element(kind: str, rng: np.random.Generator, translation_scale: float = 1.0) -> GroupElement:
    """Random element for property tests; rotations uniform in the principal range."""
    if kind == SE2:
        p = np.concatenate([rng.uniform(-translation_scale, translation_scale, 2), rng.uniform(-np.pi, np.pi, 1)])
    elif kind == SE3:
        p = np.concatenate(
            [
                rng.uniform(-translation_scale, translation_scale, 3),
                rng.uniform(-np.pi, np.pi, 1),
                rng.uniform(-np.pi / 2 + 0.05, np.pi / 2 - 0.05, 1),
                rng.uniform(-np.pi, np.pi, 1),
            ]
        )
    elif kind == SO2_ABOUT_Z:
        p = rng.uniform(-np.pi, np.pi, 1)
    elif kind == POS_SCALING:
        p = rng.uniform(-1.5, 1.5, 1)
    else:
        raise GroupError(f"unknown group kind {kind!r}")
    return pseudo_exp(kind, p)


# ---------------------------------------------------------------------------
# Latent clouds

@dataclass(frozen=True)
class PoseContextCloud:
    """Latent z = {(g_i, c_i)}: N poses (in the pseudo-exponential chart)
    paired with N context vectors."""

    kind: str
    poses: np.ndarray  # (N, pose_param_dim)
    contexts: np.ndarray  # (N, d)

    def __post_init__(self):
        poses = np.asarray(self.poses, dtype=np.float64)
        contexts = np.asarray(self.contexts, dtype=np.float64)
        if poses.ndim != 2 or poses.shape[1] != POSE_PARAM_DIM[self.kind]:
            raise GroupError(f"poses must be (N, {POSE_PARAM_DIM[self.kind]}) for {self.kind}")
        if contexts.ndim != 2 or contexts.shape[0] != poses.shape[0]:
            raise GroupError("contexts must be (N, d) with one row per pose")
        if poses.shape[0] < 1:
            raise GroupError("latent cloud needs at least one pose")
        if not (np.all(np.isfinite(poses)) and np.all(np.isfinite(contexts))):
            raise GroupError("latent entries must be finite")
        object.__setattr__(self, "poses", poses)
        object.__setattr__(self, "contexts", contexts)

    @property
    def n(self) -> int:
        return self.poses.shape[0]

    @property
    def context_dim(self) -> int:
        return self.contexts.shape[1]

    def elements(self) -> list[GroupElement]:
        return [pseudo_exp(self.kind, p) for p in self.poses]


def act_latents(g: GroupElement, z: PoseContextCloud) -> PoseContextCloud:
    """g . z = {(g g_i, c_i)}: poses left-multiplied, contexts untouched."""
    if g.kind != z.kind:
        raise GroupError(f"kind mismatch: {g.kind} vs {z.kind}")
    poses = np.stack([pseudo_log(compose(g, pseudo_exp(z.kind, p))) for p in z.poses])
    return PoseContextCloud(z.kind, poses, z.contexts)


# ---------------------------------------------------------------------------
# Steered velocity action

class SteeredVelocityField(field_mod.VelocityField):
    """Lazy wrapper evaluating mu(g, v)(s) = Omega(g) * v(g^-1 s).

    Exact and resolution-free: no resampling of the base field happens.  For
    isometric actions Omega = 1; for the scaling group acting conformally on
    the line Omega(g, s) = g.scale, constant in s.
    """

    def __init__(self, g: GroupElement, base: field_mod.VelocityField, omega: float):
        self._g = g
        self._ginv = inverse(g)
        self._base = base
        self._omega = float(omega)
        super().__init__(
            kind="steered",
            v_min=omega * base.v_min,
            v_max=omega * base.v_max,
            extent=base.extent,
        )

    def _evaluate(self, p: np.ndarray) -> np.ndarray:
        return self._omega * self._base.sample(act_point(self._ginv, p))

    def sample(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=np.float64)
        if np.any(~np.isfinite(p)):
            raise field_mod.FieldError("NaN/inf query point")
        return self._evaluate(p)


def steer_velocity(g: GroupElement, v: field_mod.VelocityField, action_class: str = ISOMETRIC) -> SteeredVelocityField:
    """Act on a velocity field: the steered field of the transported solution."""
    if action_class == ISOMETRIC:
        if g.kind == POS_SCALING:
            raise GroupError("the scaling group does not act isometrically")
        return SteeredVelocityField(g, v, 1.0)
    if action_class == CONFORMAL:
        if g.kind != POS_SCALING:
            raise GroupError(f"no conformal-factor rule for group kind {g.kind}")
        return SteeredVelocityField(g, v, g.scale)
    raise GroupError(f"unknown action class {action_class!r}")


def steered_metric_norm(g: GroupElement, m: Manifold, p, t) -> float:
    """Tangent norm under the g-steered metric.

    In ambient coordinates with the induced metric the adjoint of the
    differential of p -> g^-1 p is the transpose of its (constant) linear
    part, so the steered norm is |A^T t| with A = linear part of g^-1.
    For isometric actions this equals the plain metric norm.
    """
    from .geometry import tangent_project

    tp = tangent_project(m, p, t)
    A = linear_part(inverse(g))
    return float(np.linalg.norm(A.T @ tp))
