"""Reference travel-time solvers.

Independent of the neural model: a factored second-order fast-marching solver
on 2D Euclidean grids, closed-form solutions for constant and
linear-gradient media, and a Dijkstra shortest-path solver on a widened
sphere graph.  These provide the ground truth the learned fields are scored
against.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from math import gcd

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import dijkstra as _dijkstra

from .field import TimeGrid, VelocityField
from .geometry import Manifold, SPHERE2

_FAR, _TRIAL, _ACCEPTED = 0, 1, 2


class OracleError(ValueError):
    """Contract violation in a reference solver."""


@dataclass(frozen=True)
class TravelTimeGrid:
    """First-arrival times from one source at the nodes of a regular grid."""

    times: np.ndarray  # (nx, ny)
    extent: np.ndarray  # (2, 2)
    source: np.ndarray  # (2,)

    @property
    def spacing(self) -> np.ndarray:
        return (self.extent[:, 1] - self.extent[:, 0]) / (np.array(self.times.shape) - 1)

    def node_coordinates(self):
        axes = [
            np.linspace(self.extent[i, 0], self.extent[i, 1], n)
            for i, n in enumerate(self.times.shape)
        ]
        return np.meshgrid(*axes, indexing="ij")

    def interpolate(self, p) -> np.ndarray:
        """Bilinear lookup of travel times at arbitrary in-extent points."""
        p = np.asarray(p, dtype=np.float64)
        p = np.clip(p, self.extent[:, 0], self.extent[:, 1])
        dims = np.array(self.times.shape)
        u = (p - self.extent[:, 0]) / self.spacing
        i0 = np.clip(np.floor(u).astype(int), 0, dims - 2)
        f = u - i0
        fx, fy = f[..., 0], f[..., 1]
        t = self.times
        v00 = t[i0[..., 0], i0[..., 1]]
        v10 = t[i0[..., 0] + 1, i0[..., 1]]
        v01 = t[i0[..., 0], i0[..., 1] + 1]
        v11 = t[i0[..., 0] + 1, i0[..., 1] + 1]
        return v00 * (1 - fx) * (1 - fy) + v10 * fx * (1 - fy) + v01 * (1 - fx) * fy + v11 * fx * fy

    def to_time_grid(self) -> TimeGrid:
        return TimeGrid(
            self.times.astype(np.float64),
            self.extent,
            float(self.times.min()),
            float(self.times.max()),
        )


# ---------------------------------------------------------------------------
# Closed forms

def analytic_constant(v: float, s, r, manifold: Manifold | None = None):
    """T = d(s, r) / v with geodesic distance (great-circle on the sphere)."""
    s = np.asarray(s, dtype=np.float64)
    r = np.asarray(r, dtype=np.float64)
    if manifold is not None and manifold.kind == SPHERE2:
        dist = np.arccos(np.clip(np.sum(s * r, axis=-1), -1.0, 1.0))
    else:
        dist = np.linalg.norm(s - r, axis=-1)
    return dist / v


def analytic_linear_gradient(v0: float, slope: float, s, r):
    """Exact first arrival in v(x) = v0 + slope * x_last.

    T = (1/|slope|) * arccosh(1 + slope^2 |s - r|^2 / (2 v(s) v(r))).
    """
    s = np.asarray(s, dtype=np.float64)
    r = np.asarray(r, dtype=np.float64)
    if slope == 0.0:
        return np.linalg.norm(s - r, axis=-1) / v0
    vs = v0 + slope * s[..., -1]
    vr = v0 + slope * r[..., -1]
    if np.any(vs <= 0) or np.any(vr <= 0):
        raise OracleError("velocity must stay positive at both endpoints")
    d2 = np.sum((s - r) ** 2, axis=-1)
    arg = 1.0 + slope**2 * d2 / (2.0 * vs * vr)
    return np.arccosh(arg) / abs(slope)


# ---------------------------------------------------------------------------
# Factored fast marching (2D, second order)

def fmm_solve(fld: VelocityField, source, dims=(96, 96)) -> TravelTimeGrid:
    """First-arrival times via factored fast marching.

    The unknown is the multiplicative correction tau in T = T0 * tau with
    T0(x) = |x - source| / v(source), which removes the source singularity;
    tau is smooth near the source, so the upwind scheme reaches its full
    (second) order there.  Updates fall back to first order / single-axis
    forms when the causal second-order stencil is unavailable.
    """
    if fld.extent is None or fld.extent.shape[0] != 2:
        raise OracleError("fast marching is implemented for 2D Euclidean extents")
    source = np.asarray(source, dtype=np.float64).reshape(2)
    ext = fld.extent
    if np.any(source < ext[:, 0]) or np.any(source > ext[:, 1]):
        raise OracleError(f"source {source} outside extent")
    nx, ny = int(dims[0]), int(dims[1])
    xs = np.linspace(ext[0, 0], ext[0, 1], nx)
    ys = np.linspace(ext[1, 0], ext[1, 1], ny)
    hx = xs[1] - xs[0]
    hy = ys[1] - ys[0]
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    pts = np.stack([X, Y], axis=-1)
    vel = np.asarray(fld.sample(pts), dtype=np.float64)
    s0 = 1.0 / float(fld.sample(source))

    # distance factor and its exact gradient at every node
    dx = X - source[0]
    dy = Y - source[1]
    dist = np.sqrt(dx**2 + dy**2)
    T0 = s0 * dist
    safe = np.maximum(dist, 1e-300)
    gT0x = s0 * dx / safe
    gT0y = s0 * dy / safe

    tau = np.full((nx, ny), np.inf)
    state = np.full((nx, ny), _FAR, dtype=np.int8)
    heap: list[tuple[float, int, int]] = []

    ip = int(np.clip(round((source[0] - ext[0, 0]) / hx), 0, nx - 1))
    jp = int(np.clip(round((source[1] - ext[1, 0]) / hy), 0, ny - 1))
    for i in range(max(0, ip - 1), min(nx, ip + 2)):
        for j in range(max(0, jp - 1), min(ny, jp + 2)):
            tau[i, j] = 1.0
            state[i, j] = _ACCEPTED
    for i in range(max(0, ip - 2), min(nx, ip + 3)):
        for j in range(max(0, jp - 2), min(ny, jp + 3)):
            if state[i, j] != _ACCEPTED:
                t = _update(i, j, nx, ny, hx, hy, T0, gT0x, gT0y, tau, state, vel, dist)
                if t < tau[i, j]:
                    tau[i, j] = t
                    state[i, j] = _TRIAL
                    heapq.heappush(heap, (T0[i, j] * t, i, j))

    while heap:
        t_heap, i, j = heapq.heappop(heap)
        if state[i, j] == _ACCEPTED or t_heap > T0[i, j] * tau[i, j] + 1e-15:
            continue
        state[i, j] = _ACCEPTED
        for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            ni, nj = i + di, j + dj
            if 0 <= ni < nx and 0 <= nj < ny and state[ni, nj] != _ACCEPTED:
                t = _update(ni, nj, nx, ny, hx, hy, T0, gT0x, gT0y, tau, state, vel, dist)
                if t < tau[ni, nj]:
                    tau[ni, nj] = t
                    state[ni, nj] = _TRIAL
                    heapq.heappush(heap, (T0[ni, nj] * t, ni, nj))

    times = T0 * tau
    if not np.all(np.isfinite(times)):
        raise OracleError("fast marching left unreached nodes")
    return TravelTimeGrid(times, ext.copy(), source)


def _axis_coeffs(i, j, di, dj, h, dT0_here, T0, tau, state, nx, ny):
    """Upwind coefficients (c, d) with dT/dx = c * tau_here + d along one side.

    Returns None when the adjacent node on that side is not yet accepted.
    """
    i1, j1 = i + di, j + dj
    if not (0 <= i1 < nx and 0 <= j1 < ny) or state[i1, j1] != _ACCEPTED:
        return None
    T0_here = T0[i, j]
    tau1 = tau[i1, j1]
    arrival1 = T0[i1, j1] * tau1
    sigma = -float(di + dj)  # derivative sign of the one-sided difference
    i2, j2 = i + 2 * di, j + 2 * dj
    if (
        0 <= i2 < nx
        and 0 <= j2 < ny
        and state[i2, j2] == _ACCEPTED
        and T0[i2, j2] * tau[i2, j2] <= arrival1
    ):
        tau2 = tau[i2, j2]
        c = dT0_here + sigma * 3.0 * T0_here / (2.0 * h)
        d = sigma * T0_here * (-4.0 * tau1 + tau2) / (2.0 * h)
    else:
        c = dT0_here + sigma * T0_here / h
        d = -sigma * T0_here * tau1 / h
    return c, d, arrival1, sigma, True


def _update(i, j, nx, ny, hx, hy, T0, gT0x, gT0y, tau, state, vel, dist):
    """Best upwind tau at node (i, j) from currently accepted neighbors.

    Godunov discretization on the factored unknown: per axis use the side
    whose neighbor arrives first; an axis whose resulting gradient estimate
    does not point away from its upwind neighbor is dropped and re-solved.
    An axis with no usable neighbor still contributes the analytic part
    tau * dT0 of the derivative (the correction tau is smooth there), which
    keeps the scheme exact on constant fields where tau is identically 1.
    """
    T0_here = T0[i, j]
    best = np.inf
    if T0_here <= 0:
        return best
    cand_x = []
    cand_y = []
    for di in (1, -1):
        c = _axis_coeffs(i, j, di, 0, hx, gT0x[i, j], T0, tau, state, nx, ny)
        if c is not None:
            cand_x.append(c)
    for dj in (1, -1):
        c = _axis_coeffs(i, j, 0, dj, hy, gT0y[i, j], T0, tau, state, nx, ny)
        if c is not None:
            cand_y.append(c)
    cand_x.sort(key=lambda t: t[2])
    cand_y.sort(key=lambda t: t[2])
    # The analytic tau * dT0 stand-in for an axis without accepted neighbors
    # is only trustworthy where tau is still close to its source value; far
    # out it would hide the genuine tau variation and bias arrivals low.
    near_source = dist[i, j] <= 6.0 * max(hx, hy)
    passive_x = (gT0x[i, j], 0.0, 0.0, 0.0, False) if near_source else None
    passive_y = (gT0y[i, j], 0.0, 0.0, 0.0, False) if near_source else None
    inv_v = 1.0 / vel[i, j]
    sign_tol = 1e-10 * inv_v

    def solve(coeffs):
        if not any(active for _, _, _, _, active in coeffs):
            return np.inf
        A = sum(c * c for c, _, _, _, _ in coeffs)
        B = 2.0 * sum(c * d for c, d, _, _, _ in coeffs)
        C = sum(d * d for _, d, _, _, _ in coeffs) - inv_v * inv_v
        actives = [k for k in coeffs if k[4]]
        disc = B * B - 4.0 * A * C
        if A <= 0 or disc < 0:
            # inconsistent stencil: retry without the later-arriving axis
            if len(actives) > 1:
                drop = max(actives, key=lambda k: k[2])
                return solve([k for k in coeffs if k is not drop])
            return np.inf
        t = (-B + np.sqrt(disc)) / (2.0 * A)
        bad = [k for k in actives if k[3] * (k[0] * t + k[1]) < -sign_tol]
        if bad:
            if len(actives) == 1:
                return np.inf
            drop = max(bad, key=lambda k: k[2])
            return solve([k for k in coeffs if k is not drop])
        for k in actives:
            if T0_here * t < k[2] - 1e-12:
                return np.inf
        return t

    if cand_x and cand_y:
        best = min(best, solve([cand_x[0], cand_y[0]]))
        best = min(best, solve([cand_x[0]]))
        best = min(best, solve([cand_y[0]]))
    elif cand_x:
        if passive_y is not None:
            best = solve([cand_x[0], passive_y])
        if not np.isfinite(best):
            best = solve([cand_x[0]])
    elif cand_y:
        if passive_x is not None:
            best = solve([passive_x, cand_y[0]])
        if not np.isfinite(best):
            best = solve([cand_y[0]])
    return best


# ---------------------------------------------------------------------------
# Sphere shortest paths

# all angular directions with coprime steps up to radius 4: the half-gap
# between adjacent directions (~7 degrees at the equator) bounds the metric
# overestimate of the graph distance by ~0.8% on a uniform field; the margin
# absorbs the lat-lon anisotropy near the poles
_SPHERE_OFFSETS = tuple(
    (a, b)
    for a in range(-4, 5)
    for b in range(-4, 5)
    if (a, b) != (0, 0) and gcd(abs(a), abs(b)) == 1
)


@dataclass(frozen=True)
class SphereTravelTimes:
    """First-arrival times at the nodes of a lat-lon sphere graph."""

    times: np.ndarray  # (nlat * nlon,)
    nodes: np.ndarray  # (nlat * nlon, 3)
    shape: tuple

    def interpolate(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=np.float64)
        flat = p.reshape(-1, 3)
        nrm = np.linalg.norm(flat, axis=-1, keepdims=True)
        flat = flat / np.where(nrm > 0, nrm, 1.0)
        cosd = np.clip(flat @ self.nodes.T, -1.0, 1.0)
        idx = np.argpartition(-cosd, 4, axis=1)[:, :4]
        d = np.arccos(np.take_along_axis(cosd, idx, axis=1))
        w = 1.0 / np.maximum(d, 1e-12)
        w /= w.sum(axis=1, keepdims=True)
        out = np.sum(w * self.times[idx], axis=1)
        return out.reshape(p.shape[:-1])


def sphere_shortest_path(fld: VelocityField, source, nlat: int = 48, nlon: int = 96) -> SphereTravelTimes:
    """Dijkstra over a widened lat-lon graph; edge cost = arc length over the
    speed at the edge midpoint."""
    if fld.extent is not None:
        raise OracleError("sphere shortest paths need a spherical field")
    lats = np.linspace(-np.pi / 2, np.pi / 2, nlat)
    lons = np.linspace(-np.pi, np.pi, nlon, endpoint=False)
    lat, lon = np.meshgrid(lats, lons, indexing="ij")
    nodes = np.stack(
        [np.cos(lat) * np.cos(lon), np.cos(lat) * np.sin(lon), np.sin(lat)], axis=-1
    ).reshape(-1, 3)
    n = nodes.shape[0]

    rows, cols = [], []
    for da, db in _SPHERE_OFFSETS:
        ii = np.arange(nlat)
        jj = np.arange(nlon)
        I, J = np.meshgrid(ii, jj, indexing="ij")
        I2 = I + da
        J2 = (J + db) % nlon
        ok = (I2 >= 0) & (I2 < nlat)
        rows.append((I[ok] * nlon + J[ok]).ravel())
        cols.append((I2[ok] * nlon + J2[ok]).ravel())
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    a, b = nodes[rows], nodes[cols]
    arc = np.arccos(np.clip(np.sum(a * b, axis=-1), -1.0, 1.0))
    mid = a + b
    mn = np.linalg.norm(mid, axis=-1, keepdims=True)
    mid = mid / np.where(mn > 0, mn, 1.0)
    w = arc / np.asarray(fld.sample(mid), dtype=np.float64)
    keep = arc > 1e-12  # drop duplicate pole nodes mapping to themselves
    rows, cols, w = rows[keep], cols[keep], w[keep]

    # the nlon nodes at each pole are one physical point: tie them together
    jj = np.arange(nlon - 1)
    for base in (0, (nlat - 1) * nlon):
        rows = np.concatenate([rows, base + jj])
        cols = np.concatenate([cols, base + jj + 1])
        w = np.concatenate([w, np.full(nlon - 1, 1e-12)])

    # virtual source node with exact arcs to its neighborhood, so near-source
    # times are not polluted by snapping the source to the grid
    source = np.asarray(source, dtype=np.float64).reshape(3)
    source = source / np.linalg.norm(source)
    arc_src = np.arccos(np.clip(nodes @ source, -1.0, 1.0))
    reach = 4.0 * np.pi / (nlat - 1)
    near = np.flatnonzero(arc_src <= reach)
    mid_s = nodes[near] + source
    mid_s = mid_s / np.linalg.norm(mid_s, axis=-1, keepdims=True)
    # tiny floor: explicit zero weights would read as missing edges
    w_src = np.maximum(arc_src[near] / np.asarray(fld.sample(mid_s), dtype=np.float64), 1e-15)
    rows = np.concatenate([rows, np.full(near.shape, n)])
    cols = np.concatenate([cols, near])
    w = np.concatenate([w, w_src])
    graph = sp.csr_matrix((w, (rows, cols)), shape=(n + 1, n + 1))

    times = _dijkstra(graph, directed=False, indices=n)[:n]
    return SphereTravelTimes(times, nodes, (nlat, nlon))
