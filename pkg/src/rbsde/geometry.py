"""Convex bodies in R^m: membership, projection, distances, support functions,
Hausdorff metric, inward normals, and the penalty resolvent.

Three concrete shapes are supported: Ball, Box (axis-aligned), and Polytope
(intersection of half-spaces with unit outward normals).  Point operations
accept a single point of shape (m,) or a batch of shape (n, m) and return
matching layout.  Everything is pure and deterministic.
"""
from __future__ import annotations

from itertools import combinations

import numpy as np
from scipy.optimize import linprog

from .policy import DEFAULT_POLICY, NumericPolicy


def _as_batch(x, m):
    """Coerce x to a float batch (n, m); returns (batch, was_single_point)."""
    a = np.asarray(x, dtype=float)
    if a.ndim == 1:
        if a.shape[0] != m:
            raise ValueError(f"dimension mismatch: point has dim {a.shape[0]}, body has dim {m}")
        return a[None, :], True
    if a.ndim != 2 or a.shape[1] != m:
        raise ValueError(f"dimension mismatch: batch shape {a.shape}, body dim {m}")
    return a, False


def _unsqueeze(values, single):
    return values[0] if single else values


def _check_inside(margin, pts):
    """Reject clearly-outside points; allow fp graze (projected boundary points
    can land an ulp outside, and the H4 check wants margin 0 there, not an error)."""
    slack = 1e-9 * (1.0 + np.abs(pts).max(initial=0.0))
    if np.any(margin < -slack):
        raise ValueError("point outside the body")


class Ball:
    """Closed Euclidean ball {x : |x - center| <= radius}."""

    def __init__(self, center, radius):
        self.center = np.atleast_1d(np.asarray(center, dtype=float))
        self.radius = float(radius)
        if self.center.ndim != 1:
            raise ValueError("ball center must be a vector")
        if not self.radius > 0.0:
            raise ValueError("ball radius must be positive")

    @property
    def dim(self):
        return self.center.shape[0]

    def __repr__(self):
        return f"Ball(center={self.center.tolist()}, radius={self.radius})"

    def project(self, x):
        pts, single = _as_batch(x, self.dim)
        diff = pts - self.center
        dist = np.linalg.norm(diff, axis=1)
        out = pts.copy()
        outside = dist > self.radius
        if np.any(outside):
            out[outside] = self.center + diff[outside] * (self.radius / dist[outside])[:, None]
        return _unsqueeze(out, single)

    def distance(self, x):
        pts, single = _as_batch(x, self.dim)
        d = np.maximum(np.linalg.norm(pts - self.center, axis=1) - self.radius, 0.0)
        return _unsqueeze(d, single)

    def contains(self, x, tol=0.0):
        pts, single = _as_batch(x, self.dim)
        ok = np.linalg.norm(pts - self.center, axis=1) <= self.radius + tol
        return _unsqueeze(ok, single)

    def boundary_margin(self, a):
        pts, single = _as_batch(a, self.dim)
        margin = self.radius - np.linalg.norm(pts - self.center, axis=1)
        _check_inside(margin, pts)
        return _unsqueeze(margin, single)

    def support(self, u):
        u = np.asarray(u, dtype=float)
        return float(u @ self.center + self.radius * np.linalg.norm(u))

    def inward_normal(self, y, tol):
        y = np.asarray(y, dtype=float)
        v = self.center - y
        nv = np.linalg.norm(v)
        if abs(nv - self.radius) > tol or nv == 0.0:
            raise ValueError("point is not within tol of the boundary")
        return v / nv

    def diameter(self):
        return 2.0 * self.radius

    def _hausdorff_center(self):
        return self.center


class Box:
    """Axis-aligned box {x : lower <= x <= upper} (componentwise)."""

    def __init__(self, lower, upper):
        self.lower = np.atleast_1d(np.asarray(lower, dtype=float))
        self.upper = np.atleast_1d(np.asarray(upper, dtype=float))
        if self.lower.shape != self.upper.shape or self.lower.ndim != 1:
            raise ValueError("box bounds must be vectors of equal length")
        if not np.all(self.lower < self.upper):
            raise ValueError("box needs lower < upper componentwise")

    @property
    def dim(self):
        return self.lower.shape[0]

    def __repr__(self):
        return f"Box(lower={self.lower.tolist()}, upper={self.upper.tolist()})"

    def project(self, x):
        pts, single = _as_batch(x, self.dim)
        return _unsqueeze(np.clip(pts, self.lower, self.upper), single)

    def distance(self, x):
        pts, single = _as_batch(x, self.dim)
        d = np.linalg.norm(pts - np.clip(pts, self.lower, self.upper), axis=1)
        return _unsqueeze(d, single)

    def contains(self, x, tol=0.0):
        pts, single = _as_batch(x, self.dim)
        ok = np.all(pts >= self.lower - tol, axis=1) & np.all(pts <= self.upper + tol, axis=1)
        return _unsqueeze(ok, single)

    def boundary_margin(self, a):
        pts, single = _as_batch(a, self.dim)
        slack = np.minimum(pts - self.lower, self.upper - pts)
        margin = slack.min(axis=1)
        _check_inside(margin, pts)
        return _unsqueeze(margin, single)

    def support(self, u):
        u = np.asarray(u, dtype=float)
        return float(np.maximum(u * self.lower, u * self.upper).sum())

    def inward_normal(self, y, tol):
        # Faces are ordered (lower_0, upper_0, lower_1, upper_1, ...); ties at
        # corners resolve to the lowest face index.
        y = np.asarray(y, dtype=float)
        slacks = np.empty(2 * self.dim)
        slacks[0::2] = y - self.lower
        slacks[1::2] = self.upper - y
        if slacks.min() < -tol:
            raise ValueError("point is not within tol of the boundary")
        active = np.nonzero(np.abs(slacks) <= tol)[0]
        if active.size == 0:
            raise ValueError("point is not within tol of the boundary")
        i = int(active[0])
        n = np.zeros(self.dim)
        n[i // 2] = 1.0 if i % 2 == 0 else -1.0
        return n

    def diameter(self):
        return float(np.linalg.norm(self.upper - self.lower))

    def _hausdorff_center(self):
        return 0.5 * (self.lower + self.upper)

    def face_normals(self):
        eye = np.eye(self.dim)
        return np.vstack([eye, -eye])


class Polytope:
    """Bounded H-polytope {x : <a_i, x> <= b_i} with unit face normals a_i.

    Construction validates unit normals, boundedness (support LPs along all
    +/- coordinate directions), and nonempty interior (Chebyshev radius > 0).
    Vertices are enumerated once for fast exact support values.
    """

    _VERTEX_FACE_CAP = 32  # beyond this, support falls back to an LP per query

    def __init__(self, normals, offsets, policy: NumericPolicy = DEFAULT_POLICY):
        self.normals = np.atleast_2d(np.asarray(normals, dtype=float))
        self.offsets = np.atleast_1d(np.asarray(offsets, dtype=float))
        if self.normals.shape[0] != self.offsets.shape[0]:
            raise ValueError("need one offset per normal")
        norms = np.linalg.norm(self.normals, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-12):
            raise ValueError("polytope normals must have unit norm (tol 1e-12)")
        self._policy = policy
        self._validate_bounded()
        self.chebyshev_center, self.chebyshev_radius = self._chebyshev()
        if not self.chebyshev_radius > 1e-12:
            raise ValueError("polytope has empty interior")
        self.vertices = self._enumerate_vertices()

    @property
    def dim(self):
        return self.normals.shape[1]

    @property
    def n_faces(self):
        return self.normals.shape[0]

    def __repr__(self):
        return f"Polytope({self.n_faces} faces, dim={self.dim})"

    def _validate_bounded(self):
        m = self.dim
        for j in range(m):
            for sgn in (1.0, -1.0):
                c = np.zeros(m)
                c[j] = -sgn  # maximize sgn * x_j
                res = linprog(c, A_ub=self.normals, b_ub=self.offsets,
                              bounds=[(None, None)] * m, method="highs")
                if res.status == 3:
                    raise ValueError("polytope is unbounded")
                if res.status != 0:
                    raise ValueError(f"polytope validation LP failed (status {res.status})")

    def _chebyshev(self):
        m = self.dim
        # max r  s.t.  <a_i, x> + r <= b_i  (unit normals make r a true inradius)
        c = np.zeros(m + 1)
        c[-1] = -1.0
        A = np.hstack([self.normals, np.ones((self.n_faces, 1))])
        res = linprog(c, A_ub=A, b_ub=self.offsets,
                      bounds=[(None, None)] * m + [(0, None)], method="highs")
        if res.status != 0:
            raise ValueError("polytope is empty or degenerate")
        return res.x[:m].copy(), float(res.x[m])

    def _enumerate_vertices(self):
        if self.n_faces > self._VERTEX_FACE_CAP:
            return None
        m = self.dim
        scale = 1.0 + np.abs(self.offsets).max()
        verts = []
        for idx in combinations(range(self.n_faces), m):
            A = self.normals[list(idx)]
            if abs(np.linalg.det(A)) < 1e-10:
                continue
            v = np.linalg.solve(A, self.offsets[list(idx)])
            if np.max(self.normals @ v - self.offsets) <= 1e-9 * scale:
                verts.append(v)
        if not verts:
            raise ValueError("vertex enumeration found no vertices")
        verts = np.array(verts)
        # dedup on a coarse grid
        keyed = {}
        for v in verts:
            keyed[tuple(np.round(v / (1e-9 * scale)).astype(np.int64))] = v
        return np.array(list(keyed.values()))

    def contains(self, x, tol=0.0):
        pts, single = _as_batch(x, self.dim)
        viol = (pts @ self.normals.T - self.offsets).max(axis=1)
        return _unsqueeze(viol <= tol, single)

    def boundary_margin(self, a):
        pts, single = _as_batch(a, self.dim)
        margin = (self.offsets - pts @ self.normals.T).min(axis=1)
        _check_inside(margin, pts)
        return _unsqueeze(margin, single)

    def project(self, x):
        """Dykstra alternating projections onto the face half-spaces.

        Certified by primal feasibility and per-cycle movement below the
        geometry tolerance; raises if the iteration budget is exhausted.
        """
        pts, single = _as_batch(x, self.dim)
        n, m = pts.shape
        pol = self._policy
        out = pts.astype(float).copy()
        scale = 1.0 + max(np.abs(pts).max(initial=0.0), np.abs(self.offsets).max())
        feas_tol = pol.geometry_tol * scale
        move_tol = 0.1 * pol.geometry_tol * scale
        max_cycles = max(1, pol.dykstra_max_iter // max(1, self.n_faces))

        active = np.nonzero((pts @ self.normals.T - self.offsets).max(axis=1) > 0.0)[0]
        if active.size == 0:
            return _unsqueeze(out, single)
        x_act = out[active]
        corr = np.zeros((self.n_faces, active.size, m))
        for _ in range(max_cycles):
            x_prev = x_act.copy()
            for i in range(self.n_faces):
                y = x_act + corr[i]
                viol = y @ self.normals[i] - self.offsets[i]
                step = np.maximum(viol, 0.0)
                x_act = y - step[:, None] * self.normals[i]
                corr[i] = y - x_act
            moved = np.abs(x_act - x_prev).max(axis=1)
            feas = (x_act @ self.normals.T - self.offsets).max(axis=1)
            done = (moved <= move_tol) & (feas <= feas_tol)
            if done.all():
                out[active] = x_act
                return _unsqueeze(out, single)
            if done.any():
                out[active[done]] = x_act[done]
                keep = ~done
                active, x_act, corr = active[keep], x_act[keep], corr[:, keep]
        raise RuntimeError(
            f"polytope projection did not converge within {pol.dykstra_max_iter} "
            f"half-space projections (worst residual {feas.max():.3e})")

    def distance(self, x):
        pts, single = _as_batch(x, self.dim)
        proj = np.atleast_2d(self.project(pts))
        return _unsqueeze(np.linalg.norm(pts - proj, axis=1), single)

    def support(self, u):
        u = np.asarray(u, dtype=float)
        if self.vertices is not None:
            return float((self.vertices @ u).max())
        res = linprog(-u, A_ub=self.normals, b_ub=self.offsets,
                      bounds=[(None, None)] * self.dim, method="highs")
        if res.status != 0:
            raise RuntimeError(f"support LP failed (status {res.status})")
        return float(-res.fun)

    def inward_normal(self, y, tol):
        y = np.asarray(y, dtype=float)
        slacks = self.offsets - self.normals @ y
        if slacks.min() < -tol:
            raise ValueError("point is not within tol of the boundary")
        active = np.nonzero(np.abs(slacks) <= tol)[0]
        if active.size == 0:
            raise ValueError("point is not within tol of the boundary")
        return -self.normals[int(active[0])]

    def diameter(self):
        if self.vertices is None:
            return 2.0 * (np.abs(self.offsets).max() + 1.0)  # crude but safe
        diffs = self.vertices[:, None, :] - self.vertices[None, :, :]
        return float(np.sqrt((diffs ** 2).sum(axis=2)).max())

    def _hausdorff_center(self):
        return self.chebyshev_center

    def face_normals(self):
        return np.vstack([self.normals, -self.normals])


# ---------------------------------------------------------------------------
# Free-function interface


def contains(body, x, tol=0.0):
    return body.contains(x, tol)


def project(body, x):
    return body.project(x)


def distance(body, x):
    return body.distance(x)


def boundary_margin(body, a):
    return body.boundary_margin(a)


def support(body, u):
    return body.support(u)


def inward_normal(body, y, tol=DEFAULT_POLICY.boundary_tol):
    return body.inward_normal(y, tol)


def penalty_resolvent(body, target, w):
    """Unique y solving y + w*(y - project(y)) = target.

    Inside the body the map is the identity (returned bit-exactly); outside,
    y = (target + w*project(target)) / (1 + w), which lies on the segment
    [project(target), target] and therefore shares the same projection.
    Consequence used by tests: dist(y, D) = dist(target, D) / (1 + w).
    w may be a scalar or a per-row array of weights >= 0.
    """
    pts, single = _as_batch(target, body.dim)
    w_arr = np.broadcast_to(np.asarray(w, dtype=float), (pts.shape[0],))
    if np.any(w_arr < 0.0):
        raise ValueError("resolvent weight must be >= 0")
    proj = np.atleast_2d(body.project(pts))
    dist = np.linalg.norm(pts - proj, axis=1)
    blend = (pts + w_arr[:, None] * proj) / (1.0 + w_arr)[:, None]
    out = np.where(dist[:, None] > 0.0, blend, pts)
    return _unsqueeze(out, single)


def sphere_directions(m, n):
    """Deterministic unit directions in R^m: +/-1 (m=1), uniform angles (m=2),
    Fibonacci sphere (m=3), fixed-key Philox Gaussians (m>3)."""
    if m == 1:
        return np.array([[1.0], [-1.0]])
    if m == 2:
        theta = 2.0 * np.pi * np.arange(n) / n
        return np.column_stack([np.cos(theta), np.sin(theta)])
    if m == 3:
        i = np.arange(n) + 0.5
        z = 1.0 - 2.0 * i / n
        r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
        theta = np.pi * (1.0 + np.sqrt(5.0)) * i
        return np.column_stack([r * np.cos(theta), r * np.sin(theta), z])
    rng = np.random.Generator(np.random.Philox(key=0))
    g = rng.standard_normal((n, m))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def hausdorff(b1, b2, n_dirs=DEFAULT_POLICY.hausdorff_dirs):
    """Hausdorff distance via the sup of support-function differences.

    Exact for ball-ball pairs (|c-c'| + |r-r'|).  Otherwise evaluated on a
    deterministic direction set augmented with all face normals of box or
    polytope arguments; the result is a lower bound within the resolution of
    the direction set (the face normals capture the true maximizer for the
    axis-aligned and polytopal pairs exercised here).
    """
    if b1.dim != b2.dim:
        raise ValueError("dimension mismatch between bodies")
    m = b1.dim
    if n_dirs < 2 * m:
        raise ValueError("n_dirs must be at least 2*dim")
    if isinstance(b1, Ball) and isinstance(b2, Ball):
        return float(np.linalg.norm(b1.center - b2.center) + abs(b1.radius - b2.radius))
    dirs = [sphere_directions(m, n_dirs)]
    for b in (b1, b2):
        if hasattr(b, "face_normals"):
            dirs.append(b.face_normals())
    c1, c2 = b1._hausdorff_center(), b2._hausdorff_center()
    dc = np.linalg.norm(c1 - c2)
    if dc > 0.0:
        u = (c1 - c2) / dc
        dirs.append(np.vstack([u, -u]))
    dirs = np.vstack(dirs)
    dirs = dirs / np.linalg.norm(dirs, axis=1, keepdims=True)
    vals1 = np.array([b1.support(u) for u in dirs])
    vals2 = np.array([b2.support(u) for u in dirs])
    return float(np.abs(vals1 - vals2).max())
