"""Time-dependent convex domains, their piecewise-constant freezes, and the
numerical interior-margin check.

A domain path maps t in [0, T] to a convex body.  Motions are deterministic
(static / moving ball / moving polytope) or noise-functional (ball whose
center is modulated by the current Brownian value).  Every path carries an
interior process A(t) used by the margin check and the Skorokhod diagnostic.
"""
from __future__ import annotations

from dataclasses import dataclass
import inspect

import numpy as np

from .geometry import Ball, Box, Polytope, hausdorff


def _time_fn(value):
    """Normalize a constant or callable-of-t to a callable of t."""
    if callable(value):
        return value
    frozen = np.asarray(value, dtype=float) if np.ndim(value) > 0 else float(value)
    return lambda t: frozen


def _interior_fn(value):
    """Normalize an interior process to (callable (t, w) -> point, uses_w).

    Accepts a constant point, a callable of t, or a callable of (t, w); only
    the last form depends on the noise and needs per-node evaluation.
    """
    if not callable(value):
        pt = np.atleast_1d(np.asarray(value, dtype=float))
        return (lambda t, w=None: pt), False
    try:
        n_params = len(inspect.signature(value).parameters)
    except (TypeError, ValueError):
        n_params = 1
    if n_params >= 2:
        return value, True
    return (lambda t, w=None: np.atleast_1d(np.asarray(value(t), dtype=float))), False


@dataclass
class MarginReport:
    """Result of the interior-margin sweep: the minimal boundary margin of the
    interior process over the grid (and scenarios, for adapted motions)."""

    min_margin: float
    argmin_time: float
    passed: bool

    def __str__(self):
        state = "ok" if self.passed else "FAILED"
        return f"margin {self.min_margin:.6g} at t={self.argmin_time:.6g} [{state}]"


class DomainPath:
    """Base class: deterministic motion unless a subclass says otherwise."""

    adapted = False

    def __init__(self, horizon, interior, lipschitz=0.0, declared_margin=None):
        self.horizon = float(horizon)
        if not self.horizon > 0.0:
            raise ValueError("horizon must be positive")
        self.interior, self._interior_uses_w = _interior_fn(interior)
        self.lipschitz = float(lipschitz)
        self.declared_margin = declared_margin
        self._cache = {}

    def _check_time(self, t):
        if t < -1e-12 or t > self.horizon + 1e-9 * max(1.0, self.horizon):
            raise ValueError(f"time {t} outside horizon [0, {self.horizon}]")
        return min(max(float(t), 0.0), self.horizon)

    def _build(self, t):
        raise NotImplementedError

    def at(self, t, history=None):
        """The body D_t.  Deterministic motions cache per time point."""
        t = self._check_time(t)
        if t not in self._cache:
            self._cache[t] = self._build(t)
        return self._cache[t]

    def bodies_at(self, t, w_nodes=None):
        """Vectorized access for solvers: ('shared', body) for deterministic
        motions, ('balls', centers, radius) for per-node adapted balls."""
        return "shared", self.at(t)

    def interior_at(self, t, w_nodes=None):
        """Interior-process values, broadcast to (n, m) when w_nodes is given."""
        if w_nodes is None or not self._interior_uses_w:
            val = np.atleast_1d(np.asarray(self.interior(t, None), dtype=float))
            if w_nodes is None:
                return val
            return np.broadcast_to(val, (w_nodes.shape[0], val.shape[0]))
        n = w_nodes.shape[0]
        probe = np.atleast_1d(np.asarray(self.interior(t, w_nodes[0]), dtype=float))
        out = np.empty((n, probe.shape[0]))
        out[0] = probe
        for i in range(1, n):
            out[i] = self.interior(t, w_nodes[i])
        return out


class StaticDomain(DomainPath):
    def __init__(self, body, horizon, interior, declared_margin=None):
        super().__init__(horizon, interior, lipschitz=0.0, declared_margin=declared_margin)
        self.body = body

    def _build(self, t):
        return self.body


class MovingBall(DomainPath):
    def __init__(self, center, radius, horizon, interior, lipschitz=0.0, declared_margin=None):
        super().__init__(horizon, interior, lipschitz, declared_margin)
        self.center = _time_fn(center)
        self.radius = _time_fn(radius)

    def _build(self, t):
        return Ball(self.center(t), float(self.radius(t)))


class MovingPolytope(DomainPath):
    def __init__(self, normals, offsets, horizon, interior, lipschitz=0.0, declared_margin=None):
        super().__init__(horizon, interior, lipschitz, declared_margin)
        self.normals = np.atleast_2d(np.asarray(normals, dtype=float))
        self.offsets = _time_fn(offsets)

    def _build(self, t):
        return Polytope(self.normals, np.asarray(self.offsets(t), dtype=float))


class AdaptedBall(DomainPath):
    """Ball whose center is base(t) plus a function of the current Brownian
    value; depends on the noise history only through W_t (non-anticipative)."""

    adapted = True

    def __init__(self, base, modulation, radius, horizon, interior,
                 lipschitz=0.0, declared_margin=None):
        super().__init__(horizon, interior, lipschitz, declared_margin)
        self.base = _time_fn(base)
        if callable(modulation):
            self.modulation = modulation
        else:
            mat = np.atleast_2d(np.asarray(modulation, dtype=float))
            self.modulation = lambda w: np.asarray(w) @ mat.T
        self.radius = _time_fn(radius)

    def _w_from_history(self, t, history):
        if history is None:
            raise ValueError("insufficient history for adapted motion")
        times, values = history
        times = np.asarray(times, dtype=float)
        values = np.atleast_2d(np.asarray(values, dtype=float))
        j = int(np.searchsorted(times, t + 1e-12)) - 1
        if j < 0 or abs(times[j] - t) > 1e-9:
            raise ValueError(f"insufficient history for adapted motion at t={t}")
        return values[j]

    def at(self, t, history=None):
        t = self._check_time(t)
        w = self._w_from_history(t, history)
        center = np.atleast_1d(self.base(t)) + np.atleast_1d(self.modulation(w[None, :])[0])
        return Ball(center, float(self.radius(t)))

    def bodies_at(self, t, w_nodes=None):
        t = self._check_time(t)
        if w_nodes is None:
            raise ValueError("adapted motion needs per-node Brownian values")
        centers = np.atleast_1d(self.base(t))[None, :] + np.atleast_2d(self.modulation(w_nodes))
        return "balls", centers, float(self.radius(t))


@dataclass
class DiscretizedDomainPath:
    """Piecewise-constant freeze of a domain path: body i applies on
    [breakpoints[i], breakpoints[i+1]), frozen at the left endpoint."""

    breakpoints: np.ndarray  # [0, s_1, ..., s_k = T]
    bodies: list
    j: int

    adapted = False

    @property
    def horizon(self):
        return float(self.breakpoints[-1])

    def interval_of(self, t):
        i = int(np.searchsorted(self.breakpoints, t + 1e-12)) - 1
        return min(max(i, 0), len(self.bodies) - 1)

    def at(self, t):
        return self.bodies[self.interval_of(t)]

    def bodies_at(self, t, w_nodes=None):
        return "shared", self.at(t)


def discretize(path, j, widths=None):
    """Freeze a deterministic path on intervals of width 1/j (or the supplied
    widths, each in [1/j, 2/j]), bodies taken at left endpoints."""
    if path.adapted:
        raise NotImplementedError("adapted motions cannot be frozen deterministically")
    if j < 1:
        raise ValueError("j must be >= 1")
    T = path.horizon
    points = [0.0]
    if widths is None:
        while points[-1] < T:
            points.append(min(points[-1] + 1.0 / j, T))
    else:
        for a in widths:
            if a > 2.0 / j + 1e-12:
                raise ValueError(f"interval width {a} exceeds 2/{j}")
            reaches_horizon = points[-1] + float(a) >= T - 1e-12
            if a < 1.0 / j - 1e-12 and not reaches_horizon:
                raise ValueError(f"interval width {a} below 1/{j}")
            points.append(min(points[-1] + float(a), T))
            if points[-1] >= T:
                break
        if points[-1] < T - 1e-12:
            raise ValueError("supplied widths do not reach the horizon")
        points[-1] = T
    breakpoints = np.asarray(points)
    bodies = [path.at(left) for left in breakpoints[:-1]]
    return DiscretizedDomainPath(breakpoints=breakpoints, bodies=bodies, j=j)


def discretization_gap(path, disc, eval_grid):
    """max over the grid of hausdorff(frozen body at t, true body at t)."""
    gap = 0.0
    for t in np.asarray(eval_grid, dtype=float):
        gap = max(gap, hausdorff(disc.at(t), path.at(t)))
    return gap


def verify_h4(path, grid=None, scen=None):
    """Sweep the interior process over the grid (and scenario nodes, when the
    motion is adapted) and report the minimal boundary margin.

    Raises if the interior process leaves the domain; flags failure (without
    raising) when the margin is not strictly positive.
    """
    if scen is not None:
        grid_s = np.asarray(scen.times, dtype=float)
        if grid is not None and not np.allclose(np.asarray(grid, dtype=float), grid_s):
            raise ValueError("grid must match scenario times when scenarios are supplied")
        grid = grid_s
    elif grid is None:
        grid = np.linspace(0.0, path.horizon, 101)
    if path.adapted and scen is None:
        raise ValueError("adapted motion needs scenarios for the margin check")
    grid = np.asarray(grid, dtype=float)
    min_margin = np.inf
    argmin_t = float(grid[0])
    for i, t in enumerate(grid):
        w_nodes = scen.w_nodes(i) if scen is not None else None
        a_vals = path.interior_at(t, w_nodes)
        kind, *payload = path.bodies_at(t, w_nodes)
        if kind == "shared":
            body = payload[0]
            try:
                margins = np.atleast_1d(body.boundary_margin(a_vals))
            except ValueError as exc:
                raise ValueError(f"interior process outside the domain at t={t}") from exc
        else:
            centers, radius = payload
            margins = radius - np.linalg.norm(np.atleast_2d(a_vals) - centers, axis=1)
            if np.any(margins < -1e-9 * (1.0 + radius)):
                raise ValueError(f"interior process outside the domain at t={t}")
        m = float(margins.min())
        if m < min_margin:
            min_margin, argmin_t = m, float(t)
    return MarginReport(min_margin=min_margin, argmin_time=argmin_t, passed=min_margin > 0.0)
