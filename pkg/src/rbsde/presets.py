"""Shipped problem instances and the driver/terminal vocabularies.

Each preset bundles a constrained backward problem, its domain path, a noise
model, and the penalty ladder it is normally run with.  Drivers come in three
flavors (zero, linear, and a saturating variant of linear) and terminal
conditions in four (Brownian endpoint, clipped Brownian endpoint, compensated
jump count, and an affine map of both projected into the final body).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .domains import DomainPath, MovingBall, StaticDomain
from .geometry import Ball, Box
from .noise import NoiseModel
from .solvers import BsdeProblem

DRIVER_KINDS = ("zero", "linear", "lipschitz-saturating")
TERMINAL_KINDS = ("brownian", "clipped-brownian", "jump-compensated", "custom-affine")


def make_driver(kind, dim, brownian_dim, n_marks, a=0.0, b=0.0, c=0.0):
    """Build a driver callable and its Lipschitz constant.

    linear: f = a y + b (sum of z columns) + c (sum of v columns);
    lipschitz-saturating composes the same affine map with tanh, keeping the
    constant while bounding the output.
    """
    if kind not in DRIVER_KINDS:
        raise ValueError(f"unknown driver kind {kind!r}; choose from {DRIVER_KINDS}")
    if kind == "zero":
        return (lambda t, y, z, v: np.zeros_like(y)), 0.0
    a, b, c = float(a), float(b), float(c)

    def affine(t, y, z, v):
        out = a * y
        if b and z.shape[2]:
            out = out + b * z.sum(axis=2)
        if c and v.shape[2]:
            out = out + c * v.sum(axis=2)
        return out

    lip = max(abs(a), abs(b) * np.sqrt(max(brownian_dim, 1)),
              abs(c) * np.sqrt(max(n_marks, 1)))
    if kind == "linear":
        return affine, lip
    return (lambda t, y, z, v: np.tanh(affine(t, y, z, v))), lip


def _pad_columns(raw, dim):
    """Right-pad (or truncate) columns so the output has exactly dim of them."""
    n, have = raw.shape
    if have >= dim:
        return raw[:, :dim]
    return np.hstack([raw, np.zeros((n, dim - have))])


def make_terminal(kind, dim, horizon, intensities, final_body=None, *,
                  clip_lo=-1.0, clip_hi=1.0, affine_w=None, affine_c=None,
                  affine_b=None):
    """Build a terminal callable xi(W_T, counters) with values in R^dim."""
    if kind not in TERMINAL_KINDS:
        raise ValueError(f"unknown terminal kind {kind!r}; choose from {TERMINAL_KINDS}")
    lam = np.asarray(intensities, dtype=float)

    if kind == "brownian":
        return lambda w, c: _pad_columns(w, dim)
    if kind == "clipped-brownian":
        lo, hi = float(clip_lo), float(clip_hi)
        return lambda w, c: _pad_columns(np.clip(w, lo, hi), dim)
    if kind == "jump-compensated":
        return lambda w, c: _pad_columns(c - lam[None, :] * horizon, dim)

    if final_body is None:
        raise ValueError("custom-affine terminal needs the final body to project into")
    a_w = None if affine_w is None else np.atleast_2d(np.asarray(affine_w, dtype=float))
    a_c = None if affine_c is None else np.atleast_2d(np.asarray(affine_c, dtype=float))
    offset = np.zeros(dim) if affine_b is None else np.asarray(affine_b, dtype=float)
    if offset.shape != (dim,):
        raise ValueError(f"affine offset must have length {dim}")

    def terminal(w, c):
        raw = np.broadcast_to(offset, (w.shape[0], dim)).copy()
        if a_w is not None:
            raw += w @ a_w.T
        if a_c is not None:
            raw += (c - lam[None, :] * horizon) @ a_c.T
        return final_body.project(raw)

    return terminal


@dataclass
class Instance:
    """One fully wired experiment: problem, domain, noise, and run defaults."""

    name: str
    problem: BsdeProblem
    domain: DomainPath
    model: NoiseModel
    n_levels: tuple = (4, 16, 64, 256)
    margin: float = 0.0         # declared lower bound on the interior margin of A
    description: str = ""
    settings: dict = field(default_factory=dict)


def preset_zero():
    model = NoiseModel(brownian_dim=1, steps=4, horizon=1.0)
    dom = StaticDomain(Ball([0.0], 1.0), horizon=1.0, interior=[0.0])
    driver, lip = make_driver("zero", 1, 1, 0)
    terminal = make_terminal("custom-affine", 1, 1.0, [], final_body=Ball([0.0], 1.0))
    prob = BsdeProblem(dim=1, brownian_dim=1, n_marks=0, terminal=terminal,
                       driver=driver, lipschitz=lip)
    return Instance(name="zero", problem=prob, domain=dom, model=model,
                    margin=1.0, description="identically zero solution in the unit ball")


def preset_brownian_martingale():
    model = NoiseModel(brownian_dim=1, steps=6, horizon=1.0)
    dom = StaticDomain(Ball([0.0], 100.0), horizon=1.0, interior=[0.0])
    driver, lip = make_driver("zero", 1, 1, 0)
    terminal = make_terminal("brownian", 1, 1.0, [])
    prob = BsdeProblem(dim=1, brownian_dim=1, n_marks=0, terminal=terminal,
                       driver=driver, lipschitz=lip)
    return Instance(name="brownian-martingale", problem=prob, domain=dom,
                    model=model, margin=100.0,
                    description="unconstrained Brownian endpoint, Y recovers W")


def preset_jump_martingale():
    lam = 0.5
    model = NoiseModel(brownian_dim=1, steps=4, horizon=1.0,
                       marks=[[1.0]], intensities=[lam])
    dom = StaticDomain(Ball([0.0], 100.0), horizon=1.0, interior=[0.0])
    driver, lip = make_driver("zero", 1, 1, 1)
    terminal = make_terminal("jump-compensated", 1, 1.0, [lam])
    prob = BsdeProblem(dim=1, brownian_dim=1, n_marks=1, terminal=terminal,
                       driver=driver, lipschitz=lip)
    return Instance(name="jump-martingale", problem=prob, domain=dom,
                    model=model, margin=100.0,
                    description="compensated jump count, Y recovers the martingale")


def preset_clipped_brownian():
    model = NoiseModel(brownian_dim=1, steps=8, horizon=2.0)
    dom = StaticDomain(Box([-0.5], [0.5]), horizon=2.0, interior=[0.0])
    driver, lip = make_driver("linear", 1, 1, 0, a=1.0)
    terminal = make_terminal("clipped-brownian", 1, 2.0, [], clip_lo=-0.5, clip_hi=0.5)
    prob = BsdeProblem(dim=1, brownian_dim=1, n_marks=0, terminal=terminal,
                       driver=driver, lipschitz=lip)
    return Instance(name="clipped-brownian", problem=prob, domain=dom,
                    model=model, margin=0.5,
                    description="Brownian endpoint clipped to a slab, linear driver")


def preset_moving_ball():
    lam, horizon = 0.4, 1.0
    model = NoiseModel(brownian_dim=1, steps=8, horizon=horizon,
                       marks=[[1.0]], intensities=[lam])
    dom = MovingBall(center=lambda t: np.array([0.5 * t, 0.0]), radius=1.0,
                     horizon=horizon,
                     interior=lambda t: np.array([0.5 * t, 0.0]),
                     lipschitz=0.5, declared_margin=1.0)
    driver, lip = make_driver("linear", 2, 1, 1, a=0.5)
    terminal = make_terminal(
        "custom-affine", 2, horizon, [lam],
        final_body=Ball([0.5 * horizon, 0.0], 1.0),
        affine_w=[[0.4], [0.0]], affine_c=[[0.0], [0.3]],
        affine_b=[0.5 * horizon, 0.0])
    prob = BsdeProblem(dim=2, brownian_dim=1, n_marks=1, terminal=terminal,
                       driver=driver, lipschitz=lip)
    return Instance(name="moving-ball", problem=prob, domain=dom, model=model,
                    margin=1.0,
                    description="planar ball drifting right with jump noise")


PRESETS = {
    "zero": preset_zero,
    "brownian-martingale": preset_brownian_martingale,
    "jump-martingale": preset_jump_martingale,
    "clipped-brownian": preset_clipped_brownian,
    "moving-ball": preset_moving_ball,
}


def get_preset(name):
    try:
        builder = PRESETS[name]
    except KeyError:
        known = ", ".join(sorted(PRESETS))
        raise ValueError(f"unknown preset {name!r}; shipped presets: {known}") from None
    return builder()


def list_presets():
    return sorted(PRESETS)
