"""Experiment configuration: TOML parsing, instance construction, validation.

A config either names a shipped preset or describes the problem inline with
[problem], [domain], and [noise] sections; [mode] and [run] tune how it is
executed.  Validation enforces the four standing assumptions before any solve:
(H1) the terminal value lies in the final body (checked once scenarios exist),
(H2) the driver is finite along the zero solution, (H3) the declared Lipschitz
constant survives a random spot check, and (H4) the interior process keeps a
strictly positive boundary margin.  The explicit scheme additionally requires
lipschitz * h < 1/2.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import tomli

from .domains import MovingBall, StaticDomain, verify_h4
from .geometry import Ball, Box
from .noise import NoiseModel
from .presets import Instance, get_preset, make_driver, make_terminal
from .solvers import BsdeProblem

DEFAULT_LEVELS = (4, 16, 64, 256)


class ConfigError(ValueError):
    """Raised for unparseable, incomplete, or assumption-violating configs."""


@dataclass
class ExperimentConfig:
    """A resolved experiment: the instance plus execution settings."""

    instance: Instance
    mode: str = "tree"
    n_paths: int = 4096
    seed: int = 0
    workers: int = 1
    n_levels: tuple = DEFAULT_LEVELS
    out: str = "results"
    raw_text: str = field(default="", repr=False)


def _require(table, key, section):
    if key not in table:
        raise ConfigError(f"[{section}] section is missing required key {key!r}")
    return table[key]


def _build_noise(table):
    d = int(table.get("d", 1))
    steps = int(_require(table, "steps", "noise"))
    if steps <= 0:
        raise ConfigError("[noise] steps must be positive")
    if ("horizon" in table) == ("h" in table):
        raise ConfigError("[noise] needs exactly one of horizon or h")
    horizon = float(table["horizon"]) if "horizon" in table else steps * float(table["h"])
    marks = table.get("marks")
    intensities = table.get("intensities")
    if (marks is None) != (intensities is None):
        raise ConfigError("[noise] marks and intensities must be given together")
    try:
        return NoiseModel(brownian_dim=d, steps=steps, horizon=horizon,
                          marks=marks, intensities=intensities)
    except ValueError as exc:
        raise ConfigError(f"[noise] {exc}") from exc


def _build_domain(table, horizon):
    shape = _require(table, "shape", "domain")
    interior = np.asarray(_require(table, "interior", "domain"), dtype=float)
    margin = table.get("margin")
    if shape == "box":
        if "velocity" in table:
            raise ConfigError("[domain] box motion is not configurable; drop velocity")
        body = Box(_require(table, "lower", "domain"), _require(table, "upper", "domain"))
        return StaticDomain(body, horizon=horizon, interior=interior,
                            declared_margin=margin)
    if shape != "ball":
        raise ConfigError(f"[domain] unknown shape {shape!r}; choose ball or box")
    center = np.asarray(_require(table, "center", "domain"), dtype=float)
    radius = float(_require(table, "radius", "domain"))
    velocity = table.get("velocity")
    if velocity is None:
        return StaticDomain(Ball(center, radius), horizon=horizon,
                            interior=interior, declared_margin=margin)
    vel = np.asarray(velocity, dtype=float)
    if vel.shape != center.shape:
        raise ConfigError("[domain] velocity must match the center dimension")
    offset = interior - center
    return MovingBall(center=lambda t: center + vel * t, radius=radius,
                      horizon=horizon,
                      interior=lambda t: center + vel * t + offset,
                      lipschitz=float(np.linalg.norm(vel)),
                      declared_margin=margin)


def _build_problem(table, model, domain):
    dim = int(_require(table, "dim", "problem"))
    driver_kind = str(table.get("driver", "zero"))
    try:
        driver, lip = make_driver(driver_kind, dim, model.brownian_dim, model.n_marks,
                                  a=table.get("driver_a", 0.0),
                                  b=table.get("driver_b", 0.0),
                                  c=table.get("driver_c", 0.0))
        terminal = make_terminal(
            str(_require(table, "terminal", "problem")), dim, model.horizon,
            model.intensities, final_body=domain.at(model.horizon),
            clip_lo=table.get("clip_lo", -1.0), clip_hi=table.get("clip_hi", 1.0),
            affine_w=table.get("affine_w"), affine_c=table.get("affine_c"),
            affine_b=table.get("affine_b"))
        return BsdeProblem(dim=dim, brownian_dim=model.brownian_dim,
                           n_marks=model.n_marks, terminal=terminal,
                           driver=driver, lipschitz=lip)
    except ValueError as exc:
        raise ConfigError(f"[problem] {exc}") from exc


def _inline_instance(data):
    for section in ("problem", "domain", "noise"):
        if section not in data:
            raise ConfigError(f"config needs a preset name or a [{section}] section")
    model = _build_noise(data["noise"])
    domain = _build_domain(data["domain"], model.horizon)
    problem = _build_problem(data["problem"], model, domain)
    margin = data["domain"].get("margin")
    if margin is None:
        body = domain.at(0.0)
        margin = float(body.boundary_margin(
            np.atleast_2d(domain.interior_at(0.0)))[0])
    return Instance(name="inline", problem=problem, domain=domain, model=model,
                    margin=float(margin), description="inline configuration")


def parse_config(text):
    """Parse config text into an ExperimentConfig (no assumption checks yet)."""
    try:
        data = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"config does not parse: {exc}") from exc
    if "preset" in data:
        clash = [s for s in ("problem", "domain", "noise") if s in data]
        if clash:
            raise ConfigError("preset and inline problem sections are mutually "
                              f"exclusive (found {', '.join(clash)})")
        try:
            instance = get_preset(str(data["preset"]))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    else:
        instance = _inline_instance(data)

    mode_tbl = data.get("mode", {})
    kind = str(mode_tbl.get("kind", "tree"))
    if kind not in ("tree", "mc"):
        raise ConfigError(f"[mode] kind must be tree or mc, got {kind!r}")
    n_paths = int(mode_tbl.get("n_paths", 4096))
    if kind == "mc" and n_paths <= 0:
        raise ConfigError("[mode] n_paths must be positive")
    seed = int(mode_tbl.get("seed", 0))
    if seed < 0:
        raise ConfigError("[mode] seed must be nonnegative")
    workers = int(mode_tbl.get("workers", 1))
    if workers <= 0:
        raise ConfigError("[mode] workers must be positive")

    run_tbl = data.get("run", {})
    levels = tuple(float(n) for n in run_tbl.get("n_levels", instance.n_levels))
    if not levels or any(n <= 0 for n in levels):
        raise ConfigError("[run] n_levels must be positive")
    if any(b <= a for a, b in zip(levels, levels[1:])):
        raise ConfigError("[run] n_levels must be strictly increasing")
    out = str(run_tbl.get("out", "results"))
    return ExperimentConfig(instance=instance, mode=kind, n_paths=n_paths,
                            seed=seed, workers=workers, n_levels=levels,
                            out=out, raw_text=text)


def load_config(path):
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


def apply_overrides(cfg, seed=None, levels=None, mode=None, out=None, workers=None):
    """Fold command-line overrides into a parsed config."""
    changes = {}
    if seed is not None:
        if seed < 0:
            raise ConfigError("seed must be nonnegative")
        changes["seed"] = int(seed)
    if levels is not None:
        lv = tuple(float(n) for n in levels)
        if not lv or any(n <= 0 for n in lv):
            raise ConfigError("levels must be positive")
        if any(b <= a for a, b in zip(lv, lv[1:])):
            raise ConfigError("levels must be strictly increasing")
        changes["n_levels"] = lv
    if mode is not None:
        if mode not in ("tree", "mc"):
            raise ConfigError(f"mode must be tree or mc, got {mode!r}")
        changes["mode"] = mode
    if out is not None:
        changes["out"] = str(out)
    if workers is not None:
        if workers <= 0:
            raise ConfigError("workers must be positive")
        changes["workers"] = int(workers)
    return replace(cfg, **changes) if changes else cfg


def validate_config(cfg):
    """Run the pre-solve assumption checks, raising ConfigError on failure.

    Covers (H2), (H3), (H4), and the explicit-scheme stability guard; (H1)
    needs sampled terminal values and is enforced by the solver itself.
    """
    inst = cfg.instance
    model = inst.model
    guard = inst.problem.lipschitz * model.h
    if guard >= 0.5:
        raise ConfigError(
            "explicit-driver stability guard violated: "
            f"lipschitz * h = {guard:.6g} >= 0.5; refine the time grid")
    f0 = np.asarray([inst.problem.driver_at_zero(t) for t in model.times[:-1]])
    if not np.all(np.isfinite(f0)):
        raise ConfigError("driver is not finite along the zero solution, "
                          "violating (H2)")
    try:
        inst.problem.verify_lipschitz(model.horizon)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if not inst.domain.adapted:
        try:
            report = verify_h4(inst.domain, grid=model.times)
        except ValueError as exc:
            raise ConfigError(f"{exc}, violating (H4)") from exc
        if not report.passed:
            raise ConfigError(
                f"interior margin <= 0 at t = {report.argmin_time:.6g} "
                f"(margin {report.min_margin:.6g}), violating (H4)")
    if inst.margin <= 0.0:
        raise ConfigError("declared interior margin <= 0, violating (H4)")
    return cfg
