"""Experiment orchestration: solve the penalty ladder, write artifacts, check.

For a validated config this runs the projected reference and every penalty
level on one scenario set, writes per-level summary CSVs plus a convergence
table, evaluates the qualitative checks, and renders a plain-text report.
All numeric cells use 17-significant-digit decimal formatting so that a rerun
of the same config and seed reproduces every output byte for byte.
"""
from __future__ import annotations

import os
import sys

import numpy as np

from .config import ConfigError, validate_config
from .diagnostics import (
    ConvergenceReport,
    apriori_aggregate,
    fit_slope,
    ito_tanaka_residual,
    max_domain_violation,
    skorokhod_residual,
    total_variation,
)
from .noise import build_tree, sample_paths
from .solvers import body_distance, resolve_bodies, solve_penalized, solve_reflected_discrete

EXIT_PASS = 0
EXIT_VALIDATION = 1
EXIT_CHECK = 2

SUMMARY_HEADER = ["time", "E|Y|^2", "E|Z|^2", "E|V|^2", "E|K|", "max_domain_violation"]
SLOPE_WINDOW = (-1.3, -0.7)
DUST = 1e-14


def _fmt(x):
    return f"{float(x):.17g}"


def write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(cell) for cell in row) + "\n")


def _level_tag(n):
    text = f"{float(n):g}"
    return text.replace(".", "p").replace("+", "").replace("-", "m")


def solution_summary(sol, domain, scen):
    """Per-time-level moments of one solution: the summary CSV rows."""
    rows = []
    for t in range(scen.n_steps + 1):
        ey2 = float(scen.expectation(np.sum(sol.y[t] ** 2, axis=1), t))
        if t < scen.n_steps:
            ez2 = float(scen.expectation(np.sum(sol.z[t] ** 2, axis=(1, 2)), t))
            ev2 = float(scen.expectation(np.sum(sol.v[t] ** 2, axis=(1, 2)), t))
        else:
            ez2 = ev2 = 0.0
        ek = float(scen.expectation(np.linalg.norm(sol.k[t], axis=1), t))
        bodies = resolve_bodies(domain, sol.times[t], scen, t)
        viol = float(body_distance(bodies, sol.y[t]).max(initial=0.0))
        rows.append([sol.times[t], ey2, ez2, ev2, ek, viol])
    return rows


def _solution_margins(sol, domain, scen, t):
    bodies = resolve_bodies(domain, sol.times[t], scen, t)
    if bodies[0] == "shared":
        return bodies[1].boundary_margin(sol.y[t])
    _, centers, radius = bodies
    return radius - np.linalg.norm(sol.y[t] - centers, axis=1)


class Check:
    def __init__(self, tag, passed, detail):
        self.tag = tag
        self.passed = passed
        self.detail = detail

    def line(self):
        verdict = "pass" if self.passed else "FAIL"
        return f"[{self.tag}] {verdict}: {self.detail}"


def _decay_check(tag, label, values):
    if max(values) <= DUST:
        return Check(tag, True, f"{label} never exceeds numerical dust")
    strict = all(b < a for a, b in zip(values, values[1:]))
    return Check(tag, strict,
                 f"{label} {'strictly decreasing' if strict else 'NOT strictly decreasing'} "
                 f"({values[0]:.6g} -> {values[-1]:.6g})")


def run_checks(instance, scen, reference, ladder, report):
    """Evaluate the qualitative checks on completed solves."""
    checks = []
    problem, domain = instance.problem, instance.domain
    xi = problem.eval_terminal(scen.w_nodes(scen.n_steps), scen.counters(scen.n_steps))
    exact = np.array_equal(reference.y[-1], xi) and all(
        np.array_equal(sol.y[-1], xi) for sol in ladder.values())
    checks.append(Check("terminal-consistency", exact,
                        "stored terminal level equals the sampled data exactly"
                        if exact else "stored terminal level deviates from the sampled data"))

    checks.append(_decay_check("gap-decay", "sup-node gap to the projected reference",
                               report.gaps))
    checks.append(_decay_check("violation-decay", "max domain violation",
                               report.violations))

    lo, hi = SLOPE_WINDOW
    if report.gap_slope is None:
        checks.append(Check("penalization-slope", True,
                            "penalty never active, no rate to fit"))
    else:
        ok = lo <= report.gap_slope <= hi
        checks.append(Check("penalization-slope", ok,
                            f"fitted log-log slope {report.gap_slope:.4f} "
                            f"{'within' if ok else 'outside'} [{lo:g}, {hi:g}]"))

    worst_off = 0.0
    active_any = False
    for t in range(scen.n_steps):
        active = np.linalg.norm(reference.dk[t], axis=1) > 1e-12
        if np.any(active):
            active_any = True
            margins = _solution_margins(reference, domain, scen, t)
            worst_off = max(worst_off, float(np.abs(margins[active]).max()))
    if not active_any:
        checks.append(Check("flat-off", True, "compensator identically zero"))
    else:
        ok = worst_off <= 1e-10
        checks.append(Check("flat-off", ok,
                            f"compensator moves only at boundary contact "
                            f"(max off-boundary margin {worst_off:.6g})"))

    sko = skorokhod_residual(reference, domain, margin=instance.margin)
    checks.append(Check("skorokhod-minimality", sko <= 1e-8,
                        f"margin-adjusted residual {sko:.6g} "
                        f"{'<=' if sko <= 1e-8 else '>'} 1e-08"))

    aggs = report.aggregates
    if max(aggs) <= DUST:
        checks.append(Check("apriori-uniformity", True, "aggregate identically zero"))
    else:
        ratio = max(aggs) / min(aggs)
        checks.append(Check("apriori-uniformity", ratio <= 3.0,
                            f"aggregate max/min ratio {ratio:.4f} "
                            f"{'<=' if ratio <= 3.0 else '>'} 3"))

    first = ladder[report.n_levels[0]]
    parts, ok_all = [], True
    for q in (1.5, 2.0):
        ito = ito_tanaka_residual(first, reference, q)
        ok_all = ok_all and ito.passed
        parts.append(f"q={q:g}: {100.0 * ito.ok_fraction:.2f}%")
    checks.append(Check(
        "ito-tanaka-convexity", ok_all,
        "difference of lowest penalty level and projected reference; "
        + ", ".join(parts) + " of scenarios within tolerance"))
    return checks


def render_report(cfg, scen, checks, report):
    inst = cfg.instance
    model = inst.model
    lines = ["constrained backward solver report",
             "==================================",
             f"instance: {inst.name} ({inst.description})",
             f"mode: {cfg.mode}" + (
                 f" (n_paths={cfg.n_paths}, seed={cfg.seed}, workers={cfg.workers})"
                 if cfg.mode == "mc" else ""),
             f"steps: {model.steps}  horizon: {model.horizon:g}  h: {model.h:g}",
             f"brownian dim: {model.brownian_dim}  marks: {model.n_marks}",
             f"penalty levels: {', '.join(f'{n:g}' for n in cfg.n_levels)}",
             f"declared interior margin: {inst.margin:g}",
             "",
             "convergence",
             "-----------",
             str(report),
             "",
             "checks",
             "------"]
    lines.extend(check.line() for check in checks)
    n_ok = sum(check.passed for check in checks)
    verdict = "PASS" if n_ok == len(checks) else "FAIL"
    lines.append("")
    lines.append(f"result: {verdict} ({n_ok}/{len(checks)} checks)")
    return "\n".join(lines) + "\n"


def run_experiment(cfg, quiet=False):
    """Validate, solve, write artifacts, and return the process exit code."""
    def say(msg):
        if not quiet:
            print(msg)

    def complain(msg):
        if not quiet:
            print(msg, file=sys.stderr)

    try:
        validate_config(cfg)
    except ConfigError as exc:
        complain(f"validation error: {exc}")
        return EXIT_VALIDATION

    inst = cfg.instance
    if cfg.mode == "tree":
        scen = build_tree(inst.model)
    else:
        scen = sample_paths(inst.model, cfg.n_paths, cfg.seed, workers=cfg.workers)

    try:
        reference = solve_reflected_discrete(inst.problem, inst.domain, scen)
        ladder = {n: solve_penalized(inst.problem, inst.domain, scen, n_level=n)
                  for n in cfg.n_levels}
    except ValueError as exc:
        complain(f"validation error: {exc}")
        return EXIT_VALIDATION

    levels = list(cfg.n_levels)
    gaps, violations, tvs, skos, aggs = [], [], [], [], []
    for n in levels:
        sol = ladder[n]
        gaps.append(max(float(np.abs(sol.y[t] - reference.y[t]).max())
                        for t in range(scen.n_steps + 1)))
        violations.append(max_domain_violation(sol, inst.domain, scen))
        tvs.append(total_variation(sol, scen))
        skos.append(skorokhod_residual(sol, inst.domain))
        aggs.append(apriori_aggregate(sol, inst.domain, scen))
    report = ConvergenceReport(
        n_levels=levels, violations=violations, gaps=gaps, tv=tvs,
        skorokhod=skos, aggregates=aggs,
        gap_slope=fit_slope(levels, gaps),
        violation_slope=fit_slope(levels, violations))

    os.makedirs(cfg.out, exist_ok=True)
    for n in levels:
        rows = solution_summary(ladder[n], inst.domain, scen)
        write_csv(os.path.join(cfg.out, f"level_{_level_tag(n)}.csv"),
                  SUMMARY_HEADER, rows)
    write_csv(os.path.join(cfg.out, "reference.csv"), SUMMARY_HEADER,
              solution_summary(reference, inst.domain, scen))
    header, body = report.rows()
    write_csv(os.path.join(cfg.out, "convergence.csv"), header, body)

    checks = run_checks(inst, scen, reference, ladder, report)
    text = render_report(cfg, scen, checks, report)
    with open(os.path.join(cfg.out, "report.txt"), "w", encoding="utf-8",
              newline="\n") as fh:
        fh.write(text)
    with open(os.path.join(cfg.out, "config_echo.toml"), "w", encoding="utf-8",
              newline="\n") as fh:
        fh.write(cfg.raw_text)

    say(text.rstrip("\n"))
    return EXIT_PASS if all(check.passed for check in checks) else EXIT_CHECK
