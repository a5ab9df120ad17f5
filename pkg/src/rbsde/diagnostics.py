"""Quantitative checks on computed solutions.

Every check here turns a qualitative property of the constrained dynamics
into a number: an energy aggregate that should stay bounded, a stability
ratio against domain perturbations, the reflection minimality residual, a
convexity inequality along scenarios, and a penalization convergence table.
Expectations are exact on trees and empirical means on sampled paths.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .domains import DiscretizedDomainPath
from .geometry import hausdorff
from .solvers import body_distance, resolve_bodies, solve_penalized, solve_reflected_discrete


def _interior_rows(domain, t, scen, level):
    return domain.interior_at(t, scen.w_nodes(level))


def _margin_rows(domain, t, scen, level):
    """Boundary margin of the interior process at one time level."""
    bodies = resolve_bodies(domain, t, scen, level)
    rows = _interior_rows(domain, t, scen, level)
    if bodies[0] == "shared":
        return bodies[1].boundary_margin(rows)
    _, centers, radius = bodies
    return radius - np.linalg.norm(rows - centers, axis=1)


def max_domain_violation(sol, domain, scen):
    """Largest distance of any node value from its body, over all levels."""
    worst = 0.0
    for t in range(scen.n_steps + 1):
        bodies = resolve_bodies(domain, sol.times[t], scen, t)
        worst = max(worst, float(body_distance(bodies, sol.y[t]).max(initial=0.0)))
    return worst


def total_variation(sol, scen):
    """E Sigma_t |dK_t|, the expected compensator variation."""
    tv = np.zeros(scen.n_leaves)
    for t in range(scen.n_steps):
        tv += scen.expand_to_leaves(np.linalg.norm(sol.dk[t], axis=1), t)
    return float(scen.expectation(tv, scen.n_steps))


def apriori_aggregate(sol, domain, scen):
    """Expected energy aggregate of one solution.

    E[ sup_t |Y|^2 + Sigma ||Z||^2 h + Sigma Sigma |V_k|^2 lambda_k h
       + sup_t |K|^2 + Sigma margin(A) |dK| ],
    the discrete left-hand side of the uniform a priori bound.
    """
    N = scen.n_steps
    h = sol.h
    lam = scen.model.intensities
    sup_y2 = scen.expand_to_leaves(np.sum(sol.y[0] ** 2, axis=1), 0).copy()
    sup_k2 = scen.expand_to_leaves(np.sum(sol.k[0] ** 2, axis=1), 0).copy()
    flow = np.zeros(scen.n_leaves)
    for t in range(N):
        z2 = np.sum(sol.z[t] ** 2, axis=(1, 2)) * h
        v2 = np.sum(sol.v[t] ** 2 * lam[None, None, :], axis=(1, 2)) * h
        dk = np.linalg.norm(sol.dk[t], axis=1)
        margins = _margin_rows(domain, sol.times[t], scen, t)
        flow += scen.expand_to_leaves(z2 + v2 + margins * dk, t)
        sup_y2 = np.maximum(sup_y2, scen.expand_to_leaves(np.sum(sol.y[t + 1] ** 2, axis=1), t + 1))
        sup_k2 = np.maximum(sup_k2, scen.expand_to_leaves(np.sum(sol.k[t + 1] ** 2, axis=1), t + 1))
    return float(scen.expectation(sup_y2 + sup_k2 + flow, N))


@dataclass
class StabilityGap:
    """Comparison of two solutions against the gap of their domains."""

    esup: float      # E sup_t |Y - Y'|^2
    gap: float       # sup_t hausdorff distance of the two bodies
    tv_sum: float    # E[TV(K) + TV(K')]
    ratio: float     # esup / (gap * tv_sum), zero when esup vanishes

    def __str__(self):
        return (f"esup {self.esup:.6g} against gap {self.gap:.6g} "
                f"x tv {self.tv_sum:.6g} (ratio {self.ratio:.6g})")


def stability_gap(sol_a, sol_b, dom_a, dom_b, n_dirs=64):
    """E sup_t |Y - Y'|^2 measured against hausdorff-gap times compensator
    variation; both solves must share one scenario set."""
    if sol_a.scen is not sol_b.scen:
        raise ValueError("stability comparison needs both solutions on one scenario set")
    scen = sol_a.scen
    N = scen.n_steps
    diff2 = scen.expand_to_leaves(np.sum((sol_a.y[0] - sol_b.y[0]) ** 2, axis=1), 0).copy()
    for t in range(1, N + 1):
        step = np.sum((sol_a.y[t] - sol_b.y[t]) ** 2, axis=1)
        diff2 = np.maximum(diff2, scen.expand_to_leaves(step, t))
    esup = float(scen.expectation(diff2, N))
    gap = 0.0
    for t in sol_a.times:
        gap = max(gap, hausdorff(dom_a.at(t), dom_b.at(t), n_dirs=n_dirs))
    tv_sum = total_variation(sol_a, scen) + total_variation(sol_b, scen)
    denom = gap * tv_sum
    ratio = 0.0 if esup == 0.0 else (np.inf if denom == 0.0 else esup / denom)
    return StabilityGap(esup=esup, gap=float(gap), tv_sum=tv_sum, ratio=float(ratio))


def skorokhod_residual(sol, test_process, margin=None):
    """Max over scenarios of Sigma_t <Y_t - X_t, dK_t>.

    test_process is a domain path (its interior process is used), a callable
    of t (or of t and per-node Brownian values), or a constant point; its
    values must lie in the body at every level, and violations raise.  With
    a margin beta the returned residual is the max of Sigma <Y-X, dK> + beta
    Sigma |dK|, which the minimality property keeps below zero up to
    tolerance for interior test processes.
    """
    scen = sol.scen
    domain = sol.domain
    N = scen.n_steps
    acc = np.zeros(scen.n_leaves)
    for t in range(N):
        bodies = resolve_bodies(domain, sol.times[t], scen, t)
        if hasattr(test_process, "interior_at"):
            rows = test_process.interior_at(sol.times[t], scen.w_nodes(t))
        elif callable(test_process):
            try:
                rows = np.asarray(test_process(sol.times[t], scen.w_nodes(t)), dtype=float)
            except TypeError:
                rows = np.asarray(test_process(sol.times[t]), dtype=float)
        else:
            rows = np.asarray(test_process, dtype=float)
        if rows.ndim == 1:
            rows = np.broadcast_to(rows, sol.y[t].shape)
        if rows.shape != sol.y[t].shape:
            raise ValueError(f"test process returned shape {rows.shape}, "
                             f"expected {sol.y[t].shape}")
        dist = body_distance(bodies, rows)
        if dist.max(initial=0.0) > 1e-9 * (1.0 + float(np.abs(rows).max(initial=0.0))):
            raise ValueError(
                f"test process leaves the domain at t = {sol.times[t]:.6g} "
                f"(distance {float(dist.max()):.6g})")
        inner = np.sum((sol.y[t] - rows) * sol.dk[t], axis=1)
        if margin is not None:
            inner = inner + margin * np.linalg.norm(sol.dk[t], axis=1)
        acc += scen.expand_to_leaves(inner, t)
    return float(acc.max(initial=0.0))


@dataclass
class ItoTanakaReport:
    """Per-scenario convexity-inequality residuals for one exponent."""

    q: float
    residuals: np.ndarray = field(repr=False)
    tolerances: np.ndarray = field(repr=False)
    ok_fraction: float = 0.0
    passed: bool = False

    def __str__(self):
        return (f"q={self.q:g}: {100.0 * self.ok_fraction:.2f}% of scenarios within "
                f"tolerance [{'pass' if self.passed else 'FAIL'}]")


def ito_tanaka_residual(sol_a, sol_b, q):
    """Discrete two-solution convexity inequality along scenarios.

    With phi(x) = |x|^q, q in (1, 2], and Ybar = Y - Y', each scenario is
    checked for

        phi(Ybar_T) - phi(Ybar_0)
          >= Sigma_t q |Ybar_t|^{q-2} <Ybar_t, dYbar_t>
           + c(q) Sigma_t |Ybar_t|^{q-2} 1_{Ybar_t != 0} ||Zbar_t||^2 h
           + Sigma_{t,k} J_{t,k} [ phi(Ybar_t + Vbar_tk) - phi(Ybar_t)
                                   - q |Ybar_t|^{q-2} <Ybar_t, Vbar_tk> ]

    with c(q) = q((q-1) and 1)/2 and J the realized jump indicators.  The
    report carries RHS-minus-LHS per scenario (nonnegative up to a
    discretization envelope of 5 sqrt(h) (1 + sup_t |Ybar_t|^q)) and the
    fraction of scenarios meeting it; passed means at least 95% do.
    """
    if not (1.0 < q <= 2.0):
        raise ValueError("q must lie in (1, 2]")
    if sol_a.scen is not sol_b.scen:
        raise ValueError("both solutions must share one scenario set")
    scen = sol_a.scen
    N = scen.n_steps
    h = sol_a.h
    cq = q * min(q - 1.0, 1.0) / 2.0
    ybar = [scen.expand_to_leaves(sol_a.y[t] - sol_b.y[t], t) for t in range(N + 1)]
    total = np.zeros(scen.n_leaves)
    sup_mag = np.linalg.norm(ybar[0], axis=1)

    def weighted_power(mag, expo):
        out = np.zeros_like(mag)
        nz = mag > 0.0
        out[nz] = mag[nz] ** expo
        return out

    for t in range(N):
        mag = np.linalg.norm(ybar[t], axis=1)
        w_pow = weighted_power(mag, q - 2.0)
        dy = ybar[t + 1] - ybar[t]
        grad_term = q * w_pow * np.sum(ybar[t] * dy, axis=1)
        zbar = scen.expand_to_leaves(sol_a.z[t] - sol_b.z[t], t)
        diff_term = cq * w_pow * np.sum(zbar ** 2, axis=(1, 2)) * h
        jump_term = np.zeros(scen.n_leaves)
        if scen.model.n_marks:
            vbar = scen.expand_to_leaves(sol_a.v[t] - sol_b.v[t], t)
            jumps = scen.expand_to_leaves(scen.child_jumps(t), t + 1)
            for k in range(scen.model.n_marks):
                vk = vbar[:, :, k]
                bregman = (np.linalg.norm(ybar[t] + vk, axis=1) ** q
                           - mag ** q
                           - q * w_pow * np.sum(ybar[t] * vk, axis=1))
                jump_term += jumps[:, k] * bregman
        total += grad_term + diff_term + jump_term
        sup_mag = np.maximum(sup_mag, np.linalg.norm(ybar[t + 1], axis=1))
    residuals = (np.linalg.norm(ybar[N], axis=1) ** q
                 - np.linalg.norm(ybar[0], axis=1) ** q
                 - total)
    tolerances = 5.0 * np.sqrt(h) * (1.0 + sup_mag ** q)
    ok = residuals >= -tolerances
    frac = float(np.mean(ok))
    return ItoTanakaReport(q=float(q), residuals=residuals, tolerances=tolerances,
                           ok_fraction=frac, passed=frac >= 0.95)


@dataclass
class ConvergenceReport:
    """Penalization ladder against the projected reference solution."""

    n_levels: list
    violations: list
    gaps: list
    tv: list
    skorokhod: list
    aggregates: list
    gap_slope: float | None
    violation_slope: float | None

    def rows(self):
        header = ["n_level", "max_violation", "sup_gap", "tv", "skorokhod", "aggregate"]
        body = [[float(n), v, g, tv, sk, ag] for n, v, g, tv, sk, ag in
                zip(self.n_levels, self.violations, self.gaps, self.tv,
                    self.skorokhod, self.aggregates)]
        return header, body

    def __str__(self):
        lines = ["n_level  violation      sup_gap        tv             aggregate"]
        for n, v, g, tv, ag in zip(self.n_levels, self.violations, self.gaps,
                                   self.tv, self.aggregates):
            lines.append(f"{n:7g}  {v:13.6e}  {g:13.6e}  {tv:13.6e}  {ag:13.6e}")
        slope = "n/a" if self.gap_slope is None else f"{self.gap_slope:.4f}"
        lines.append(f"fitted gap slope: {slope}")
        return "\n".join(lines)


def fit_slope(ns, values, floor=1e-14):
    """Least-squares slope of log(values) against log(ns).

    Returns None when every value sits at or below the floor, meaning the
    quantity never rose above numerical dust and no rate is identifiable.
    """
    vals = np.asarray(values, dtype=float)
    if vals.max(initial=0.0) <= floor:
        return None
    safe = np.maximum(vals, floor)
    return float(np.polyfit(np.log(np.asarray(ns, dtype=float)), np.log(safe), 1)[0])


def convergence_report(problem, domain, scen, n_levels):
    """Run the penalization ladder and tabulate its distance to the
    projected reference on the same scenarios."""
    levels = [float(n) for n in n_levels]
    if any(b <= a for a, b in zip(levels, levels[1:])):
        raise ValueError("n_levels must be strictly increasing")
    reference = solve_reflected_discrete(problem, domain, scen)
    violations, gaps, tvs, skos, aggs = [], [], [], [], []
    for n in levels:
        sol = solve_penalized(problem, domain, scen, n_level=n)
        violations.append(max_domain_violation(sol, domain, scen))
        gaps.append(max(float(np.abs(sol.y[t] - reference.y[t]).max())
                        for t in range(scen.n_steps + 1)))
        tvs.append(total_variation(sol, scen))
        skos.append(skorokhod_residual(sol, domain))
        aggs.append(apriori_aggregate(sol, domain, scen))
    return ConvergenceReport(
        n_levels=levels, violations=violations, gaps=gaps, tv=tvs,
        skorokhod=skos, aggregates=aggs,
        gap_slope=fit_slope(levels, gaps),
        violation_slope=fit_slope(levels, violations))
