"""End-to-end acceptance checks, one test per shipped guarantee.

Each test exercises one quantitative promise of the package at its stated
tolerance and prints a single summary line; run with -v to get one
pass/fail line per guarantee.
"""
import time

import numpy as np

from rbsde.cli import main as cli_main
from rbsde.diagnostics import (
    apriori_aggregate,
    convergence_report,
    ito_tanaka_residual,
    stability_gap,
)
from rbsde.domains import StaticDomain, discretization_gap, discretize
from rbsde.geometry import Ball, Box, Polytope, penalty_resolvent
from rbsde.noise import NoiseModel, build_tree
from rbsde.policy import NumericPolicy
from rbsde.presets import get_preset, list_presets
from rbsde.solvers import BsdeProblem, solve_penalized, solve_reflected_discrete


def preset_config(tmp_path, preset, extra=""):
    path = tmp_path / "exp.toml"
    path.write_text(f'preset = "{preset}"\n{extra}', encoding="utf-8")
    return str(path)


def announce(name, detail):
    print(f"PASS {name}: {detail}")


def fixed_point_resolvent(body, target, w, tol=1e-13, max_iter=5000):
    """Damped fixed-point oracle y <- (target + w proj(y)) / (1 + w).

    The map contracts at rate w/(1+w), so the fixed-point error is below
    w * step; stop once that certificate reaches tol, or once the step hits
    the floating-point noise floor of the projection.
    """
    target = np.asarray(target, dtype=float)
    scale = 1.0 + float(np.abs(target).max())
    step_tol = max(tol / max(w, 1.0), 1e-14 * scale)
    y = target.copy()
    for _ in range(max_iter):
        y_new = (target + w * np.asarray(body.project(y))) / (1.0 + w)
        if np.abs(y_new - y).max() <= step_tol:
            return y_new
        y = y_new
    raise AssertionError(f"fixed-point oracle did not converge (w={w})")


def random_bodies(rng, kind, count):
    out = []
    for _ in range(count):
        if kind == "ball":
            m = int(rng.integers(1, 4))
            out.append(Ball(rng.normal(size=m, scale=2.0),
                            rng.uniform(0.3, 3.0)))
        elif kind == "box":
            m = int(rng.integers(1, 4))
            lower = rng.uniform(-3.0, 0.0, size=m)
            out.append(Box(lower, lower + rng.uniform(0.2, 3.0, size=m)))
        else:
            theta = (rng.uniform(0.0, 2.0 * np.pi)
                     + np.array([0.0, 2.0, 4.0]) * np.pi / 3.0
                     + rng.uniform(-0.3, 0.3, size=3))
            normals = np.column_stack([np.cos(theta), np.sin(theta)])
            # weight amplification w * geometry_tol must stay below the
            # match tolerance, so ask the alternating projector for more
            out.append(Polytope(normals, rng.uniform(0.3, 2.0, size=3),
                                policy=NumericPolicy(geometry_tol=1e-14)))
    return out


def test_01_projection_properties_hold_on_random_probes():
    start = time.perf_counter()
    tol = 1e-10
    bodies = [Ball([0.0, 0.0], 1.0), Ball([0.5, -1.0, 2.0], 0.75),
              Box([-1.0, -1.0], [1.0, 1.0]), Box([0.0, -2.0, 1.0], [3.0, 2.0, 4.0]),
              Polytope([[1 / np.sqrt(2)] * 2, [-1.0, 0.0], [0.0, -1.0]],
                       [1 / np.sqrt(2), 10.0, 10.0])]
    rng = np.random.default_rng(2024)
    n_probes = 1000
    for body in bodies:
        m = body.dim
        x = rng.normal(size=(n_probes, m), scale=3.0)
        px = np.atleast_2d(body.project(x))
        # idempotence
        assert np.abs(np.atleast_2d(body.project(px)) - px).max() <= tol
        # nonexpansiveness
        x2 = x + rng.normal(size=x.shape)
        px2 = np.atleast_2d(body.project(x2))
        gap = np.linalg.norm(px - px2, axis=1) - np.linalg.norm(x - x2, axis=1)
        assert gap.max() <= tol
        # separation: the displacement direction supports the body at proj x
        inner = ((x - px) * (px2 - px)).sum(axis=1)
        assert inner.max() <= tol * (1.0 + np.abs(x).max()) ** 2
        # margin: inward normals see interior points at depth >= their margin
        interior = np.atleast_2d(body.project(rng.normal(size=(n_probes, m))))
        margins = np.atleast_1d(body.boundary_margin(interior))
        for i in range(0, n_probes, 100):
            try:
                normal = body.inward_normal(px[i], 1e-9)
            except ValueError:
                continue
            depth = (interior - px[i]) @ normal
            assert (depth - margins >= -tol).all()
    elapsed = time.perf_counter() - start
    assert elapsed < 5.0
    announce("projection-properties",
             f"idempotence, nonexpansiveness, separation, margin at 1e-10 "
             f"on {n_probes} probes per body ({elapsed:.2f}s)")


def test_02_resolvent_matches_damped_fixed_point_oracle():
    rng = np.random.default_rng(77)
    counts = {"ball": 334, "box": 333, "polytope": 333}
    n_done, worst_match, worst_law = 0, 0.0, 0.0
    for kind, count in counts.items():
        for body in random_bodies(rng, kind, count):
            m = body.dim
            target = rng.normal(size=m, scale=3.0)
            w = 10.0 ** rng.uniform(-2.0, 3.0)
            got = np.asarray(penalty_resolvent(body, target, w))
            oracle = fixed_point_resolvent(body, target, w)
            worst_match = max(worst_match, float(np.abs(got - oracle).max()))
            lhs = float(body.distance(got)) * (1.0 + w)
            rhs = float(body.distance(target))
            worst_law = max(worst_law, abs(lhs - rhs))
            n_done += 1
    assert n_done == 1000
    assert worst_match <= 1e-12
    assert worst_law <= 1e-10
    announce("resolvent-oracle",
             f"1000 triples, worst oracle gap {worst_match:.2e} <= 1e-12, "
             f"worst distance-law residual {worst_law:.2e} <= 1e-10")


def test_03_martingale_solutions_recovered_exactly():
    start = time.perf_counter()
    inst_b = get_preset("brownian-martingale")
    scen_b = build_tree(inst_b.model)
    for sol in (solve_reflected_discrete(inst_b.problem, inst_b.domain, scen_b),
                solve_penalized(inst_b.problem, inst_b.domain, scen_b, n_level=16)):
        for t in range(scen_b.n_steps + 1):
            assert np.abs(sol.y[t] - scen_b.w_nodes(t)).max() <= 1e-12
        for t in range(scen_b.n_steps):
            assert np.abs(sol.z[t] - 1.0).max() <= 1e-12
        assert max(np.abs(k).max() for k in sol.k) == 0.0

    inst_j = get_preset("jump-martingale")
    lam = float(inst_j.model.intensities[0])
    scen_j = build_tree(inst_j.model)
    sol = solve_reflected_discrete(inst_j.problem, inst_j.domain, scen_j)
    for t in range(scen_j.n_steps + 1):
        expected = scen_j.counters(t)[:, :1] - lam * scen_j.times[t]
        assert np.abs(sol.y[t] - expected).max() <= 1e-12
    for t in range(scen_j.n_steps):
        assert np.abs(sol.v[t][:, :, 0] - 1.0).max() <= 1e-12
        assert np.abs(sol.z[t]).max() <= 1e-12
    assert max(np.abs(k).max() for k in sol.k) == 0.0
    elapsed = time.perf_counter() - start
    assert elapsed < 10.0
    announce("martingale-reduction",
             f"Brownian and compensated-jump solutions exact to 1e-12 with "
             f"zero compensator ({elapsed:.2f}s)")


def test_04_penalization_ladder_converges_at_unit_rate():
    start = time.perf_counter()
    inst = get_preset("clipped-brownian")
    scen = build_tree(inst.model)
    report = convergence_report(inst.problem, inst.domain, scen, [4, 16, 64, 256])
    assert all(b < a for a, b in zip(report.gaps, report.gaps[1:]))
    assert all(b < a for a, b in zip(report.violations, report.violations[1:]))
    assert -1.3 <= report.gap_slope <= -0.7
    elapsed = time.perf_counter() - start
    assert elapsed < 30.0
    announce("penalization-convergence",
             f"gaps {report.gaps[0]:.3e} -> {report.gaps[-1]:.3e} strictly "
             f"decreasing, slope {report.gap_slope:.3f} in [-1.3, -0.7] "
             f"({elapsed:.2f}s)")


def test_05_compensator_acts_only_at_boundary_and_minimally():
    inst = get_preset("moving-ball")
    beta = inst.margin
    scen = build_tree(inst.model)
    sol = solve_reflected_discrete(inst.problem, inst.domain, scen)
    worst_contact = 0.0
    inner = np.zeros(scen.n_leaves)
    tv = np.zeros(scen.n_leaves)
    for t in range(scen.n_steps):
        dk = sol.dk[t]
        active = np.linalg.norm(dk, axis=1) > 0.0
        if np.any(active):
            center = np.asarray(inst.domain.interior_at(sol.times[t]))
            margins = 1.0 - np.linalg.norm(sol.y[t][active] - center, axis=1)
            worst_contact = max(worst_contact, float(np.abs(margins).max()))
        a_rows = inst.domain.interior_at(sol.times[t], scen.w_nodes(t))
        inner += scen.expand_to_leaves(np.sum((sol.y[t] - a_rows) * dk, axis=1), t)
        tv += scen.expand_to_leaves(np.linalg.norm(dk, axis=1), t)
    assert tv.max() > 0.0
    assert worst_contact <= 1e-10
    slack = inner + beta * tv
    assert slack.max() <= 1e-8
    announce("flat-off-minimality",
             f"active compensator boundary contact {worst_contact:.2e} <= 1e-10; "
             f"per-branch minimality slack {slack.max():.2e} <= 1e-8")


def test_06_frozen_domain_gap_halves_when_resolution_doubles():
    path = get_preset("moving-ball").domain
    grid = np.linspace(0.0, path.horizon, 1601)
    gaps = [discretization_gap(path, discretize(path, j), grid)
            for j in (2, 4, 8, 16)]
    ratios = [a / b for a, b in zip(gaps, gaps[1:])]
    assert all(1.8 <= r <= 2.2 for r in ratios)
    announce("frozen-domain-gap",
             "sup-gap ratios " + ", ".join(f"{r:.3f}" for r in ratios)
             + " within [1.8, 2.2]")


def test_07_domain_perturbation_ladder_ratio_bounded():
    model = NoiseModel(brownian_dim=1, steps=8, horizon=1.0)
    scen = build_tree(model)
    prob = BsdeProblem(dim=1, brownian_dim=1, n_marks=0,
                       terminal=lambda w, c: np.clip(w[:, :1], -0.9, 0.9),
                       driver=lambda t, y, z, v: y, lipschitz=1.0)
    dom_a = StaticDomain(Ball([0.0], 1.0), horizon=1.0, interior=[0.0])
    base = solve_reflected_discrete(prob, dom_a, scen)
    ratios = []
    for g in (0.1, 0.05, 0.025):
        dom_b = StaticDomain(Ball([g / 2.0], 1.0 + g / 2.0), horizon=1.0,
                             interior=[g / 2.0])
        shifted = solve_reflected_discrete(prob, dom_b, scen)
        ratios.append(stability_gap(base, shifted, dom_a, dom_b).ratio)
    spread = max(ratios) / min(ratios)
    assert spread <= 4.0
    announce("stability-ladder",
             "ratios " + ", ".join(f"{r:.4f}" for r in ratios)
             + f", max/min {spread:.3f} <= 4")


def test_08_convexity_inequality_holds_along_scenarios():
    fractions = []
    for name in ("clipped-brownian", "moving-ball"):
        inst = get_preset(name)
        scen = build_tree(inst.model)
        penal = solve_penalized(inst.problem, inst.domain, scen, n_level=4)
        refl = solve_reflected_discrete(inst.problem, inst.domain, scen)
        for q in (1.5, 2.0):
            report = ito_tanaka_residual(penal, refl, q)
            assert report.ok_fraction >= 0.95
            fractions.append(report.ok_fraction)
    announce("convexity-inequality",
             "scenario pass fractions " + ", ".join(f"{f:.3f}" for f in fractions)
             + " all >= 0.95 for q in {1.5, 2}")


def test_09_energy_aggregate_uniform_on_all_presets():
    summaries = []
    for name in list_presets():
        inst = get_preset(name)
        scen = build_tree(inst.model)
        aggs = [apriori_aggregate(
                    solve_penalized(inst.problem, inst.domain, scen, n_level=n),
                    inst.domain, scen)
                for n in inst.n_levels]
        if max(aggs) <= 1e-14:
            summaries.append(f"{name} all-zero")
            continue
        ratio = max(aggs) / min(aggs)
        assert ratio <= 3.0
        summaries.append(f"{name} {ratio:.3f}")
    announce("aggregate-uniformity",
             "max/min over the penalty ladder: " + ", ".join(summaries)
             + " (bound 3)")


def _artifact_bytes(out_dir, skip=()):
    return {p.name: p.read_bytes() for p in sorted(out_dir.iterdir())
            if p.name not in skip}


def test_10_runs_reproduce_byte_identical_outputs(tmp_path):
    cfg_tree = preset_config(tmp_path, "clipped-brownian")
    out_a, out_b = tmp_path / "ta", tmp_path / "tb"
    assert cli_main(["--config", cfg_tree, "--out", str(out_a), "--quiet"]) == 0
    assert cli_main(["--config", cfg_tree, "--out", str(out_b), "--quiet"]) == 0
    assert _artifact_bytes(out_a) == _artifact_bytes(out_b)

    cfg_mc = preset_config(
        tmp_path, "clipped-brownian",
        "[mode]\nkind = \"mc\"\nn_paths = 600\nseed = 11\n"
        "\n[run]\nn_levels = [4, 16]\n", )
    out_c, out_d = tmp_path / "m1", tmp_path / "m3"
    assert cli_main(["--config", cfg_mc, "--out", str(out_c), "--quiet",
                     "--workers", "1"]) == 0
    assert cli_main(["--config", cfg_mc, "--out", str(out_d), "--quiet",
                     "--workers", "3"]) == 0
    skip = ("report.txt",)   # echoes the worker count
    assert _artifact_bytes(out_c, skip) == _artifact_bytes(out_d, skip)
    announce("determinism",
             "tree rerun and mc workers 1 vs 3 at fixed seed produce "
             "byte-identical tables")
