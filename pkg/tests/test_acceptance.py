"""Acceptance criteria, each at its stated tolerance.

Every test records one PASS/FAIL line; the lines are printed together at the
end of the pytest run (see conftest.py).  Run alone with

    pytest tests/test_acceptance.py -v
"""

import math
import time
from functools import lru_cache

import numpy as np
import pytest

from critbrw import cluster_stats as cs
from critbrw import mc_simulator as mc
from critbrw.cli import main as cli_main
from critbrw.goodness import geometric_chisquare
from critbrw.gw_analytics import BranchingParams, GWLaw, TailMode, conditional_tail
from critbrw.lattice_kernel import (
    heat_kernel,
    kernel_value,
    series_window,
    simple_random_walk,
    validate_jump_distribution,
)
from critbrw.moment_engine import conditional_second_moment, growth_order_fit

pytestmark = pytest.mark.acceptance

REPORT = []
BP = BranchingParams(1.0)
SRW1 = simple_random_walk(1)
THREADS = mc.default_threads()


def record(n, name, ok, detail, seconds=None):
    tag = "PASS" if ok else "FAIL"
    extra = f" [{seconds:.1f}s]" if seconds is not None else ""
    line = f"criterion {n:>4} {tag}  {name}: {detail}{extra}"
    REPORT.append(line)
    print(line)
    return ok


def within(value, target, se, k=3.0):
    return abs(value - target) <= k * se


# -- 1 --------------------------------------------------------------------------------

REFERENCE_WALKS = {
    "d1-srw": simple_random_walk(1),
    "d1-range2": validate_jump_distribution({1: 0.3, -1: 0.3, 2: 0.2, -2: 0.2}, 1),
    "d2-srw": simple_random_walk(2),
    "d2-diag": validate_jump_distribution(
        {(1, 0): .2, (-1, 0): .2, (0, 1): .2, (0, -1): .2,
         (1, 1): .05, (-1, -1): .05, (1, -1): .05, (-1, 1): .05}, 2),
    "d3-srw": simple_random_walk(3),
}


def test_c1_kernel_oracle_equivalence():
    t0 = time.perf_counter()
    worst = 0.0
    for jd in REFERENCE_WALKS.values():
        for t in (0.5, 1.0, 5.0, 20.0):
            grid = heat_kernel(jd, t, 10, grid_points_per_dim=256).values
            ref = series_window(jd, t, 10, tail_tol=1e-12)
            worst = max(worst, float(np.max(np.abs(grid - ref))))
    dt = time.perf_counter() - t0
    ok = worst <= 1e-8 and dt < 60
    assert record(1, "heat kernel vs uniformization series", ok,
                  f"max |diff| = {worst:.2e} (tol 1e-8), runtime {dt:.1f}s (< 60s)")


# -- 2 --------------------------------------------------------------------------------

def test_c2_conservation():
    t0 = time.perf_counter()
    jd, T = SRW1, 10.0
    mass = float(heat_kernel(jd, T, 120, grid_points_per_dim=256).values.sum())
    masses = [mass]
    for d in (2, 3):
        masses.append(float(heat_kernel(simple_random_walk(d), T, 60, 128).values.sum()))
    quad_err = max(abs(m - 1) for m in masses)

    cfg = mc.SimConfig(jd, BP, T, initial_window_radius=30, master_seed=2024)
    occ, capped = mc.field_occupancy(cfg, 10**5, 2, threads=THREADS)
    per_rep = occ[~capped].mean(axis=1)
    mean = per_rep.mean()
    se = per_rep.std(ddof=1) / math.sqrt(len(per_rep))
    dt = time.perf_counter() - t0
    ok = quad_err <= 1e-12 and within(mean, 1.0, se) and dt < 300
    assert record(2, "first-moment conservation", ok,
                  f"|sum p - 1| = {quad_err:.1e}; density at |y|<=2 = {mean:.4f} +- {se:.4f} "
                  f"(10^5 field replicas)", dt)


# -- 3 --------------------------------------------------------------------------------

def test_c3_gw_laws():
    t0 = time.perf_counter()
    T = 10.0
    cfg = mc.SimConfig(SRW1, BP, T, master_seed=3)
    batch = mc.simulate_replicas(cfg, 10**6, threads=THREADS)
    n = batch.counts[~batch.capped]
    p = 1 / 11
    frac = float((n > 0).mean())
    se_bin = math.sqrt(p * (1 - p) / len(n))
    surv = n[n > 0]
    cmean = float(surv.mean())
    se_mean = float(surv.std(ddof=1) / math.sqrt(len(surv)))
    gof = geometric_chisquare(surv, p)
    dt = time.perf_counter() - t0
    ok = within(frac, p, se_bin) and within(cmean, 11.0, se_mean) and gof.p_value > 1e-3 and dt < 300
    assert record(3, "Galton-Watson laws", ok,
                  f"survival {frac:.5f} vs {p:.5f} +- {se_bin:.5f}; conditional mean "
                  f"{cmean:.3f} vs 11 +- {se_mean:.3f}; geometric chi2 p = {gof.p_value:.3f}", dt)


# -- 4 --------------------------------------------------------------------------------

def test_c4_exponential_limit():
    t0 = time.perf_counter()
    big = GWLaw(BP, 1e4)
    limit_err = max(abs(conditional_tail(big, s, TailMode.EXACT) - math.exp(-s)) for s in (0.5, 1, 2))
    T = 100.0
    cfg = mc.SimConfig(SRW1, BP, T, master_seed=4)
    batch = mc.simulate_replicas(cfg, 10**6, threads=THREADS)
    surv = batch.counts[(~batch.capped) & (batch.counts > 0)]
    law = GWLaw(BP, T)
    parts, ok_mc = [], True
    for s in (0.5, 1.0, 2.0):
        exact = conditional_tail(law, s)
        obs = float((surv / (T + 1) > s).mean())
        se = math.sqrt(exact * (1 - exact) / len(surv))
        ok_mc &= within(obs, exact, se)
        parts.append(f"s={s}: {obs:.4f} vs {exact:.4f} +- {se:.4f}")
    dt = time.perf_counter() - t0
    ok = limit_err <= 1e-3 and ok_mc and dt < 600
    assert record(4, "exponential limit law", ok,
                  f"max |exact(1e4) - e^-s| = {limit_err:.1e}; simulated " + "; ".join(parts), dt)


# -- 5 --------------------------------------------------------------------------------

def test_c5_conditioned_occupancy():
    t0 = time.perf_counter()
    T, k = 1.0, 5
    cfg = mc.SimConfig(SRW1, BP, T, master_seed=5)
    batch = mc.simulate_replicas(cfg, 7 * 10**6, tally_radius=2, threads=THREADS)
    lvl = mc.estimate_statistics(batch, mc.ConditionalOccupancy((0,), k))
    target = k * kernel_value(SRW1, T, (0,))
    ok = lvl.count >= 10**5 and within(lvl.value, target, lvl.stderr)
    parts = [f"k=5: {lvl.value:.4f} vs {target:.4f} +- {lvl.stderr:.4f} ({lvl.count} retained)"]
    for r in (0, 1, 2):
        est = mc.estimate_statistics(batch, mc.SurvivalOccupancy((r,)))
        pred = (T + 1) * kernel_value(SRW1, T, (r,))
        ok &= within(est.value, pred, est.stderr)
        parts.append(f"r={r}: {est.value:.4f} vs {pred:.4f} +- {est.stderr:.4f}")
    dt = time.perf_counter() - t0
    assert record(5, "conditioned occupancy", ok, "; ".join(parts), dt)


# -- 6 --------------------------------------------------------------------------------

def test_c6_second_moment_vs_monte_carlo():
    t0 = time.perf_counter()
    T, m = 20.0, 20
    analytic = conditional_second_moment(SRW1, BP, T, (0,), (0,), m, rtol=1e-4).value
    cfg = mc.SimConfig(SRW1, BP, T, master_seed=6)
    batch = mc.simulate_replicas(cfg, 10**7, tally_radius=0, threads=THREADS)
    est = mc.estimate_statistics(batch, mc.ConditionalFactorialMoment((0,), m))
    dt = time.perf_counter() - t0
    ok = within(est.value, analytic, est.stderr) and len(batch) >= 10**7 and dt < 1800
    assert record(6, "conditional second moment vs Monte Carlo", ok,
                  f"analytic {analytic:.4f}; MC {est.value:.4f} +- {est.stderr:.4f} "
                  f"({est.count} replicas with n_x = 20 of 10^7)", dt)


# -- 7 / 8 ----------------------------------------------------------------------------

T_GRID = (25, 50, 100, 200, 400)


@lru_cache(maxsize=None)
def growth_samples(d):
    jd = simple_random_walk(d)
    x = (0,) * d
    return tuple((t, conditional_second_moment(jd, BP, float(t), x, x, t).value) for t in T_GRID)


def test_c7_growth_d1():
    t0 = time.perf_counter()
    fit = growth_order_fit(growth_samples(1))
    ok = abs(fit.exponent - 1.0) <= 0.1
    assert record("7a", "growth order d=1", ok, f"exponent {fit.exponent:.4f} (1.0 +- 0.1)",
                  time.perf_counter() - t0)


def test_c7_growth_d2():
    t0 = time.perf_counter()
    fit = growth_order_fit(growth_samples(2))
    devs = [abs(r - p) for r, p in zip(fit.ratios, fit.log_pattern)]
    ok = fit.log_flag and max(devs) <= 0.05
    assert record("7b", "growth order d=2", ok,
                  f"log flag {fit.log_flag} (log-fit residual {fit.log_residual:.1e}); "
                  f"|ratio - (1 + ln2/ln t)| = " + ", ".join(f"{v:.3f}" for v in devs)
                  + " (tol 0.05)", time.perf_counter() - t0)


def test_c7_growth_d3():
    t0 = time.perf_counter()
    fit = growth_order_fit(growth_samples(3))
    ok = abs(fit.exponent + 0.5) <= 0.15
    assert record("7c", "growth order d=3", ok, f"exponent {fit.exponent:.4f} (-0.5 +- 0.15)",
                  time.perf_counter() - t0)


BOUND_SHAPES = {1: lambda t: t, 2: lambda t: math.log(t), 3: lambda t: t ** -0.5}


def test_c8_upper_bounds():
    # c is calibrated on the two smallest times (25% headroom) and must then
    # dominate the whole grid; a growth faster than the bound would break it
    parts, ok = [], True
    for d, g in BOUND_SHAPES.items():
        ratios = [v / g(t) for t, v in growth_samples(d)]
        c = 1.25 * max(ratios[:2])
        dom = all(v <= c * g(t) for t, v in growth_samples(d))
        ok &= dom
        parts.append(f"d={d}: c={c:.4f}, M2/bound in [{min(ratios):.4f}, {max(ratios):.4f}]")
    assert record(8, "upper bounds", ok, "; ".join(parts))


# -- 9 --------------------------------------------------------------------------------

def test_c9_cluster_statistics():
    t0 = time.perf_counter()
    f1 = cs.surviving_origins(cs.BernoulliExact(1, 10**6, 1.0, 99.0, seed=9))
    gaps = cs.gap_statistics_1d(f1)
    f2 = cs.surviving_origins(cs.BernoulliExact(2, 10**3, 1.0, 100.0, seed=9))
    cen = cs.empty_cell_census_2d(f2, 100.0, 1.0)
    mu = cen.predicted_mean
    dt = time.perf_counter() - t0
    ok = gaps.p_value > 1e-3 and abs(cen.empty_cells - mu) <= 4 * math.sqrt(mu) and dt < 300
    assert record(9, "cluster statistics", ok,
                  f"gap mean {gaps.mean:.2f} +- {gaps.stderr:.2f}, geometric chi2 p = "
                  f"{gaps.p_value:.3f}; empty cells {cen.empty_cells} vs mu_t {mu:.1f} +- "
                  f"{4 * math.sqrt(mu):.1f} (side {cen.cell_side}; unrounded mu_t "
                  f"{cen.asymptotic_mean:.1f})", dt)


# -- 10 -------------------------------------------------------------------------------

DETERMINISM_RUNS = [
    ["simulate", "subpop", "--seed", "42", "--replicas", "200", "--t", "8"],
    ["simulate", "field", "--seed", "7", "--window", "20", "--t", "4", "--replicas", "3"],
    ["clusters", "gaps", "--seed", "5", "--window", "5000", "--t", "9"],
    ["clusters", "gaps", "--seed", "5", "--window", "300", "--t", "3", "--source", "simulation"],
    ["clusters", "cells", "--seed", "5", "--dim", "2", "--window", "100", "--t", "20"],
    ["clusters", "profile", "--seed", "5", "--window", "200", "--t", "4", "--replicas", "2"],
]


def test_c10_determinism(tmp_path):
    bad = []
    for i, argv in enumerate(DETERMINISM_RUNS):
        outs = []
        for j, threads in enumerate(("1", "1", "4")):
            path = tmp_path / f"{i}_{j}.out"
            assert cli_main(argv + ["--threads", threads, "--out", str(path)]) == 0
            outs.append(path.read_bytes())
        if len(set(outs)) != 1:
            bad.append(" ".join(argv[:2]))
    ok = not bad
    assert record(10, "byte-identical CLI output", ok,
                  f"{len(DETERMINISM_RUNS)} commands x threads 1,1,4"
                  + (f"; differing: {bad}" if bad else ""))
