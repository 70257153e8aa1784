"""End-to-end acceptance checks, one test per criterion.

Each test records a PASS/FAIL line that is printed in the terminal summary.
"""

import math
import time

import numpy as np
import pytest

from ddefix import demos
from ddefix.contraction import fixed_point
from ddefix.grid import Grid, GridFunction, Weight, quadrature_tolerance, sobolev_constant, weighted_norm
from ddefix.operators import (
    AntiDeriv,
    Forcing,
    HistoryMap,
    KernelConv,
    Scale,
    Shift,
    Sum,
    antiderivative,
    apply,
    default_probe_grid,
    empirical_operator_norm,
    lipschitz_bound,
)
from ddefix.solver import Problem, check_causality, compare_nu, solve, solve_ivp
from ddefix.verify import cantor_function, conjugation, method_of_steps


def delay_problem(h=1e-3, **kw):
    return Problem(Scale(-1.0) @ Shift(-1.0), Grid.from_span(-1.0, 4.0, h), 1, (Forcing.dirac(-1.0, 1.0),), **kw)


def test_criterion_01_operator_norms(criterion):
    details, ok = [], True

    start = time.perf_counter()
    val = empirical_operator_norm(Shift(-1.0), Weight(1.0, 2.0))
    elapsed = time.perf_counter() - start
    good = abs(val - math.exp(-1)) <= 1e-6 and elapsed < 10
    ok &= good
    details.append(f"shift |{val:.9f} - e^-1| = {abs(val - math.exp(-1)):.1e}")

    # the sup-mode cut-off probe e^{nu t} 1_[0, 2n) attains 0.5 (1 - e^{-4n})
    start = time.perf_counter()
    w = Weight(2.0, math.inf)
    grid = default_probe_grid(AntiDeriv(), w)
    n = (grid.t_end - grid.t_start) / 2
    val = empirical_operator_norm(AntiDeriv(), w, grid=grid)
    elapsed = time.perf_counter() - start
    lower, upper = 0.5 * (1 - math.exp(-4 * n)), 0.5 * (1 + quadrature_tolerance(grid, w))
    good = lower < val <= upper and elapsed < 10
    ok &= good
    details.append(f"antideriv {lower:.9f} < {val:.9f} <= {upper:.9f}")

    start = time.perf_counter()
    w = Weight(2.0, 2.0)
    hist = HistoryMap(1.0)
    bound = lipschitz_bound(hist, w)
    grid = default_probe_grid(hist, w)
    val = empirical_operator_norm(hist, w, grid=grid)
    elapsed = time.perf_counter() - start
    good = abs(bound - 0.5) <= 1e-12 and val <= 0.5 * (1 + quadrature_tolerance(grid, w)) and elapsed < 10
    ok &= good
    details.append(f"history bound {bound:.6f}, empirical {val:.6f}")

    criterion(1, ok, "; ".join(details))
    assert ok


def _random_affine(rng, grid):
    h = grid.step
    terms = [Scale(rng.standard_normal())]
    for theta in rng.choice([0.2, 0.5, 1.0, 1.5], size=2, replace=False):
        terms.append(Scale(rng.standard_normal()) @ Shift(-round(theta / h) * h))
    decay = rng.uniform(0.5, 3.0)
    terms.append(KernelConv(lambda s: _exp_kernel(s, decay), 1.0))
    terms.append(Scale(rng.standard_normal()) @ AntiDeriv(1))
    return Sum(terms)


def _exp_kernel(s, decay):
    return np.exp(-decay * np.asarray(s))


def _assemble(expr, grid):
    n = grid.count
    cols = np.empty((n, n))
    for k in range(n):
        e = np.zeros(n)
        e[k] = 1.0
        cols[:, k] = apply(expr, GridFunction(grid, e)).values[:, 0]
    return cols


def test_criterion_02_contraction_certificates(criterion):
    rng = np.random.default_rng(20240601)
    grid = Grid.from_span(0.0, 4.0, 0.01)
    t = grid.nodes
    worst_ratio_excess, violations, checked = -math.inf, 0, 0
    start = time.perf_counter()
    for _ in range(100):
        p = float(rng.choice([2.0, 3.0, math.inf]))
        w = Weight(float(rng.choice([1.0, 2.0])), p)
        raw = _random_affine(rng, grid)
        target = rng.uniform(0.1, 0.9)
        expr = Scale(target / lipschitz_bound(raw, w)) @ raw
        lip = lipschitz_bound(expr, w)
        coef = rng.standard_normal(3)
        # b vanishes at the grid start, so no iterate jumps and the node matrix represents the map exactly
        b = GridFunction(grid, sum(c * np.sin((k + 1) * t) for k, c in enumerate(coef)) * (t <= rng.uniform(1, 4)))

        def norm(f):
            return weighted_norm(f, w)

        # loose stopping tolerances keep most certificates above the quadrature tolerance
        tol = 10.0 ** rng.uniform(-3, -1)
        x, trace = fixed_point(lambda u: apply(expr, u) + b, norm, lip, b, tol=tol, max_iter=2000)
        if trace.ratios[1:]:
            worst_ratio_excess = max(worst_ratio_excess, max(trace.ratios[1:]) - lip)
        M = _assemble(expr, grid)
        ref = GridFunction(grid, np.linalg.solve(np.eye(grid.count) - M, b.values[:, 0]))
        if quadrature_tolerance(grid, w) < trace.certificate:
            checked += 1
            if norm(x - ref) > trace.certificate:
                violations += 1
    elapsed = time.perf_counter() - start
    ok = worst_ratio_excess <= 0.05 and violations == 0 and elapsed < 60
    criterion(2, ok, f"max(ratio - lip) = {worst_ratio_excess:.3e}, certificate violations {violations}/{checked}, "
                     f"{elapsed:.1f} s")
    assert ok


def test_criterion_03_delay_benchmark(criterion):
    oracle = method_of_steps(0.0, -1.0, 1.0, 1.0, 4.0)
    u = solve(delay_problem()).solution
    e1, e2 = abs(u(1.0)[0, 0]), abs(u(2.0)[0, 0] + 0.5)

    def max_err(h):
        sol = solve(delay_problem(h=h, tol=1e-13)).solution
        return float(np.max(np.abs(sol.values[:, 0] - oracle(sol.grid.nodes))))

    ratio = max_err(1e-3) / max_err(5e-4)
    ok = e1 <= 1e-6 and e2 <= 1e-6 and 3.5 <= ratio <= 4.5
    criterion(3, ok, f"|x(1)| = {e1:.1e}, |x(2) + 0.5| = {e2:.1e}, error ratio on halving h = {ratio:.3f}")
    assert ok


def test_criterion_04_ivp_benchmark(criterion):
    grid = Grid.from_span(0.0, 3.0, 1e-3)
    report = solve_ivp(Scale(1.0), 1.0, grid)
    err = float(np.max(np.abs(report.solution.values[:, 0] - np.exp(grid.nodes))))
    u0_plus = report.solution.values[grid.index_of(0.0), 0]
    ok = err <= 5e-5 and u0_plus == 1.0
    criterion(4, ok, f"max|u - e^t| = {err:.2e}, u(0+) = {float(u0_plus)!r}")
    assert ok


def test_criterion_05_causality_of_every_demo(criterion):
    changes = {}
    for name in demos.DEMOS:
        spec = demos.spec(name)
        t_cut, pert = spec.perturbation()
        changes[name] = check_causality(spec.build(), t_cut, pert).max_pre_cut_change
    worst = max(changes.values())
    ok = worst <= 1e-10
    criterion(5, ok, f"largest pre-cut change over {len(changes)} demos = {worst:.1e}")
    assert ok


def test_criterion_06_nu_independence(criterion):
    res = compare_nu(delay_problem(tol=1e-12), 2.0, 4.0)
    ok = res.max_abs_diff <= 1e-8
    criterion(6, ok, f"max |u_2 - u_4| = {res.max_abs_diff:.2e}")
    assert ok


def test_criterion_07_sobolev_constant(criterion):
    rng = np.random.default_rng(7)
    grid = Grid.from_span(0.0, 8.0, 1e-3)
    t = grid.nodes
    worst = 0.0
    for _ in range(50):
        # support [c - r, c + r] stays inside the grid so f' is fully seen by the norm
        r = rng.uniform(0.3, 2.0)
        c, a = rng.uniform(r + 0.01, 8.0 - r - 0.01), rng.standard_normal()
        z = (t - c) / r
        inside = np.abs(z) < 1
        zi = np.where(inside, z, 0.0)
        bump = np.where(inside, a * np.exp(-1.0 / np.where(inside, 1 - zi**2, 1.0)), 0.0)
        # d/dt exp(-1 / (1 - z^2)) = -2 z / (r (1 - z^2)^2) exp(-1 / (1 - z^2))
        dbump = np.where(inside, bump * (-2 * zi) / (r * np.where(inside, 1 - zi**2, 1.0) ** 2), 0.0)
        df = GridFunction(grid, dbump)
        for nu in (1.0, 2.0, 4.0):
            w = Weight(nu, 2.0)
            lhs = float(np.max(np.exp(-nu * t) * np.abs(bump)))
            rhs = sobolev_constant(w) * weighted_norm(df, w) * (1 + quadrature_tolerance(grid, w))
            worst = max(worst, lhs / rhs)
    ok = worst <= 1.0
    criterion(7, ok, f"largest sup / Sobolev bound over 150 cases = {worst:.4f}")
    assert ok


def test_criterion_08_measure_forcing(criterion):
    cantor = solve(demos.problem("cantor-forcing")).solution
    expected = np.array([cantor_function(s) for s in cantor.grid.nodes])
    mismatches = int(np.count_nonzero(cantor.values[:, 0] != expected))
    flow = solve(demos.problem("commutator-flow")).solution
    ref = conjugation(demos.COMMUTATOR_T, demos.COMMUTATOR_K)(1.0)
    err = float(np.max(np.abs(flow(1.0)[0].reshape(2, 2) - ref)))
    ok = mismatches == 0 and err <= 1e-6
    criterion(8, ok, f"cantor mismatched nodes = {mismatches}, |S(1) - e^T K e^-T| = {err:.1e}")
    assert ok


def test_criterion_09_neutral_benchmark(criterion):
    x2 = solve(demos.problem("neutral-first-order")).solution(2.0)[0, 0]
    ok = abs(x2 - 2.5) <= 1e-6
    criterion(9, ok, f"x(2) = {x2:.12f}")
    assert ok


def test_criterion_10_perturbation_bound(criterion):
    # F(u) = A u + f and G(u) = A u + g with the step lip exactly 1/2 at nu = 2;
    # the sup-difference of the steps is |antiderivative(f - g)|, attained by every probe
    rng = np.random.default_rng(10)
    grid = Grid.from_span(0.0, 4.0, 1e-3)
    t = grid.nodes
    nu = 2.0
    w = Weight(nu, 2.0)
    worst = 0.0
    for _ in range(20):
        theta = rng.uniform(0.1, 1.0)
        a = rng.uniform(0.0, 1.0)
        raw = Scale(a) + Scale(1.0 - a) @ Shift(-round(theta / grid.step) * grid.step)
        rhs = Scale(nu * 0.5 / lipschitz_bound(raw, w)) @ raw
        f = GridFunction(grid, np.cos(rng.uniform(0, 3) * t) * rng.standard_normal())
        g = GridFunction(grid, np.sin(rng.uniform(0, 3) * t) * rng.standard_normal())
        solutions = []
        for forcing in (f, g):
            prob = Problem(rhs, grid, 1, (Forcing.grid(forcing), Forcing.dirac(0.0, 1.0)), nu=nu, tol=1e-13)
            report = solve(prob)
            assert report.lip_at_nu == pytest.approx(0.5)
            solutions.append(report.solution)
        sup_diff = weighted_norm(antiderivative(f - g), w)
        dist = weighted_norm(solutions[0] - solutions[1], w)
        worst = max(worst, dist / (2 * sup_diff))
    ok = worst <= 1.0
    criterion(10, ok, f"largest distance / (2 sup_diff) over 20 pairs = {worst:.4f}")
    assert ok
