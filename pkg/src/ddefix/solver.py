"""Solution of delay, neutral and integro-differential equations by weighted Picard iteration.

Three forms are supported:

``derivative``
    ``u' = F(u) + g``; iterate ``u <- antiderivative(F(u)) + G``, where ``G`` is
    the antiderivative of the forcing ``g``.  The step is Lipschitz with
    constant ``Lip(F)/nu``.
``neutral``
    ``u' = F(u, u') + g`` with ``F`` acting on the stacked pair ``(u, u')``;
    iterate on the derivative ``v``.  Dirac and measure forcing enter ``u``
    through their antiderivative (a jump part ``J``), grid forcing enters ``v``
    directly.  Step constant ``Lip(F) (1 + 1/nu)``.
``fixed_point``
    ``u = F(u) + antiderivative^order(g)``, for equations already written in
    fixed-point form.  Step constant ``Lip(F)``.

History data is encoded in the forcing on a grid that starts before the
history window, e.g. a constant history ``x = c`` on ``[-tau, 0]`` is the
forcing ``c delta_{-tau}``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .contraction import FixedPointTrace, fixed_point, lifted_fixed_point
from .errors import (
    DDEFixError,
    DimensionError,
    DivergenceError,
    InvalidInputError,
    NotContractionError,
    NotEventuallyContractingError,
)
from .grid import Grid, GridFunction, Weight, quadrature_tolerance, sobolev_constant, weighted_norm
from .operators import (
    AntiDeriv,
    Forcing,
    NormBound,
    OperatorExpr,
    antiderivative,
    apply,
    forcing_antiderivative,
    lipschitz_bound,
)

FORMS = ("derivative", "neutral", "fixed_point")
NU_MAX = 2.0**20


def _admissible_nu(bound: Callable[[float], float], target: float) -> float:
    if not 0 < target < 1:
        raise InvalidInputError(f"target contraction must lie in (0, 1), got {target}")
    nu = 1.0
    while nu <= NU_MAX:
        if bound(nu) <= target:
            return nu
        nu *= 2.0
    raise NotEventuallyContractingError(
        f"Lipschitz bound {bound(NU_MAX):.6g} at nu={NU_MAX:g} still exceeds target {target}"
    )


def select_nu(rhs: OperatorExpr, p: float, target: float = 0.5) -> float:
    """First ``nu`` in ``1, 2, 4, ..., 2^20`` with ``lipschitz_bound(rhs, nu) <= target``."""
    nb = rhs.norm_bound(float(p))
    return _admissible_nu(nb, target)


@dataclass(frozen=True, eq=False)
class Problem:
    rhs: OperatorExpr
    grid: Grid
    dim: int
    forcing: tuple[Forcing, ...] = ()
    p: float = 2.0
    form: str = "derivative"
    order: int = 1
    target_contraction: float = 0.5
    tol: float = 1e-10
    max_iter: int = 500
    nu: float | None = None

    def __post_init__(self):
        forcing = self.forcing
        if isinstance(forcing, Forcing):
            forcing = (forcing,)
        object.__setattr__(self, "forcing", tuple(forcing))
        object.__setattr__(self, "p", float(self.p))
        if self.form not in FORMS:
            raise InvalidInputError(f"form must be one of {FORMS}, got {self.form!r}")
        if int(self.dim) != self.dim or self.dim < 1:
            raise InvalidInputError(f"dim must be a positive integer, got {self.dim}")
        if not self.p > 1:
            raise InvalidInputError(f"p must lie in (1, inf], got {self.p}")
        if self.order < 1:
            raise InvalidInputError("order must be >= 1")
        if self.tol < 0 or self.max_iter < 1:
            raise InvalidInputError("tol must be >= 0 and max_iter >= 1")
        if self.nu is not None and not self.nu > 0:
            raise InvalidInputError(f"nu override must be positive, got {self.nu}")
        for g in self.forcing:
            if g.dim != self.dim:
                raise DimensionError(f"forcing has dimension {g.dim}, problem has {self.dim}")
            if self.form == "neutral" and g.kind == "grid" and g.function.grid.t_end < self.grid.t_end:
                raise InvalidInputError("grid forcing must cover the problem grid")
        in_dim = 2 * self.dim if self.neutral else self.dim
        if self.rhs.in_dim is not None and self.rhs.in_dim != in_dim:
            raise DimensionError(f"rhs expects input dimension {self.rhs.in_dim}, problem needs {in_dim}")
        probe = Grid(self.grid.t_start, self.grid.step, 2)
        out = apply(self.rhs, GridFunction.zeros(probe, in_dim))
        if out.dim != self.dim:
            raise DimensionError(f"rhs produces dimension {out.dim}, problem has {self.dim}")

    @property
    def neutral(self) -> bool:
        return self.form == "neutral"

    def weight(self, nu: float) -> Weight:
        return Weight(nu, self.p)

    def replace(self, **changes) -> Problem:
        return replace(self, **changes)

    def step_bound(self) -> NormBound:
        """Lipschitz constant of one Picard step as a function of ``nu``."""
        nb = self.rhs.norm_bound(self.p)
        if self.form == "derivative":
            return nb * NormBound.inverse_power(1)
        if self.form == "neutral":
            return nb * NormBound(lambda nu: 1.0 + 1.0 / nu, "(1 + 1/nu)")
        return nb


@dataclass
class SolveReport:
    solution: GridFunction
    nu_used: float
    lip_at_nu: float
    rhs_bound: float
    trace: FixedPointTrace
    certified_error: float
    quadrature_tolerance: float
    form: str
    p: float
    derivative: GridFunction | None = None
    checks: dict = field(default_factory=dict)

    @property
    def iterations(self) -> int:
        return self.trace.iterations

    @property
    def weight(self) -> Weight:
        return Weight(self.nu_used, self.p)

    def pointwise_error_bound(self) -> np.ndarray:
        """Bound on ``|u(t_i) - u*(t_i)|`` at every node, from the weighted certificate.

        Sup mode uses ``e^{nu t}`` directly; L_p mode needs the derivative of the
        error and converts with ``(q nu)^{-1/q}``.  For the fixed-point form in
        L_p mode no pointwise statement is available (returns ``inf``).
        """
        w = self.weight
        t = self.solution.grid.nodes
        cert = self.certified_error
        with np.errstate(over="ignore"):
            growth = np.exp(w.nu * t)
        if self.form == "fixed_point":
            if w.is_sup:
                return growth * cert
            return np.full(t.shape, math.inf)
        if self.form == "neutral":
            return growth * sobolev_constant(w) * cert
        if w.is_sup:
            return growth * cert
        d_last = self.trace.distances[-1] if self.trace.distances else math.inf
        return growth * sobolev_constant(w) * self.rhs_bound * (d_last + cert)

    def summary(self) -> dict:
        return {
            "schema": 1,
            "form": self.form,
            "p": "inf" if math.isinf(self.p) else self.p,
            "nu_used": self.nu_used,
            "lip_at_nu": self.lip_at_nu,
            "iterations": self.iterations,
            "termination": self.trace.reason,
            "certified_error": self.certified_error,
            "quadrature_tolerance": self.quadrature_tolerance,
        }


def _stack(a: GridFunction, b: GridFunction) -> GridFunction:
    values = np.hstack([a.values, b.values])
    if a.has_jumps or b.has_jumps:
        return GridFunction(a.grid, values, np.hstack([a.left, b.left]))
    return GridFunction(a.grid, values)


def _sum(fs: Sequence[GridFunction], grid: Grid, dim: int) -> GridFunction:
    total = GridFunction.zeros(grid, dim)
    for f in fs:
        total = total + f
    return total


def resolve_nu(prob: Problem) -> tuple[float, float]:
    """``(nu, step Lipschitz bound)``: the override if set, else the first admissible power of two."""
    bound = prob.step_bound()
    if prob.nu is None:
        nu = _admissible_nu(bound, prob.target_contraction)
    else:
        nu = float(prob.nu)
    lip = bound(nu)
    if lip >= 1:
        raise NotContractionError(f"step Lipschitz bound {lip:.6g} >= 1 at nu={nu:g}")
    return nu, lip


def solve(prob: Problem) -> SolveReport:
    """Solve ``prob`` by Picard iteration in the weighted space at the selected ``nu``."""
    nu, lip = resolve_nu(prob)
    w = prob.weight(nu)
    grid, dim = prob.grid, prob.dim

    def norm(f: GridFunction) -> float:
        return weighted_norm(f, w)

    derivative = None
    if prob.form == "neutral":
        jump = _sum([forcing_antiderivative(g, grid, dim) for g in prob.forcing if g.singular], grid, dim)
        regular = _sum([g.on_grid(grid) for g in prob.forcing if not g.singular], grid, dim)

        def step(v: GridFunction) -> GridFunction:
            u = antiderivative(v) + jump
            return apply(prob.rhs, _stack(u, v)) + regular

        u, derivative, trace = lifted_fixed_point(
            step, norm, lip, regular, prob.tol, prob.max_iter, offset=jump
        )
    else:
        g0 = _sum([forcing_antiderivative(g, grid, dim) for g in prob.forcing], grid, dim)
        if prob.form == "fixed_point" and prob.order > 1:
            g0 = apply(AntiDeriv(prob.order - 1), g0)
        integrate = prob.form == "derivative"

        def step(x: GridFunction) -> GridFunction:
            fx = apply(prob.rhs, x)
            return (antiderivative(fx) if integrate else fx) + g0

        u, trace = fixed_point(step, norm, lip, g0, prob.tol, prob.max_iter)

    if trace.reason == "divergence":
        raise DivergenceError(
            f"iteration diverged after {trace.iterations} steps although the declared "
            f"step bound is {lip:.4g}; check the declared Lipschitz constants",
            trace,
        )
    return SolveReport(
        solution=u,
        derivative=derivative,
        nu_used=nu,
        lip_at_nu=lip,
        rhs_bound=lipschitz_bound(prob.rhs, w),
        trace=trace,
        certified_error=trace.certificate,
        quadrature_tolerance=quadrature_tolerance(grid, w),
        form=prob.form,
        p=prob.p,
    )


def solve_ivp(
    rhs: OperatorExpr,
    u0,
    grid: Grid,
    *,
    forcing: Sequence[Forcing] = (),
    **params,
) -> SolveReport:
    """Initial value problem ``u' = F(u)`` for ``t > 0`` with ``u(0+) = u0``.

    ``rhs`` must vanish on inputs supported in ``(-inf, 0]``; 0 must be a grid node.
    After solving, the jump of ``u`` at 0 is checked to equal ``u0``.
    """
    u0 = np.atleast_1d(np.asarray(u0, dtype=float))
    k0 = grid.index_of(0.0)
    if k0 is None:
        raise InvalidInputError("t = 0 must be a node of the grid")
    prob = Problem(rhs, grid, u0.size, tuple(forcing) + (Forcing.dirac(0.0, u0),), **params)
    report = solve(prob)
    u = report.solution
    before = u.left[k0]
    after = u.values[k0]
    scale = max(1.0, float(np.max(np.abs(u0))))
    report.checks = {
        "u(0-)": before.tolist(),
        "u(0+)": after.tolist(),
        "jump_error": float(np.max(np.abs(after - before - u0))),
    }
    if np.max(np.abs(before)) > 1e-12 * scale or report.checks["jump_error"] > 1e-12 * scale:
        raise DDEFixError(
            f"initial condition not reproduced: u(0-)={before}, u(0+)={after}; "
            "is the right-hand side past-trivial?"
        )
    return report


def _run_pair(prob_a: Problem, prob_b: Problem) -> tuple[SolveReport, SolveReport]:
    with ThreadPoolExecutor(max_workers=2) as pool:
        fa = pool.submit(solve, prob_a)
        fb = pool.submit(solve, prob_b)
        return fa.result(), fb.result()


@dataclass
class CausalityReport:
    t_cut: float
    max_pre_cut_change: float
    allowance: float
    passed: bool


def check_causality(prob: Problem, t_cut: float, perturbation: Forcing) -> CausalityReport:
    """Perturb the forcing on ``[t_cut, inf)`` and measure the change before ``t_cut``.

    Both solves run at the same ``nu`` and, if their iteration counts differ,
    the shorter one is re-run to the same count, so that the comparison is not
    polluted by different stopping points.
    """
    if not perturbation.vanishes_before(t_cut):
        raise InvalidInputError(f"perturbation is not supported in [{t_cut}, inf)")
    nu, _ = resolve_nu(prob)
    base = prob.replace(nu=nu)
    pert = base.replace(forcing=prob.forcing + (perturbation,))
    ra, rb = _run_pair(base, pert)
    if ra.iterations != rb.iterations:
        n = max(ra.iterations, rb.iterations)
        if ra.iterations < n:
            ra = solve(base.replace(tol=0.0, max_iter=n))
        else:
            rb = solve(pert.replace(tol=0.0, max_iter=n))
    pre = prob.grid.nodes < t_cut - 1e-9 * prob.grid.step
    if not np.any(pre):
        return CausalityReport(t_cut, 0.0, 0.0, True)
    diff = np.abs(ra.solution.values[pre] - rb.solution.values[pre])
    change = float(np.max(diff))
    allowance = 2.0 * float(np.max(ra.pointwise_error_bound()[pre] + rb.pointwise_error_bound()[pre]))
    return CausalityReport(t_cut, change, allowance, change <= max(allowance, 1e-10))


@dataclass
class NuComparison:
    nu1: float
    nu2: float
    max_abs_diff: float
    allowance: float
    passed: bool


def compare_nu(prob: Problem, nu1: float, nu2: float) -> NuComparison:
    """Solve with two forced weights on the same grid and compare the solutions nodewise."""
    ra, rb = _run_pair(prob.replace(nu=nu1), prob.replace(nu=nu2))
    diff = float(np.max(np.abs(ra.solution.values - rb.solution.values)))
    with np.errstate(invalid="ignore"):
        allowance = float(np.max(ra.pointwise_error_bound() + rb.pointwise_error_bound()))
    scale = max(1.0, float(np.max(np.abs(ra.solution.values))))
    floor = 64 * np.finfo(float).eps * scale
    return NuComparison(nu1, nu2, diff, allowance, diff <= allowance + floor)
