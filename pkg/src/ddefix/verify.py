"""Independent oracles and the benchmark registry used to validate the solver."""

from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable

import numpy as np
from numpy.polynomial import Polynomial
from scipy.linalg import expm

from .errors import InvalidInputError
from .grid import GridFunction, resample
from .solver import Problem, solve


class PiecewisePolynomial:
    """Evaluator for ``x(t) = P_k(t - t0 - k*delay)`` on ``[t0 + k*delay, t0 + (k+1)*delay]``."""

    def __init__(self, t0: float, delay: float, pieces: list[Polynomial], before: float):
        self.t0 = t0
        self.delay = delay
        self.pieces = pieces
        self.before = before

    @property
    def t_end(self) -> float:
        return self.t0 + self.delay * len(self.pieces)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        scalar = t.ndim == 0
        t = np.atleast_1d(t)
        if np.any(t > self.t_end + 1e-12 * max(1.0, abs(self.t_end))):
            raise InvalidInputError(f"evaluation beyond the last segment (t > {self.t_end})")
        out = np.full(t.shape, self.before)
        k = np.clip(np.floor((t - self.t0) / self.delay).astype(int), 0, len(self.pieces) - 1)
        inside = t >= self.t0
        for j, piece in enumerate(self.pieces):
            m = inside & (k == j)
            out[m] = piece(t[m] - self.t0 - j * self.delay)
        return out[0] if scalar else out


def method_of_steps(a: float, b: float, delay: float, history_const: float, T: float) -> PiecewisePolynomial:
    """Exact solution of ``x' = a x(t) + b x(t - delay)`` for ``t >= 0`` with ``x = c`` on ``[-delay, 0]``.

    Only the pure-delay case ``a = 0`` is supported; every segment is then a
    polynomial obtained by integrating the previous one.

    Raises:
        InvalidInputError: for ``a != 0``, a non-positive delay, or ``T > 10 * delay``.
    """
    if a != 0:
        raise InvalidInputError("method_of_steps supports only a = 0; use fine_grid_reference instead")
    if not delay > 0:
        raise InvalidInputError("delay must be positive")
    if T > 10 * delay + 1e-12:
        raise InvalidInputError("method_of_steps is limited to T <= 10 * delay")
    c = float(history_const)
    pieces = [Polynomial([c])]  # the history segment [-delay, 0]
    for _ in range(max(1, math.ceil(T / delay - 1e-12))):
        prev = pieces[-1]
        nxt = prev(delay) + b * prev.integ(lbnd=0)
        pieces.append(Polynomial(nxt.coef))
    return PiecewisePolynomial(-delay, delay, pieces, 0.0)


def _snap_ternary(t: float) -> Fraction:
    tol = 4 * np.spacing(max(abs(t), 1.0))
    for m in range(31):
        k = round(t * 3**m)
        if abs(k / 3**m - t) <= tol:
            return Fraction(k, 3**m)
    return Fraction(t)


def cantor_function(t, digits: int = 64) -> float:
    """Cantor function by exact ternary expansion of ``t`` (accepts floats and Fractions).

    A float within a few ulps of a ternary rational ``k / 3**m`` (``m <= 30``) is
    read as that rational, so rounded nodes such as ``float(i / 729)`` give the
    exact staircase values.
    """
    x = t if isinstance(t, Fraction) else _snap_ternary(float(t))
    if x <= 0:
        return 0.0
    if x >= 1:
        return 1.0
    value = Fraction(0)
    scale = Fraction(1, 2)
    for _ in range(digits):
        x *= 3
        d = int(x)
        x -= d
        if d == 1:
            return float(value + scale)
        if d == 2:
            value += scale
        if x == 0:
            break
        scale /= 2
    return float(value)


def exponential(lam: float = 1.0, u0: float = 1.0) -> Callable:
    """``u(t) = u0 e^{lam t}`` for ``t >= 0`` and 0 before."""

    def evaluate(t):
        t = np.asarray(t, dtype=float)
        return np.where(t >= 0, u0 * np.exp(lam * np.maximum(t, 0.0)), 0.0)

    return evaluate


def conjugation(T, K) -> Callable:
    """``S(t) = e^{tT} K e^{-tT}``, the flow of ``S' = TS - ST`` with ``S(0) = K``."""
    T = np.asarray(T, dtype=float)
    K = np.asarray(K, dtype=float)

    def evaluate(t):
        ts = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.stack([expm(s * T) @ K @ expm(-s * T) for s in ts])
        return out[0] if np.ndim(t) == 0 else out

    return evaluate


def _cantor(**_):
    return np.vectorize(cantor_function, otypes=[float])


ANALYTIC_ORACLES: dict[str, Callable[..., Callable]] = {
    "exponential": exponential,
    "conjugation": lambda T=((0.0, 1.0), (0.0, 0.0)), K=((0.0, 0.0), (1.0, 0.0)): conjugation(T, K),
    "cantor": _cantor,
}


def analytic_oracle(name: str, **params) -> Callable:
    """Closed-form evaluator registered under ``name``.

    Known names: ``exponential`` (``lam``, ``u0``), ``conjugation`` (``T``, ``K``)
    and ``cantor``.
    """
    try:
        factory = ANALYTIC_ORACLES[name]
    except KeyError:
        raise InvalidInputError(f"unknown oracle {name!r}; known: {sorted(ANALYTIC_ORACLES)}") from None
    return factory(**params)


def fine_grid_reference(prob: Problem, refinement: int = 2) -> GridFunction:
    """Re-solve on a grid refined ``refinement`` times with a tenfold tighter tolerance."""
    if refinement not in (1, 2, 4, 8):
        raise InvalidInputError(f"refinement must be 1, 2, 4 or 8, got {refinement}")
    fine = prob.replace(grid=prob.grid.refine(refinement), tol=prob.tol / 10)
    return resample(solve(fine).solution, prob.grid)


@dataclass
class Benchmark:
    """A problem with an independent reference and the tolerance it must meet.

    ``reference(t)`` returns an array of shape ``(len(t), dim)``; errors are
    measured at the nodes inside ``window``.
    """

    name: str
    build: Callable[[], Problem]
    oracle: str
    reference: Callable[[np.ndarray], np.ndarray]
    tolerance: float
    window: tuple[float, float] = (-math.inf, math.inf)


@dataclass
class BenchmarkResult:
    name: str
    max_error: float
    tolerance: float
    passed: bool
    runtime: float


def run_benchmark(bench: Benchmark) -> BenchmarkResult:
    start = time.perf_counter()
    prob = bench.build()
    u = solve(prob).solution
    t = prob.grid.nodes
    mask = (t >= bench.window[0]) & (t <= bench.window[1])
    ref = np.asarray(bench.reference(t[mask]), dtype=float).reshape(int(mask.sum()), -1)
    err = float(np.max(np.abs(u.values[mask] - ref)))
    elapsed = time.perf_counter() - start
    return BenchmarkResult(bench.name, err, bench.tolerance, err <= bench.tolerance, elapsed)


def results_csv(results: list[BenchmarkResult]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["name", "max_error", "tolerance", "pass", "runtime"])
    for r in results:
        writer.writerow([r.name, f"{r.max_error:.6e}", f"{r.tolerance:.1e}", "PASS" if r.passed else "FAIL", f"{r.runtime:.3f}"])
    return buf.getvalue()


def _neutral_reference(t):
    # v = 1/2 v(t-1) + H gives v = 2 - 2^{-k} on [k, k+1); x integrates v
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    for i, s in enumerate(t):
        if s <= 0:
            continue
        k = int(math.floor(s))
        out[i] = sum(2.0 - 2.0**-j for j in range(k)) + (2.0 - 2.0**-k) * (s - k)
    return out


def benchmarks() -> list[Benchmark]:
    """The registered benchmarks with their pinned default settings."""
    from . import demos

    T = np.array([[0.0, 1.0], [0.0, 0.0]])
    K = np.array([[0.0, 0.0], [1.0, 0.0]])
    conj = conjugation(T, K)
    mos = method_of_steps(0.0, -1.0, 1.0, 1.0, 4.0)
    return [
        Benchmark("exponential-ivp", lambda: demos.problem("exponential-ivp"), "analytic",
                  exponential(1.0, 1.0), 5e-5, (0.0, 3.0)),
        Benchmark("delay-linear", lambda: demos.problem("delay-linear"), "method_of_steps",
                  mos, 1e-6, (-1.0, 4.0)),
        Benchmark("neutral-first-order", lambda: demos.problem("neutral-first-order"), "analytic",
                  _neutral_reference, 1e-6),
        Benchmark("cantor-forcing", lambda: demos.problem("cantor-forcing"), "analytic",
                  analytic_oracle("cantor"), 1e-14),
        Benchmark("commutator-flow", lambda: demos.problem("commutator-flow"), "analytic",
                  lambda t: np.where(np.asarray(t)[:, None] >= 0, conj(t).reshape(len(t), 4), 0.0),
                  1e-6),
    ]


def run_benchmarks(names: list[str] | None = None) -> list[BenchmarkResult]:
    return [run_benchmark(b) for b in benchmarks() if names is None or b.name in names]
