"""Uniform time grids, grid functions and exponentially weighted norms.

Every function lives on a uniform grid ``t_i = t_start + i*h`` and is taken to be
identically zero for ``t < t_start``.  Besides the nodal values (right limits)
a grid function may carry left limits, so that jumps located exactly at nodes
are represented without smearing.  All quadratures are jump aware: on the cell
``[t_{i-1}, t_i]`` the trapezoid rule uses ``f(t_{i-1}+)`` and ``f(t_i-)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import InvalidInputError

_NODE_TOL = 1e-9


@dataclass(frozen=True)
class Grid:
    """Uniform grid with ``count`` nodes starting at ``t_start``."""

    t_start: float
    step: float
    count: int

    def __post_init__(self):
        if not (math.isfinite(self.t_start) and math.isfinite(self.step)):
            raise InvalidInputError("grid start and step must be finite")
        if self.step <= 0:
            raise InvalidInputError(f"grid step must be positive, got {self.step}")
        if int(self.count) != self.count or self.count < 2:
            raise InvalidInputError(f"grid needs at least 2 nodes, got {self.count}")
        object.__setattr__(self, "count", int(self.count))
        object.__setattr__(self, "t_start", float(self.t_start))
        object.__setattr__(self, "step", float(self.step))

    @classmethod
    def from_span(cls, t_start: float, t_end: float, step: float) -> Grid:
        """Grid covering ``[t_start, t_end]``; the span must be a multiple of ``step``."""
        if step <= 0:
            raise InvalidInputError(f"grid step must be positive, got {step}")
        cells = (t_end - t_start) / step
        n = int(round(cells))
        if n < 1 or abs(cells - n) > 1e-6:
            raise InvalidInputError(
                f"span [{t_start}, {t_end}] is not a positive multiple of step {step}"
            )
        return cls(t_start, step, n + 1)

    @property
    def t_end(self) -> float:
        return self.t_start + (self.count - 1) * self.step

    @cached_property
    def nodes(self) -> np.ndarray:
        t = self.t_start + self.step * np.arange(self.count)
        t.setflags(write=False)
        return t

    def refine(self, factor: int) -> Grid:
        """Same span with the step divided by ``factor``; old nodes stay nodes."""
        return Grid(self.t_start, self.step / factor, (self.count - 1) * factor + 1)

    def index_of(self, t: float) -> int | None:
        """Index of the node at time ``t`` or None when ``t`` is not a node."""
        pos = (t - self.t_start) / self.step
        k = int(round(pos))
        if abs(pos - k) <= _NODE_TOL * max(1.0, abs(pos)) and 0 <= k < self.count:
            return k
        return None


@dataclass(frozen=True)
class Weight:
    """Weight ``nu`` and exponent ``p``; ``p = inf`` selects the sup-weighted mode."""

    nu: float
    p: float = 2.0

    def __post_init__(self):
        if not (self.nu > 0 and math.isfinite(self.nu)):
            raise InvalidInputError(f"weight nu must be a positive finite number, got {self.nu}")
        if not self.p > 1:
            raise InvalidInputError(f"exponent p must lie in (1, inf], got {self.p}")
        object.__setattr__(self, "nu", float(self.nu))
        object.__setattr__(self, "p", float(self.p))

    @property
    def q(self) -> float:
        if math.isinf(self.p):
            return 1.0
        return self.p / (self.p - 1.0)

    @property
    def is_sup(self) -> bool:
        return math.isinf(self.p)


def _as_2d(values, count: int, name: str) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2 or arr.shape[0] != count or arr.shape[1] < 1:
        raise InvalidInputError(f"{name} must have shape ({count}, d), got {np.shape(values)}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} contains non-finite entries")
    arr.setflags(write=False)
    return arr


class GridFunction:
    """A vector-valued function sampled on a :class:`Grid`.

    ``values`` holds right limits ``f(t_i+)``; ``left`` optionally holds left
    limits ``f(t_i-)``.  When ``left`` is omitted the function is continuous at
    every node except possibly ``t_start``, where the left limit is always 0.
    Instances are immutable.
    """

    __slots__ = ("grid", "values", "_left")

    def __init__(self, grid: Grid, values, left=None):
        self.grid = grid
        self.values = _as_2d(values, grid.count, "values")
        if left is None:
            self._left = None
        else:
            left = _as_2d(left, grid.count, "left limits")
            if left.shape != self.values.shape:
                raise InvalidInputError("left limits and values differ in shape")
            self._left = None if np.array_equal(left[1:], self.values[1:]) else left

    # -- construction helpers -------------------------------------------------
    @classmethod
    def zeros(cls, grid: Grid, dim: int = 1) -> GridFunction:
        return cls(grid, np.zeros((grid.count, dim)))

    @classmethod
    def from_function(cls, grid: Grid, fn) -> GridFunction:
        """Sample a vectorised callable ``fn(t) -> (n,) or (n, d)`` at the nodes."""
        return cls(grid, fn(grid.nodes))

    @classmethod
    def indicator(cls, grid: Grid, a: float, b: float = math.inf, amplitude=1.0) -> GridFunction:
        """``amplitude * 1_[a, b)`` with exact jumps when ``a``/``b`` are nodes."""
        amp = np.atleast_1d(np.asarray(amplitude, dtype=float))
        t = grid.nodes
        tol = _NODE_TOL * grid.step
        right = ((t >= a - tol) & (t < b - tol)).astype(float)
        left = ((t > a + tol) & (t <= b + tol)).astype(float)
        return cls(grid, right[:, None] * amp, left[:, None] * amp)

    @classmethod
    def heaviside(cls, grid: Grid, t0: float = 0.0, amplitude=1.0) -> GridFunction:
        return cls.indicator(grid, t0, math.inf, amplitude)

    # -- accessors ------------------------------------------------------------
    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def has_jumps(self) -> bool:
        return self._left is not None

    @property
    def left(self) -> np.ndarray:
        """Left limits at the nodes; the entry at ``t_start`` is always 0."""
        if self._left is None:
            out = self.values.copy()
        else:
            out = self._left.copy()
        out[0] = 0.0
        out.setflags(write=False)
        return out

    def __call__(self, t) -> np.ndarray:
        """Evaluate by linear interpolation (right-continuous), zero before the grid."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return _interpolate(self, t)[0]

    def component(self, k: int) -> np.ndarray:
        return self.values[:, k]

    # -- arithmetic -----------------------------------------------------------
    def _check_compatible(self, other: GridFunction):
        if other.grid != self.grid:
            raise InvalidInputError("grid functions live on different grids")
        if other.dim != self.dim:
            raise InvalidInputError(f"dimension mismatch: {self.dim} vs {other.dim}")

    def _combine(self, other: GridFunction, op) -> GridFunction:
        self._check_compatible(other)
        values = op(self.values, other.values)
        if self._left is None and other._left is None:
            return GridFunction(self.grid, values)
        return GridFunction(self.grid, values, op(self.left, other.left))

    def __add__(self, other):
        if not isinstance(other, GridFunction):
            return NotImplemented
        return self._combine(other, np.add)

    def __sub__(self, other):
        if not isinstance(other, GridFunction):
            return NotImplemented
        return self._combine(other, np.subtract)

    def __mul__(self, c):
        if isinstance(c, GridFunction):
            return NotImplemented
        c = float(c)
        left = None if self._left is None else self._left * c
        return GridFunction(self.grid, self.values * c, left)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def __eq__(self, other):
        if not isinstance(other, GridFunction):
            return NotImplemented
        return (
            self.grid == other.grid
            and np.array_equal(self.values, other.values)
            and np.array_equal(self.left, other.left)
        )

    __hash__ = None

    def __repr__(self):
        return f"GridFunction(grid={self.grid!r}, dim={self.dim}, jumps={self.has_jumps})"


def _interpolate(f: GridFunction, t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Right values and left limits of ``f`` at arbitrary times ``t``.

    Inside a cell the function is linear between ``f(t_i+)`` and ``f(t_{i+1}-)``.
    Times beyond the right end raise.
    """
    g = f.grid
    pos = (t - g.t_start) / g.step
    if np.any(pos > g.count - 1 + _NODE_TOL * g.count):
        raise InvalidInputError(
            f"cannot evaluate beyond the grid end t={g.t_end}; extension is not defined"
        )
    right_vals, left_vals = f.values, f.left
    d = f.dim
    out_r = np.zeros((t.size, d))
    out_l = np.zeros((t.size, d))
    k = np.rint(pos).astype(np.int64)
    on_node = (np.abs(pos - k) <= _NODE_TOL * np.maximum(1.0, np.abs(pos))) & (k >= 0)
    k = np.clip(k, 0, g.count - 1)
    out_r[on_node] = right_vals[k[on_node]]
    out_l[on_node] = left_vals[k[on_node]]
    inside = ~on_node & (pos > 0)
    if np.any(inside):
        i = np.floor(pos[inside]).astype(np.int64)
        i = np.clip(i, 0, g.count - 2)
        a = (pos[inside] - i)[:, None]
        val = (1.0 - a) * right_vals[i] + a * left_vals[i + 1]
        out_r[inside] = val
        out_l[inside] = val
    return out_r, out_l


def resample(f: GridFunction, g: Grid) -> GridFunction:
    """Linear interpolation of ``f`` onto the nodes of ``g``.

    Nodes before ``f``'s start receive 0 (support convention).  Nodes shared
    with ``f``'s grid are copied exactly, jumps included.  Nodes beyond ``f``'s
    right end raise :class:`InvalidInputError`.
    """
    if g == f.grid:
        return f
    right, left = _interpolate(f, g.nodes)
    return GridFunction(g, right, left)


def _pointwise_norms(arr: np.ndarray) -> np.ndarray:
    # scale each row first so that tiny or huge entries neither underflow nor overflow
    scale = np.max(np.abs(arr), axis=1)
    safe = np.where(scale > 0, scale, 1.0)
    return scale * np.sqrt(np.sum((arr / safe[:, None]) ** 2, axis=1))


def _logsumexp(a: np.ndarray) -> float:
    m = np.max(a)
    if not np.isfinite(m):
        return -math.inf
    return float(m + np.log(np.sum(np.exp(a - m))))


def weighted_norm(f: GridFunction, w: Weight) -> float:
    """Exponentially weighted norm of ``f``.

    L_p mode: ``(int |f(t)|^p e^{-p nu t} dt)^{1/p}`` by the jump-aware trapezoid
    rule.  Sup mode: ``max e^{-nu t} |f(t)|`` over nodal values and left limits.
    The pointwise norm is Euclidean.  Evaluated in log space so that large
    ``nu * t`` neither overflows nor underflows prematurely.
    """
    if not (np.all(np.isfinite(f.values))):
        raise InvalidInputError("non-finite values in grid function")
    t = f.grid.nodes
    with np.errstate(divide="ignore"):
        log_r = np.log(_pointwise_norms(f.values)) - w.nu * t
        log_l = np.log(_pointwise_norms(f.left)) - w.nu * t
    if w.is_sup:
        m = max(np.max(log_r), np.max(log_l[1:]))
        return 0.0 if m == -math.inf else float(math.exp(m))
    p = w.p
    terms = np.concatenate([p * log_r[:-1], p * log_l[1:]])
    lse = _logsumexp(terms)
    if lse == -math.inf:
        return 0.0
    return float(math.exp((math.log(0.5 * f.grid.step) + lse) / p))


def quadrature_tolerance(grid: Grid, w: Weight) -> float:
    """Relative excess of discrete weighted operator norms over their continuum values.

    The trapezoid rule applied to ``e^{c s}`` overestimates by the factor
    ``(ch/2) coth(ch/2) <= 1 + (ch)^2/12`` with ``c = p nu`` (L_p) or ``c = nu``
    (sup).  A few ulps are added for rounding.
    """
    c = w.nu if w.is_sup else w.p * w.nu
    return (c * grid.step) ** 2 / 12.0 + 64 * np.finfo(float).eps


def sobolev_constant(w: Weight) -> float:
    """``(q nu)^{-1/q}``: bounds ``sup e^{-nu t}|f(t)|`` by the weighted norm of ``f'``."""
    q = w.q
    return (q * w.nu) ** (-1.0 / q)


def derivative(f: GridFunction) -> GridFunction:
    """Centered differences in the interior, one-sided at the two ends."""
    return GridFunction(f.grid, np.gradient(f.values, f.grid.step, axis=0))
