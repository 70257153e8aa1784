"""Causal primitive operators and their weighted Lipschitz bounds.

Right-hand sides are expression trees built from a handful of primitives
(inverse derivative, delays, history segments, convolution kernels, Nemytskii
maps, coefficient multiplication, scaling) combined by ``Sum`` and
``Compose``.  Every node knows

* how to evaluate itself on a :class:`~ddefix.grid.GridFunction`, using only
  values at times ``<= t`` for the output at ``t`` (causality), and
* a :class:`NormBound`, i.e. its Lipschitz constant as a function of ``nu``
  in the weighted space selected by ``p``.

Nodes evaluate on pairs ``(right, left)`` of nodal values and left limits so
that jumps at nodes survive shifting and integrate exactly.

Operator sugar: ``a @ b`` composes, ``a + b`` sums, ``c * a`` scales.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import DimensionError, InvalidInputError, NonCausalError
from .grid import Grid, GridFunction, Weight, resample, weighted_norm

__all__ = [
    "NormBound",
    "Table",
    "OperatorExpr",
    "AntiDeriv",
    "Shift",
    "HistoryMap",
    "KernelConv",
    "Pointwise",
    "CoeffMul",
    "Sum",
    "Compose",
    "Scale",
    "default_probe_grid",
    "NAMED_MAPS",
    "Forcing",
    "antiderivative",
    "apply",
    "lipschitz_bound",
    "empirical_operator_norm",
    "forcing_antiderivative",
]


# ---------------------------------------------------------------------------
# symbolic bounds


class NormBound:
    """A nonnegative function ``nu -> bound(nu)`` closed under ``+`` and ``*``."""

    __slots__ = ("_fn", "label")

    def __init__(self, fn: Callable[[float], float], label: str):
        self._fn = fn
        self.label = label

    def __call__(self, nu: float) -> float:
        return float(self._fn(float(nu)))

    def __add__(self, other: NormBound) -> NormBound:
        return NormBound(lambda nu: self._fn(nu) + other._fn(nu), f"({self.label} + {other.label})")

    def __mul__(self, other: NormBound) -> NormBound:
        return NormBound(lambda nu: self._fn(nu) * other._fn(nu), f"{self.label}*{other.label}")

    def __repr__(self):
        return f"NormBound({self.label})"

    @classmethod
    def constant(cls, c: float) -> NormBound:
        c = float(c)
        return cls(lambda nu: c, repr(c))

    @classmethod
    def delay(cls, theta: float) -> NormBound:
        return cls(lambda nu: math.exp(nu * theta), f"exp({theta}*nu)")

    @classmethod
    def inverse_power(cls, m: int) -> NormBound:
        return cls(lambda nu: nu ** (-m), f"nu^-{m}")

    @classmethod
    def history(cls, p: float) -> NormBound:
        if math.isinf(p):
            return cls.constant(1.0)
        return cls(lambda nu: (p * nu) ** (-1.0 / p), f"({p}*nu)^(-1/{p})")

    @classmethod
    def weighted_integral(cls, s: np.ndarray, g: np.ndarray) -> NormBound:
        """``int g(s) e^{-nu s} ds`` for the piecewise-linear interpolant of ``g >= 0``."""
        s = np.asarray(s, dtype=float)
        g = np.asarray(g, dtype=float)
        return cls(lambda nu: _exp_weighted_integral(s, g, nu), "int|B(s)|exp(-nu*s)ds")


def _exp_weighted_integral(s: np.ndarray, g: np.ndarray, nu: float) -> float:
    ds = np.diff(s)
    x = nu * ds
    e0 = np.exp(-nu * s[:-1])
    small = x < 1e-3
    # int_0^D e^{-nu r} dr and int_0^D r e^{-nu r} dr, stable for small nu*D
    i0 = np.where(small, ds * (1 - x / 2 + x * x / 6), -np.expm1(-x) / np.where(small, 1, nu))
    safe_x = np.where(small, 1.0, x)
    i1 = np.where(
        small,
        ds * ds * (0.5 - x / 3 + x * x / 8),
        ds * ds * (-np.expm1(-safe_x) - safe_x * np.exp(-safe_x)) / (safe_x * safe_x),
    )
    slope = np.diff(g) / ds
    return float(np.sum(e0 * (g[:-1] * i0 + slope * i1)))


# ---------------------------------------------------------------------------
# tables


@dataclass(frozen=True, eq=False)
class Table:
    """Sampled function ``times -> values`` with linear interpolation.

    ``values`` has shape ``(m,)`` (scalar) or ``(m, *shape)``.
    """

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = np.array(self.times, dtype=float)
        v = np.array(self.values, dtype=float)
        if t.ndim != 1 or t.size < 1 or v.shape[0] != t.size:
            raise InvalidInputError("table times and values must have matching first dimension")
        if t.size > 1 and np.any(np.diff(t) <= 0):
            raise InvalidInputError("table times must be strictly increasing")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(v))):
            raise InvalidInputError("table contains non-finite entries")
        t.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    @property
    def shape(self) -> tuple:
        return self.values.shape[1:]

    def __call__(self, t, outside: str = "hold") -> np.ndarray:
        """Interpolate at ``t``; ``outside`` is ``"hold"`` (edge values) or ``"zero"``."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        flat = self.values.reshape(self.values.shape[0], -1)
        if self.times.size == 1:
            out = np.repeat(flat, t.size, axis=0)
        else:
            out = np.column_stack([np.interp(t, self.times, flat[:, k]) for k in range(flat.shape[1])])
        if outside == "zero":
            tol = 1e-12 * max(1.0, float(np.max(np.abs(self.times))))
            mask = (t < self.times[0] - tol) | (t > self.times[-1] + tol)
            out[mask] = 0.0
        return out.reshape((t.size,) + self.shape)

    def __eq__(self, other):
        if not isinstance(other, Table):
            return NotImplemented
        return np.array_equal(self.times, other.times) and np.array_equal(self.values, other.values)

    __hash__ = None


def _sample(fn, s: np.ndarray) -> np.ndarray:
    """Evaluate a kernel/coefficient given as constant, Table or callable."""
    if isinstance(fn, Table):
        return fn(s, outside="zero")
    if callable(fn):
        return np.asarray(fn(s), dtype=float)
    return np.full(s.shape + np.shape(fn), fn, dtype=float)


# ---------------------------------------------------------------------------
# expression tree


def _continuous(right: np.ndarray) -> tuple[np.ndarray, None]:
    return right, None


def _left_of(right: np.ndarray, left: np.ndarray | None) -> np.ndarray:
    out = right.copy() if left is None else left.copy()
    out[0] = 0.0
    return out


class OperatorExpr:
    """Base class of all expression nodes."""

    in_dim: int | None = None
    out_dim: int | None = None
    linear: bool = True

    def evaluate(self, right: np.ndarray, left: np.ndarray | None, grid: Grid):
        """Map nodal values/left limits to nodal values/left limits (``None`` = continuous)."""
        raise NotImplementedError

    def norm_bound(self, p: float) -> NormBound:
        raise NotImplementedError

    def children(self) -> tuple[OperatorExpr, ...]:
        return ()

    def walk(self):
        yield self
        for c in self.children():
            yield from c.walk()

    def __matmul__(self, other):
        if not isinstance(other, OperatorExpr):
            return NotImplemented
        return Compose(self, other)

    def __add__(self, other):
        if not isinstance(other, OperatorExpr):
            return NotImplemented
        return Sum([self, other])

    def __rmul__(self, a):
        if isinstance(a, (int, float)):
            return Compose(Scale(a), self)
        return NotImplemented


class AntiDeriv(OperatorExpr):
    """``m``-fold causal cumulative integral from ``t_start`` (i.e. from ``-inf``)."""

    def __init__(self, order: int = 1):
        if int(order) != order or order < 1:
            raise InvalidInputError(f"antiderivative order must be a positive integer, got {order}")
        self.order = int(order)

    def evaluate(self, right, left, grid):
        h = grid.step
        for _ in range(self.order):
            lft = _left_of(right, left)
            out = np.zeros_like(right)
            np.cumsum(0.5 * h * (right[:-1] + lft[1:]), axis=0, out=out[1:])
            right, left = out, None
        return right, None

    def norm_bound(self, p):
        return NormBound.inverse_power(self.order)

    def __repr__(self):
        return f"AntiDeriv({self.order})"


class Shift(OperatorExpr):
    """Delay ``u -> u(. + theta)`` with ``theta <= 0``; off-grid delays interpolate linearly."""

    def __init__(self, theta: float):
        theta = float(theta)
        if not math.isfinite(theta):
            raise InvalidInputError("shift offset must be finite")
        if theta > 0:
            raise NonCausalError(f"Shift({theta}) reads the future; only theta <= 0 is causal")
        self.theta = theta

    def evaluate(self, right, left, grid):
        lft = _left_of(right, left)
        n = right.shape[0]
        s = -self.theta / grid.step
        k = int(round(s))
        out_r = np.zeros_like(right)
        if abs(s - k) <= 1e-9 * max(1.0, s):
            if k == 0:
                return right, left
            out_l = np.zeros_like(right)
            if k < n:
                out_r[k:] = right[: n - k]
                out_l[k:] = lft[: n - k]
            return out_r, out_l
        k = int(math.floor(s))
        a = s - k
        # u(t_i - (k+a)h) lies in the cell [t_{i-k-1}, t_{i-k}]
        if k < n:
            out_r[k:] += (1.0 - a) * lft[: n - k]
        if k + 1 < n:
            out_r[k + 1 :] += a * right[: n - k - 1]
        return _continuous(out_r)

    def norm_bound(self, p):
        return NormBound.delay(self.theta)

    def __repr__(self):
        return f"Shift({self.theta})"


def _conv_pair(right, left, kernel: np.ndarray, h: float) -> np.ndarray:
    """Jump-aware trapezoid of ``int_0^{mh} B(s) u(t-s) ds`` at every node.

    ``kernel`` has shape ``(m+1, d_out, d_in)`` sampled at ``s_j = j h``.
    """
    n, d_in = right.shape
    lft = _left_of(right, left)
    m = kernel.shape[0] - 1
    d_out = kernel.shape[1]
    out = np.zeros((n, d_out))
    if m == 0:
        return out
    for o in range(d_out):
        for c in range(d_in):
            b = kernel[:, o, c]
            if not np.any(b):
                continue
            near = np.convolve(lft[:, c], b[:m])[:n]
            far = np.convolve(right[:, c], np.concatenate(([0.0], b[1:])))[:n]
            out[:, o] += 0.5 * h * (near + far)
    return out


def _kernel_norm_table(kernel, s: np.ndarray) -> np.ndarray:
    vals = _sample(kernel, s)
    if vals.ndim == 1:
        return np.abs(vals)
    return np.array([np.linalg.norm(np.atleast_2d(v), 2) for v in vals])


def _kernel_shape(kernel) -> tuple:
    if isinstance(kernel, Table):
        return kernel.shape
    if callable(kernel):
        return np.shape(np.asarray(kernel(np.zeros(1)), dtype=float))[1:]
    return np.shape(kernel)


def _kernel_dims(shape: tuple) -> tuple[int | None, int | None]:
    if shape == ():
        return None, None
    if len(shape) != 2:
        raise DimensionError(f"kernel values must be scalars or matrices, got shape {shape}")
    return shape[1], shape[0]


_BOUND_SAMPLES = 4097


class KernelConv(OperatorExpr):
    """Causal convolution ``(B * u)(t) = int_0^horizon B(s) u(t-s) ds``.

    ``kernel`` is a scalar constant, a :class:`Table` over ``s``, or a vectorised
    callable; its values are scalars or ``(d_out, d_in)`` matrices.  Beyond
    ``horizon`` the kernel is truncated.
    """

    def __init__(self, kernel, horizon: float):
        if not (horizon > 0 and math.isfinite(horizon)):
            raise InvalidInputError(f"kernel horizon must be positive and finite, got {horizon}")
        self.kernel = kernel
        self.horizon = float(horizon)
        self._shape = _kernel_shape(kernel)
        self.in_dim, self.out_dim = _kernel_dims(self._shape)
        s = np.linspace(0.0, self.horizon, _BOUND_SAMPLES)
        if isinstance(kernel, Table):
            inner = kernel.times[(kernel.times > 0) & (kernel.times < self.horizon)]
            s = np.union1d(s, inner)
        self._bound_s = s
        self._bound_g = _kernel_norm_table(kernel, s)

    def _matrix_samples(self, grid: Grid, d_in: int) -> np.ndarray:
        m = int(math.floor(self.horizon / grid.step + 1e-9))
        s = grid.step * np.arange(m + 1)
        vals = _sample(self.kernel, s)
        if vals.ndim == 1:
            return vals[:, None, None] * np.eye(d_in)[None]
        return vals

    def evaluate(self, right, left, grid):
        b = self._matrix_samples(grid, right.shape[1])
        return _continuous(_conv_pair(right, left, b, grid.step))

    def norm_bound(self, p):
        return NormBound.weighted_integral(self._bound_s, self._bound_g)

    def __repr__(self):
        return f"KernelConv(horizon={self.horizon})"


NAMED_MAPS: dict[str, tuple[Callable[[np.ndarray], np.ndarray], float, bool]] = {
    "identity": (lambda x: x, 1.0, True),
    "tanh": (np.tanh, 1.0, False),
    "sin": (np.sin, 1.0, False),
    "cos": (np.cos, 1.0, False),
    "relu": (lambda x: np.maximum(x, 0.0), 1.0, False),
    "abs": (np.abs, 1.0, False),
}


class Pointwise(OperatorExpr):
    """Nemytskii operator ``u -> (t -> f(u(t)))`` with a declared Lipschitz constant.

    Either ``matrix`` (linear, bound = spectral norm), a registered ``name`` from
    :data:`NAMED_MAPS`, or an arbitrary row-wise callable ``fn`` together with
    ``lipschitz``.  The declared constant is trusted, not verified.
    """

    def __init__(
        self,
        fn=None,
        lipschitz: float | None = None,
        *,
        matrix=None,
        name: str | None = None,
        in_dim: int | None = None,
        out_dim: int | None = None,
    ):
        self.matrix = None
        self.name = name
        if matrix is not None:
            m = np.array(matrix, dtype=float)
            if m.ndim != 2 or not np.all(np.isfinite(m)):
                raise InvalidInputError("pointwise matrix must be a finite 2-D array")
            m.setflags(write=False)
            self.matrix = m
            self.fn = None
            self.out_dim, self.in_dim = m.shape
            self.linear = True
            spectral = float(np.linalg.norm(m, 2))
            self.lipschitz = spectral if lipschitz is None else float(lipschitz)
            return
        if fn is None:
            if name not in NAMED_MAPS:
                raise InvalidInputError(f"unknown pointwise map {name!r}; known: {sorted(NAMED_MAPS)}")
            fn, default_lip, self.linear = NAMED_MAPS[name]
            lipschitz = default_lip if lipschitz is None else lipschitz
        else:
            self.linear = False
            if lipschitz is None:
                raise InvalidInputError("a callable pointwise map needs a declared lipschitz constant")
        if not lipschitz >= 0:
            raise InvalidInputError(f"lipschitz constant must be >= 0, got {lipschitz}")
        self.fn = fn
        self.lipschitz = float(lipschitz)
        self.in_dim, self.out_dim = in_dim, out_dim

    def _map(self, x: np.ndarray) -> np.ndarray:
        if self.matrix is not None:
            return x @ self.matrix.T
        y = np.asarray(self.fn(x), dtype=float)
        if y.ndim == 1:
            y = y[:, None]
        return y

    def evaluate(self, right, left, grid):
        r = self._map(right)
        if left is None:
            return r, None
        return r, self._map(left)

    def norm_bound(self, p):
        return NormBound.constant(self.lipschitz)

    def __repr__(self):
        if self.matrix is not None:
            return f"Pointwise(matrix{self.matrix.shape})"
        return f"Pointwise({self.name or self.fn!r}, L={self.lipschitz})"


class HistoryMap(OperatorExpr):
    """History-segment functional ``u -> (t -> int_{-horizon}^0 k(theta) f(u(t+theta)) dtheta)``.

    ``kernel`` ``k`` is a scalar weight on ``[-horizon, 0]`` (constant, Table over
    ``theta`` or callable) and ``inner`` an optional :class:`Pointwise` map ``f``.
    The inner Lipschitz constant is ``Lip(f) * |k|_{L_q}`` in L_p mode and
    ``Lip(f) * |k|_{L_1}`` in sup mode; the segment operator itself contributes
    ``(p nu)^{-1/p}`` resp. 1.
    """

    def __init__(self, horizon: float, kernel=1.0, inner: Pointwise | None = None):
        if not (horizon > 0 and math.isfinite(horizon)):
            raise InvalidInputError(f"history horizon must be positive and finite, got {horizon}")
        self.horizon = float(horizon)
        self.kernel = kernel
        self.inner = inner
        if _kernel_shape(kernel) != ():
            raise DimensionError("history kernel must be scalar valued")
        self.in_dim = None if inner is None else inner.in_dim
        self.out_dim = None if inner is None else inner.out_dim
        self.linear = inner is None or inner.linear
        theta = np.linspace(-self.horizon, 0.0, _BOUND_SAMPLES)
        self._abs_k = np.abs(_sample(kernel, theta))
        self._theta = theta
        self._conv = KernelConv(lambda s: _sample(kernel, -np.asarray(s)), self.horizon)

    def children(self):
        return () if self.inner is None else (self.inner,)

    def kernel_norm(self, r: float) -> float:
        """``|k|_{L_r(-horizon, 0)}`` by the trapezoid rule (``r = inf`` allowed)."""
        if math.isinf(r):
            return float(np.max(self._abs_k))
        return float(np.trapezoid(self._abs_k**r, self._theta) ** (1.0 / r))

    def inner_lipschitz(self, p: float) -> float:
        lip_f = 1.0 if self.inner is None else self.inner.lipschitz
        r = 1.0 if math.isinf(p) else p / (p - 1.0)
        return lip_f * self.kernel_norm(r)

    def evaluate(self, right, left, grid):
        if self.inner is not None:
            right, left = self.inner.evaluate(right, left, grid)
        return self._conv.evaluate(right, left, grid)

    def norm_bound(self, p):
        return NormBound.history(p) * NormBound.constant(self.inner_lipschitz(p))

    def __repr__(self):
        return f"HistoryMap(horizon={self.horizon}, inner={self.inner!r})"


class CoeffMul(OperatorExpr):
    """Multiplication by a bounded scalar coefficient ``c(t)``.

    ``coeff`` is a constant, a :class:`Table` (held constant beyond its ends) or
    a vectorised callable; callables need an explicit ``bound >= sup|c|``.
    """

    def __init__(self, coeff, bound: float | None = None):
        self.coeff = coeff
        if isinstance(coeff, Table):
            if coeff.shape != ():
                raise DimensionError("coefficient tables must be scalar valued")
            sup = float(np.max(np.abs(coeff.values)))
        elif callable(coeff):
            if bound is None:
                raise InvalidInputError("callable coefficients need an explicit bound on sup|c|")
            sup = float(bound)
        else:
            sup = abs(float(coeff))
        if bound is not None and bound < sup:
            raise InvalidInputError(f"declared bound {bound} is below sup|c| = {sup}")
        self.sup = sup if bound is None else float(bound)

    def _values(self, grid: Grid) -> np.ndarray:
        t = grid.nodes
        if isinstance(self.coeff, Table):
            c = self.coeff(t, outside="hold")
        elif callable(self.coeff):
            c = np.asarray(self.coeff(t), dtype=float)
        else:
            c = np.full(t.shape, float(self.coeff))
        return c.reshape(-1, 1)

    def evaluate(self, right, left, grid):
        c = self._values(grid)
        return right * c, None if left is None else left * c

    def norm_bound(self, p):
        return NormBound.constant(self.sup)

    def __repr__(self):
        return f"CoeffMul(sup={self.sup})"


class Scale(OperatorExpr):
    """Multiplication by a real constant."""

    def __init__(self, a: float):
        a = float(a)
        if not math.isfinite(a):
            raise InvalidInputError("scale factor must be finite")
        self.a = a

    def evaluate(self, right, left, grid):
        return right * self.a, None if left is None else left * self.a

    def norm_bound(self, p):
        return NormBound.constant(abs(self.a))

    def __repr__(self):
        return f"Scale({self.a})"


def _merge_dim(a: int | None, b: int | None, what: str) -> int | None:
    if a is not None and b is not None and a != b:
        raise DimensionError(f"{what}: dimension {a} does not match {b}")
    return a if a is not None else b


class Sum(OperatorExpr):
    """Sum of terms sharing input and output dimensions; the empty sum is zero."""

    def __init__(self, terms: Sequence[OperatorExpr] = ()):
        self.terms = tuple(terms)
        din = dout = None
        for t in self.terms:
            din = _merge_dim(din, t.in_dim, "Sum input")
            dout = _merge_dim(dout, t.out_dim, "Sum output")
        self.in_dim, self.out_dim = din, dout
        self.linear = all(t.linear for t in self.terms)

    def children(self):
        return self.terms

    def evaluate(self, right, left, grid):
        if not self.terms:
            d = right.shape[1] if self.out_dim is None else self.out_dim
            return np.zeros((right.shape[0], d)), None
        acc_r = acc_l = None
        any_jump = False
        parts = [t.evaluate(right, left, grid) for t in self.terms]
        for r, lft in parts:
            if lft is not None:
                any_jump = True
        for r, lft in parts:
            acc_r = r.copy() if acc_r is None else acc_r + r
            if any_jump:
                ll = _left_of(r, lft)
                acc_l = ll if acc_l is None else acc_l + ll
        return acc_r, acc_l

    def norm_bound(self, p):
        total = NormBound.constant(0.0)
        for t in self.terms:
            total = total + t.norm_bound(p)
        return total

    def __add__(self, other):
        if isinstance(other, OperatorExpr):
            return Sum(self.terms + (other,))
        return NotImplemented

    def __repr__(self):
        return f"Sum({list(self.terms)!r})"


class Compose(OperatorExpr):
    """``outer(inner(u))``; the bound is the product of the two bounds."""

    def __init__(self, outer: OperatorExpr, inner: OperatorExpr):
        if outer.in_dim is not None and inner.out_dim is not None and outer.in_dim != inner.out_dim:
            raise DimensionError(
                f"cannot compose: outer expects dimension {outer.in_dim}, inner produces {inner.out_dim}"
            )
        self.outer, self.inner = outer, inner
        self.in_dim = inner.in_dim if inner.in_dim is not None else (
            outer.in_dim if inner.out_dim is None else None
        )
        self.out_dim = outer.out_dim if outer.out_dim is not None else (
            inner.out_dim if outer.in_dim is None else None
        )
        self.linear = outer.linear and inner.linear

    def children(self):
        return (self.outer, self.inner)

    def evaluate(self, right, left, grid):
        r, lft = self.inner.evaluate(right, left, grid)
        return self.outer.evaluate(r, lft, grid)

    def norm_bound(self, p):
        return self.outer.norm_bound(p) * self.inner.norm_bound(p)

    def __repr__(self):
        return f"Compose({self.outer!r}, {self.inner!r})"


# ---------------------------------------------------------------------------
# public operations


def antiderivative(f: GridFunction) -> GridFunction:
    """Causal cumulative trapezoid integral of ``f`` starting from 0 at ``t_start``."""
    r, _ = AntiDeriv(1).evaluate(f.values, None if not f.has_jumps else f.left, f.grid)
    return GridFunction(f.grid, r)


def apply(expr: OperatorExpr, u: GridFunction) -> GridFunction:
    """Evaluate ``expr`` on ``u``; checks the input dimension."""
    if expr.in_dim is not None and expr.in_dim != u.dim:
        raise DimensionError(f"operator expects input dimension {expr.in_dim}, got {u.dim}")
    left = u.left if u.has_jumps else None
    r, lft = expr.evaluate(u.values, left, u.grid)
    if lft is None:
        return GridFunction(u.grid, r)
    return GridFunction(u.grid, r, lft)


def lipschitz_bound(expr: OperatorExpr, w: Weight) -> float:
    """Evaluate the symbolic norm/Lipschitz bound of ``expr`` at ``w.nu``."""
    return expr.norm_bound(w.p)(w.nu)


def _max_delay(expr: OperatorExpr) -> float:
    total = 0.0
    for node in expr.walk():
        if isinstance(node, Shift):
            total += -node.theta
        elif isinstance(node, (KernelConv, HistoryMap)):
            total += node.horizon
    return total


def default_probe_grid(expr: OperatorExpr, w: Weight, nodes: int = 16001) -> Grid:
    """Grid long enough for extremal probes to approach the operator norm."""
    span = max(3.0 * _max_delay(expr), 24.0 / w.nu, 1.0)
    step = span / (nodes - 1)
    delays = [-n.theta for n in expr.walk() if isinstance(n, Shift) and n.theta < 0]
    if delays:
        # keep the shortest delay an exact multiple of the step so shifts do not interpolate
        shortest = min(delays)
        step = shortest / math.ceil(shortest / step)
        nodes = int(math.ceil(span / step)) + 1
    return Grid(0.0, step, nodes)


def _probes(grid: Grid, w: Weight, dim: int, trials: int, rng: np.random.Generator):
    t = grid.nodes
    n = grid.count
    growth = np.exp(w.nu * (t - t[-1]))
    # extremal family: e^{nu t} on windows [a, b), the window starting at t_start
    # mimicking the cut-off functions that realise the inverse-derivative norm
    fracs = [0.0, 0.1, 0.25, 0.5]
    ends = [0.25, 0.5, 0.75, 1.0]
    for a in fracs:
        for b in ends:
            if b <= a:
                continue
            ia, ib = int(a * (n - 1)), int(b * (n - 1))
            vals = np.zeros(n)
            vals[ia:ib] = growth[ia:ib]
            direction = np.zeros(dim)
            direction[0] = 1.0
            left = np.zeros(n)
            left[ia + 1 : ib + 1] = growth[ia + 1 : ib + 1]
            yield GridFunction(grid, vals[:, None] * direction, left[:, None] * direction)
    for _ in range(trials):
        freq = rng.uniform(0.2, 6.0, size=(3, dim))
        phase = rng.uniform(0, 2 * np.pi, size=(3, dim))
        amp = rng.standard_normal((3, dim))
        span = t[-1] - t[0]
        raw = np.sum(amp[:, None, :] * np.sin(freq[:, None, :] * (t[None, :, None] - t[0]) * 2 * np.pi / span + phase[:, None, :]), axis=0)
        lo, hi = sorted(rng.uniform(0, 1, size=2))
        window = ((t - t[0] >= lo * span) & (t - t[0] <= hi * span)).astype(float)
        envelope = growth if rng.random() < 0.5 else np.exp(w.nu * (t - t[-1]) * rng.uniform(0, 1))
        vals = raw * (window * envelope)[:, None]
        vals[0] = 0.0
        if np.any(vals):
            yield GridFunction(grid, vals)


def empirical_operator_norm(
    expr: OperatorExpr,
    w: Weight,
    trials: int = 32,
    grid: Grid | None = None,
    seed: int = 0,
) -> float:
    """Largest observed ratio ``|expr u| / |u|`` over probe inputs.

    Probes are the exponential cut-off family ``e^{nu t} 1_[a,b)`` plus
    ``trials`` random windowed oscillations.  Only linear expressions are
    accepted.
    """
    if not expr.linear:
        raise InvalidInputError("empirical operator norm needs a linear expression")
    if grid is None:
        grid = default_probe_grid(expr, w)
    dim = expr.in_dim or 1
    rng = np.random.default_rng(seed)
    best = 0.0
    for u in _probes(grid, w, dim, trials, rng):
        nu_ = weighted_norm(u, w)
        if nu_ == 0:
            continue
        best = max(best, weighted_norm(apply(expr, u), w) / nu_)
    return best


# ---------------------------------------------------------------------------
# forcing


def _table_to_grid(times: np.ndarray, values: np.ndarray, grid: Grid, hold: bool):
    """Right values and left limits of a (possibly jumping) table on ``grid``.

    Repeated times encode jumps: the first row is the left limit, the last the
    right value.  Before the first time the function is 0; after the last it is
    held constant when ``hold`` is set, otherwise extension raises.
    """
    t = grid.nodes
    if not hold and t[-1] > times[-1] + 1e-9 * grid.step:
        raise InvalidInputError(
            f"forcing table ends at {times[-1]} before the grid end {t[-1]}"
        )
    m = times.size

    def at(idx, tt):
        out = np.zeros((tt.size, values.shape[1]))
        before = idx < 0
        last = idx >= m - 1
        mid = ~before & ~last
        out[last] = values[-1]
        if np.any(mid):
            i = idx[mid]
            span = times[i + 1] - times[i]
            a = ((tt[mid] - times[i]) / span)[:, None]
            out[mid] = (1 - a) * values[i] + a * values[i + 1]
        return out

    tol = 1e-9 * grid.step
    right = at(np.searchsorted(times, t + tol, side="right") - 1, t)
    left = at(np.searchsorted(times, t - tol, side="left") - 1, t)
    return right, left


@dataclass(frozen=True, eq=False)
class Forcing:
    """Inhomogeneity: a grid function, a Dirac impulse, or a cumulative function.

    Use the constructors :meth:`grid`, :meth:`dirac`, :meth:`cdf`.  A ``table``
    forcing is a grid function given as (possibly jumping) samples.
    """

    kind: str
    function: GridFunction | None = None
    time: float | None = None
    amplitude: np.ndarray | None = None
    times: np.ndarray | None = None
    values: np.ndarray | None = None

    @classmethod
    def grid(cls, f: GridFunction) -> Forcing:
        return cls("grid", function=f)

    @classmethod
    def table(cls, times, values) -> Forcing:
        t, v = _check_table(times, values)
        return cls("table", times=t, values=v)

    @classmethod
    def dirac(cls, t0: float, amplitude) -> Forcing:
        amp = np.atleast_1d(np.array(amplitude, dtype=float))
        if not (math.isfinite(t0) and np.all(np.isfinite(amp))):
            raise InvalidInputError("Dirac time and amplitude must be finite")
        amp.setflags(write=False)
        return cls("dirac", time=float(t0), amplitude=amp)

    @classmethod
    def cdf(cls, times, values) -> Forcing:
        t, v = _check_table(times, values)
        return cls("cdf", times=t, values=v)

    @property
    def dim(self) -> int:
        if self.kind == "grid":
            return self.function.dim
        if self.kind == "dirac":
            return self.amplitude.size
        return self.values.shape[1]

    @property
    def singular(self) -> bool:
        """True for forcing terms that only exist through their antiderivative."""
        return self.kind in ("dirac", "cdf")

    def on_grid(self, grid: Grid) -> GridFunction:
        """The forcing itself as a grid function (regular kinds only)."""
        if self.kind == "grid":
            return resample(self.function, grid)
        if self.kind == "table":
            r, lft = _table_to_grid(self.times, self.values, grid, hold=False)
            return GridFunction(grid, r, lft)
        raise InvalidInputError(f"{self.kind} forcing has no grid-function representation")

    def vanishes_before(self, t_cut: float) -> bool:
        """Support contained in ``[t_cut, inf)``."""
        if self.kind == "dirac":
            return self.time >= t_cut or not np.any(self.amplitude)
        if self.kind == "grid":
            f = self.function
            t = f.grid.nodes
            return not (np.any(f.values[t < t_cut]) or np.any(f.left[t <= t_cut]))
        pre = self.times < t_cut
        return not np.any(self.values[pre])

    def __eq__(self, other):
        if not isinstance(other, Forcing):
            return NotImplemented

        def same(a, b):
            if a is None or b is None:
                return a is b
            return np.array_equal(a, b)

        return (
            self.kind == other.kind
            and self.time == other.time
            and same(self.amplitude, other.amplitude)
            and same(self.times, other.times)
            and same(self.values, other.values)
            and (self.function == other.function if self.function is not None else other.function is None)
        )

    __hash__ = None


def _check_table(times, values):
    t = np.array(times, dtype=float)
    v = np.array(values, dtype=float)
    if v.ndim == 1:
        v = v[:, None]
    if t.ndim != 1 or t.size < 1 or v.shape[0] != t.size:
        raise InvalidInputError("table times and values must have the same number of rows")
    if not (np.all(np.isfinite(t)) and np.all(np.isfinite(v))):
        raise InvalidInputError("table contains non-finite entries")
    if np.any(np.diff(t) < 0):
        raise InvalidInputError("table times must be nondecreasing")
    if t.size > 2 and np.any((t[2:] == t[1:-1]) & (t[1:-1] == t[:-2])):
        raise InvalidInputError("a table time may appear at most twice (left and right value)")
    t.setflags(write=False)
    v.setflags(write=False)
    return t, v


def forcing_antiderivative(g: Forcing, grid: Grid, dim: int) -> GridFunction:
    """Inverse derivative of a forcing term, sampled on ``grid``.

    Grid/table forcing is integrated, a Dirac ``u0 delta_{t0}`` becomes the jump
    ``u0 1_[t0, inf)``, and a measure given by its cumulative function is
    represented by that cumulative function (held constant after the table).
    """
    if g.dim != dim:
        raise DimensionError(f"forcing has dimension {g.dim}, problem has {dim}")
    if g.kind in ("grid", "table"):
        return antiderivative(g.on_grid(grid))
    if g.kind == "dirac":
        tol = 1e-9 * grid.step
        if not (grid.t_start - tol <= g.time <= grid.t_end + tol):
            raise InvalidInputError(
                f"Dirac time {g.time} outside the grid span [{grid.t_start}, {grid.t_end}]"
            )
        return GridFunction.heaviside(grid, g.time, g.amplitude)
    if g.kind == "cdf":
        r, lft = _table_to_grid(g.times, g.values, grid, hold=True)
        return GridFunction(grid, r, lft)
    raise InvalidInputError(f"unknown forcing kind {g.kind!r}")
