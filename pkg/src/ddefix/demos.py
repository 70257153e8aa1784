"""Registered demonstration problems, each stored as a specification document."""

from __future__ import annotations

from fractions import Fraction
from typing import Callable

import numpy as np

from .errors import InvalidInputError
from .solver import Problem
from .specfile import ProblemSpec
from .verify import cantor_function


def _dirac(t: float, amplitude) -> dict:
    return {"dirac": {"t": t, "amplitude": list(np.atleast_1d(amplitude).astype(float))}}


def _compose(*nodes: dict) -> dict:
    out = nodes[-1]
    for node in reversed(nodes[:-1]):
        out = {"op": "compose", "outer": node, "inner": out}
    return out


def exponential_ivp() -> dict:
    """``u' = u``, ``u(0+) = 1`` on ``[0, 3]``."""
    return {
        "dim": 1,
        "mode": "lp",
        "p": 2,
        "grid": {"t_start": 0.0, "t_end": 3.0, "h": 1e-3},
        "rhs": {"op": "scale", "a": 1.0},
        "forcing": [_dirac(0.0, 1.0)],
    }


def delay_linear() -> dict:
    """``x'(t) = -x(t - 1)`` with ``x = 1`` on ``[-1, 0]``; the history is the impulse at -1."""
    return {
        "dim": 1,
        "mode": "lp",
        "p": 2,
        "grid": {"t_start": -1.0, "t_end": 4.0, "h": 1e-3},
        "rhs": _compose({"op": "scale", "a": -1.0}, {"op": "shift", "theta": -1.0}),
        "forcing": [_dirac(-1.0, 1.0)],
        "checks": {"t_cut": 2.0, "nu": [2.0, 4.0]},
    }


def das_neutral_order_n(n: int = 2) -> dict:
    """``(x - p0 x(t - 1))^{(n)} = p1(t) x(t - 1) + 1_[0, inf)`` in fixed-point form.

    ``p0 = 0.4`` and ``p1(t) = -cos(t)`` (tabulated); the step is
    ``p0 tau + antiderivative^n(p1 tau)``.
    """
    t = np.linspace(0.0, 4.0, 81)
    p1 = {"times": t.tolist(), "values": (-np.cos(t)).tolist()}
    delayed = {"op": "shift", "theta": -1.0}
    return {
        "dim": 1,
        "mode": "sup",
        "grid": {"t_start": 0.0, "t_end": 4.0, "h": 1e-3},
        "rhs": {
            "op": "sum",
            "terms": [
                _compose({"op": "scale", "a": 0.4}, delayed),
                _compose({"op": "antideriv", "order": n}, {"op": "coeff", "value": p1}, delayed),
            ],
        },
        "forcing": [{"grid": {"times": [0.0, 4.0], "values": [[1.0], [1.0]]}}],
        "form": "fixed_point",
        "order": n,
    }


def corduneanu_series_kernel() -> dict:
    """``x' = sum_j A_j x(t - t_j) + B * x``, with ``A_j = 2^{-j} A``, ``B(s) = e^{-s} B0``."""
    A = np.array([[-0.5, 0.2], [0.1, -0.3]])
    B0 = np.array([[0.0, -0.4], [0.4, 0.0]])
    terms = [{"op": "pointwise", "matrix": A.tolist()}]
    for j, tj in enumerate((0.5, 1.0, 1.5), start=1):
        terms.append(_compose({"op": "pointwise", "matrix": (A * 2.0**-j).tolist()}, {"op": "shift", "theta": -tj}))
    s = np.linspace(0.0, 3.0, 61)
    kernel = {"times": s.tolist(), "values": (np.exp(-s)[:, None, None] * B0).tolist()}
    terms.append({"op": "kernel", "horizon": 3.0, "kernel": kernel})
    return {
        "dim": 2,
        "mode": "lp",
        "p": 2,
        "grid": {"t_start": 0.0, "t_end": 5.0, "h": 1e-3},
        "rhs": {"op": "sum", "terms": terms},
        "forcing": [_dirac(0.0, [1.0, 0.0])],
    }


def continuous_delay() -> dict:
    """``x'(t) = -int_{-1}^0 (1 + theta) tanh(x(t + theta)) dtheta``, ``x(0+) = 1``."""
    theta = np.linspace(-1.0, 0.0, 21)
    return {
        "dim": 1,
        "mode": "lp",
        "p": 2,
        "grid": {"t_start": 0.0, "t_end": 6.0, "h": 1e-3},
        "rhs": _compose(
            {"op": "scale", "a": -1.0},
            {
                "op": "history",
                "horizon": 1.0,
                "kernel": {"times": theta.tolist(), "values": (1.0 + theta).tolist()},
                "inner": {"op": "pointwise", "map": "tanh"},
            },
        ),
        "forcing": [_dirac(0.0, 1.0)],
    }


def neutral_first_order() -> dict:
    """``x' = 1/2 x'(t - 1) + 1_[0, inf)``, zero history; ``x(2) = 2.5``."""
    return {
        "dim": 1,
        "mode": "lp",
        "p": 2,
        "grid": {"t_start": 0.0, "t_end": 3.0, "h": 1e-3},
        "rhs": _compose(
            {"op": "scale", "a": 0.5},
            {"op": "shift", "theta": -1.0},
            {"op": "pointwise", "matrix": [[0.0, 1.0]]},
        ),
        "forcing": [{"grid": {"times": [0.0, 3.0], "values": [[1.0], [1.0]]}}],
        "neutral": True,
    }


CANTOR_LEVEL = 6


def cantor_forcing() -> dict:
    """``u' = mu`` with ``mu`` the Cantor measure, given by its cumulative function."""
    cells = 3**CANTOR_LEVEL
    h = 1.0 / cells
    times = [i * h for i in range(cells + 1)]
    values = [[cantor_function(Fraction(i, cells))] for i in range(cells + 1)]
    return {
        "dim": 1,
        "mode": "lp",
        "p": 2,
        "grid": {"t_start": 0.0, "t_end": 1.0, "h": h},
        "rhs": {"op": "scale", "a": 0.0},
        "forcing": [{"cdf": {"times": times, "values": values}}],
    }


COMMUTATOR_T = np.array([[0.0, 1.0], [0.0, 0.0]])
COMMUTATOR_K = np.array([[0.0, 0.0], [1.0, 0.0]])


def commutator_matrix(T) -> np.ndarray:
    """Matrix of ``S -> TS - ST`` acting on row-major ``vec(S)``."""
    T = np.asarray(T, dtype=float)
    eye = np.eye(T.shape[0])
    return np.kron(T, eye) - np.kron(eye, T.T)


def commutator_flow(T=COMMUTATOR_T, K=COMMUTATOR_K) -> dict:
    """``S' = TS - ST``, ``S(0+) = K`` with ``S`` flattened row-major (d = 4)."""
    return {
        "dim": int(np.size(K)),
        "mode": "lp",
        "p": 2,
        "grid": {"t_start": 0.0, "t_end": 1.0, "h": 1e-3},
        "rhs": {"op": "pointwise", "matrix": commutator_matrix(T).tolist()},
        "forcing": [_dirac(0.0, np.asarray(K, dtype=float).ravel())],
    }


DEMOS: dict[str, Callable[[], dict]] = {
    "exponential-ivp": exponential_ivp,
    "delay-linear": delay_linear,
    "das-neutral-order-n": das_neutral_order_n,
    "corduneanu-series-kernel": corduneanu_series_kernel,
    "continuous-delay": continuous_delay,
    "neutral-first-order": neutral_first_order,
    "cantor-forcing": cantor_forcing,
    "commutator-flow": commutator_flow,
}


def spec(name: str) -> ProblemSpec:
    try:
        doc = DEMOS[name]()
    except KeyError:
        raise InvalidInputError(f"unknown demo {name!r}; available: {', '.join(DEMOS)}") from None
    return ProblemSpec.from_dict(doc)


def problem(name: str) -> Problem:
    return spec(name).build()


def cantor_table() -> tuple[np.ndarray, np.ndarray]:
    """The tabulated Cantor function used by the ``cantor-forcing`` demo."""
    doc = cantor_forcing()["forcing"][0]["cdf"]
    return np.asarray(doc["times"]), np.asarray(doc["values"])[:, 0]


__all__ = ["DEMOS", "spec", "problem", "cantor_table", "commutator_matrix"]
