import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from ddefix.errors import InvalidInputError
from ddefix.grid import (
    Grid,
    GridFunction,
    Weight,
    derivative,
    quadrature_tolerance,
    resample,
    sobolev_constant,
    weighted_norm,
)


def test_grid_nodes_and_validation():
    g = Grid(-1.0, 0.25, 9)
    np.testing.assert_allclose(g.nodes, np.linspace(-1, 1, 9))
    assert g.t_end == pytest.approx(1.0)
    with pytest.raises(InvalidInputError):
        Grid(0.0, 0.0, 5)
    with pytest.raises(InvalidInputError):
        Grid(0.0, 0.1, 1)
    with pytest.raises(InvalidInputError):
        Grid.from_span(0.0, 1.0, 0.3)


def test_grid_refine_keeps_old_nodes():
    g = Grid.from_span(0.0, 2.0, 0.5)
    fine = g.refine(4)
    assert fine.count == 17
    np.testing.assert_allclose(fine.nodes[::4], g.nodes)
    assert g.index_of(1.5) == 3
    assert g.index_of(1.3) is None


def test_weight_conjugate_exponent():
    assert Weight(1.0, 2.0).q == pytest.approx(2.0)
    assert Weight(1.0, 3.0).q == pytest.approx(1.5)
    assert Weight(1.0, math.inf).q == 1.0
    with pytest.raises(InvalidInputError):
        Weight(0.0)
    with pytest.raises(InvalidInputError):
        Weight(1.0, 1.0)


def test_gridfunction_rejects_bad_values():
    g = Grid(0.0, 0.1, 4)
    with pytest.raises(InvalidInputError):
        GridFunction(g, [0.0, 1.0, np.nan, 0.0])
    with pytest.raises(InvalidInputError):
        GridFunction(g, np.zeros(3))
    f = GridFunction(g, np.arange(4.0))
    with pytest.raises(ValueError):
        f.values[0] = 5.0


def test_indicator_norm_matches_closed_form():
    # oracle: ((1 - e^{-2}) / 2)^{1/2}, the integral of e^{-2t} over [0, 1]
    g = Grid.from_span(-0.5, 2.0, 1e-3)
    f = GridFunction.indicator(g, 0.0, 1.0)
    expected = math.sqrt((1 - math.exp(-2)) / 2)
    assert expected == pytest.approx(0.65752, abs=1e-5)
    assert weighted_norm(f, Weight(1.0, 2.0)) == pytest.approx(expected, rel=quadrature_tolerance(g, Weight(1.0, 2.0)))


def test_indicator_sup_norm_is_one():
    g = Grid.from_span(0.0, 2.0, 1e-2)
    f = GridFunction.indicator(g, 0.0, 1.0)
    assert weighted_norm(f, Weight(1.0, math.inf)) == pytest.approx(1.0)


def test_zero_norm():
    g = Grid(0.0, 0.1, 10)
    assert weighted_norm(GridFunction.zeros(g, 3), Weight(2.0)) == 0.0
    assert weighted_norm(GridFunction.zeros(g, 3), Weight(2.0, math.inf)) == 0.0


def test_norm_matches_quad_for_smooth_function():
    # oracle: scipy adaptive quadrature of |f|^p e^{-p nu t}
    nu, p = 1.5, 3.0
    fn = lambda t: np.sin(3 * t) * t  # noqa: E731
    ref = quad(lambda t: abs(fn(t)) ** p * math.exp(-p * nu * t), 0, 4, limit=200)[0] ** (1 / p)
    g = Grid.from_span(0.0, 4.0, 1e-3)
    assert weighted_norm(GridFunction.from_function(g, fn), Weight(nu, p)) == pytest.approx(ref, rel=1e-6)


def test_norm_quadrature_converges_at_order_two():
    fn = lambda t: np.exp(-((t - 1) ** 2)) * np.cos(2 * t)  # noqa: E731
    w = Weight(1.0, 2.0)
    ref = math.sqrt(quad(lambda t: fn(t) ** 2 * math.exp(-2 * t), 0, 5, limit=200)[0])
    errs = []
    for h in (0.04, 0.02, 0.01):
        g = Grid.from_span(0.0, 5.0, h)
        errs.append(abs(weighted_norm(GridFunction.from_function(g, fn), w) - ref))
    assert 3.5 < errs[0] / errs[1] < 4.5
    assert 3.5 < errs[1] / errs[2] < 4.5


def test_norm_is_stable_for_large_nu_t():
    # |f|^2 = e^{1000} overflows a direct evaluation; the weighted integrand is 1
    g = Grid.from_span(0.0, 100.0, 0.5)
    f = GridFunction.from_function(g, lambda t: np.exp(5.0 * t))
    assert weighted_norm(f, Weight(5.0, 2.0)) == pytest.approx(10.0, rel=1e-12)
    assert weighted_norm(f, Weight(5.0, math.inf)) == pytest.approx(1.0, rel=1e-12)


def test_jump_is_integrated_exactly():
    # a step at a node has no quadrature error: int_1^3 e^{-2t} dt
    g = Grid.from_span(0.0, 3.0, 0.25)
    f = GridFunction.heaviside(g, 1.0)
    ref = math.sqrt((math.exp(-2) - math.exp(-6)) / 2)
    assert weighted_norm(f, Weight(1.0, 2.0)) == pytest.approx(ref, rel=quadrature_tolerance(g, Weight(1.0, 2.0)))


def test_resample_identity_refinement_and_prepend():
    g = Grid.from_span(0.0, 2.0, 0.5)
    hat = GridFunction(g, [0.0, 1.0, 0.0, 0.0, 0.0])
    assert resample(hat, g) is hat
    fine = resample(hat, g.refine(2))
    np.testing.assert_allclose(fine.values[:, 0], [0, 0.5, 1, 0.5, 0, 0, 0, 0, 0])

    ind = GridFunction.indicator(g, 0.0, 1.0)
    earlier = Grid.from_span(-1.0, 2.0, 0.5)
    out = resample(ind, earlier)
    np.testing.assert_array_equal(out.values[:, 0], [0, 0, 1, 1, 0, 0, 0])


def test_resample_beyond_end_raises():
    g = Grid.from_span(0.0, 1.0, 0.5)
    with pytest.raises(InvalidInputError):
        resample(GridFunction.zeros(g), Grid.from_span(0.0, 2.0, 0.5))


def test_interpolation_and_left_limits():
    g = Grid.from_span(0.0, 2.0, 1.0)
    f = GridFunction.heaviside(g, 1.0, 2.0)
    assert f.has_jumps
    np.testing.assert_array_equal(f.left[:, 0], [0, 0, 2])
    np.testing.assert_allclose(f([-1.0, 0.5, 1.0, 1.5])[:, 0], [0, 0, 2, 2])


def test_sobolev_constant_values():
    assert sobolev_constant(Weight(2.0, 2.0)) == pytest.approx(0.5)
    assert sobolev_constant(Weight(3.0, math.inf)) == pytest.approx(1 / 3)


def test_derivative_recovers_polynomial():
    g = Grid.from_span(0.0, 1.0, 0.01)
    f = GridFunction.from_function(g, lambda t: t**2)
    np.testing.assert_allclose(derivative(f).values[1:-1, 0], 2 * g.nodes[1:-1], atol=1e-12)


samples = st.lists(st.floats(-5, 5, allow_nan=False), min_size=12, max_size=12)


@settings(max_examples=60, deadline=None)
@given(samples, st.floats(-4, 4), st.sampled_from([1.5, 2.0, 4.0, math.inf]), st.floats(0.1, 5))
def test_norm_homogeneity(vals, c, p, nu):
    g = Grid(0.0, 0.3, len(vals))
    f = GridFunction(g, vals)
    w = Weight(nu, p)
    assert weighted_norm(c * f, w) == pytest.approx(abs(c) * weighted_norm(f, w), rel=1e-12, abs=1e-300)


@settings(max_examples=60, deadline=None)
@given(samples, samples, st.sampled_from([1.5, 2.0, 3.0, math.inf]), st.floats(0.1, 5))
def test_norm_triangle_inequality(a, b, p, nu):
    g = Grid(0.0, 0.3, len(a))
    f, h = GridFunction(g, a), GridFunction(g, b)
    w = Weight(nu, p)
    assert weighted_norm(f + h, w) <= weighted_norm(f, w) + weighted_norm(h, w) + 1e-12
