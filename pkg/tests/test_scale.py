import math
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from jklab.scale import (ScaleError, ScaleFunction, compose_phi, crossover_log_bounds, crossover_radius,
                         example_phi, lower_scaling_index, make_bar_phi_c, make_triple, phi_c_from_phi_j,
                         sandwich_holds)


def test_piecewise_power_values(phi_j_11):
    assert phi_j_11(1.0) == pytest.approx(1.0, rel=1e-15)
    assert phi_j_11(2.0) == pytest.approx(8.0, rel=1e-14)
    assert phi_j_11(0.5) == pytest.approx(0.5, rel=1e-14)
    assert phi_j_11(4.0) == pytest.approx(64.0, rel=1e-14)


def test_inverse_closed_form(phi_j_11):
    assert phi_j_11.inverse(27.0) == pytest.approx(3.0, rel=1e-12)
    assert phi_j_11.inverse(0.25) == pytest.approx(0.25, rel=1e-12)


def test_power_round_trip_vectorized():
    s = ScaleFunction.power(2.5)
    r = np.geomspace(1e-6, 1e6, 50)
    np.testing.assert_allclose(s.inverse(s(r)), r, rtol=1e-12)
    np.testing.assert_allclose(s(r), r ** 2.5, rtol=1e-12)


def test_table_normalizes_and_interpolates():
    r = np.array([0.5, 1.0, 2.0, 4.0])
    s = ScaleFunction.from_table(r, 3 * r ** 2)
    assert s(1.0) == pytest.approx(1.0)
    assert s(3.0) == pytest.approx(9.0, rel=1e-12)  # log-log linear between samples
    assert s(8.0) == pytest.approx(64.0, rel=1e-12)  # end slope extends


def test_table_rejects_non_monotone():
    with pytest.raises(ScaleError, match="not strictly increasing"):
        ScaleFunction.from_table([0.5, 1.0, 2.0], [0.5, 1.0, 1.0])


def test_rejects_bad_exponents():
    with pytest.raises(ScaleError):
        ScaleFunction.piecewise_power([1.0], [1.0, 0.0])
    with pytest.raises(ScaleError):
        ScaleFunction.piecewise_power([2.0, 1.0], [1.0, 2.0, 3.0])


def test_dict_round_trip(phi_j_11):
    doc = phi_j_11.to_dict()
    assert doc == {"kind": "piecewise_power", "breaks": [1.0], "exponents": [1.0, 3.0]}
    again = ScaleFunction.from_dict(doc)
    r = np.geomspace(1e-3, 1e3, 30)
    np.testing.assert_allclose(again(r), phi_j_11(r), rtol=1e-14)
    with pytest.raises(ScaleError, match="unknown scale keys"):
        ScaleFunction.from_dict({"kind": "piecewise_power", "exponents": [2], "expnents": [2]})


def test_scaling_indices(phi_j_11):
    assert lower_scaling_index(phi_j_11, "small") == 1.0
    assert lower_scaling_index(phi_j_11, "large") == 3.0
    with pytest.raises(ValueError):
        lower_scaling_index(phi_j_11, "middle")


def test_composite_picks_branches(phi_j_11):
    phi = compose_phi(phi_j_11, ScaleFunction.power(2.0), 1.0, 3.0)
    # beta_* = 1 keeps phi_j below 1, beta^* = 3 switches to phi_c above 1
    assert phi(0.25) == pytest.approx(0.25)
    assert phi(8.0) == pytest.approx(64.0)


def test_composite_rejects_flat_phi_c(phi_j_11):
    with pytest.raises(ScaleError):
        compose_phi(phi_j_11, ScaleFunction.power(1.0), 1.0, 3.0)


def test_bar_phi_c():
    bar = make_bar_phi_c(ScaleFunction.power(2.0))
    assert bar(7.0) == pytest.approx(7.0)
    with pytest.raises(ScaleError):
        make_bar_phi_c(ScaleFunction.piecewise_power([1.0], [1.0, 2.0]))


def test_sandwich_window():
    s = ScaleFunction.piecewise_power([1.0, 4.0], [0.5, 2.0, 1.5])
    assert s.window[:2] == (0.5, 2.0)
    assert sandwich_holds(s)


def test_example_phi_pure_power_closed_form():
    alpha = 0.5
    r = np.geomspace(1e-3, 1e3, 40)
    got = example_phi(ScaleFunction.power(alpha), r)
    np.testing.assert_allclose(got, (1 - alpha / 2) * r ** alpha, rtol=1e-8)


def test_example_phi_log_correction():
    phi_j = ScaleFunction.piecewise_power([1.0], [0.5, 2.0])
    r = np.geomspace(10, 1e4, 30)
    ratio = example_phi(phi_j, r) * np.log1p(r) / r ** 2
    assert ratio.max() / ratio.min() <= 5


def test_constructed_phi_c_shape():
    phi_c = phi_c_from_phi_j(ScaleFunction.piecewise_power([1.0], [1.5, 2.0]))
    r_small = np.geomspace(1e-6, 1, 20)
    np.testing.assert_allclose(phi_c(r_small), r_small ** 2, rtol=1e-10)
    r = np.geomspace(1, 1e6, 40)
    assert np.all(np.diff(phi_c(r)) > 0)
    make_bar_phi_c(phi_c)  # phi_c(r)/r stays increasing for this phi_j


def test_constructed_phi_c_small_exponent_breaks_bar():
    # for alpha <= 1 the constructed phi_c(r)/r is not monotone just above r=1
    phi_c = phi_c_from_phi_j(ScaleFunction.piecewise_power([1.0], [0.5, 2.0]))
    with pytest.raises(ScaleError):
        make_bar_phi_c(phi_c)


def test_constructed_phi_c_rejects_steep_phi_j():
    with pytest.raises(ScaleError, match="below 2"):
        phi_c_from_phi_j(ScaleFunction.power(2.5))


def test_crossover_reference_value(phi_j_11):
    res = crossover_radius(phi_j_11, ScaleFunction.power(2.0), 100.0)
    assert res.found
    assert res.radius == pytest.approx(16.2451, rel=1e-4)
    lo, hi = res.bracket
    assert lo < res.radius < hi


def test_crossover_balances_branches(phi_j_11):
    phi_c = ScaleFunction.power(2.0)
    t = 1000.0
    r = crossover_radius(phi_j_11, phi_c, t).radius
    bar = make_bar_phi_c(phi_c)
    s = r / bar.inverse(t / r)
    f1 = math.exp(s) / s
    f2 = 4.0 * bar.inverse(t / r) / phi_j_11.inverse(t)
    assert f1 == pytest.approx(f2, rel=1e-6)


def test_no_crossover_when_scales_coincide():
    res = crossover_radius(ScaleFunction.power(3.0), ScaleFunction.power(3.0), 50.0)
    assert not res.found and res.radius is None
    with pytest.raises(ScaleError):
        crossover_radius(ScaleFunction.power(3.0), ScaleFunction.power(2.0), 0.5)


def test_crossover_log_bounds_are_ordered(phi_j_11):
    lo, hi = crossover_log_bounds(phi_j_11, ScaleFunction.power(2.0), 1e4)
    assert 0 < lo <= hi


def test_triple_warns_near_one():
    phi_j = ScaleFunction.piecewise_power([1.0], [1.01, 3.0])
    with warnings.catch_warnings(record=True) as rec:
        warnings.simplefilter("always")
        tri = make_triple(phi_j, ScaleFunction.power(2.0))
    assert any("close to 1" in str(w.message) for w in rec)
    assert tri.notes


def test_triple_fields(triple_11):
    assert triple_11.beta_star_small == 1.0
    assert triple_11.beta_star_large == 3.0
    assert triple_11.c_zero >= 1.0


exps = st.lists(st.floats(0.2, 4.0), min_size=1, max_size=4)


@given(exps, st.floats(-8, 8))
def test_inverse_round_trip_property(exponents, log_t):
    breaks = list(np.exp2(np.arange(len(exponents) - 1) - 1.0))
    s = ScaleFunction.piecewise_power(breaks, exponents)
    t = math.exp(log_t)
    assert s(s.inverse(t)) == pytest.approx(t, rel=1e-10)


@given(exps)
def test_monotone_and_sandwich_property(exponents):
    breaks = list(np.exp2(np.arange(len(exponents) - 1)))
    s = ScaleFunction.piecewise_power(breaks, exponents)
    r = np.geomspace(1e-5, 1e5, 200)
    assert np.all(np.diff(s(r)) > 0)
    assert s(1.0) == pytest.approx(1.0, abs=1e-12)
    assert sandwich_holds(s)
    assert lower_scaling_index(s, "small") >= min(exponents) - 1e-9
