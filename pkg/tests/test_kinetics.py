import math

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from porevox.kinetics import (
    Isotherm, advance_m, advance_with_sensitivity, eliminate_face, equilibrium, face_concentration, rate,
    robin_face_coefficients,
)

from oracles import ode_oracle

da = st.floats(1e-3, 20.0)
conc = st.floats(0.0, 2.0)
dts = st.floats(1e-4, 10.0)


def test_rate_examples():
    assert rate(Isotherm.langmuir(3.0, 0.0, 0.5), 1.0, 0.5) == 0.0
    assert rate(Isotherm.henry(0.1, 0.001), 1.0, 0.0) == pytest.approx(0.1, abs=0)
    assert rate(Isotherm.inert(), 5.0, 2.0) == 0.0
    lang = rate(Isotherm.langmuir(2.0, 3.0, 0.5), 0.7, 0.2)
    assert lang == pytest.approx(2.0 * 0.7 * (1 - 0.4) - 3.0 * 0.2, rel=1e-15)


def test_invalid_isotherms():
    with pytest.raises(ValueError):
        Isotherm.langmuir(1.0, 1.0, 0.0)
    with pytest.raises(ValueError):
        Isotherm.henry(-1.0, 1.0)
    with pytest.raises(ValueError):
        Isotherm("inert", 1.0)
    with pytest.raises(ValueError):
        Isotherm("bet")


def test_henry_frozen_value():
    # (Da_a/Da_d)(1 - exp(-Da_d)) for c = 1, m0 = 0, dt = 1
    m = advance_m(Isotherm.henry(0.1, 0.001), 1.0, 0.0, 1.0)
    assert m == pytest.approx(0.09995001666250084, rel=1e-14)
    assert abs(m - ode_oracle("henry", 0.1, 0.001, math.inf, 0, 1.0, 0.0, 1.0)) < 1e-10 * m


def test_langmuir_long_time_equilibrium():
    iso = Isotherm.langmuir(10.0, 10.0, 1e-4)
    expected = 10.0 / (10.0 / 1e-4 + 10.0)
    assert advance_m(iso, 1.0, 0.0, 50.0) == pytest.approx(expected, rel=1e-14)
    assert equilibrium(iso, 1.0) == pytest.approx(expected, rel=1e-15)


def test_zero_rate_case():
    for iso in (Isotherm.henry(0.3, 0.0), Isotherm.langmuir(0.3, 0.0, 1.0)):
        assert advance_m(iso, 0.0, 0.25, 7.0) == 0.25


def test_degenerate_langmuir_denominator():
    iso = Isotherm.langmuir(0.0, 0.0, 1.0)
    assert advance_m(iso, 1.0, 0.4, 3.0) == 0.4


def test_henry_pure_adsorption_is_linear_in_time():
    assert advance_m(Isotherm.henry(0.2, 0.0), 0.5, 0.1, 3.0) == pytest.approx(0.1 + 0.2 * 0.5 * 3.0, rel=1e-15)


@pytest.mark.parametrize("variant", ["henry", "langmuir"])
def test_against_ode_oracle(variant):
    rng = np.random.default_rng(42 if variant == "henry" else 43)
    worst = 0.0
    for _ in range(100):
        a, d = 10 ** rng.uniform(-3, 1.3, 2)
        m_inf = 10 ** rng.uniform(-4, 1) if variant == "langmuir" else math.inf
        c, dt = rng.uniform(0, 2), 10 ** rng.uniform(-4, 1)
        m0 = rng.uniform(0, m_inf if variant == "langmuir" else 1.0)
        iso = Isotherm(variant, a, d, m_inf)
        got = advance_m(iso, c, m0, dt)
        ref = ode_oracle(variant, a, d, m_inf, 0.0, c, m0, dt)
        worst = max(worst, abs(got - ref) / max(abs(ref), 1e-300))
    assert worst < 1e-10


def test_frumkin_against_ode_oracle():
    rng = np.random.default_rng(44)
    for _ in range(30):
        a, d = 10 ** rng.uniform(-2, 1, 2)
        m_inf, beta = 10 ** rng.uniform(-2, 0), rng.uniform(0, 5)
        c, dt = rng.uniform(0, 2), 10 ** rng.uniform(-3, 0)
        m0 = rng.uniform(0, m_inf)
        got = advance_m(Isotherm.frumkin(a, d, m_inf, beta), c, m0, dt)
        ref = ode_oracle("frumkin", a, d, m_inf, beta, c, m0, dt)
        assert abs(got - ref) <= 1e-8 * abs(ref) + 1e-15


@given(da, da, st.floats(1e-4, 10.0), conc, dts, st.floats(0, 1))
def test_frumkin_beta_zero_is_langmuir(a, d, m_inf, c, dt, frac):
    m0 = frac * m_inf
    f = advance_m(Isotherm.frumkin(a, d, m_inf, 0.0), c, m0, dt)
    lang = advance_m(Isotherm.langmuir(a, d, m_inf), c, m0, dt)
    # absolute floor: the complex-step derivative leaves O(1e-60) residue when the answer is 0
    assert abs(f - lang) <= 1e-8 * abs(lang) + 1e-30
    assert rate(Isotherm.frumkin(a, d, m_inf, 0.0), c, m0) == rate(Isotherm.langmuir(a, d, m_inf), c, m0)


@given(da, da, conc, conc, st.floats(0, 1), st.floats(0, 1), dts, st.floats(-2, 2))
def test_henry_affine(a, d, c1, c2, m1, m2, dt, w):
    iso = Isotherm.henry(a, d)
    # superposition with weights summing to one, kept inside the admissible region
    assume(0 <= w <= 1)
    mix = advance_m(iso, w * c1 + (1 - w) * c2, w * m1 + (1 - w) * m2, dt)
    parts = w * advance_m(iso, c1, m1, dt) + (1 - w) * advance_m(iso, c2, m2, dt)
    assert abs(mix - parts) <= 1e-13 * max(abs(parts), 1e-12)


@given(da, da, st.floats(1e-4, 10.0), conc, dts, st.floats(0, 1))
def test_langmuir_bounds(a, d, m_inf, c, dt, frac):
    iso = Isotherm.langmuir(a, d, m_inf)
    m0 = frac * m_inf
    m = advance_m(iso, c, m0, dt)
    eq = float(equilibrium(iso, c))
    assert 0 <= m <= m_inf
    assert min(m0, eq) - 1e-15 <= m <= max(m0, eq) + 1e-15


@given(st.sampled_from(["henry", "langmuir", "frumkin"]), da, da, conc, st.floats(1e-4, 1.0), st.floats(0, 1))
def test_sensitivity_matches_finite_difference(variant, a, d, c, dt, frac):
    iso = Isotherm(variant, a, d, 1.0 if variant != "henry" else math.inf, 1.5 if variant == "frumkin" else 0.0)
    c = max(c, 1e-3)
    m0 = frac
    _, dm = advance_with_sensitivity(iso, c, m0, dt)
    h = 1e-6 * max(c, 1.0)
    fd = (advance_m(iso, c + h, m0, dt) - advance_m(iso, c - h, m0, dt)) / (2 * h)
    # central differences lose about eps * m0 / h to cancellation
    assert abs(dm - fd) <= 1e-5 * abs(fd) + 1e-9 * (1.0 + m0)


def test_robin_inert_is_zero_flux():
    a_face, a_cell, rhs = robin_face_coefficients(Isotherm.inert(), 0.7, 0.0, 0.1, 10.0, 0.25)
    diag, const = eliminate_face(a_face, a_cell, rhs)
    assert diag == 0.0 and const == 0.0
    assert face_concentration(a_face, a_cell, rhs, 0.3) == pytest.approx(0.3, rel=1e-15)


def test_robin_desorption_flows_into_fluid():
    iso = Isotherm.henry(0.0, 2.0)
    c, m = 0.5, 0.3
    a_face, a_cell, rhs = robin_face_coefficients(iso, c, m, 0.01, 5.0, 0.1)
    diag, const = eliminate_face(a_face, a_cell, rhs)
    outward = diag * c + const
    assert rate(iso, c, m) < 0 and outward < 0


@given(st.sampled_from(["henry", "langmuir", "frumkin"]), da, da, conc, conc, st.floats(1e-3, 1.0),
       st.floats(1e-2, 1e2), st.floats(0.05, 1.0))
def test_robin_flux_equals_uptake_at_linearisation_point(variant, a, d, c_lin, m0, dt, pe, dx):
    """With the face value at the linearisation point the relation balances flux and uptake exactly."""
    iso = Isotherm(variant, a, d, 2.0 if variant != "henry" else math.inf, 0.7 if variant == "frumkin" else 0.0)
    m0 = min(m0, 2.0)
    a_face, a_cell, rhs = robin_face_coefficients(iso, c_lin, m0, dt, pe, dx)
    c_cell = (rhs - a_face * c_lin) / a_cell
    flux = 2.0 / (pe * dx) * (c_cell - c_lin)
    uptake = (advance_m(iso, c_lin, m0, dt) - m0) / dt
    assert abs(flux - uptake) <= 1e-10 * max(abs(uptake), 2.0 / (pe * dx) * max(abs(c_cell), c_lin), 1e-300)
    # the eliminated cell-row flux agrees with the face relation
    diag, const = eliminate_face(a_face, a_cell, rhs)
    assert abs(diag * c_cell + const - flux) <= 1e-9 * max(abs(flux), 2.0 / (pe * dx) * abs(c_cell), 1e-300)


def test_robin_requires_positive_pe_dx():
    with pytest.raises(ValueError):
        robin_face_coefficients(Isotherm.henry(1.0, 1.0), 1.0, 0.0, 0.1, 0.0, 1.0)
