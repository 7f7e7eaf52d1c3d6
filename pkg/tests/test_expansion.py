import math

import numpy as np
import pytest

from gds.densities import DensitySpec
from gds.errors import NonFinite, SupportError
from gds.estimator import CatalogFunction, PerturbationSpec
from gds.expansion import (
    A1,
    A2,
    ExpansionInputs,
    calI,
    mu_moment,
    rate_exponent,
    sigma00_sq,
    theorem_ratio,
)

UNIFORM = DensitySpec("uniform")
BETA22 = DensitySpec("beta", (2, 2))
ZERO = PerturbationSpec()


def sinus(amplitude, offset=0.0, phase=0.0):
    return CatalogFunction("sinusoidal", {"amplitude": amplitude, "offset": offset, "phase": phase}.items())


def lin(intercept, slope):
    return CatalogFunction("linear", {"intercept": intercept, "slope": slope}.items())


GENERAL = PerturbationSpec(tau=sinus(0.1, 0.05), a1=lin(0.2, -0.3), b1=sinus(0.3, 0.4, 1.0), r1=0.45, r2=0.4)


# -- point products -------------------------------------------------------------------------


def test_point_products_examples():
    z = [0.2, 0.9, 0.4]
    assert calI(z, ZERO) == 1.0
    assert A1([0.2, 0.7], PerturbationSpec(a1=0.1)) == pytest.approx(0.2)
    assert A2([0.3, 0.6], GENERAL) == 0.0
    assert A2([0.3, 0.6], GENERAL, strict=False) == pytest.approx(GENERAL.a1(0.3) * GENERAL.a1(0.6))


def test_point_products_brute_force():
    z = np.array([0.1, 0.35, 0.6, 0.85])
    t = 1 + GENERAL.tau(z)
    a = GENERAL.a1(z)
    assert calI(z, GENERAL) == pytest.approx(np.prod(t), rel=1e-14)
    assert A1(z, GENERAL) == pytest.approx(sum(a[j] * np.prod(t) / t[j] for j in range(4)), rel=1e-14)
    ref = sum(a[i] * a[j] * np.prod(t) / (t[i] * t[j]) for i in range(4) for j in range(i + 1, 4))
    assert A2(z, GENERAL) == pytest.approx(ref, rel=1e-14)


# -- moment constants -------------------------------------------------------------------------


def test_mu_examples():
    assert mu_moment(UNIFORM, BETA22, ZERO, 0, 0) == 1.0
    assert mu_moment(UNIFORM, BETA22, PerturbationSpec(a1=0.3), 1, 0) == pytest.approx(-0.3)
    assert mu_moment(UNIFORM, BETA22, PerturbationSpec(b1=0.4), 0, 2) == pytest.approx(0.16)
    assert mu_moment(UNIFORM, BETA22, GENERAL, 0, 1) == 0.0
    assert mu_moment(UNIFORM, BETA22, GENERAL, 1, 1) == 0.0
    with pytest.raises(ValueError):
        mu_moment(UNIFORM, BETA22, GENERAL, 2, 1)


def test_mu_against_direct_quadrature():
    from scipy import integrate

    def direct(i, km):
        k = i + km
        wm = {0: 1.0, 2: 1.0}[km]
        h = lambda x: (
            BETA22.pdf(x) * GENERAL.a1(np.array(x)) ** i * GENERAL.b1(np.array(x)) ** km
            / (1 + GENERAL.tau(np.array(x))) ** (k + 1)
        )
        val, _ = integrate.quad(h, 0, 1, epsabs=1e-14, epsrel=1e-13)
        return (-1) ** k * math.comb(k, i) * wm * val

    for i, km in [(0, 0), (1, 0), (2, 0), (0, 2)]:
        assert mu_moment(UNIFORM, BETA22, GENERAL, i, km) == pytest.approx(direct(i, km), rel=1e-10)


def test_mu_does_not_depend_on_f_but_needs_nesting():
    f2 = DensitySpec("truncated-normal", (0.5, 0.3), (-1, 2))
    a = mu_moment(UNIFORM, BETA22, GENERAL, 1, 0)
    assert mu_moment(f2, BETA22, GENERAL, 1, 0) == a
    with pytest.raises(SupportError):
        mu_moment(BETA22, DensitySpec("uniform", (), (0, 2)), GENERAL, 0, 0)


def test_sigma_examples():
    assert sigma00_sq(BETA22, BETA22, ZERO) == 0.0
    assert sigma00_sq(UNIFORM, BETA22, ZERO) == pytest.approx(0.2, abs=1e-9)
    assert sigma00_sq(UNIFORM, UNIFORM, PerturbationSpec(tau=0.2)) == 0.0
    with pytest.raises(NonFinite):
        sigma00_sq(BETA22, UNIFORM, ZERO)


# -- breakdown ----------------------------------------------------------------------------------


def test_self_sampling_is_exact():
    for n, z in [(2, [0.3, 0.7]), (3, [0.1, 0.5, 0.95]), (4, [0.2, 0.2, 0.4, 0.8])]:
        bd = theorem_ratio(ExpansionInputs(BETA22, BETA22, ZERO, n, z))
        for N in (10.0, 1e3, 1e6):
            assert bd.total(N) == 0.0


def test_zero_perturbation_reduction():
    g = DensitySpec("beta", (3, 2))
    z = np.array([0.3, 0.55, 0.8])
    bd = theorem_ratio(ExpansionInputs(UNIFORM, g, ZERO, 3, z))
    s2 = sigma00_sq(UNIFORM, g, ZERO)
    ref = 6 * (1 + s2) - sum((i + 1) * g.pdf(z[i]) for i in range(3))
    assert bd.inv_N_term == pytest.approx(ref, rel=1e-13)
    assert bd.const_term == bd.r1_term == bd.two_r1_term == bd.two_r2_term == 0.0


def test_constant_bias_cancels():
    bd = theorem_ratio(ExpansionInputs(UNIFORM, UNIFORM, PerturbationSpec(tau=0.2), 2, [0.3, 0.7]))
    assert bd.mu["0,0"] == pytest.approx(1 / 1.2)
    assert bd.calI == pytest.approx(1.44)
    assert bd.const_term == pytest.approx(0.0, abs=1e-15)


def test_bias_floor_nonconstant_tau():
    spec = PerturbationSpec(tau=sinus(0.2), r1=0.5, r2=0.5)
    z = [0.25, 0.25]
    bd = theorem_ratio(ExpansionInputs(UNIFORM, UNIFORM, spec, 2, z))
    mu = mu_moment(UNIFORM, UNIFORM, spec, 0, 0)
    assert bd.const_term == pytest.approx(mu**-2 / 1.2**2 - 1, rel=1e-12)
    assert bd.const_term < 0
    assert bd.rate_exponent == {"diverges": True}


def test_recomposition_identity():
    rng = np.random.default_rng(5)
    for _ in range(10):
        z = rng.random(3)
        bd = theorem_ratio(ExpansionInputs(UNIFORM, BETA22, GENERAL, 3, z))
        for N in rng.uniform(10, 1e7, 3):
            manual = (
                bd.const_term
                + N**-0.45 * bd.r1_term
                + N**-0.9 * bd.two_r1_term
                + N**-0.8 * bd.two_r2_term
                + bd.inv_N_term / N
            )
            assert bd.total(N) == pytest.approx(manual, rel=1e-14, abs=1e-16)
    assert np.allclose(bd.total(np.array([1e3, 1e4])), [bd.total(1e3), bd.total(1e4)])


def test_group_formulas_by_hand():
    # n = 2, constant tau = 0, constant a1 = c: the r1 group is -(2(-c) + 2c) = 0
    spec = PerturbationSpec(a1=0.4, b1=0.3, r1=0.45, r2=0.4)
    bd = theorem_ratio(ExpansionInputs(UNIFORM, BETA22, spec, 2, [0.3, 0.6]))
    assert bd.r1_term == pytest.approx(0.0, abs=1e-15)
    # 2r2 group: -2 mu02 + 2 b^2 = 0 for constant b1
    assert bd.two_r2_term == pytest.approx(0.0, abs=1e-15)
    # 2r1 group with A2 = 0: -2c^2 + 3c^2 - 4c^2*... evaluated explicitly
    c = 0.4
    expected = -2 * c**2 + 3 * c**2 + 2 * (-c) * (2 * c) - 0 + (2 * c) ** 2
    assert bd.two_r1_term == pytest.approx(expected, rel=1e-13)
    loose = theorem_ratio(ExpansionInputs(UNIFORM, BETA22, spec, 2, [0.3, 0.6], strict_paper_conventions=False))
    assert loose.two_r1_term == pytest.approx(expected - c**2, abs=1e-15)


def test_rate_exponent_examples():
    assert rate_exponent(PerturbationSpec(r1=0.4, r2=0.35)) == {"exponent": 0.4}
    assert rate_exponent(PerturbationSpec(r1=0.9, r2=0.6)) == {"exponent": 0.9}
    assert rate_exponent(PerturbationSpec(r1=1.2, r2=0.6)) == {"exponent": 1.0}
    assert rate_exponent(PerturbationSpec(r1=0.9, r2=0.4)) == {"exponent": 0.8}
    assert rate_exponent(PerturbationSpec(tau=0.1, r1=0.5, r2=0.5)) == {"diverges": True}
    assert rate_exponent(PerturbationSpec(tau=1e-13, r1=0.5, r2=0.5)) == {"exponent": 0.5}


def test_dominant_order_matches_rate():
    spec = PerturbationSpec(a1=sinus(0.5), b1=0.3, r1=0.45, r2=0.4)
    bd = theorem_ratio(ExpansionInputs(UNIFORM, BETA22, spec, 2, [0.2, 0.3]))
    for N in (1e6, 1e8):
        slope = math.log2(abs(bd.total(N)) / abs(bd.total(2 * N)))
        assert slope == pytest.approx(0.45, abs=0.02)


def test_nonfinite_variance():
    spec = PerturbationSpec(tau=0.2, a1=0.5, b1=0.5, r1=0.45, r2=0.4)
    inputs = ExpansionInputs(BETA22, UNIFORM, spec, 2, [0.4, 0.6])
    with pytest.raises(NonFinite):
        theorem_ratio(inputs)
    bd = theorem_ratio(inputs, allow_nonfinite=True)
    assert math.isinf(bd.sigma00_sq) and math.isinf(bd.inv_N_term)
    assert bd.const_term == pytest.approx(0.0, abs=1e-15)
    d = bd.to_dict([4096])
    assert d["sigma00_sq"] is None and d["groups"]["const"] == bd.const_term


def test_inputs_validation():
    with pytest.raises(ValueError):
        ExpansionInputs(UNIFORM, BETA22, ZERO, 1, [0.3])
    with pytest.raises(ValueError):
        ExpansionInputs(UNIFORM, BETA22, ZERO, 2, [0.3])
    with pytest.raises(SupportError):
        ExpansionInputs(UNIFORM, BETA22, ZERO, 2, [0.3, 1.3])


def test_breakdown_json_keys():
    bd = theorem_ratio(ExpansionInputs(UNIFORM, BETA22, GENERAL, 2, [0.3, 0.6]))
    d = bd.to_dict([1000, 2000])
    assert {"calI", "A1", "A2", "mu", "sigma00_sq", "groups", "total"} <= set(d)
    assert set(d["groups"]) == {"const", "r1", "two_r1", "two_r2", "inv_N"}
    assert d["total"]["1000"] == bd.total(1000)
