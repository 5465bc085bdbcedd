"""Polarizations, observable classes, the quantization space and the quadrature inner product."""
from __future__ import annotations

import warnings

import numpy as np
import pytest
import sympy as sp

from atwist.algebra.symexpr import I, Chart, Sampler, equiv, random_polynomial, vanishes, wirtinger
from atwist.algebra.tensorcalc import FormField, d_, dx
from atwist.geometry.polarize import (
    BoundaryLeak,
    DegenerateGenerators,
    Polarization,
    PolarizationError,
    QuadratureGrid,
    QuantSection,
    anti_hermitian_defect,
    closure_check,
    extended_D,
    extended_hat,
    extended_homomorphism_residual,
    h0_check,
    h0_residuals,
    hat_closed_form,
    in_P,
    in_Q,
    inner_product,
    isotropy_check,
    lie_half_density,
    membership,
    pair_condition,
    quadrature,
    rank_check,
)
from atwist.geometry.prequantum import TWO_PI_I, ContravariantD
from atwist.geometry.twisted_core import AtpStructure, poisson_bracket


@pytest.fixture(scope="module")
def strict() -> Sampler:
    return Sampler(seed=0, n_samples=64, tol=1e-9)


@pytest.fixture(scope="module")
def holo(section6_manifest):
    """(structure, polarization, plain derivative) of the shipped complex example."""
    m = section6_manifest
    return m.structure(), m.polarization(), m.hilbert_D()


def _bump(chart: Chart):
    e = sp.Integer(1)
    for x in chart.symbols:
        e = e * sp.exp(1 / (x**2 - 1))
    return e


# ── Polarizations ─────────────────────────────────────────────────────────────


def test_polarization_needs_one_form_generators(chart4):
    with pytest.raises(PolarizationError):
        Polarization(())
    with pytest.raises(PolarizationError):
        Polarization((dx(chart4, 1, 2),))


def test_shipped_polarization_is_isotropic_closed_and_of_full_rank(holo, strict):
    S, P, _ = holo
    assert len(P.generators) == 2
    assert isotropy_check(S, P, strict).passed
    assert rank_check(P, strict).member
    assert closure_check(S, P, strict).member


def test_real_coordinate_forms_are_not_isotropic(holo, strict):
    S, _, _ = holo
    assert not isotropy_check(S, Polarization((dx(S.chart, 1), dx(S.chart, 2))), strict).passed


def test_rank_check_flags_dependent_generators(chart4, strict):
    P = Polarization((dx(chart4, 1), dx(chart4, 1, coeff=2)))
    assert not rank_check(P, strict).member
    with pytest.raises(DegenerateGenerators):
        membership(dx(chart4, 2), P, strict)


def test_span_membership(holo, strict):
    _, P, _ = holo
    chart = P.chart
    a1, a2 = P.generators
    assert membership(a1 + a2 * chart.coord(1), P, strict).member
    assert membership(FormField.zero(chart, 1), P, strict).member
    dzbar1 = dx(chart, 1) + dx(chart, 2, coeff=-I)
    report = membership(dzbar1, P, strict)
    assert not report.member
    assert report.max_distance > 1e-3


# ── Observables ───────────────────────────────────────────────────────────────


def test_holomorphic_functions_are_in_P(holo, strict):
    S, P, _ = holo
    chart = S.chart
    assert in_P(S, P, chart.z(1) ** 2 * chart.z(2), strict).member
    assert in_P(S, P, chart.coord(5), strict).member
    assert in_P(S, P, sp.Integer(4), strict).member


def test_functions_depending_on_zbar_are_not_in_P(holo, strict):
    S, P, _ = holo
    chart = S.chart
    assert not in_P(S, P, chart.coord(1), strict).member
    assert not in_P(S, P, chart.z(1) * chart.zbar(1), strict).member


def test_pair_condition(holo, strict):
    S, P, _ = holo
    chart = S.chart
    z1, z2 = chart.z(1), chart.z(2)
    assert pair_condition(S, P, z1, z2, strict).member
    assert pair_condition(S, P, z1, sp.Integer(1), strict).member
    same = pair_condition(S, P, z1, z1, strict)
    assert not same.member
    assert same.reason == "f and g coincide"
    assert pair_condition(S, P, chart.coord(1), z2, strict).reason == "f is not in P"


def test_quantizable_observables(holo, strict):
    S, P, _ = holo
    chart = S.chart
    t = chart.coord(5)
    assert in_Q(S, P, t, [], strict).member
    assert in_Q(S, P, chart.z(1), [chart.z(2), t], strict).member
    assert in_Q(S, P, sp.Integer(2), [], strict).member
    report = in_Q(S, P, chart.coord(1), [t], strict)
    assert not report.member
    assert report.reason == "not in P"


def _random_observable(chart: Chart, rng: np.random.Generator, holomorphic: bool):
    """Polynomial in z1, z2 and t, plus conjugate coordinates unless holomorphic."""
    x = chart.symbols
    pool = (1, 2, 5) if holomorphic else (1, 2, 3, 4, 5)
    e = random_polynomial(chart, rng, degree=3, n_terms=3, coords=pool, complex_coeffs=True)
    return sp.expand(e.xreplace({x[0]: chart.z(1), x[1]: chart.z(2), x[2]: chart.zbar(1), x[3]: chart.zbar(2)}))


def test_P_membership_is_the_antiholomorphic_derivative_test(holo, strict):
    S, P, _ = holo
    chart = S.chart
    rng = np.random.default_rng(50)
    for n in range(10):
        f = _random_observable(chart, rng, holomorphic=n % 2 == 0)
        holomorphic = all(sp.expand(wirtinger(f, k, True, chart)) == 0 for k in (1, 2))
        assert in_P(S, P, f, strict).member == holomorphic, f


def test_quantizable_observables_are_closed_under_the_bracket(holo, strict):
    S, P, _ = holo
    chart = S.chart
    rng = np.random.default_rng(51)
    for _ in range(3):
        f, g = (_random_observable(chart, rng, holomorphic=True) for _ in range(2))
        assert in_Q(S, P, f, [g], strict).member
        assert in_Q(S, P, g, [f], strict).member
        assert in_Q(S, P, poisson_bracket(S, f, g), [f, g], strict).member


# ── Quantization space ────────────────────────────────────────────────────────


def test_lie_derivative_of_half_densities(chart2):
    x1 = chart2.coord(1)
    assert lie_half_density(d_(chart2, 1), QuantSection(chart2, x1)).u == 1
    assert lie_half_density(d_(chart2, 1, coeff=x1), QuantSection(chart2, sp.Integer(1))).u == sp.Rational(1, 2)


def test_extended_derivative_along_the_anchor_kernel(section6_manifest):
    m = section6_manifest
    chart = m.chart
    u = chart.coord(1) * chart.coord(2)
    q = QuantSection(chart, u)
    assert extended_D(m.hilbert_D(), dx(chart, 5), q).u == 0
    certified = m.certificate_derivative()
    assert sp.simplify(extended_D(certified, dx(chart, 5), q).u - TWO_PI_I * u) == 0


def test_product_section_is_in_H0(holo, section6_manifest, strict):
    _, P, D = holo
    q = section6_manifest.section("u")
    assert h0_check(D, P, q, strict).passed
    assert h0_check(D, P, QuantSection(q.chart, sp.Integer(0)), strict).passed


def test_half_power_probe_only_solves_the_first_equation(holo, section6_manifest, strict):
    _, P, D = holo
    q = section6_manifest.section("u_half_f")
    first, second = h0_residuals(D, P, q)
    chart = q.chart
    assert vanishes(first.u, strict, chart).passed
    assert not vanishes(second.u, strict, chart).passed
    assert equiv(second.u, -I / 2 * sp.exp(chart.coord(3)) * q.u, strict, chart).passed


@pytest.mark.parametrize("observable", ["z1", "z2", "t"])
def test_quantizable_observables_preserve_H0(observable, holo, section6_manifest, strict):
    _, P, D = holo
    q = section6_manifest.section("u")
    f = section6_manifest.observables[observable]
    assert h0_check(D, P, extended_hat(D, f, q), strict).passed


def test_hat_of_t_multiplies(holo, section6_manifest, strict):
    _, _, D = holo
    q = section6_manifest.section("u")
    t = q.chart.coord(5)
    assert equiv(extended_hat(D, t, q).u, TWO_PI_I * t * q.u, strict, q.chart).passed


def test_closed_form_of_the_extended_hat(holo, strict):
    S, _, D = holo
    chart = S.chart
    x1, x2, x3 = chart.coord(1), chart.coord(2), chart.coord(3)
    q = QuantSection(chart, x1 * x3 + I * x2**2)
    h = x1 * x2 + x3
    assert equiv(extended_hat(D, h, q).u, hat_closed_form(S, h, q).u, strict, chart).passed


def test_extended_hat_is_a_homomorphism_for_the_certificate_derivative(section6_manifest, strict):
    D = section6_manifest.certificate_derivative()
    chart = D.chart
    x1, x2, x3, x4 = chart.symbols[:4]
    q = QuantSection(chart, x1 * x4 + I * x3)
    residual = extended_homomorphism_residual(D, x1 * x2, x3 + x4**2, q)
    assert vanishes(residual, strict, chart).passed


# ── Inner product ─────────────────────────────────────────────────────────────


def test_bump_quadrature_converges():
    chart = Chart.standard(1)
    q = QuantSection(chart, _bump(chart))
    coarse = inner_product(q, q, QuadratureGrid(points_per_axis=17))
    fine = inner_product(q, q, QuadratureGrid(points_per_axis=33))
    assert coarse.imag == 0
    assert abs(coarse - fine) <= 1e-2 * abs(fine)


def test_inner_product_is_conjugate_symmetric_and_sesquilinear(chart2):
    x1, x2 = chart2.symbols
    b = _bump(chart2)
    q1 = QuantSection(chart2, (x1 + I * x2) * b)
    q2 = QuantSection(chart2, (1 + x2**2) * b)
    grid = QuadratureGrid(points_per_axis=9)
    assert inner_product(q1, q2, grid) == np.conj(inner_product(q2, q1, grid))
    assert inner_product(QuantSection(chart2, sp.Integer(0)), q2, grid) == 0
    scaled = inner_product(q1.scale(2 * I), q2, grid)
    assert scaled == pytest.approx(2j * inner_product(q1, q2, grid))


def test_threaded_quadrature_matches_the_serial_sum(chart2):
    x1, _ = chart2.symbols
    q = QuantSection(chart2, x1 * _bump(chart2))
    serial = inner_product(q, q, QuadratureGrid(points_per_axis=11))
    threaded = inner_product(q, q, QuadratureGrid(points_per_axis=11, workers=4))
    assert serial == threaded


def test_non_decaying_integrand_warns(chart2):
    q = QuantSection(chart2, sp.Integer(1))
    with pytest.warns(BoundaryLeak):
        result = quadrature(q, q, QuadratureGrid(points_per_axis=5))
    assert result.leaked
    assert result.value == pytest.approx(4.0)


def test_anti_hermiticity_on_the_symplectic_plane(chart2):
    x1, _ = chart2.symbols
    D = ContravariantD.plain(AtpStructure.poisson(d_(chart2, 1, 2)))
    b = _bump(chart2)
    q1, q2 = QuantSection(chart2, b), QuantSection(chart2, x1 * b)
    grid = QuadratureGrid(points_per_axis=33)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", BoundaryLeak)
        real = anti_hermitian_defect(D, x1, q1, q2, grid)
        imaginary = anti_hermitian_defect(D, I * x1, q1, q2, grid)
    assert real.passed
    assert real.ratio < 1e-6
    assert not imaginary.passed


@pytest.mark.slow
@pytest.mark.parametrize("choice", ["plain", "certificate"])
def test_shipped_bumps_are_anti_hermitian(choice, section6_manifest):
    m = section6_manifest
    D = m.hilbert_D() if choice == "plain" else m.certificate_derivative()
    q1, q2 = m.section("b1"), m.section("b2")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", BoundaryLeak)
        report = anti_hermitian_defect(D, m.real_observables["f"], q1, q2, m.quadrature)
    assert report.passed, report
