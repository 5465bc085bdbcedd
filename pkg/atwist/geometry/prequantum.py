"""
Contravariant derivatives and prequantization on the trivial line bundle.

Sections are single complex ScalarExprs. A derivative is fixed by a complex
connection 1-form omega and a real vector field Z:

    D_a u = L#(a)(u) + (omega(L#a) + 2*pi*i*a(Z)) u = L#(a)(u) + a(X) u,
    X     = -L#(omega) + 2*pi*i*Z.

Its curvature bivector is exactly the coboundary of X, which is what makes
certificate checks (L + dZ = L#(eta)) and curvature checks agree.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace

from pydantic import BaseModel

from atwist.algebra.symexpr import (
    ONE,
    PI,
    EquivReport,
    I,
    Sampler,
    ScalarExpr,
    conj_expr,
    random_polynomial,
    real_part,
    vanishes_all,
)
from atwist.algebra.tensorcalc import (
    FormField,
    MultiVectorField,
    anchor1,
    anchor_k,
    apply_vector,
    differential,
    dx,
    exterior_d,
    field_equiv,
    field_vanishes,
    pairing,
    random_field,
)
from atwist.geometry.twisted_core import (
    AtpStructure,
    coboundary_field,
    phi_term,
    poisson_bracket,
    twisted_bracket,
)

logger = logging.getLogger(__name__)

TWO_PI_I = 2 * PI * I


class PrequantumError(Exception):
    """Base class for prequantization errors."""


class NotTensorial(PrequantumError):
    """Curvature failed C-infinity multiplicativity on sampled inputs."""


class MissingPotential(PrequantumError):
    pass


@dataclass(frozen=True)
class PrequantCertificate:
    """(Z, eta) with an optional potential vartheta, d(vartheta) = eta."""

    Z: MultiVectorField
    eta: FormField
    potential: FormField | None = None

    def __post_init__(self) -> None:
        if not isinstance(self.Z, MultiVectorField) or self.Z.grade != 1:
            raise PrequantumError("certificate Z must be a vector field")
        if not isinstance(self.eta, FormField) or self.eta.grade != 2:
            raise PrequantumError("certificate eta must be a 2-form")
        if self.potential is not None and (not isinstance(self.potential, FormField) or self.potential.grade != 1):
            raise PrequantumError("certificate potential must be a 1-form")


@dataclass(frozen=True)
class ContravariantD:
    structure: AtpStructure
    omega: FormField
    Z: MultiVectorField

    @classmethod
    def plain(cls, S: AtpStructure) -> ContravariantD:
        """omega = 0, Z = 0: D_a u = L#(a)(u)."""
        return cls(S, FormField.zero(S.chart, 1), MultiVectorField.zero(S.chart, 1))

    @property
    def chart(self):
        return self.structure.chart

    @property
    def bivector(self) -> MultiVectorField:
        return self.structure.bivector


@dataclass(frozen=True)
class HermitianMetric:
    """h(u1, u2) = u1 * conj(u2) on the trivial bundle."""

    def __call__(self, u1: ScalarExpr, u2: ScalarExpr) -> ScalarExpr:
        return u1 * conj_expr(u2)


HERMITIAN = HermitianMetric()


# ── The derivative ───────────────────────────────────────────────────────────

def connection_vector(D: ContravariantD) -> MultiVectorField:
    return -anchor1(D.bivector, D.omega) + D.Z * TWO_PI_I


def connection_coefficient(D: ContravariantD, alpha: FormField) -> ScalarExpr:
    """omega(L#a) + 2*pi*i*a(Z)."""
    return pairing(D.omega, anchor1(D.bivector, alpha)) + TWO_PI_I * pairing(alpha, D.Z)


def apply_D(D: ContravariantD, alpha: FormField, u: ScalarExpr) -> ScalarExpr:
    return apply_vector(anchor1(D.bivector, alpha), u) + connection_coefficient(D, alpha) * u


def derivative_axioms(
    D: ContravariantD, alpha: FormField, f: ScalarExpr, u: ScalarExpr, sampler: Sampler, name: str = "D-axioms"
) -> EquivReport:
    """D_{f a} = f D_a and D_a(f u) = f D_a u + L#(a)(f) u, both as one zero test."""
    linear = apply_D(D, alpha * f, u) - f * apply_D(D, alpha, u)
    leibniz = apply_D(D, alpha, f * u) - f * apply_D(D, alpha, u) - apply_vector(anchor1(D.bivector, alpha), f) * u
    return vanishes_all([linear, leibniz], sampler, D.chart, name)


def gauge_shift(D: ContravariantD, h: ScalarExpr) -> ContravariantD:
    """Potential vartheta -> vartheta + dh, i.e. omega -> omega - 2*pi*i dh."""
    return replace(D, omega=D.omega - differential(D.chart, h) * TWO_PI_I)


# ── Curvature ────────────────────────────────────────────────────────────────

def curvature(D: ContravariantD, alpha: FormField, beta: FormField, u: ScalarExpr) -> ScalarExpr:
    bracket = twisted_bracket(D.structure, alpha, beta)
    return (
        apply_D(D, alpha, apply_D(D, beta, u))
        - apply_D(D, beta, apply_D(D, alpha, u))
        - apply_D(D, bracket, u)
    )


def tensoriality_check(
    D: ContravariantD, sampler: Sampler, trials: int = 2, name: str = "curvature-tensorial"
) -> EquivReport:
    rng = sampler.rng(name)
    chart = D.chart
    residuals = []
    for _ in range(trials):
        alpha = random_field(FormField, chart, 1, rng, degree=1)
        beta = random_field(FormField, chart, 1, rng, degree=1)
        u = random_polynomial(chart, rng, degree=2, complex_coeffs=True)
        residuals.append(curvature(D, alpha, beta, u) - u * curvature(D, alpha, beta, ONE))
    return vanishes_all(residuals, sampler, chart, name)


def curvature_bivector(D: ContravariantD, sampler: Sampler | None = None) -> MultiVectorField:
    """P_{C_D}(dx_i, dx_j) = C_D(dx_i, dx_j)(1); optionally checks tensoriality first."""
    if sampler is not None:
        report = tensoriality_check(D, sampler)
        if not report.passed:
            raise NotTensorial(f"curvature is not multiplicative (residual {report.max_residual:.3e})")
    chart = D.chart
    terms = {}
    for i in range(1, chart.dim + 1):
        for j in range(i + 1, chart.dim + 1):
            value = curvature(D, dx(chart, i), dx(chart, j), ONE)
            if value != 0:
                terms[(i, j)] = value
    return MultiVectorField(chart, 2, terms)


def curvature_via_connection(D: ContravariantD) -> MultiVectorField:
    """The coboundary of the connection vector; equals curvature_bivector(D)."""
    return coboundary_field(D.structure, connection_vector(D))


def curvature_law(D: ContravariantD, sampler: Sampler, name: str = "P + 2*pi*i*L = 0") -> EquivReport:
    return field_equiv(curvature_bivector(D), D.bivector * (-TWO_PI_I), sampler, name)


def curvature_is_imaginary(D: ContravariantD, sampler: Sampler, name: str = "Re P = 0") -> EquivReport:
    P = curvature_bivector(D)
    return vanishes_all([real_part(c) for _, c in P.items()], sampler, D.chart, name)


def curvature_cocycle(D: ContravariantD, sampler: Sampler, name: str = "dP = 0") -> EquivReport:
    return field_vanishes(coboundary_field(D.structure, curvature_bivector(D)), sampler, name)


# ── Certificates ─────────────────────────────────────────────────────────────

class CertificateReport(BaseModel):
    closed: EquivReport
    equation: EquivReport
    potential: EquivReport | None = None

    @property
    def passed(self) -> bool:
        """Closedness and the certificate equation; the potential is reported on its own."""
        return self.closed.passed and self.equation.passed

    @property
    def potential_passed(self) -> bool:
        return self.potential is None or self.potential.passed

    @property
    def max_residual(self) -> float:
        values = [self.closed.max_residual, self.equation.max_residual]
        if self.potential is not None:
            values.append(self.potential.max_residual)
        return max(values)


def certificate_residual(S: AtpStructure, c: PrequantCertificate) -> MultiVectorField:
    """L + d(Z) - L#(eta)."""
    return S.bivector + coboundary_field(S, c.Z) - anchor_k(S.bivector, c.eta)


def check_certificate(S: AtpStructure, c: PrequantCertificate, sampler: Sampler) -> CertificateReport:
    closed = field_vanishes(exterior_d(c.eta), sampler, "certificate: d(eta) = 0")
    equation = field_vanishes(certificate_residual(S, c), sampler, "certificate: L + d(Z) = anchor(eta)")
    potential = None
    if c.potential is not None:
        potential = field_equiv(exterior_d(c.potential), c.eta, sampler, "certificate: d(vartheta) = eta")
    report = CertificateReport(closed=closed, equation=equation, potential=potential)
    logger.info(f"certificate: {'pass' if report.passed else 'FAIL'} ({report.max_residual:.3e})")
    if not report.potential_passed:
        logger.warning(f"certificate: d(vartheta) differs from eta ({report.potential.max_residual:.3e})")
    return report


def certificate_is_real(c: PrequantCertificate, sampler: Sampler, name: str = "certificate: real") -> EquivReport:
    coeffs = [e for _, e in c.Z.items()] + [e for _, e in c.eta.items()]
    return vanishes_all([(e - conj_expr(e)) for e in coeffs], sampler, c.Z.chart, name)


def build_derivative(S: AtpStructure, c: PrequantCertificate) -> ContravariantD:
    if c.potential is None:
        raise MissingPotential("the certificate carries no potential vartheta with d(vartheta) = eta")
    return ContravariantD(S, c.potential * (-TWO_PI_I), c.Z)


# ── Hermitian metric ─────────────────────────────────────────────────────────

def hermitian_residual(D: ContravariantD, alpha: FormField, u1: ScalarExpr, u2: ScalarExpr) -> ScalarExpr:
    lhs = apply_vector(anchor1(D.bivector, alpha), HERMITIAN(u1, u2))
    rhs = HERMITIAN(apply_D(D, alpha, u1), u2) + HERMITIAN(u1, apply_D(D, alpha, u2))
    return lhs - rhs


# ── Hat operators ────────────────────────────────────────────────────────────

def hat(D: ContravariantD, f: ScalarExpr, u: ScalarExpr) -> ScalarExpr:
    return apply_D(D, differential(D.chart, f), u) + TWO_PI_I * f * u


def commutator(D: ContravariantD, f: ScalarExpr, g: ScalarExpr, u: ScalarExpr) -> ScalarExpr:
    return hat(D, f, hat(D, g, u)) - hat(D, g, hat(D, f, u))


def op_bracket(D: ContravariantD, f: ScalarExpr, g: ScalarExpr, u: ScalarExpr) -> ScalarExpr:
    S = D.structure
    df, dg = differential(S.chart, f), differential(S.chart, g)
    return (
        commutator(D, f, g, u)
        - apply_D(D, phi_term(S, df, dg), u)
        - poisson_bracket(S, f, g) * apply_D(D, S.theta, u)
    )


def homomorphism_residual(D: ContravariantD, f: ScalarExpr, g: ScalarExpr, u: ScalarExpr) -> ScalarExpr:
    return hat(D, poisson_bracket(D.structure, f, g), u) - op_bracket(D, f, g, u)


def commutator_identity_residual(D: ContravariantD, f: ScalarExpr, g: ScalarExpr, u: ScalarExpr) -> ScalarExpr:
    """[f^, g^] u - (D_df D_dg u - D_dg D_df u + 4*pi*i {f,g} u)."""
    chart = D.chart
    df, dg = differential(chart, f), differential(chart, g)
    expected = (
        apply_D(D, df, apply_D(D, dg, u))
        - apply_D(D, dg, apply_D(D, df, u))
        + 2 * TWO_PI_I * poisson_bracket(D.structure, f, g) * u
    )
    return commutator(D, f, g, u) - expected


def gauge_difference(D: ContravariantD, h: ScalarExpr, sampler: Sampler, name: str = "gauge: P' = P") -> EquivReport:
    """Shifting the potential by dh leaves the curvature bivector unchanged."""
    return field_equiv(curvature_bivector(gauge_shift(D, h)), curvature_bivector(D), sampler, name)

