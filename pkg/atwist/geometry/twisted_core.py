"""
theta-almost twisted Poisson structures.

An AtpStructure is a bivector L, a 3-form phi and a closed 1-form theta
subject to

    d phi = theta ^ phi,    L#(theta) = 0,    [L, L] / 2 = L#(phi).

The twisted bracket on 1-forms and the coboundary on multivector fields are
built from it. validate() only checks the axioms; every other operation
accepts any triple, so failing structures can be inspected too.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from functools import lru_cache

import sympy as sp
from pydantic import BaseModel

from atwist.algebra.symexpr import ZERO, Chart, Sampler, ScalarExpr
from atwist.algebra.tensorcalc import (
    FormField,
    GradedField,
    GradeMismatch,
    MultiVectorField,
    anchor1,
    anchor_k,
    bivector_pairing,
    differential,
    dx,
    evaluate,
    exterior_d,
    field_equiv,
    field_vanishes,
    interior,
    koszul,
    schouten,
    wedge,
)

logger = logging.getLogger(__name__)

MAX_COBOUNDARY_GRADE = 3


class StructureError(Exception):
    """Base class for structure errors."""


class GradeUnsupported(StructureError):
    pass


@dataclass(frozen=True)
class AtpStructure:
    bivector: MultiVectorField
    phi: FormField
    theta: FormField

    def __post_init__(self) -> None:
        for name, field, cls, grade in (
            ("bivector", self.bivector, MultiVectorField, 2),
            ("phi", self.phi, FormField, 3),
            ("theta", self.theta, FormField, 1),
        ):
            if not isinstance(field, cls) or field.grade != grade:
                raise StructureError(f"{name} must be a grade-{grade} {cls.__name__}")
        if not self.bivector.chart == self.phi.chart == self.theta.chart:
            raise StructureError("bivector, phi and theta live on different charts")

    @property
    def chart(self) -> Chart:
        return self.bivector.chart

    @classmethod
    def poisson(cls, bivector: MultiVectorField) -> AtpStructure:
        chart = bivector.chart
        return cls(bivector, FormField.zero(chart, 3), FormField.zero(chart, 1))


class AxiomResidual(BaseModel):
    name: str
    passed: bool
    max_residual: float
    points_used: int


class ValidationReport(BaseModel):
    residuals: list[AxiomResidual]

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.residuals)

    def get(self, name: str) -> AxiomResidual:
        for r in self.residuals:
            if r.name == name:
                return r
        raise KeyError(name)


AXIOM_DPHI = "d(phi) = theta ^ phi"
AXIOM_ANCHOR = "anchor(theta) = 0"
AXIOM_SCHOUTEN = "[L,L]/2 = anchor(phi)"
AXIOM_DTHETA = "d(theta) = 0"


def validate(S: AtpStructure, sampler: Sampler) -> ValidationReport:
    checks = [
        (AXIOM_DPHI, lambda: field_equiv(exterior_d(S.phi), wedge(S.theta, S.phi), sampler, AXIOM_DPHI)),
        (AXIOM_ANCHOR, lambda: field_vanishes(anchor1(S.bivector, S.theta), sampler, AXIOM_ANCHOR)),
        (
            AXIOM_SCHOUTEN,
            lambda: field_equiv(
                schouten(S.bivector, S.bivector) * sp.Rational(1, 2),
                anchor_k(S.bivector, S.phi),
                sampler,
                AXIOM_SCHOUTEN,
            ),
        ),
        (AXIOM_DTHETA, lambda: field_vanishes(exterior_d(S.theta), sampler, AXIOM_DTHETA)),
    ]
    residuals = []
    for name, run in checks:
        report = run()
        residuals.append(AxiomResidual(
            name=name, passed=report.passed, max_residual=report.max_residual, points_used=report.points_used,
        ))
        logger.info(f"axiom {name}: {'pass' if report.passed else 'FAIL'} ({report.max_residual:.3e})")
    return ValidationReport(residuals=residuals)


# ── Brackets ─────────────────────────────────────────────────────────────────

def poisson_bracket(S: AtpStructure, f: ScalarExpr, g: ScalarExpr) -> ScalarExpr:
    return bivector_pairing(S.bivector, differential(S.chart, f), differential(S.chart, g))


def hamiltonian(S: AtpStructure, f: ScalarExpr) -> MultiVectorField:
    return anchor1(S.bivector, differential(S.chart, f))


def phi_term(S: AtpStructure, alpha: FormField, beta: FormField) -> FormField:
    """i_{L#beta} i_{L#alpha} phi."""
    return interior(anchor1(S.bivector, beta), interior(anchor1(S.bivector, alpha), S.phi))


def twisted_bracket(S: AtpStructure, alpha: FormField, beta: FormField) -> FormField:
    return (
        koszul(S.bivector, alpha, beta)
        + phi_term(S, alpha, beta)
        + S.theta * bivector_pairing(S.bivector, alpha, beta)
    )


def bracket_jacobiator(S: AtpStructure, a: FormField, b: FormField, c: FormField) -> FormField:
    br = lambda x, y: twisted_bracket(S, x, y)  # noqa: E731
    return br(br(a, b), c) + br(br(b, c), a) + br(br(c, a), b)


def jacobiator_residual(S: AtpStructure, f: ScalarExpr, g: ScalarExpr, h: ScalarExpr) -> ScalarExpr:
    pb = lambda x, y: poisson_bracket(S, x, y)  # noqa: E731
    lhs = pb(f, pb(g, h)) + pb(g, pb(h, f)) + pb(h, pb(f, g))
    chart = S.chart
    rhs = evaluate(anchor_k(S.bivector, S.phi), [differential(chart, e) for e in (f, g, h)])
    return lhs - rhs


# ── Coboundary ───────────────────────────────────────────────────────────────

def _check_grade(v: MultiVectorField) -> None:
    if not isinstance(v, MultiVectorField):
        raise GradeMismatch("the coboundary acts on multivector fields")
    if v.grade > MAX_COBOUNDARY_GRADE:
        raise GradeUnsupported(f"coboundary implemented for grades 0..{MAX_COBOUNDARY_GRADE}, got {v.grade}")


def _evaluate_terms(S: AtpStructure, v: MultiVectorField, forms, anchor, bracket, evaluate_on) -> ScalarExpr:
    """Both sums of the coboundary formula, parameterised over coordinate shortcuts."""
    n1 = len(forms)
    total = ZERO
    for a in range(n1):
        rest = forms[:a] + forms[a + 1:]
        X = anchor(a)
        inner = evaluate_on(rest)
        if inner != 0 and not X.is_zero():
            term = ZERO
            for (i,), c in X.items():
                term = term + c * sp.diff(inner, S.chart.coord(i))
            total = total + (-1) ** a * term
    for a, b in itertools.combinations(range(n1), 2):
        rest = forms[:a] + forms[a + 1:b] + forms[b + 1:]
        gamma = bracket(a, b)
        if gamma.is_zero():
            continue
        total = total + (-1) ** (a + b) * evaluate_on((gamma, *rest))
    return total


def coboundary(S: AtpStructure, v: MultiVectorField, forms: list[FormField] | tuple[FormField, ...]) -> ScalarExpr:
    """(d_{phi,theta} v)(alpha_1, ..., alpha_{n+1})."""
    _check_grade(v)
    forms = tuple(forms)
    if len(forms) != v.grade + 1:
        raise GradeMismatch(f"grade-{v.grade} coboundary takes {v.grade + 1} forms, got {len(forms)}")
    return _evaluate_terms(
        S,
        v,
        forms,
        anchor=lambda a: anchor1(S.bivector, forms[a]),
        bracket=lambda a, b: twisted_bracket(S, forms[a], forms[b]),
        evaluate_on=lambda args: evaluate(v, list(args)),
    )


@lru_cache(maxsize=256)
def _coordinate_bracket(S: AtpStructure, i: int, j: int) -> FormField:
    return twisted_bracket(S, dx(S.chart, i), dx(S.chart, j))


@lru_cache(maxsize=256)
def _coordinate_anchor(S: AtpStructure, i: int) -> MultiVectorField:
    return anchor1(S.bivector, dx(S.chart, i))


def _evaluate_on_coordinates(v: MultiVectorField, args) -> ScalarExpr:
    """v(args) where every argument is an index except possibly the first, a 1-form."""
    if not args:
        return v.value
    head, tail = args[0], tuple(args[1:])
    if isinstance(head, int):
        return v.component(head, *tail)
    total = ZERO
    for (k,), c in head.items():
        comp = v.component(k, *tail)
        if comp != 0:
            total = total + c * comp
    return total


def coboundary_field(S: AtpStructure, v: MultiVectorField) -> MultiVectorField:
    """Grade n+1 field assembled from the formula on coordinate 1-forms."""
    _check_grade(v)
    chart = S.chart
    terms = {}
    for key in itertools.combinations(range(1, chart.dim + 1), v.grade + 1):
        value = _evaluate_terms(
            S,
            v,
            key,
            anchor=lambda a, key=key: _coordinate_anchor(S, key[a]),
            bracket=lambda a, b, key=key: _coordinate_bracket(S, key[a], key[b]),
            evaluate_on=lambda args: _evaluate_on_coordinates(v, args),
        )
        if value != 0:
            terms[key] = value
    return MultiVectorField(chart, v.grade + 1, terms)


def chain_map_residual(S: AtpStructure, mu: FormField) -> MultiVectorField:
    """d_{phi,theta}(L# mu) + L#(d mu)."""
    if not isinstance(mu, FormField) or mu.grade not in (1, 2):
        raise GradeMismatch("chain map residual takes a 1-form or a 2-form")
    return coboundary_field(S, anchor_k(S.bivector, mu)) + anchor_k(S.bivector, exterior_d(mu))


# ── Constructions ────────────────────────────────────────────────────────────

def suspend(S0: AtpStructure, name: str = "t") -> AtpStructure:
    """Product with a line: L = e^t L0, phi = e^-t phi0, theta = -dt.

    S0 must have theta = 0 (a twisted Poisson structure).
    """
    if not S0.theta.is_zero():
        raise StructureError("suspension needs a structure with theta = 0")
    chart0 = S0.chart
    chart = Chart(
        (*chart0.coord_names, name),
        box=(*chart0.box, (-1.0, 1.0)),
        complex_pairs=chart0.complex_pairs,
        guard_eps=chart0.guard_eps,
    )
    t = chart.coord(chart.dim)
    return AtpStructure(
        bivector=lift_field(S0.bivector, chart) * sp.exp(t),
        phi=lift_field(S0.phi, chart) * sp.exp(-t),
        theta=-dx(chart, chart.dim),
    )


def lift_field(field: GradedField, chart: Chart) -> GradedField:
    """Re-home a field onto a chart that extends its own coordinates."""
    subs = dict(zip(field.chart.symbols, chart.symbols[: field.chart.dim]))
    return type(field)(chart, field.grade, {k: c.xreplace(subs) for k, c in field.items()})
