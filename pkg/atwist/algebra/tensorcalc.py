"""
Graded exterior calculus on a single chart.

FormField and MultiVectorField share one sparse layout: strictly ascending
index tuples (1-based) mapped to ScalarExpr coefficients. Absent tuples are
zero. Component access under any index order returns the stored value times
the permutation sign, and repeated indices read as zero.

Sign conventions (see CONVENTIONS.md):
    anchor1(L, a)^j   = sum_i L^{ij} a_i          so anchor1(d1^d2, dx1) = d2
    anchor_k(L, psi)  = (-1)^k psi(L#a1, ..., L#ak)
    P(a1, ..., ak)    = sum_I P^I det[a_r(d_{I_s})]
"""
from __future__ import annotations

import itertools
import logging
from collections.abc import Callable, Iterable, Mapping, Sequence
from enum import Enum

import numpy as np
import sympy as sp

from atwist.algebra.symexpr import (
    ZERO,
    Chart,
    EquivReport,
    Sampler,
    ScalarExpr,
    equiv_all,
    random_polynomial,
    vanishes_all,
)

logger = logging.getLogger(__name__)

Key = tuple[int, ...]


class TensorError(Exception):
    """Base class for graded field errors."""


class VarianceMismatch(TensorError):
    pass


class ChartMismatch(TensorError):
    pass


class GradeMismatch(TensorError, ValueError):
    pass


class Variance(str, Enum):
    FORM = "form"
    MULTIVECTOR = "multivector"


def permutation_sign(idx: Sequence[int]) -> tuple[int, Key]:
    """(sign, ascending tuple); sign is 0 when an index repeats."""
    idx = list(idx)
    if len(set(idx)) != len(idx):
        return 0, ()
    inversions = sum(1 for a, b in itertools.combinations(range(len(idx)), 2) if idx[a] > idx[b])
    return (-1 if inversions % 2 else 1), tuple(sorted(idx))


class GradedField:
    """Sparse grade-k field. Subclasses fix the variance."""

    variance: Variance
    __slots__ = ("chart", "grade", "_terms", "_hash")

    def __init__(
        self,
        chart: Chart,
        grade: int,
        terms: Mapping[Key | int, ScalarExpr] | Iterable[tuple[Key | int, ScalarExpr]] | None = None,
    ) -> None:
        if grade < 0:
            raise GradeMismatch(f"negative grade {grade}")
        self.chart = chart
        self.grade = grade
        self._hash: int | None = None
        items = terms.items() if isinstance(terms, Mapping) else (terms or ())
        acc: dict[Key, ScalarExpr] = {}
        for key, coeff in items:
            key = (key,) if isinstance(key, int) else tuple(int(k) for k in key)
            if len(key) != grade:
                raise GradeMismatch(f"index tuple {key} given to a grade-{grade} field")
            for k in key:
                chart.check_index(k)
            sign, ordered = permutation_sign(key)
            if sign == 0:
                continue
            acc[ordered] = acc.get(ordered, ZERO) + sign * sp.sympify(coeff)
        self._terms: dict[Key, ScalarExpr] = {k: v for k, v in sorted(acc.items()) if v != 0}

    # ── Constructors ─────────────────────────────────────────────────────────

    @classmethod
    def zero(cls, chart: Chart, grade: int):
        return cls(chart, grade)

    @classmethod
    def scalar(cls, chart: Chart, e: ScalarExpr):
        return cls(chart, 0, {(): e})

    @classmethod
    def basis(cls, chart: Chart, *idx: int, coeff: ScalarExpr = 1):
        return cls(chart, len(idx), {tuple(idx): coeff})

    # ── Access ───────────────────────────────────────────────────────────────

    @property
    def components(self) -> dict[Key, ScalarExpr]:
        return dict(self._terms)

    def items(self):
        return self._terms.items()

    def component(self, *idx: int) -> ScalarExpr:
        if len(idx) != self.grade:
            raise GradeMismatch(f"{len(idx)} indices for a grade-{self.grade} field")
        sign, ordered = permutation_sign(idx)
        if sign == 0:
            return ZERO
        return sign * self._terms.get(ordered, ZERO)

    def __getitem__(self, idx: Key | int) -> ScalarExpr:
        return self.component(*((idx,) if isinstance(idx, int) else idx))

    @property
    def value(self) -> ScalarExpr:
        """Coefficient of a grade-0 field."""
        if self.grade != 0:
            raise GradeMismatch(f"grade-{self.grade} field has no scalar value")
        return self._terms.get((), ZERO)

    def is_zero(self) -> bool:
        """Structural zero test. Use field_vanishes for the sampled test."""
        return not self._terms

    # ── Arithmetic ───────────────────────────────────────────────────────────

    def _like(self, grade: int, terms) -> GradedField:
        return type(self)(self.chart, grade, terms)

    def _check_compatible(self, other: GradedField) -> None:
        if not isinstance(other, GradedField) or other.variance != self.variance:
            raise VarianceMismatch(f"cannot combine {self.variance.value} with {getattr(other, 'variance', other)}")
        if other.chart != self.chart:
            raise ChartMismatch("fields live on different charts")
        if other.grade != self.grade:
            raise GradeMismatch(f"grades {self.grade} and {other.grade} differ")

    def __add__(self, other: GradedField) -> GradedField:
        self._check_compatible(other)
        return self._like(self.grade, [*self._terms.items(), *other._terms.items()])

    def __sub__(self, other: GradedField) -> GradedField:
        return self + (-other)

    def __neg__(self) -> GradedField:
        return self.map(lambda c: -c)

    def __mul__(self, e: ScalarExpr) -> GradedField:
        if isinstance(e, GradedField):
            return NotImplemented
        e = sp.sympify(e)
        return self.map(lambda c: e * c)

    __rmul__ = __mul__

    def map(self, fn: Callable[[ScalarExpr], ScalarExpr]) -> GradedField:
        return self._like(self.grade, {k: fn(v) for k, v in self._terms.items()})

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, GradedField):
            return NotImplemented
        return (
            self.variance == other.variance
            and self.chart == other.chart
            and self.grade == other.grade
            and self._terms == other._terms
        )

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash((self.variance, self.chart, self.grade, tuple(self._terms.items())))
        return self._hash

    def __repr__(self) -> str:
        body = ", ".join(f"{k}: {v}" for k, v in self._terms.items())
        return f"{type(self).__name__}(grade={self.grade}, {{{body}}})"


class FormField(GradedField):
    variance = Variance.FORM
    __slots__ = ()


class MultiVectorField(GradedField):
    variance = Variance.MULTIVECTOR
    __slots__ = ()


def dx(chart: Chart, *idx: int, coeff: ScalarExpr = 1) -> FormField:
    """coeff * dx_i1 ^ ... ^ dx_ik."""
    return FormField.basis(chart, *idx, coeff=coeff)


def d_(chart: Chart, *idx: int, coeff: ScalarExpr = 1) -> MultiVectorField:
    """coeff * d_i1 ^ ... ^ d_ik."""
    return MultiVectorField.basis(chart, *idx, coeff=coeff)


def _same_chart(*fields: GradedField) -> Chart:
    chart = fields[0].chart
    for f in fields[1:]:
        if f.chart != chart:
            raise ChartMismatch("fields live on different charts")
    return chart


def _require(field: GradedField, cls: type, grade: int | None = None, what: str = "argument") -> None:
    if not isinstance(field, cls):
        raise VarianceMismatch(f"{what} must be a {cls.__name__}, got {type(field).__name__}")
    if grade is not None and field.grade != grade:
        raise GradeMismatch(f"{what} must have grade {grade}, got {field.grade}")


# ── Algebra ──────────────────────────────────────────────────────────────────

def wedge(a: GradedField, b: GradedField) -> GradedField:
    if a.variance != b.variance:
        raise VarianceMismatch(f"wedge of {a.variance.value} and {b.variance.value}")
    chart = _same_chart(a, b)
    terms = [(i + j, ca * cb) for i, ca in a.items() for j, cb in b.items()]
    return type(a)(chart, a.grade + b.grade, terms)


def evaluate(field: GradedField, args: Sequence[GradedField]) -> ScalarExpr:
    """field(arg_1, ..., arg_k) with grade-1 arguments of the opposite variance."""
    if len(args) != field.grade:
        raise GradeMismatch(f"grade-{field.grade} field evaluated on {len(args)} argument(s)")
    for arg in args:
        if arg.variance == field.variance or arg.grade != 1:
            raise VarianceMismatch("arguments must be grade-1 fields of the opposite variance")
    _same_chart(field, *args)
    if field.grade == 0:
        return field.value
    rows = [arg.components for arg in args]
    total = ZERO
    for key, coeff in field.items():
        det = ZERO
        for perm in itertools.permutations(range(len(key))):
            prod = sp.S.One
            for r, s in enumerate(perm):
                entry = rows[r].get((key[s],))
                if entry is None:
                    prod = None
                    break
                prod = prod * entry
            if prod is None:
                continue
            sign, _ = permutation_sign(perm)
            det = det + sign * prod
        if det != 0:
            total = total + coeff * det
    return total


def pairing(alpha: FormField, X: MultiVectorField) -> ScalarExpr:
    """alpha(X) for a 1-form and a vector field."""
    return evaluate(alpha, [X])


def apply_vector(X: MultiVectorField, f: ScalarExpr) -> ScalarExpr:
    """X(f) = sum_i X^i d_i f."""
    _require(X, MultiVectorField, 1, "X")
    total = ZERO
    for (i,), c in X.items():
        total = total + c * sp.diff(f, X.chart.coord(i))
    return total


def interior(X: MultiVectorField, psi: FormField) -> FormField:
    """i_X psi; zero on grade-0 forms."""
    _require(X, MultiVectorField, 1, "X")
    _require(psi, FormField, what="psi")
    chart = _same_chart(X, psi)
    if psi.grade == 0:
        return FormField.zero(chart, 0)
    terms = []
    for key, c in psi.items():
        for m, i in enumerate(key):
            xi = X.component(i)
            if xi != 0:
                terms.append((key[:m] + key[m + 1:], (-1) ** m * xi * c))
    return FormField(chart, psi.grade - 1, terms)


def exterior_d(psi: FormField) -> FormField:
    _require(psi, FormField, what="psi")
    chart = psi.chart
    terms = []
    for key, c in psi.items():
        for k in range(1, chart.dim + 1):
            if k in key:
                continue
            dc = sp.diff(c, chart.coord(k))
            if dc != 0:
                terms.append(((k, *key), dc))
    return FormField(chart, psi.grade + 1, terms)


def lie_form(X: MultiVectorField, psi: FormField) -> FormField:
    """Cartan: L_X = i_X d + d i_X."""
    if psi.grade == 0:
        return FormField.scalar(psi.chart, apply_vector(X, psi.value))
    return interior(X, exterior_d(psi)) + exterior_d(interior(X, psi))


# ── Schouten–Nijenhuis bracket ───────────────────────────────────────────────

def _bracket_with_scalar(chart: Chart, a: ScalarExpr, key: Key, b: ScalarExpr) -> list[tuple[Key, ScalarExpr]]:
    """[a d_I, b] for a scalar b."""
    p = len(key) - 1
    out = []
    for m, i in enumerate(key):
        db = sp.diff(b, chart.coord(i))
        if db != 0:
            out.append((key[:m] + key[m + 1:], (-1) ** (p + m) * a * db))
    return out


def _bracket_with_basis(chart: Chart, a: ScalarExpr, key: Key, basis: Key) -> list[tuple[Key, ScalarExpr]]:
    """[a d_I, d_J] for a coordinate monomial d_J."""
    p = len(key) - 1
    out = []
    for n, j in enumerate(basis):
        da = sp.diff(a, chart.coord(j))
        if da != 0:
            out.append((basis[:n] + key + basis[n + 1:], -((-1) ** (p * n)) * da))
    return out


def _schouten_monomials(
    chart: Chart, a: ScalarExpr, i_key: Key, b: ScalarExpr, j_key: Key
) -> list[tuple[Key, ScalarExpr]]:
    if not i_key and not j_key:
        return []
    if not i_key:
        # [a, Q] = (-1)^q [Q, a]
        sign = (-1) ** len(j_key)
        return [(k, sign * c) for k, c in _bracket_with_scalar(chart, b, j_key, a)]
    if not j_key:
        return _bracket_with_scalar(chart, a, i_key, b)
    out = [(k + j_key, c) for k, c in _bracket_with_scalar(chart, a, i_key, b)]
    out.extend((k, b * c) for k, c in _bracket_with_basis(chart, a, i_key, j_key))
    return out


def schouten(P: MultiVectorField, Q: MultiVectorField) -> MultiVectorField:
    """Schouten–Nijenhuis bracket, grade p + q - 1 (zero for two scalars)."""
    _require(P, MultiVectorField, what="P")
    _require(Q, MultiVectorField, what="Q")
    chart = _same_chart(P, Q)
    grade = P.grade + Q.grade - 1
    if grade < 0:
        return MultiVectorField.zero(chart, 0)
    terms = []
    for i_key, a in P.items():
        for j_key, b in Q.items():
            terms.extend(_schouten_monomials(chart, a, i_key, b, j_key))
    return MultiVectorField(chart, grade, terms)


def lie_multivector(X: MultiVectorField, P: MultiVectorField) -> MultiVectorField:
    return schouten(X, P)


def schouten_jacobiator(P: MultiVectorField, Q: MultiVectorField, R: MultiVectorField) -> MultiVectorField:
    """Graded Jacobiator with the (p-1)(r-1) sign weights."""
    p, q, r = P.grade - 1, Q.grade - 1, R.grade - 1
    return (
        (-1) ** (p * r) * schouten(P, schouten(Q, R))
        + (-1) ** (q * p) * schouten(Q, schouten(R, P))
        + (-1) ** (r * q) * schouten(R, schouten(P, Q))
    )


# ── Anchors and brackets induced by a bivector ───────────────────────────────

def anchor1(L: MultiVectorField, alpha: FormField) -> MultiVectorField:
    _require(L, MultiVectorField, 2, "bivector")
    _require(alpha, FormField, 1, "alpha")
    chart = _same_chart(L, alpha)
    terms = []
    for (i, j), c in L.items():
        ai = alpha.component(i)
        aj = alpha.component(j)
        if ai != 0:
            terms.append(((j,), c * ai))
        if aj != 0:
            terms.append(((i,), -c * aj))
    return MultiVectorField(chart, 1, terms)


def anchor_k(L: MultiVectorField, psi: FormField) -> MultiVectorField:
    _require(L, MultiVectorField, 2, "bivector")
    _require(psi, FormField, what="psi")
    chart = _same_chart(L, psi)
    if psi.grade == 0:
        return MultiVectorField.scalar(chart, psi.value)
    if psi.is_zero():
        return MultiVectorField.zero(chart, psi.grade)
    images = {j: anchor1(L, dx(chart, j)) for j in range(1, chart.dim + 1)}
    sign = (-1) ** psi.grade
    terms = {}
    for key in itertools.combinations(range(1, chart.dim + 1), psi.grade):
        value = evaluate(psi, [images[j] for j in key])
        if value != 0:
            terms[key] = sign * value
    return MultiVectorField(chart, psi.grade, terms)


def bivector_pairing(L: MultiVectorField, alpha: FormField, beta: FormField) -> ScalarExpr:
    """L(alpha, beta)."""
    return evaluate(L, [alpha, beta])


def koszul(L: MultiVectorField, alpha: FormField, beta: FormField) -> FormField:
    """[a, b]_K = L_{L#a} b - L_{L#b} a - d(L(a, b))."""
    _require(beta, FormField, 1, "beta")
    return (
        lie_form(anchor1(L, alpha), beta)
        - lie_form(anchor1(L, beta), alpha)
        - exterior_d(FormField.scalar(L.chart, bivector_pairing(L, alpha, beta)))
    )


def divergence(X: MultiVectorField) -> ScalarExpr:
    """Divergence against the coordinate volume dx1^...^dxn."""
    _require(X, MultiVectorField, 1, "X")
    total = ZERO
    for (i,), c in X.items():
        total = total + sp.diff(c, X.chart.coord(i))
    return total


def differential(chart: Chart, f: ScalarExpr) -> FormField:
    return exterior_d(FormField.scalar(chart, f))


# ── Sampled comparisons ──────────────────────────────────────────────────────

def field_equiv(a: GradedField, b: GradedField, sampler: Sampler, name: str = "field-equiv") -> EquivReport:
    if a.variance != b.variance:
        raise VarianceMismatch(f"{name}: comparing {a.variance.value} with {b.variance.value}")
    chart = _same_chart(a, b)
    if a.grade != b.grade:
        raise GradeMismatch(f"{name}: grades {a.grade} and {b.grade} differ")
    keys = sorted(set(a.components) | set(b.components))
    return equiv_all([a.component(*k) for k in keys], [b.component(*k) for k in keys], sampler, chart, name)


def field_vanishes(a: GradedField, sampler: Sampler, name: str = "field-vanishes") -> EquivReport:
    return vanishes_all([c for _, c in a.items()], sampler, a.chart, name)


def random_field(
    cls: type[GradedField],
    chart: Chart,
    grade: int,
    rng: np.random.Generator,
    n_components: int = 2,
    degree: int = 2,
    complex_coeffs: bool = False,
) -> GradedField:
    """Sparse polynomial field, reproducible from `rng`."""
    keys = list(itertools.combinations(range(1, chart.dim + 1), grade))
    if not keys:
        return cls.zero(chart, grade)
    picks = rng.choice(len(keys), size=min(n_components, len(keys)), replace=False)
    terms = {
        keys[int(k)]: random_polynomial(chart, rng, degree=degree, complex_coeffs=complex_coeffs)
        for k in sorted(picks)
    }
    return cls(chart, grade, terms)
