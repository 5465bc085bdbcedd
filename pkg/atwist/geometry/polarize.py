"""
Polarizations, quantizable observables and the quantization space.

Sections of K (x) D are stored as one merged function u standing for
u * (1 (x) |dx1 ^ ... ^ dxn|^(1/2)); the half-density factor contributes
1/2 div X to every Lie derivative along X.

Membership "gamma in P" is decided pointwise: least-squares distance from
gamma(x) to the span of the generator values, relative to max(1, |gamma(x)|).
"""
from __future__ import annotations

import itertools
import logging
import warnings
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import sympy as sp
from pydantic import BaseModel, ConfigDict, Field

from atwist.algebra.symexpr import (
    ONE,
    ZERO,
    Chart,
    EquivReport,
    Sampler,
    ScalarExpr,
    equiv,
    sample_values,
    vanishes_all,
)
from atwist.algebra.tensorcalc import (
    FormField,
    MultiVectorField,
    anchor1,
    apply_vector,
    bivector_pairing,
    differential,
    divergence,
)
from atwist.geometry.prequantum import TWO_PI_I, ContravariantD, connection_coefficient
from atwist.geometry.twisted_core import AtpStructure, phi_term, poisson_bracket, twisted_bracket

logger = logging.getLogger(__name__)


class PolarizationError(Exception):
    """Base class for polarization errors."""


class DegenerateGenerators(PolarizationError):
    pass


class BoundaryLeak(UserWarning):
    """An integrand does not decay at the edge of the quadrature box."""


@dataclass(frozen=True)
class Polarization:
    generators: tuple[FormField, ...]
    name: str = "P"

    def __post_init__(self) -> None:
        gens = tuple(self.generators)
        object.__setattr__(self, "generators", gens)
        if not gens:
            raise PolarizationError(f"polarization {self.name} has no generators")
        for g in gens:
            if not isinstance(g, FormField) or g.grade != 1:
                raise PolarizationError(f"polarization {self.name}: generators must be 1-forms")
            if g.chart != gens[0].chart:
                raise PolarizationError(f"polarization {self.name}: generators live on different charts")

    @property
    def chart(self) -> Chart:
        return self.generators[0].chart


@dataclass(frozen=True)
class QuantSection:
    chart: Chart
    u: ScalarExpr

    def __add__(self, other: QuantSection) -> QuantSection:
        return QuantSection(self.chart, self.u + other.u)

    def scale(self, c: ScalarExpr) -> QuantSection:
        return QuantSection(self.chart, c * self.u)


class QuadratureGrid(BaseModel):
    """Tensor-product midpoint rule."""

    model_config = ConfigDict(frozen=True)

    points_per_axis: int = Field(default=17, gt=0, description="Midpoints per axis")
    box: tuple[tuple[float, float], ...] | None = Field(default=None, description="Integration box; chart box if unset")
    leak_tol: float = Field(default=1e-3, gt=0, description="Allowed edge-layer magnitude relative to the integrand max")
    workers: int = Field(default=1, ge=1, description="Threads evaluating slabs of the grid")

    def axes(self, chart: Chart) -> tuple[list[np.ndarray], float]:
        box = self.box or chart.box
        if len(box) != chart.dim:
            raise PolarizationError(f"quadrature box has {len(box)} intervals for {chart.dim} coordinates")
        n = self.points_per_axis
        axes, volume = [], 1.0
        for lo, hi in box:
            h = (hi - lo) / n
            axes.append(lo + h * (np.arange(n) + 0.5))
            volume *= h
        return axes, volume


class MembershipReport(BaseModel):
    name: str
    member: bool
    max_distance: float = 0.0
    points_used: int = 0
    reason: str = ""

    def __bool__(self) -> bool:
        return self.member


def _merge(name: str, reports: Sequence[MembershipReport], reason: str = "") -> MembershipReport:
    failed = [r for r in reports if not r.member]
    return MembershipReport(
        name=name,
        member=not failed,
        max_distance=max((r.max_distance for r in reports), default=0.0),
        points_used=max((r.points_used for r in reports), default=0),
        reason=reason or "; ".join(r.reason for r in failed if r.reason),
    )


# ── Polarization checks ──────────────────────────────────────────────────────

def isotropy_check(S: AtpStructure, P: Polarization, sampler: Sampler, name: str = "isotropy") -> EquivReport:
    values = [
        bivector_pairing(S.bivector, a, b) for a, b in itertools.combinations(P.generators, 2)
    ]
    return vanishes_all(values, sampler, S.chart, name)


def _generator_values(P: Polarization, points: np.ndarray) -> np.ndarray:
    """(n_points, dim, n_generators) complex."""
    chart = P.chart
    exprs = [g.component(k) for g in P.generators for k in range(1, chart.dim + 1)]
    values = sample_values(exprs, chart, points)
    return values.T.reshape(len(points), len(P.generators), chart.dim).transpose(0, 2, 1)


def rank_check(P: Polarization, sampler: Sampler, name: str = "generator rank") -> MembershipReport:
    exprs = [c for g in P.generators for _, c in g.items()]
    points, _ = sampler.draw(P.chart, exprs, name)
    G = _generator_values(P, points)
    ranks = np.array([np.linalg.matrix_rank(G[p]) for p in range(len(points))])
    degenerate = int((ranks < len(P.generators)).sum())
    if degenerate:
        logger.warning(f"{name}: generators degenerate at {degenerate} of {len(points)} point(s)")
    return MembershipReport(
        name=name,
        member=degenerate == 0,
        points_used=len(points),
        reason=f"{degenerate} degenerate point(s)" if degenerate else "",
    )


def span_membership(
    gamma: FormField, P: Polarization, points: np.ndarray, tol: float, name: str = "span"
) -> tuple[list[bool], MembershipReport]:
    """Pointwise verdicts plus the aggregate."""
    chart = P.chart
    points = np.atleast_2d(np.asarray(points, dtype=float))
    G = _generator_values(P, points)
    g = sample_values([gamma.component(k) for k in range(1, chart.dim + 1)], chart, points).T
    verdicts, distances = [], []
    for p in range(len(points)):
        if np.linalg.matrix_rank(G[p]) < G.shape[2]:
            raise DegenerateGenerators(f"{name}: generator values are rank-deficient at {points[p].tolist()}")
        coeffs, *_ = np.linalg.lstsq(G[p], g[p], rcond=None)
        dist = float(np.linalg.norm(G[p] @ coeffs - g[p]))
        rel = dist / max(1.0, float(np.linalg.norm(g[p])))
        distances.append(rel)
        verdicts.append(bool(np.isfinite(rel) and rel <= tol))
    report = MembershipReport(
        name=name,
        member=all(verdicts),
        max_distance=max(distances, default=0.0),
        points_used=len(points),
        reason="" if all(verdicts) else f"outside the span at {verdicts.count(False)} point(s)",
    )
    return verdicts, report


def membership(gamma: FormField, P: Polarization, sampler: Sampler, name: str = "span") -> MembershipReport:
    exprs = [c for _, c in gamma.items()] + [c for g in P.generators for _, c in g.items()]
    points, _ = sampler.draw(P.chart, exprs, name)
    _, report = span_membership(gamma, P, points, sampler.tol, name)
    return report


def closure_check(
    S: AtpStructure, P: Polarization, sampler: Sampler, name: str = "generator closure"
) -> MembershipReport:
    reports = [
        membership(twisted_bracket(S, a, b), P, sampler, f"{name} [{i},{j}]")
        for (i, a), (j, b) in itertools.combinations(enumerate(P.generators, start=1), 2)
    ]
    return _merge(name, reports)


# ── Observable classes ───────────────────────────────────────────────────────

def in_P(S: AtpStructure, P: Polarization, f: ScalarExpr, sampler: Sampler, name: str = "in P") -> MembershipReport:
    df = differential(S.chart, f)
    reports = [
        membership(twisted_bracket(S, df, alpha), P, sampler, f"{name} [df,a{k}]")
        for k, alpha in enumerate(P.generators, start=1)
    ]
    return _merge(name, reports)


def pair_argument(S: AtpStructure, f: ScalarExpr, g: ScalarExpr) -> FormField:
    """i_{L#dg} i_{L#df} phi + {f,g} theta."""
    chart = S.chart
    return phi_term(S, differential(chart, f), differential(chart, g)) + S.theta * poisson_bracket(S, f, g)


def pair_condition(
    S: AtpStructure, P: Polarization, f: ScalarExpr, g: ScalarExpr, sampler: Sampler, name: str = "pair"
) -> MembershipReport:
    f, g = sp.sympify(f), sp.sympify(g)
    if f == g or equiv(f, g, sampler, S.chart, f"{name}: distinct").passed:
        return MembershipReport(name=name, member=False, reason="f and g coincide")
    for label, h in (("f", f), ("g", g)):
        report = in_P(S, P, h, sampler, f"{name}: {label} in P")
        if not report.member:
            return MembershipReport(name=name, member=False, max_distance=report.max_distance,
                                    points_used=report.points_used, reason=f"{label} is not in P")
    argument = pair_argument(S, f, g)
    reports = [
        membership(twisted_bracket(S, argument, alpha), P, sampler, f"{name} [w,a{k}]")
        for k, alpha in enumerate(P.generators, start=1)
    ]
    return _merge(name, reports)


CONSTANT_WITNESSES = (ONE, ZERO)


def in_Q(
    S: AtpStructure,
    P: Polarization,
    f: ScalarExpr,
    witnesses: Sequence[ScalarExpr],
    sampler: Sampler,
    name: str = "in Q",
) -> MembershipReport:
    """f in P plus a witness g (from the list or a constant) with (f, g) passing pair_condition."""
    base = in_P(S, P, f, sampler, f"{name}: in P")
    if not base.member:
        return MembershipReport(name=name, member=False, max_distance=base.max_distance,
                                points_used=base.points_used, reason="not in P")
    tried = []
    for g in (*witnesses, *CONSTANT_WITNESSES):
        report = pair_condition(S, P, f, g, sampler, f"{name}: pair with {g}")
        tried.append(report)
        if report.member:
            logger.debug(f"{name}: witness {g}")
            return MembershipReport(name=name, member=True, max_distance=report.max_distance,
                                    points_used=report.points_used, reason=f"witness {g}")
    return _merge(name, tried, reason="no witness passed the pair condition")


# ── Half-densities and the quantization space ────────────────────────────────

def lie_half_density(X: MultiVectorField, q: QuantSection) -> QuantSection:
    return QuantSection(q.chart, apply_vector(X, q.u) + sp.Rational(1, 2) * q.u * divergence(X))


def extended_D(D: ContravariantD, alpha: FormField, q: QuantSection) -> QuantSection:
    X = anchor1(D.bivector, alpha)
    coefficient = connection_coefficient(D, alpha) + sp.Rational(1, 2) * divergence(X)
    return QuantSection(q.chart, apply_vector(X, q.u) + coefficient * q.u)


def h0_residuals(D: ContravariantD, P: Polarization, q: QuantSection) -> list[QuantSection]:
    return [extended_D(D, alpha, q) for alpha in P.generators]


def h0_check(D: ContravariantD, P: Polarization, q: QuantSection, sampler: Sampler, name: str = "H0") -> EquivReport:
    return vanishes_all([r.u for r in h0_residuals(D, P, q)], sampler, q.chart, name)


def extended_hat(D: ContravariantD, f: ScalarExpr, q: QuantSection) -> QuantSection:
    step = extended_D(D, differential(D.chart, f), q)
    return QuantSection(q.chart, step.u + TWO_PI_I * f * q.u)


def hat_closed_form(S: AtpStructure, h: ScalarExpr, q: QuantSection) -> QuantSection:
    """2*pi*i h u + L(dh, du) + u/2 div L#(dh), valid for omega = 0, Z = 0."""
    chart = S.chart
    dh = differential(chart, h)
    return QuantSection(
        chart,
        TWO_PI_I * h * q.u
        + bivector_pairing(S.bivector, dh, differential(chart, q.u))
        + sp.Rational(1, 2) * q.u * divergence(anchor1(S.bivector, dh)),
    )


def extended_homomorphism_residual(D: ContravariantD, f: ScalarExpr, g: ScalarExpr, q: QuantSection) -> ScalarExpr:
    """The homomorphism law for the extended operators on half-density sections."""
    S = D.structure
    chart = S.chart
    ehat = lambda h, sec: extended_hat(D, h, sec)  # noqa: E731
    commutator = ehat(f, ehat(g, q)).u - ehat(g, ehat(f, q)).u
    df, dg = differential(chart, f), differential(chart, g)
    bracket = (
        commutator
        - extended_D(D, phi_term(S, df, dg), q).u
        - poisson_bracket(S, f, g) * extended_D(D, S.theta, q).u
    )
    return ehat(poisson_bracket(S, f, g), q).u - bracket


# ── Inner product ────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class QuadratureResult:
    value: complex
    edge_max: float
    interior_max: float
    leaked: bool


def _slab(chart: Chart, exprs: tuple[ScalarExpr, ScalarExpr], x0: float, rest: np.ndarray, edge: np.ndarray,
          outer: bool):
    points = np.column_stack([np.full(len(rest), x0), rest])
    values = sample_values(exprs, chart, points)
    a, b = values[0].real, values[0].imag
    c, d = values[1].real, values[1].imag
    re = a * c + b * d
    im = b * c - a * d
    magnitude = np.hypot(re, im)
    edge_max = float(magnitude.max()) if outer else float(magnitude[edge].max(initial=0.0))
    return float(np.sum(re)), float(np.sum(im)), edge_max, float(magnitude.max(initial=0.0))


def quadrature(q1: QuantSection, q2: QuantSection, grid: QuadratureGrid) -> QuadratureResult:
    """Midpoint rule for the integral of u1 * conj(u2) over the box."""
    chart = q1.chart
    axes, volume = grid.axes(chart)
    n = grid.points_per_axis
    if chart.dim == 1:
        rest = np.zeros((1, 0))
        edge = np.zeros(1, dtype=bool)
    else:
        mesh = np.meshgrid(*axes[1:], indexing="ij")
        rest = np.column_stack([m.ravel() for m in mesh])
        idx = np.meshgrid(*([np.arange(n)] * (chart.dim - 1)), indexing="ij")
        edge = np.zeros(rest.shape[0], dtype=bool)
        for m in idx:
            edge |= (m.ravel() == 0) | (m.ravel() == n - 1)
    exprs = (sp.sympify(q1.u), sp.sympify(q2.u))

    def work(i0: int):
        return _slab(chart, exprs, float(axes[0][i0]), rest, edge, i0 in (0, n - 1))

    if grid.workers > 1:
        with ThreadPoolExecutor(max_workers=grid.workers) as pool:
            slabs = list(pool.map(work, range(n)))
    else:
        slabs = [work(i0) for i0 in range(n)]

    parts = np.array(slabs)
    value = complex(float(np.sum(parts[:, 0])) * volume, float(np.sum(parts[:, 1])) * volume)
    edge_max = float(parts[:, 2].max())
    interior_max = float(parts[:, 3].max())
    leaked = bool(interior_max > 0 and edge_max > grid.leak_tol * interior_max)
    if leaked:
        message = f"integrand reaches {edge_max:.3e} on the box edge (max {interior_max:.3e})"
        logger.warning(message)
        warnings.warn(message, BoundaryLeak, stacklevel=3)
    return QuadratureResult(value=value, edge_max=edge_max, interior_max=interior_max, leaked=leaked)


def inner_product(q1: QuantSection, q2: QuantSection, grid: QuadratureGrid) -> complex:
    return quadrature(q1, q2, grid).value


class AntiHermitianReport(BaseModel):
    name: str
    defect: float = Field(description="|<f^u1,u2> + <u1,f^u2>|")
    scale: float = Field(description="|<u1,u1>| + |<u2,u2>|")
    threshold: float = 1e-2

    @property
    def ratio(self) -> float:
        return self.defect / self.scale if self.scale > 0 else float("inf")

    @property
    def passed(self) -> bool:
        return self.defect <= self.threshold * self.scale


def anti_hermitian_defect(
    D: ContravariantD,
    f: ScalarExpr,
    q1: QuantSection,
    q2: QuantSection,
    grid: QuadratureGrid,
    name: str = "anti-hermitian",
    threshold: float = 1e-2,
) -> AntiHermitianReport:
    defect = inner_product(extended_hat(D, f, q1), q2, grid) + inner_product(q1, extended_hat(D, f, q2), grid)
    scale = abs(inner_product(q1, q1, grid)) + abs(inner_product(q2, q2, grid))
    report = AntiHermitianReport(name=name, defect=abs(defect), scale=scale, threshold=threshold)
    logger.info(f"{name}: defect {report.defect:.3e} against scale {report.scale:.3e}")
    return report
