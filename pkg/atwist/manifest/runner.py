"""
Subcommand orchestration: turns a Manifest into an ordered list of CheckReports.

Each subcommand declares its checks up front. Blocks are looked up before any
check runs, so a missing block fails fast with MissingBlock. Reports come back
in declaration order whatever order the checks finish in.
"""
from __future__ import annotations

import itertools
import logging
import time
import warnings
from collections.abc import Callable
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from atwist.algebra.symexpr import EquivReport, SymexprError, random_polynomial, vanishes_all
from atwist.algebra.tensorcalc import (
    FormField,
    MultiVectorField,
    TensorError,
    anchor_k,
    exterior_d,
    field_equiv,
    random_field,
)
from atwist.geometry.polarize import (
    BoundaryLeak,
    MembershipReport,
    PolarizationError,
    QuadratureGrid,
    anti_hermitian_defect,
    closure_check,
    extended_hat,
    h0_check,
    hat_closed_form,
    in_Q,
    isotropy_check,
    rank_check,
)
from atwist.geometry.prequantum import (
    ContravariantD,
    PrequantumError,
    check_certificate,
    curvature_bivector,
    curvature_cocycle,
    curvature_law,
    curvature_via_connection,
    derivative_axioms,
    gauge_difference,
    hermitian_residual,
    homomorphism_residual,
    tensoriality_check,
)
from atwist.geometry.twisted_core import (
    StructureError,
    bracket_jacobiator,
    chain_map_residual,
    coboundary_field,
    jacobiator_residual,
)
from atwist.geometry.twisted_core import validate as validate_axioms
from atwist.manifest.errors import MissingBlock
from atwist.manifest.models import CheckReport, CheckStatus, Manifest
from atwist.settings import RunSettings

logger = logging.getLogger(__name__)

SUBCOMMANDS = ("validate", "prequant", "polarize", "hilbert", "report")

# Computation errors that turn a check into a failure instead of aborting the run.
CHECK_ERRORS = (SymexprError, TensorError, StructureError, PrequantumError, PolarizationError, ArithmeticError)


@dataclass(frozen=True)
class Outcome:
    check: str
    status: CheckStatus
    max_residual: float | None = None
    samples: int = 0


@dataclass(frozen=True)
class Check:
    """One or more outcomes from a single computation."""

    name: str
    run: Callable[[], list[Outcome]]


def _verdict(name: str, report: EquivReport) -> Outcome:
    status = CheckStatus.PASS if report.passed else CheckStatus.FAIL
    return Outcome(name, status, report.max_residual, report.points_used)


def _membership(name: str, report: MembershipReport) -> Outcome:
    if not report.member and report.reason:
        logger.info(f"{name}: {report.reason}")
    status = CheckStatus.PASS if report.member else CheckStatus.FAIL
    return Outcome(name, status, report.max_distance, report.points_used)


def _single(name: str, fn: Callable[[], EquivReport]) -> Check:
    return Check(name, lambda: [_verdict(name, fn())])


# ── validate ─────────────────────────────────────────────────────────────────

def validate_checks(m: Manifest, settings: RunSettings) -> list[Check]:
    S = m.structure("validate")
    sampler = settings.sampler()
    chart = S.chart
    trials = settings.trials

    def axioms() -> list[Outcome]:
        report = validate_axioms(S, sampler)
        return [
            Outcome(f"validate: {r.name}", CheckStatus.PASS if r.passed else CheckStatus.FAIL, r.max_residual,
                    r.points_used)
            for r in report.residuals
        ]

    def coboundary_squared() -> EquivReport:
        name = "validate: coboundary squares to zero"
        rng = sampler.rng(name)
        residuals = []
        for _, grade in itertools.product(range(trials), range(3)):
            v = random_field(MultiVectorField, chart, grade, rng, degree=2)
            residuals += [c for _, c in coboundary_field(S, coboundary_field(S, v)).items()]
        return vanishes_all(residuals, sampler, chart, name)

    def chain_map() -> EquivReport:
        name = "validate: coboundary intertwines anchor and d"
        rng = sampler.rng(name)
        residuals = []
        for _, grade in itertools.product(range(trials), (1, 2)):
            mu = random_field(FormField, chart, grade, rng, degree=2)
            residuals += [c for _, c in chain_map_residual(S, mu).items()]
        return vanishes_all(residuals, sampler, chart, name)

    def jacobiator() -> EquivReport:
        name = "validate: Jacobiator equals anchor(phi)"
        rng = sampler.rng(name)
        residuals = [
            jacobiator_residual(S, *(random_polynomial(chart, rng, degree=2) for _ in range(3)))
            for _ in range(trials)
        ]
        return vanishes_all(residuals, sampler, chart, name)

    def form_bracket_jacobi() -> EquivReport:
        name = "validate: form bracket satisfies Jacobi"
        rng = sampler.rng(name)
        residuals = []
        for _ in range(trials):
            a, b, c = (random_field(FormField, chart, 1, rng, degree=1) for _ in range(3))
            residuals += [e for _, e in bracket_jacobiator(S, a, b, c).items()]
        return vanishes_all(residuals, sampler, chart, name)

    return [
        Check("validate: axioms", axioms),
        _single("validate: coboundary squares to zero", coboundary_squared),
        _single("validate: coboundary intertwines anchor and d", chain_map),
        _single("validate: Jacobiator equals anchor(phi)", jacobiator),
        _single("validate: form bracket satisfies Jacobi", form_bracket_jacobi),
    ]


# ── prequant ─────────────────────────────────────────────────────────────────

def prequant_checks(m: Manifest, settings: RunSettings) -> list[Check]:
    S = m.structure("prequant")
    certificate = m.certificate("prequant")
    D = m.certificate_derivative("prequant")
    sampler = settings.sampler()
    chart = S.chart
    trials = settings.trials

    def certificate_outcomes() -> list[Outcome]:
        report = check_certificate(S, certificate, sampler)
        parts = [report.closed, report.equation] + ([report.potential] if report.potential else [])
        return [_verdict(f"prequant: {r.name}", r) for r in parts]

    def axioms() -> EquivReport:
        name = "prequant: D is a contravariant derivative"
        rng = sampler.rng(name)
        alpha = random_field(FormField, chart, 1, rng, degree=1)
        f = random_polynomial(chart, rng, degree=2)
        u = random_polynomial(chart, rng, degree=2, complex_coeffs=True)
        return derivative_axioms(D, alpha, f, u, sampler, name)

    def connection() -> EquivReport:
        return field_equiv(curvature_bivector(D), curvature_via_connection(D), sampler,
                           "prequant: curvature is the coboundary of the connection vector")

    def hermitian() -> EquivReport:
        name = "prequant: D is compatible with the hermitian metric"
        rng = sampler.rng(name)
        residuals = [
            hermitian_residual(
                D,
                random_field(FormField, chart, 1, rng, degree=1),
                random_polynomial(chart, rng, degree=2, complex_coeffs=True),
                random_polynomial(chart, rng, degree=2, complex_coeffs=True),
            )
            for _ in range(trials)
        ]
        return vanishes_all(residuals, sampler, chart, name)

    def homomorphism() -> EquivReport:
        name = "prequant: f -> f^ is a bracket homomorphism"
        rng = sampler.rng(name)
        residuals = [
            homomorphism_residual(
                D,
                random_polynomial(chart, rng, degree=2),
                random_polynomial(chart, rng, degree=2),
                random_polynomial(chart, rng, degree=1, complex_coeffs=True),
            )
            for _ in range(trials)
        ]
        return vanishes_all(residuals, sampler, chart, name)

    def gauge() -> EquivReport:
        name = "prequant: curvature is gauge invariant"
        return gauge_difference(D, random_polynomial(chart, sampler.rng(name), degree=2), sampler, name)

    checks = [
        Check("prequant: certificate", certificate_outcomes),
        _single("prequant: D is a contravariant derivative", axioms),
        _single("prequant: curvature is tensorial",
                lambda: tensoriality_check(D, sampler, trials=2, name="prequant: curvature is tensorial")),
        _single("prequant: P + 2*pi*i*L = 0", lambda: curvature_law(D, sampler, "prequant: P + 2*pi*i*L = 0")),
        _single("prequant: curvature is the coboundary of the connection vector", connection),
        _single("prequant: curvature is a cocycle",
                lambda: curvature_cocycle(D, sampler, "prequant: curvature is a cocycle")),
        _single("prequant: D is compatible with the hermitian metric", hermitian),
        _single("prequant: f -> f^ is a bracket homomorphism", homomorphism),
        _single("prequant: curvature is gauge invariant", gauge),
    ]
    if m.omega is not None:
        D_omega = ContravariantD(S, m.omega, MultiVectorField.zero(chart, 1))
        name = "prequant: [omega] curvature equals anchor(d omega)"
        checks.append(_single(name, lambda: field_equiv(
            curvature_bivector(D_omega), anchor_k(S.bivector, exterior_d(m.omega)), sampler, name,
        )))
    return checks


# ── polarize ─────────────────────────────────────────────────────────────────

def polarize_checks(m: Manifest, settings: RunSettings) -> list[Check]:
    S = m.structure("polarize")
    P = m.polarization("polarize")
    sampler = settings.sampler()
    checks = [
        Check("polarize: generators have full rank",
              lambda: [_membership("polarize: generators have full rank", rank_check(P, sampler))]),
        _single("polarize: generators are isotropic", lambda: isotropy_check(S, P, sampler, "polarize: isotropy")),
        Check("polarize: generators close under the bracket",
              lambda: [_membership("polarize: generators close under the bracket", closure_check(S, P, sampler))]),
    ]
    for name, f in m.observables.items():
        witnesses = [g for other, g in m.observables.items() if other != name]
        label = f"polarize: {name} is quantizable"
        checks.append(Check(label, lambda f=f, label=label, witnesses=witnesses: [
            _membership(label, in_Q(S, P, f, witnesses, sampler, label))
        ]))
    return checks


# ── hilbert ──────────────────────────────────────────────────────────────────

def _grid(m: Manifest, settings: RunSettings) -> QuadratureGrid:
    if settings.grid is None:
        return m.quadrature
    return m.quadrature.model_copy(update={"points_per_axis": settings.grid})


def hilbert_checks(m: Manifest, settings: RunSettings) -> list[Check]:
    D = m.hilbert_D("hilbert")
    P = m.polarization("hilbert")
    sampler = settings.sampler()
    plain = D.omega.is_zero() and D.Z.is_zero()
    checks: list[Check] = []

    for name in m.sections:
        label = f"hilbert: {name} is in H0"
        checks.append(_single(label, lambda q=m.section(name), label=label: h0_check(D, P, q, sampler, label)))

    for name in m.probes:
        label = f"hilbert: probe {name}"

        def probe(q=m.section(name), label=label) -> list[Outcome]:
            report = h0_check(D, P, q, sampler, label)
            if not report.passed:
                logger.warning(f"{label}: nonzero H0 residual {report.max_residual:.3e}")
            return [Outcome(label, CheckStatus.PASS if report.passed else CheckStatus.WARN, report.max_residual,
                            report.points_used)]

        checks.append(Check(label, probe))

    for (obs, f), section in itertools.product(m.observables.items(), m.sections):
        q = m.section(section)
        label = f"hilbert: {obs} preserves H0 on {section}"
        checks.append(_single(label, lambda f=f, q=q, label=label: h0_check(D, P, extended_hat(D, f, q), sampler,
                                                                             label)))
        if plain:
            closed = f"hilbert: {obs} matches the closed form on {section}"
            checks.append(_single(closed, lambda f=f, q=q, closed=closed: vanishes_all(
                [extended_hat(D, f, q).u - hat_closed_form(D.structure, f, q).u], sampler, q.chart, closed,
            )))

    if m.real_observables:
        if len(m.bump_sections) != 2:
            raise MissingBlock("bump_sections", "hilbert anti-hermiticity")
        grid = _grid(m, settings)
        q1, q2 = (m.section(n) for n in m.bump_sections)
        cells = grid.points_per_axis ** m.chart.dim
        for name, f in m.real_observables.items():
            label = f"hilbert: {name}^ is anti-hermitian"

            def anti_hermitian(f=f, label=label) -> list[Outcome]:
                with warnings.catch_warnings(record=True) as caught:
                    warnings.simplefilter("always", BoundaryLeak)
                    report = anti_hermitian_defect(D, f, q1, q2, grid, label)
                leaked = any(issubclass(w.category, BoundaryLeak) for w in caught)
                status = CheckStatus.PASS if report.passed else CheckStatus.FAIL
                if leaked and report.passed:
                    status = CheckStatus.WARN
                return [Outcome(label, status, report.ratio, cells)]

            checks.append(Check(label, anti_hermitian))
    return checks


# ── Running ──────────────────────────────────────────────────────────────────

BUILDERS: dict[str, Callable[[Manifest, RunSettings], list[Check]]] = {
    "validate": validate_checks,
    "prequant": prequant_checks,
    "polarize": polarize_checks,
    "hilbert": hilbert_checks,
}


def _execute(check: Check, settings: RunSettings) -> list[CheckReport]:
    started = time.perf_counter()
    try:
        outcomes = check.run()
    except CHECK_ERRORS as exc:
        logger.error(f"{check.name}: {type(exc).__name__}: {exc}")
        outcomes = [Outcome(check.name, CheckStatus.FAIL)]
    wall_ms = (time.perf_counter() - started) * 1000.0 if settings.timings else None
    reports = [
        CheckReport(check=o.check, status=o.status, max_residual=o.max_residual, samples=o.samples,
                    seed=settings.seed, wall_ms=wall_ms)
        for o in outcomes
    ]
    for r in reports:
        logger.info(f"{r.check}: {r.status.value}")
    return reports


def _collect(subcommand: str, manifest: Manifest, settings: RunSettings) -> list[Check]:
    if subcommand != "report":
        return BUILDERS[subcommand](manifest, settings)
    checks: list[Check] = []
    for name, build in BUILDERS.items():
        try:
            checks += build(manifest, settings)
        except MissingBlock as exc:
            label = f"{name}: skipped"
            reason = exc.message
            logger.warning(f"{label}: {reason}")
            checks.append(Check(label, lambda label=label: [Outcome(label, CheckStatus.WARN)]))
    return checks


def exit_code(reports: list[CheckReport]) -> int:
    return 1 if any(r.status is CheckStatus.FAIL for r in reports) else 0


def run(subcommand: str, manifest: Manifest, settings: RunSettings | None = None) -> tuple[list[CheckReport], int]:
    """Run one subcommand. Raises MissingBlock when the manifest lacks a block it needs."""
    if subcommand not in SUBCOMMANDS:
        raise ValueError(f"unknown subcommand {subcommand!r}; expected one of {', '.join(SUBCOMMANDS)}")
    settings = settings or RunSettings()
    checks = _collect(subcommand, manifest, settings)
    logger.info(f"{subcommand}: {len(checks)} check(s), seed {settings.seed}, {settings.samples} samples")
    if settings.workers > 1:
        with ThreadPoolExecutor(max_workers=settings.workers) as pool:
            batches = list(pool.map(lambda c: _execute(c, settings), checks))
    else:
        batches = [_execute(c, settings) for c in checks]
    reports = [r for batch in batches for r in batch]
    return reports, exit_code(reports)
