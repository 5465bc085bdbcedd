"""
Scalar expressions over a coordinate chart.

A ScalarExpr is a sympy expression built from real coordinate symbols, the
imaginary unit and the elementary functions exp/ln/sin/cos/conj. sympy's
automatic canonicalisation is the only simplification applied: constant
folding, 0/1 annihilation, double negation, conj(conj(a)) = a and power
flattening all happen on construction, never through `simplify()`.

Identities are decided by randomized point evaluation. A pass is evidence,
not proof:

    report = equiv(exp(x1 + x2), exp(x1) * exp(x2), Sampler(seed=0), chart)
    assert report.passed

Every check draws its points from (seed, check name), so two runs with the
same seed replay the same points and parallel checks share no state.
"""
from __future__ import annotations

import hashlib
import logging
from collections.abc import Sequence
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import sympy as sp
from pydantic import BaseModel, ConfigDict, Field

logger = logging.getLogger(__name__)

ScalarExpr = sp.Expr

I = sp.I
PI = sp.pi
ZERO = sp.S.Zero
ONE = sp.S.One

RESERVED_NAMES = frozenset({"i", "exp", "ln", "sin", "cos", "conj"})


class SymexprError(Exception):
    """Base class for scalar expression errors."""


class InvalidChart(SymexprError, ValueError):
    pass


class CoordinateIndexError(SymexprError, IndexError):
    pass


class DivisionNearZero(SymexprError):
    """A denominator fell below the chart's guard at the evaluation point."""


class LnOfZero(SymexprError):
    """A logarithm argument fell below the chart's guard at the evaluation point."""


class NoSuchPair(SymexprError, KeyError):
    pass


class TooManySingularPoints(SymexprError):
    """Resampling around guarded points ran out of attempts."""


# ── Chart ─────────────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class Chart:
    """A single coordinate chart with a sampling box.

    Indices are 1-based everywhere in the public API. `complex_pairs` holds
    (a, b) index pairs declaring z_k = x_a + i*x_b, numbered k = 1, 2, ...
    in declaration order.
    """

    coord_names: tuple[str, ...]
    box: tuple[tuple[float, float], ...] = ()
    complex_pairs: tuple[tuple[int, int], ...] = ()
    guard_eps: float = 1e-12
    _symbols: tuple[sp.Symbol, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        names = tuple(self.coord_names)
        object.__setattr__(self, "coord_names", names)
        if not names:
            raise InvalidChart("a chart needs at least one coordinate")
        if len(set(names)) != len(names):
            raise InvalidChart(f"coordinate names are not distinct: {names}")
        for name in names:
            if not name or not name.isidentifier():
                raise InvalidChart(f"invalid coordinate name {name!r}")
            if name in RESERVED_NAMES:
                raise InvalidChart(f"coordinate name {name!r} is reserved")

        box = tuple((float(lo), float(hi)) for lo, hi in self.box) or ((-1.0, 1.0),) * len(names)
        if len(box) != len(names):
            raise InvalidChart(f"box has {len(box)} intervals for {len(names)} coordinates")
        for lo, hi in box:
            if not lo < hi:
                raise InvalidChart(f"empty sampling interval [{lo}, {hi}]")
        object.__setattr__(self, "box", box)

        pairs = tuple((int(a), int(b)) for a, b in self.complex_pairs)
        seen: set[int] = set()
        for a, b in pairs:
            if a == b:
                raise InvalidChart(f"complex pair ({a},{b}) repeats an index")
            for idx in (a, b):
                if not 1 <= idx <= len(names):
                    raise InvalidChart(f"complex pair index {idx} outside 1..{len(names)}")
                if idx in seen:
                    raise InvalidChart(f"coordinate {idx} appears in more than one complex pair")
                seen.add(idx)
        object.__setattr__(self, "complex_pairs", pairs)

        if not self.guard_eps > 0:
            raise InvalidChart("guard_eps must be positive")
        object.__setattr__(self, "_symbols", tuple(sp.Symbol(n, real=True) for n in names))

    @classmethod
    def standard(cls, dim: int, prefix: str = "x", **kwargs) -> Chart:
        """x1..x{dim} on [-1, 1]^dim."""
        return cls(tuple(f"{prefix}{k}" for k in range(1, dim + 1)), **kwargs)

    @property
    def dim(self) -> int:
        return len(self.coord_names)

    @property
    def symbols(self) -> tuple[sp.Symbol, ...]:
        return self._symbols

    def coord(self, k: int) -> sp.Symbol:
        self.check_index(k)
        return self._symbols[k - 1]

    def check_index(self, k: int) -> None:
        if not 1 <= k <= self.dim:
            raise CoordinateIndexError(f"coordinate index {k} outside 1..{self.dim}")

    def pair(self, k: int) -> tuple[int, int]:
        if not 1 <= k <= len(self.complex_pairs):
            raise NoSuchPair(f"chart declares {len(self.complex_pairs)} complex pair(s), not pair {k}")
        return self.complex_pairs[k - 1]

    def z(self, k: int) -> ScalarExpr:
        a, b = self.pair(k)
        return self.coord(a) + I * self.coord(b)

    def zbar(self, k: int) -> ScalarExpr:
        a, b = self.pair(k)
        return self.coord(a) - I * self.coord(b)


# ── Construction and calculus ────────────────────────────────────────────────

def const(value: complex | int | float | str) -> ScalarExpr:
    return sp.sympify(value)


def partial(e: ScalarExpr, k: int, chart: Chart) -> ScalarExpr:
    return sp.diff(sp.sympify(e), chart.coord(k))


def wirtinger(e: ScalarExpr, k: int, conjugated: bool, chart: Chart) -> ScalarExpr:
    """d/dz_k (conjugated=False) or d/dzbar_k (conjugated=True)."""
    a, b = chart.pair(k)
    dx = partial(e, a, chart)
    dy = partial(e, b, chart)
    half = sp.Rational(1, 2)
    if conjugated:
        return half * (dx + I * dy)
    return half * (dx - I * dy)


def conj_expr(e: ScalarExpr) -> ScalarExpr:
    """Structural complex conjugation.

    Coordinates are real and stay fixed; ln distributes like every other
    function, so ln arguments are expected to be real-positive.
    """
    e = sp.sympify(e)
    if isinstance(e, sp.conjugate):
        return e.args[0]
    if e.is_Symbol and e.is_real:
        return e
    if isinstance(e, sp.log):
        return sp.log(conj_expr(e.args[0]))
    if e.args:
        return e.func(*(conj_expr(a) for a in e.args))
    return sp.conjugate(e)


def real_part(e: ScalarExpr) -> ScalarExpr:
    return (e + conj_expr(e)) / 2


def imag_part(e: ScalarExpr) -> ScalarExpr:
    return (e - conj_expr(e)) / (2 * I)


def random_polynomial(
    chart: Chart,
    rng: np.random.Generator,
    degree: int = 2,
    n_terms: int = 3,
    coords: Sequence[int] | None = None,
    complex_coeffs: bool = False,
) -> ScalarExpr:
    """Small integer-coefficient polynomial, reproducible from `rng`."""
    pool = list(coords) if coords else list(range(1, chart.dim + 1))
    total = ZERO
    for _ in range(n_terms):
        coeff = int(rng.choice([-3, -2, -1, 1, 2, 3]))
        term: ScalarExpr = sp.Integer(coeff)
        if complex_coeffs and rng.random() < 0.5:
            term = term * I
        for _ in range(int(rng.integers(0, degree + 1))):
            term = term * chart.coord(int(rng.choice(pool)))
        total = total + term
    return total


# ── Evaluation ───────────────────────────────────────────────────────────────

@lru_cache(maxsize=4096)
def _compile(exprs: tuple[ScalarExpr, ...], symbols: tuple[sp.Symbol, ...]):
    return sp.lambdify(symbols, list(exprs), modules="numpy")


@lru_cache(maxsize=4096)
def _guard_terms(e: ScalarExpr) -> tuple[tuple[ScalarExpr, ...], tuple[ScalarExpr, ...]]:
    """(denominators, log arguments) occurring anywhere in e."""
    dens: list[ScalarExpr] = []
    logs: list[ScalarExpr] = []
    for node in sp.preorder_traversal(e):
        if isinstance(node, sp.Pow) and node.exp.is_negative:
            dens.append(node.base)
        elif isinstance(node, sp.log):
            logs.append(node.args[0])
    return tuple(dict.fromkeys(dens)), tuple(dict.fromkeys(logs))


def sample_values(exprs: Sequence[ScalarExpr], chart: Chart, points: np.ndarray) -> np.ndarray:
    """Evaluate expressions at an (n, dim) array of points -> (len(exprs), n) complex."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    n = points.shape[0]
    if not exprs:
        return np.zeros((0, n), dtype=complex)
    fn = _compile(tuple(sp.sympify(e) for e in exprs), chart.symbols)
    with np.errstate(all="ignore"):
        raw = fn(*points.T)
    out = np.empty((len(exprs), n), dtype=complex)
    for row, value in enumerate(raw):
        out[row] = np.broadcast_to(np.asarray(value, dtype=complex), (n,))
    return out


def singular_mask(exprs: Sequence[ScalarExpr], chart: Chart, points: np.ndarray) -> np.ndarray:
    """True where any guarded denominator or ln argument is below guard_eps."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    guards: list[ScalarExpr] = []
    for e in exprs:
        dens, logs = _guard_terms(sp.sympify(e))
        guards.extend(dens)
        guards.extend(logs)
    mask = np.zeros(points.shape[0], dtype=bool)
    if guards:
        values = sample_values(tuple(dict.fromkeys(guards)), chart, points)
        mask |= (np.abs(values) < chart.guard_eps).any(axis=0)
    return mask


def eval_at(e: ScalarExpr, chart: Chart, point: Sequence[float]) -> complex:
    """Evaluate one expression at one point, refusing guarded singularities."""
    point = np.asarray(point, dtype=float).reshape(1, -1)
    if point.shape[1] != chart.dim:
        raise CoordinateIndexError(f"point has {point.shape[1]} components, chart has {chart.dim}")
    e = sp.sympify(e)
    dens, logs = _guard_terms(e)
    if dens and (np.abs(sample_values(dens, chart, point)) < chart.guard_eps).any():
        raise DivisionNearZero(f"denominator below {chart.guard_eps} at {point[0].tolist()}")
    if logs and (np.abs(sample_values(logs, chart, point)) < chart.guard_eps).any():
        raise LnOfZero(f"ln argument below {chart.guard_eps} at {point[0].tolist()}")
    return complex(sample_values((e,), chart, point)[0, 0])


# ── Sampling ─────────────────────────────────────────────────────────────────

def _name_entropy(name: str) -> int:
    return int.from_bytes(hashlib.sha256(name.encode("utf-8")).digest()[:8], "big")


class Sampler(BaseModel):
    """Point sampling policy for randomized identity checks."""

    model_config = ConfigDict(frozen=True)

    seed: int = Field(default=0, ge=0, description="Base seed; combined with the check name per check")
    n_samples: int = Field(default=64, gt=0, description="Points drawn per check")
    tol: float = Field(default=1e-9, gt=0, description="Relative tolerance of the residual test")
    resample_limit: int = Field(default=100, gt=0, description="Resampling rounds before giving up")

    def rng(self, name: str) -> np.random.Generator:
        return np.random.default_rng(np.random.SeedSequence([self.seed, _name_entropy(name)]))

    def uniform(self, chart: Chart, rng: np.random.Generator, count: int) -> np.ndarray:
        lo = np.array([b[0] for b in chart.box])
        hi = np.array([b[1] for b in chart.box])
        return lo + (hi - lo) * rng.random((count, chart.dim))

    def draw(
        self,
        chart: Chart,
        exprs: Sequence[ScalarExpr] = (),
        name: str = "sample",
        count: int | None = None,
    ) -> tuple[np.ndarray, int]:
        """Points clear of every guarded singularity of `exprs`, plus the resample count."""
        rng = self.rng(name)
        points = self.uniform(chart, rng, count or self.n_samples)
        resampled = 0
        rounds = 0
        bad = singular_mask(exprs, chart, points)
        while bad.any():
            rounds += 1
            if rounds > self.resample_limit:
                raise TooManySingularPoints(
                    f"{name}: {int(bad.sum())} point(s) still singular after {self.resample_limit} rounds"
                )
            resampled += int(bad.sum())
            logger.debug(f"{name}: resampling {int(bad.sum())} guarded point(s)")
            points[bad] = self.uniform(chart, rng, int(bad.sum()))
            bad = singular_mask(exprs, chart, points)
        return points, resampled


class EquivReport(BaseModel):
    name: str
    passed: bool
    max_residual: float = Field(description="max |lhs - rhs| over the sample points")
    max_relative: float = Field(description="max of the residual divided by its tolerance scale")
    points_used: int
    resampled: int = 0

    def __bool__(self) -> bool:
        return self.passed


def _terms(e: ScalarExpr) -> tuple[ScalarExpr, ...]:
    e = sp.sympify(e)
    return e.args if isinstance(e, sp.Add) else (e,)


def _finite_max(values: np.ndarray) -> float:
    if values.size == 0:
        return 0.0
    if not np.all(np.isfinite(values)):
        return float("inf")
    return float(values.max())


def equiv_all(
    lhs: Sequence[ScalarExpr],
    rhs: Sequence[ScalarExpr],
    sampler: Sampler,
    chart: Chart,
    name: str = "equiv",
) -> EquivReport:
    """Componentwise lhs[k] == rhs[k] on one shared point set.

    Passes iff |a - b| <= tol * (1 + max(|a|, |b|)) at every point.
    """
    if len(lhs) != len(rhs):
        raise ValueError(f"{name}: {len(lhs)} left-hand sides vs {len(rhs)} right-hand sides")
    exprs = [sp.sympify(e) for e in (*lhs, *rhs)]
    points, resampled = sampler.draw(chart, exprs, name)
    if not lhs:
        return EquivReport(name=name, passed=True, max_residual=0.0, max_relative=0.0,
                           points_used=len(points), resampled=resampled)
    values = sample_values(exprs, chart, points)
    a, b = values[: len(lhs)], values[len(lhs):]
    residual = np.abs(a - b)
    scale = 1.0 + np.maximum(np.abs(a), np.abs(b))
    with np.errstate(all="ignore"):
        relative = residual / scale
    max_rel = _finite_max(relative)
    report = EquivReport(
        name=name,
        passed=bool(max_rel <= sampler.tol),
        max_residual=_finite_max(residual),
        max_relative=max_rel,
        points_used=len(points),
        resampled=resampled,
    )
    logger.debug(f"{name}: passed={report.passed} max_residual={report.max_residual:.3e}")
    return report


def equiv(e1: ScalarExpr, e2: ScalarExpr, sampler: Sampler, chart: Chart, name: str = "equiv") -> EquivReport:
    return equiv_all([e1], [e2], sampler, chart, name)


def vanishes_all(exprs: Sequence[ScalarExpr], sampler: Sampler, chart: Chart, name: str = "vanishes") -> EquivReport:
    """Zero test for residual expressions.

    The tolerance scale at each point is 1 + sum of |term| over the top-level
    summands, which bounds the rounding error of the cancellation.
    """
    exprs = [sp.sympify(e) for e in exprs]
    points, resampled = sampler.draw(chart, exprs, name)
    residual = np.zeros(len(points))
    relative = np.zeros(len(points))
    for e in exprs:
        terms = _terms(e)
        values = sample_values(terms, chart, points)
        r = np.abs(values.sum(axis=0))
        with np.errstate(all="ignore"):
            rel = r / (1.0 + np.abs(values).sum(axis=0))
        residual = np.maximum(residual, np.where(np.isfinite(r), r, np.inf))
        relative = np.maximum(relative, np.where(np.isfinite(rel), rel, np.inf))
    max_rel = _finite_max(relative)
    report = EquivReport(
        name=name,
        passed=bool(max_rel <= sampler.tol),
        max_residual=_finite_max(residual),
        max_relative=max_rel,
        points_used=len(points),
        resampled=resampled,
    )
    logger.debug(f"{name}: passed={report.passed} max_residual={report.max_residual:.3e}")
    return report


def vanishes(e: ScalarExpr, sampler: Sampler, chart: Chart, name: str = "vanishes") -> EquivReport:
    return vanishes_all([e], sampler, chart, name)


def is_real_valued(e: ScalarExpr, sampler: Sampler, chart: Chart, name: str = "real-valued") -> EquivReport:
    return vanishes(imag_part(e), sampler, chart, name)
