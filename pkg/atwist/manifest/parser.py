"""
Manifest reader and writer.

The format is INI-like: "[section]" headers, "key = value" lines and '#'
comments. Component keys are parenthesized index tuples, strictly ascending.
Every failure is a ManifestError with the line, column and offending token.
"""
from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from pathlib import Path

from atwist.algebra.symexpr import RESERVED_NAMES, Chart, ScalarExpr, SymexprError
from atwist.algebra.tensorcalc import FormField, GradedField, MultiVectorField
from atwist.geometry.polarize import Polarization, PolarizationError, QuadratureGrid
from atwist.manifest.errors import (
    CyclicScalarDefinition,
    DuplicateComponent,
    IndexOutOfRange,
    ManifestError,
    ManifestSyntaxError,
    MissingBlock,
    UnknownIdentifier,
)
from atwist.manifest.expressions import format_expression, parse_expression
from atwist.manifest.models import DerivativeChoice, Manifest

logger = logging.getLogger(__name__)

MANIFEST_DIR = Path(__file__).resolve().parent.parent / "manifests"
MANIFEST_SUFFIX = ".atw"

# section -> (Manifest attribute, field class, grade)
FIELD_BLOCKS: dict[str, tuple[str, type[GradedField], int]] = {
    "Lambda": ("bivector", MultiVectorField, 2),
    "phi": ("phi", FormField, 3),
    "theta": ("theta", FormField, 1),
    "Z": ("Z", MultiVectorField, 1),
    "eta": ("eta", FormField, 2),
    "vartheta": ("vartheta", FormField, 1),
    "omega": ("omega", FormField, 1),
}
NAMED_BLOCKS = ("sections", "probes", "observables", "real_observables", "bump_sections")
PLAIN_BLOCKS = ("chart", "scalars", *FIELD_BLOCKS, *NAMED_BLOCKS, "quadrature", "options")
POLARIZATION_PREFIX = "polarization."

_HEADER = re.compile(r"^\[\s*([A-Za-z_][A-Za-z_0-9.]*)\s*\]$")
_NAME = re.compile(r"^[A-Za-z_][A-Za-z_0-9]*$")
_KEY = re.compile(r"^\(\s*(\d+(?:\s*,\s*\d+)*)\s*\)$")
_PAIR = re.compile(r"\(\s*(\d+)\s*,\s*(\d+)\s*\)")
_MAX_INDEX_DIGITS = 6
MAX_DIM = 64


@dataclass
class Entry:
    key: str
    value: str
    line: int
    key_column: int
    value_column: int


@dataclass
class Block:
    name: str
    line: int
    entries: list[Entry] = field(default_factory=list)


# ── Lexing into blocks ───────────────────────────────────────────────────────

def _strip_comment(raw: str) -> str:
    cut = raw.find("#")
    return raw if cut < 0 else raw[:cut]


def _split_blocks(text: str) -> dict[str, Block]:
    blocks: dict[str, Block] = {}
    current: Block | None = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        content = _strip_comment(raw)
        stripped = content.strip()
        if not stripped:
            continue
        indent = len(content) - len(content.lstrip()) + 1
        if stripped.startswith("["):
            m = _HEADER.match(stripped)
            if m is None:
                raise ManifestSyntaxError("malformed section header", lineno, indent, stripped)
            name = m.group(1)
            if name not in PLAIN_BLOCKS and not (
                name.startswith(POLARIZATION_PREFIX) and _NAME.match(name[len(POLARIZATION_PREFIX):])
            ):
                raise ManifestSyntaxError(f"unknown section [{name}]", lineno, indent, name)
            if name in blocks:
                raise ManifestSyntaxError(f"section [{name}] appears twice", lineno, indent, name)
            current = blocks[name] = Block(name, lineno)
            continue
        if current is None:
            raise ManifestSyntaxError("entry outside any section", lineno, indent, stripped)
        eq = content.find("=")
        if eq < 0:
            raise ManifestSyntaxError("expected 'key = value'", lineno, indent, stripped)
        key = content[:eq].strip()
        value_raw = content[eq + 1:]
        value = value_raw.strip()
        if not key:
            raise ManifestSyntaxError("missing key before '='", lineno, eq + 1, "=")
        value_column = eq + 2 + (len(value_raw) - len(value_raw.lstrip()))
        current.entries.append(Entry(key, value, lineno, indent, value_column))
    return blocks


# ── Chart ────────────────────────────────────────────────────────────────────

def _floats(entry: Entry, count: int) -> tuple[float, ...]:
    parts = [p.strip() for p in entry.value.split(",")]
    if len(parts) != count:
        raise ManifestSyntaxError(f"expected {count} comma-separated number(s)", entry.line, entry.value_column,
                                  entry.value)
    try:
        return tuple(float(p) for p in parts)
    except ValueError as exc:
        raise ManifestSyntaxError("expected a number", entry.line, entry.value_column, entry.value) from exc


def _parse_chart(block: Block) -> Chart:
    entries = {}
    for entry in block.entries:
        if entry.key in entries:
            raise DuplicateComponent(f"chart key {entry.key!r} repeats", entry.line, entry.key_column, entry.key)
        entries[entry.key] = entry

    if "coords" in entries:
        entry = entries["coords"]
        names = tuple(n.strip() for n in entry.value.split(","))
        for n in names:
            if not _NAME.match(n) or n in RESERVED_NAMES:
                raise ManifestSyntaxError(f"bad coordinate name {n!r}", entry.line, entry.value_column, n)
    elif "dim" in entries:
        entry = entries["dim"]
        if not entry.value.isdigit() or len(entry.value) > 3 or not 1 <= int(entry.value) <= MAX_DIM:
            raise ManifestSyntaxError(f"dim must be an integer in 1..{MAX_DIM}", entry.line, entry.value_column,
                                      entry.value)
        names = tuple(f"x{k}" for k in range(1, int(entry.value) + 1))
    else:
        raise MissingBlock("chart.coords", "every manifest")

    default_box = _floats(entries["box"], 2) if "box" in entries else (-1.0, 1.0)
    box = [default_box] * len(names)
    pairs: list[tuple[int, int]] = []
    guard_eps = 1e-12
    for key, entry in entries.items():
        if key in ("coords", "dim", "box"):
            continue
        if key.startswith("box."):
            axis = key[4:]
            if axis not in names:
                raise UnknownIdentifier(f"no coordinate {axis!r}", entry.line, entry.key_column, axis)
            box[names.index(axis)] = _floats(entry, 2)
        elif key == "pairs":
            found = _PAIR.findall(entry.value)
            if not found or _PAIR.sub("", entry.value).replace(",", "").strip():
                raise ManifestSyntaxError("pairs must read '(i,j), (k,l)'", entry.line, entry.value_column,
                                          entry.value)
            for a, b in found:
                if len(a) > _MAX_INDEX_DIGITS or len(b) > _MAX_INDEX_DIGITS:
                    raise IndexOutOfRange("pair index out of range", entry.line, entry.value_column, f"({a},{b})")
                pairs.append((int(a), int(b)))
        elif key == "guard_eps":
            (guard_eps,) = _floats(entry, 1)
        else:
            raise ManifestSyntaxError(f"unknown chart key {key!r}", entry.line, entry.key_column, key)

    try:
        return Chart(names, box=tuple(box), complex_pairs=tuple(pairs), guard_eps=guard_eps)
    except (SymexprError, ValueError, IndexError) as exc:
        raise ManifestSyntaxError(f"invalid chart: {exc}", block.line, 1, "chart") from exc


# ── Scalars ──────────────────────────────────────────────────────────────────

class ScalarTable:
    """Lazily resolves [scalars] entries, detecting cycles."""

    def __init__(self, block: Block | None, chart: Chart):
        self.chart = chart
        self.raw: dict[str, Entry] = {}
        self.resolved: dict[str, ScalarExpr] = {}
        self._visiting: list[str] = []
        for entry in block.entries if block else ():
            if not _NAME.match(entry.key) or entry.key in RESERVED_NAMES or entry.key in chart.coord_names:
                raise ManifestSyntaxError(f"bad scalar name {entry.key!r}", entry.line, entry.key_column, entry.key)
            if entry.key in self.raw:
                raise DuplicateComponent(f"scalar {entry.key!r} defined twice", entry.line, entry.key_column,
                                         entry.key)
            self.raw[entry.key] = entry

    def resolve(self, name: str, line: int, column: int) -> ScalarExpr:
        if name in self.resolved:
            return self.resolved[name]
        if name not in self.raw:
            raise UnknownIdentifier(f"unknown identifier {name!r}", line, column, name)
        if name in self._visiting:
            chain = " -> ".join([*self._visiting[self._visiting.index(name):], name])
            raise CyclicScalarDefinition(f"scalar definitions form a cycle: {chain}", line, column, name)
        entry = self.raw[name]
        self._visiting.append(name)
        try:
            value = self.expression(entry.value, entry.line, entry.value_column)
        finally:
            self._visiting.pop()
        self.resolved[name] = value
        return value

    def expression(self, text: str, line: int, column: int) -> ScalarExpr:
        return parse_expression(text, self.chart, self.resolve, line, column)

    def resolve_all(self) -> dict[str, ScalarExpr]:
        return {name: self.resolve(name, e.line, e.key_column) for name, e in self.raw.items()}


# ── Field blocks ─────────────────────────────────────────────────────────────

def _component_key(entry: Entry, text: str, column: int, chart: Chart, grade: int) -> tuple[int, ...]:
    m = _KEY.match(text)
    if m is None:
        raise ManifestSyntaxError("component key must read '(i,j,...)'", entry.line, column, text)
    parts = [p.strip() for p in m.group(1).split(",")]
    if any(len(p) > _MAX_INDEX_DIGITS for p in parts):
        raise IndexOutOfRange("component index out of range", entry.line, column, text)
    idx = tuple(int(p) for p in parts)
    if len(idx) != grade:
        raise ManifestSyntaxError(f"expected {grade} index(es), got {len(idx)}", entry.line, column, text)
    for k in idx:
        if not 1 <= k <= chart.dim:
            raise IndexOutOfRange(f"index {k} outside 1..{chart.dim}", entry.line, column, text)
    if any(a >= b for a, b in zip(idx, idx[1:])):
        raise DuplicateComponent("component indices must be strictly ascending", entry.line, column, text)
    return idx


def _parse_field(block: Block, cls: type[GradedField], grade: int, scalars: ScalarTable) -> GradedField:
    chart = scalars.chart
    terms: dict[tuple[int, ...], ScalarExpr] = {}
    for entry in block.entries:
        idx = _component_key(entry, entry.key, entry.key_column, chart, grade)
        if idx in terms:
            raise DuplicateComponent(f"component {idx} repeats", entry.line, entry.key_column, entry.key)
        terms[idx] = scalars.expression(entry.value, entry.line, entry.value_column)
    return cls(chart, grade, terms)


def _parse_polarization(block: Block, scalars: ScalarTable) -> Polarization:
    chart = scalars.chart
    name = block.name[len(POLARIZATION_PREFIX):]
    generators = []
    seen: set[str] = set()
    for entry in block.entries:
        if not _NAME.match(entry.key):
            raise ManifestSyntaxError(f"bad generator name {entry.key!r}", entry.line, entry.key_column, entry.key)
        if entry.key in seen:
            raise DuplicateComponent(f"generator {entry.key!r} repeats", entry.line, entry.key_column, entry.key)
        seen.add(entry.key)
        terms: dict[tuple[int, ...], ScalarExpr] = {}
        offset = entry.value_column
        for part in entry.value.split(";"):
            column = offset + len(part) - len(part.lstrip())
            offset += len(part) + 1
            if not part.strip():
                continue
            if "=" not in part:
                raise ManifestSyntaxError("generator component must read '(k) = expr'", entry.line, column,
                                          part.strip())
            key_text, expr_text = part.split("=", 1)
            idx = _component_key(entry, key_text.strip(), column, chart, 1)
            if idx in terms:
                raise DuplicateComponent(f"component {idx} repeats", entry.line, column, key_text.strip())
            expr_column = column + len(key_text) + 1 + len(expr_text) - len(expr_text.lstrip())
            terms[idx] = scalars.expression(expr_text.strip(), entry.line, expr_column)
        generators.append(FormField(chart, 1, terms))
    try:
        return Polarization(tuple(generators), name)
    except PolarizationError as exc:
        raise ManifestSyntaxError(str(exc), block.line, 1, block.name) from exc


def _parse_named(block: Block, scalars: ScalarTable) -> dict[str, ScalarExpr]:
    named: dict[str, ScalarExpr] = {}
    for entry in block.entries:
        if not _NAME.match(entry.key):
            raise ManifestSyntaxError(f"bad name {entry.key!r}", entry.line, entry.key_column, entry.key)
        if entry.key in named:
            raise DuplicateComponent(f"{entry.key!r} repeats in [{block.name}]", entry.line, entry.key_column,
                                     entry.key)
        named[entry.key] = scalars.expression(entry.value, entry.line, entry.value_column)
    return named


def _parse_quadrature(block: Block) -> QuadratureGrid:
    settings: dict[str, object] = {}
    for entry in block.entries:
        if entry.key in settings:
            raise DuplicateComponent(f"quadrature key {entry.key!r} repeats", entry.line, entry.key_column, entry.key)
        if entry.key in ("points", "workers"):
            if not entry.value.isdigit() or len(entry.value) > _MAX_INDEX_DIGITS or int(entry.value) < 1:
                raise ManifestSyntaxError(f"{entry.key} must be a positive integer", entry.line, entry.value_column,
                                          entry.value)
            settings[entry.key] = int(entry.value)
        elif entry.key == "leak_tol":
            (value,) = _floats(entry, 1)
            if not value > 0:
                raise ManifestSyntaxError("leak_tol must be positive", entry.line, entry.value_column, entry.value)
            settings[entry.key] = value
        else:
            raise ManifestSyntaxError(f"unknown quadrature key {entry.key!r}", entry.line, entry.key_column,
                                      entry.key)
    return QuadratureGrid(
        points_per_axis=settings.get("points", 17),
        leak_tol=settings.get("leak_tol", 1e-3),
        workers=settings.get("workers", 1),
    )


def _parse_options(block: Block) -> DerivativeChoice:
    choice = DerivativeChoice.PLAIN
    for entry in block.entries:
        if entry.key != "hilbert_derivative":
            raise ManifestSyntaxError(f"unknown option {entry.key!r}", entry.line, entry.key_column, entry.key)
        try:
            choice = DerivativeChoice(entry.value)
        except ValueError as exc:
            raise ManifestSyntaxError("hilbert_derivative is 'plain' or 'certificate'", entry.line,
                                      entry.value_column, entry.value) from exc
    return choice


# ── Public API ───────────────────────────────────────────────────────────────

def parse_manifest(text: str) -> Manifest:
    """Parse manifest text into a fully resolved Manifest, or raise a ManifestError."""
    blocks = _split_blocks(text)
    if "chart" not in blocks:
        raise MissingBlock("chart", "every manifest")
    chart = _parse_chart(blocks["chart"])
    scalars = ScalarTable(blocks.get("scalars"), chart)
    values: dict[str, object] = {"chart": chart, "scalars": scalars.resolve_all()}

    for section, (attr, cls, grade) in FIELD_BLOCKS.items():
        if section in blocks:
            values[attr] = _parse_field(blocks[section], cls, grade, scalars)
    values["polarizations"] = {
        name[len(POLARIZATION_PREFIX):]: _parse_polarization(block, scalars)
        for name, block in blocks.items()
        if name.startswith(POLARIZATION_PREFIX)
    }
    for section in NAMED_BLOCKS:
        if section in blocks:
            values[section] = _parse_named(blocks[section], scalars)
    if "bump_sections" in blocks and len(values["bump_sections"]) != 2:
        block = blocks["bump_sections"]
        raise ManifestSyntaxError("[bump_sections] needs exactly two sections", block.line, 1, block.name)
    if "quadrature" in blocks:
        values["quadrature"] = _parse_quadrature(blocks["quadrature"])
    if "options" in blocks:
        values["hilbert_derivative"] = _parse_options(blocks["options"])

    manifest = Manifest(**values)
    logger.debug(f"parsed manifest: dim {chart.dim}, blocks {sorted(blocks)}")
    return manifest


def _field_lines(f: GradedField) -> list[str]:
    return [f"({','.join(map(str, idx))}) = {format_expression(c)}" for idx, c in f.items()]


def serialize_manifest(m: Manifest) -> str:
    """Write a Manifest back out; parse_manifest(serialize_manifest(m)) == m."""
    chart = m.chart
    lines = ["[chart]", f"coords = {', '.join(chart.coord_names)}"]
    for name, (lo, hi) in zip(chart.coord_names, chart.box):
        lines.append(f"box.{name} = {lo!r}, {hi!r}")
    if chart.complex_pairs:
        lines.append("pairs = " + ", ".join(f"({a},{b})" for a, b in chart.complex_pairs))
    lines.append(f"guard_eps = {chart.guard_eps!r}")

    if m.scalars:
        lines += ["", "[scalars]"] + [f"{k} = {format_expression(v)}" for k, v in m.scalars.items()]
    for section, (attr, _, _) in FIELD_BLOCKS.items():
        value = getattr(m, attr)
        if value is not None:
            lines += ["", f"[{section}]", *_field_lines(value)]
    for name, P in m.polarizations.items():
        lines += ["", f"[{POLARIZATION_PREFIX}{name}]"]
        for k, g in enumerate(P.generators, start=1):
            parts = [f"({idx[0]}) = {format_expression(c)}" for idx, c in g.items()]
            lines.append(f"a{k} = " + "; ".join(parts))
    for section in NAMED_BLOCKS:
        named = getattr(m, section)
        if named:
            lines += ["", f"[{section}]"] + [f"{k} = {format_expression(v)}" for k, v in named.items()]
    q = m.quadrature
    lines += ["", "[quadrature]", f"points = {q.points_per_axis}", f"leak_tol = {q.leak_tol!r}",
              f"workers = {q.workers}"]
    lines += ["", "[options]", f"hilbert_derivative = {m.hilbert_derivative.value}"]
    return "\n".join(lines) + "\n"


def golden_manifests() -> list[str]:
    return sorted(p.stem for p in MANIFEST_DIR.glob(f"*{MANIFEST_SUFFIX}"))


def resolve_manifest_path(name_or_path: str | Path) -> Path:
    """A path on disk, or the name of a shipped manifest."""
    path = Path(name_or_path)
    if path.exists():
        return path
    shipped = MANIFEST_DIR / f"{name_or_path}{MANIFEST_SUFFIX}"
    if shipped.exists():
        return shipped
    raise FileNotFoundError(f"no manifest at {path} and no shipped manifest named {name_or_path!r}")


def load_manifest(name_or_path: str | Path) -> Manifest:
    path = resolve_manifest_path(name_or_path)
    logger.info(f"loading manifest {path}")
    return parse_manifest(path.read_text(encoding="utf-8"))


__all__ = [
    "ManifestError",
    "golden_manifests",
    "load_manifest",
    "parse_manifest",
    "resolve_manifest_path",
    "serialize_manifest",
]
