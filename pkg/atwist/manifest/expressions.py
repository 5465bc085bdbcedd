"""
Expression grammar for manifest files.

    expr   := term (('+'|'-') term)*
    term   := factor (('*'|'/') factor)*
    factor := base ('^' signed-integer)?
    base   := number | 'i' | identifier | fname '(' expr ')' | '(' expr ')' | '-' base
    fname  := 'exp' | 'ln' | 'sin' | 'cos' | 'conj'

Unary minus binds to a base, so "-x^2" reads as (-x)^2. Numbers become exact
sympy Rationals. Identifiers resolve to chart coordinates first, then to named
scalars through a caller-supplied resolver. Nothing is ever eval'd.
"""
from __future__ import annotations

import re
from collections.abc import Callable
from dataclasses import dataclass
from fractions import Fraction

import sympy as sp

from atwist.algebra.symexpr import I, Chart, ScalarExpr
from atwist.manifest.errors import ManifestSyntaxError, UnknownIdentifier

FUNCTIONS: dict[str, Callable[[ScalarExpr], ScalarExpr]] = {
    "exp": sp.exp,
    "ln": sp.log,
    "sin": sp.sin,
    "cos": sp.cos,
    "conj": sp.conjugate,
}

_TOKEN = re.compile(
    r"(?P<ws>\s+)"
    r"|(?P<number>\d+(?:\.\d*)?(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^(),])"
)

Resolver = Callable[[str, int, int], ScalarExpr]

MAX_EXPONENT = 64
MAX_LITERAL_EXPONENT = 300
MAX_LITERAL_DIGITS = 400
MAX_POWER_BITS = 1 << 16
_LITERAL_EXPONENT = re.compile(r"[eE]([+-]?\d+)$")


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    column: int


def tokenize(text: str, line: int = 1, column: int = 1) -> list[Token]:
    tokens: list[Token] = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ManifestSyntaxError(f"unexpected character {text[pos]!r}", line, column + pos, text[pos])
        if m.lastgroup != "ws":
            tokens.append(Token(m.lastgroup, m.group(), column + pos))
        pos = m.end()
    tokens.append(Token("end", "", column + len(text)))
    return tokens


class ExpressionParser:
    """Recursive descent over one expression string."""

    def __init__(self, text: str, chart: Chart, resolve: Resolver | None = None, line: int = 1, column: int = 1):
        self.text = text
        self.chart = chart
        self.resolve = resolve
        self.line = line
        self.tokens = tokenize(text, line, column)
        self.pos = 0
        self.coords = dict(zip(chart.coord_names, chart.symbols))

    # ── Token helpers ────────────────────────────────────────────────────────

    @property
    def current(self) -> Token:
        return self.tokens[self.pos]

    def _error(self, message: str, token: Token | None = None) -> ManifestSyntaxError:
        token = token or self.current
        return ManifestSyntaxError(message, self.line, token.column, token.text or "<end>")

    def _accept(self, text: str) -> bool:
        if self.current.kind == "op" and self.current.text == text:
            self.pos += 1
            return True
        return False

    def _expect(self, text: str) -> None:
        if not self._accept(text):
            raise self._error(f"expected {text!r}")

    # ── Grammar ──────────────────────────────────────────────────────────────

    def parse(self) -> ScalarExpr:
        if self.current.kind == "end":
            raise self._error("empty expression")
        value = self.expr()
        if self.current.kind != "end":
            raise self._error("unexpected token")
        return value

    def expr(self) -> ScalarExpr:
        value = self.term()
        while True:
            if self._accept("+"):
                value = value + self.term()
            elif self._accept("-"):
                value = value - self.term()
            else:
                return value

    def term(self) -> ScalarExpr:
        value = self.factor()
        while True:
            if self._accept("*"):
                value = value * self.factor()
            elif self._accept("/"):
                token = self.current
                divisor = self.factor()
                if divisor == 0:
                    raise self._error("division by zero", token)
                value = value / divisor
            else:
                return value

    def factor(self) -> ScalarExpr:
        base = self.base()
        if self._accept("^"):
            sign = 1
            if self._accept("-"):
                sign = -1
            else:
                self._accept("+")
            token = self.current
            if token.kind != "number" or not token.text.isdigit():
                raise self._error("exponent must be an integer", token)
            self.pos += 1
            if len(token.text) > 3 or int(token.text) > MAX_EXPONENT:
                raise self._error(f"exponent magnitude above {MAX_EXPONENT}", token)
            exponent = sign * int(token.text)
            if isinstance(base, sp.Rational) and max(abs(base.p), base.q).bit_length() * abs(exponent) > MAX_POWER_BITS:
                raise self._error("power out of range", token)
            if exponent < 0 and base == 0:
                raise self._error("zero raised to a negative power", token)
            return base**exponent
        return base

    def base(self) -> ScalarExpr:
        token = self.current
        if token.kind == "number":
            self.pos += 1
            m = _LITERAL_EXPONENT.search(token.text)
            if len(token.text) > MAX_LITERAL_DIGITS or (m is not None and abs(int(m.group(1))) > MAX_LITERAL_EXPONENT):
                raise self._error("number out of range", token)
            fraction = Fraction(token.text)
            return sp.Rational(fraction.numerator, fraction.denominator)
        if token.kind == "name":
            self.pos += 1
            if token.text in FUNCTIONS:
                if not self._accept("("):
                    raise self._error(f"function {token.text} needs '('")
                arg = self.expr()
                self._expect(")")
                return FUNCTIONS[token.text](arg)
            if token.text == "i":
                return I
            if token.text in self.coords:
                return self.coords[token.text]
            if self.resolve is not None:
                return self.resolve(token.text, self.line, token.column)
            raise UnknownIdentifier(f"unknown identifier {token.text!r}", self.line, token.column, token.text)
        if self._accept("("):
            value = self.expr()
            self._expect(")")
            return value
        if self._accept("-"):
            return -self.base()
        raise self._error("expected a number, identifier, function or '('")


def parse_expression(
    text: str, chart: Chart, resolve: Resolver | None = None, line: int = 1, column: int = 1
) -> ScalarExpr:
    try:
        return ExpressionParser(text, chart, resolve, line, column).parse()
    except RecursionError as exc:
        raise ManifestSyntaxError("expression nests too deeply", line, column, text[:20]) from exc


# ── Printing ─────────────────────────────────────────────────────────────────

_PRINT_FUNCTIONS = {sp.exp: "exp", sp.log: "ln", sp.sin: "sin", sp.cos: "cos", sp.conjugate: "conj"}


def format_expression(e: ScalarExpr) -> str:
    """Print in the manifest grammar; parse_expression inverts it structurally."""
    e = sp.sympify(e)
    if e is sp.I:
        return "i"
    if e is sp.E:
        return "exp(1)"
    if e.is_Integer:
        return str(int(e)) if e >= 0 else f"(-{-int(e)})"
    if e.is_Rational:
        p, q = int(e.p), int(e.q)
        return f"({p}/{q})" if p >= 0 else f"(-{-p}/{q})"
    if e.is_Float:
        fraction = Fraction(float(e))
        return format_expression(sp.Rational(fraction.numerator, fraction.denominator))
    if e.is_Symbol:
        return e.name
    if isinstance(e, sp.Add):
        return "(" + " + ".join(format_expression(a) for a in e.args) + ")"
    if isinstance(e, sp.Mul):
        return "(" + " * ".join(format_expression(a) for a in e.args) + ")"
    if isinstance(e, sp.Pow):
        if not e.exp.is_Integer:
            raise ValueError(f"non-integer power {e} has no manifest spelling")
        return f"{format_expression(e.base)}^{int(e.exp)}"
    for func, name in _PRINT_FUNCTIONS.items():
        if isinstance(e, func):
            return f"{name}({format_expression(e.args[0])})"
    raise ValueError(f"{e} has no manifest spelling")
