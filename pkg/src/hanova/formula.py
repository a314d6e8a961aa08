"""Model-text parsing: turn ``"y ~ a + b + a:b"`` into an ordered batching.

Grammar (also shipped in docs/grammar.md)::

    formula   = response ( "~" terms )? ( "," alias )*
    response  = IDENT
    terms     = term ( "+" term )*
    term      = "1" | "Error" "(" colon_chain ")" | chain
    chain     = IDENT ( ":" IDENT )*  |  IDENT ( "*" IDENT )+
    alias     = "alias" "(" colon_chain "=" colon_chain ")"

``a*b`` expands to every nonempty subset of its factors, main effects
first ({a}, {b}, {a,b}); ``a:b`` is the single interaction term.  A bare
``1`` stands for the intercept-only model (the grand mean is always
implicit and never written).  ``Error(...)`` marks a term as the intended
residual row.  ``alias(trt = row:col)`` declares that the columns of
``trt`` lie in the span of ``row:col`` (Latin-square style aliasing).

Terms must be unique as factor sets as written; duplicates that only
arise from ``*`` expansion are dropped, keeping the first occurrence.
All functions are pure.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass

from .errors import (
    DuplicateTermError,
    EmptyFormulaError,
    FormulaSyntaxError,
    UnknownFactorError,
)

_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_.]*")
_SYMBOLS = "~+:*,()="


@dataclass(frozen=True)
class Term:
    """One source of variation: a nonempty set of factors, in source order."""

    factors: tuple[str, ...]
    explicit_residual: bool = False

    def __post_init__(self):
        if not self.factors:
            raise ValueError("term must reference at least one factor")

    @property
    def factor_set(self) -> frozenset:
        return frozenset(self.factors)

    @property
    def label(self) -> str:
        return ":".join(self.factors)


@dataclass(frozen=True)
class AliasDecl:
    """Declares span(inner term) is contained in span(outer term)."""

    inner: tuple[str, ...]
    outer: tuple[str, ...]


@dataclass(frozen=True)
class ModelSpec:
    response: str
    terms: tuple[Term, ...] = ()
    aliases: tuple[AliasDecl, ...] = ()

    @property
    def factors(self) -> tuple[str, ...]:
        """All factors referenced, in first-appearance order."""
        seen: dict[str, None] = {}
        for t in self.terms:
            for f in t.factors:
                seen.setdefault(f)
        for a in self.aliases:
            for f in a.inner + a.outer:
                seen.setdefault(f)
        return tuple(seen)


@dataclass
class _Token:
    kind: str  # 'ident', 'symbol', 'number', 'end'
    text: str
    pos: int


def _tokenize(text: str) -> list[_Token]:
    tokens = []
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
            continue
        if ch in _SYMBOLS:
            tokens.append(_Token("symbol", ch, i))
            i += 1
            continue
        m = _IDENT.match(text, i)
        if m:
            tokens.append(_Token("ident", m.group(), i))
            i = m.end()
            continue
        if ch.isdigit():
            j = i
            while j < n and text[j].isdigit():
                j += 1
            tokens.append(_Token("number", text[i:j], i))
            i = j
            continue
        raise FormulaSyntaxError(i, "identifier or operator", ch)
    tokens.append(_Token("end", "", n))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    @property
    def cur(self) -> _Token:
        return self.tokens[self.i]

    def advance(self) -> _Token:
        tok = self.cur
        self.i += 1
        return tok

    def expect_symbol(self, sym: str) -> _Token:
        if self.cur.kind == "symbol" and self.cur.text == sym:
            return self.advance()
        raise FormulaSyntaxError(self.cur.pos, f"'{sym}'", self.cur.text or "<end>")

    def expect_ident(self, what="factor name") -> _Token:
        if self.cur.kind == "ident":
            return self.advance()
        raise FormulaSyntaxError(self.cur.pos, what, self.cur.text or "<end>")

    def at_symbol(self, sym: str) -> bool:
        return self.cur.kind == "symbol" and self.cur.text == sym

    # raw term: (factors, operator, explicit_residual)
    def parse_chain(self) -> tuple[tuple[str, ...], str]:
        first = self.expect_ident()
        factors = [first.text]
        op = ":"
        if self.at_symbol(":") or self.at_symbol("*"):
            op = self.cur.text
        while self.at_symbol(":") or self.at_symbol("*"):
            if self.cur.text != op:
                raise FormulaSyntaxError(
                    self.cur.pos, f"'{op}' (terms may not mix ':' and '*')", self.cur.text
                )
            self.advance()
            tok = self.expect_ident()
            if tok.text in factors:
                raise DuplicateTermError(
                    f"duplicate factor {tok.text!r} within a term at position {tok.pos}"
                )
            factors.append(tok.text)
        return tuple(factors), op

    def parse_colon_chain(self) -> tuple[str, ...]:
        factors, op = self.parse_chain()
        if op == "*" and len(factors) > 1:
            raise FormulaSyntaxError(
                self.tokens[self.i - 1].pos, "':' separated factors", "*"
            )
        return factors

    def parse_term(self):
        if self.cur.kind == "number":
            if self.cur.text == "1":
                self.advance()
                return None  # intercept marker: the grand mean is implicit
            raise FormulaSyntaxError(self.cur.pos, "factor name or '1'", self.cur.text)
        if self.cur.kind == "ident" and self.cur.text == "Error":
            nxt = self.tokens[self.i + 1]
            if nxt.kind == "symbol" and nxt.text == "(":
                self.advance()
                self.expect_symbol("(")
                factors = self.parse_colon_chain()
                self.expect_symbol(")")
                return (factors, ":", True)
        factors, op = self.parse_chain()
        return (factors, op, False)

    def parse_alias(self) -> AliasDecl:
        tok = self.expect_ident("'alias'")
        if tok.text != "alias":
            raise FormulaSyntaxError(tok.pos, "'alias'", tok.text)
        self.expect_symbol("(")
        inner = self.parse_colon_chain()
        self.expect_symbol("=")
        outer = self.parse_colon_chain()
        self.expect_symbol(")")
        return AliasDecl(inner, outer)


def _expand_star(factors: tuple[str, ...]) -> list[tuple[str, ...]]:
    """All nonempty subsets, by cardinality then source position."""
    out = []
    for size in range(1, len(factors) + 1):
        out.extend(itertools.combinations(factors, size))
    return out


def parse_model(text: str) -> ModelSpec:
    """Parse model text into a :class:`ModelSpec`.

    Star products are expanded here, so ``spec.terms`` is always a flat,
    duplicate-free batch list in source order.
    """
    if not text or not text.strip():
        raise EmptyFormulaError("model text is empty")
    p = _Parser(text)
    response = p.expect_ident("response name").text

    raw_terms = []
    if p.at_symbol("~"):
        p.advance()
        raw = p.parse_term()
        if raw is not None:
            raw_terms.append(raw)
        while p.at_symbol("+"):
            p.advance()
            raw = p.parse_term()
            if raw is not None:
                raw_terms.append(raw)

    aliases = []
    while p.at_symbol(","):
        p.advance()
        aliases.append(p.parse_alias())

    if p.cur.kind != "end":
        raise FormulaSyntaxError(p.cur.pos, "'+', ',' or end of input", p.cur.text)

    # Terms must be unique as factor sets *as written*.
    seen_sets = set()
    for factors, _op, _res in raw_terms:
        fs = frozenset(factors)
        if fs in seen_sets:
            raise DuplicateTermError(f"duplicate term {':'.join(factors)!r}")
        seen_sets.add(fs)

    # Expand stars in place; duplicates arising from expansion keep the
    # first occurrence.
    terms: list[Term] = []
    expanded_sets = set()
    for factors, op, residual in raw_terms:
        subsets = _expand_star(factors) if op == "*" else [factors]
        for sub in subsets:
            fs = frozenset(sub)
            if fs in expanded_sets:
                continue
            expanded_sets.add(fs)
            terms.append(Term(sub, explicit_residual=residual and sub == factors))

    return ModelSpec(response, tuple(terms), tuple(aliases))


def render_model(spec: ModelSpec) -> str:
    """Canonical text for a spec; ``parse_model(render_model(s)) == s``."""
    if not spec.terms:
        body = f"{spec.response} ~ 1"
    else:
        parts = []
        for t in spec.terms:
            parts.append(f"Error({t.label})" if t.explicit_residual else t.label)
        body = f"{spec.response} ~ " + " + ".join(parts)
    for a in spec.aliases:
        body += f", alias({':'.join(a.inner)} = {':'.join(a.outer)})"
    return body


def parse_alias_option(text: str) -> AliasDecl:
    """Parse a CLI-style alias declaration such as ``"trt=row:col"``."""
    p = _Parser(text)
    inner = p.parse_colon_chain()
    p.expect_symbol("=")
    outer = p.parse_colon_chain()
    if p.cur.kind != "end":
        raise FormulaSyntaxError(p.cur.pos, "end of alias declaration", p.cur.text)
    return AliasDecl(inner, outer)


def expand_terms(spec: ModelSpec, declared_factors) -> list[Term]:
    """Validate factor references and return the ordered batch list.

    The grand mean is the implicit row 0 and is not part of the list; the
    residual row, if absent, is synthesized later when the design is built.
    """
    declared = set(declared_factors)
    for t in spec.terms:
        for f in t.factors:
            if f not in declared:
                raise UnknownFactorError(f)
    for a in spec.aliases:
        for f in a.inner + a.outer:
            if f not in declared:
                raise UnknownFactorError(f)
    return list(spec.terms)
