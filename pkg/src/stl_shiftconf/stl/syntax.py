"""Text syntax for formulas.

Grammar (``and`` binds tighter than ``or``; chains of one operator become a
single n-ary node)::

    expr    := conj ('or' conj)*
    conj    := term ('and' term)*
    term    := 'not' term | ('G'|'F') '[' int ',' int ']' '(' expr ')'
             | '(' expr ')' | atom
    atom    := linexpr ('>=' | '<=' | '>' | '<') float
    linexpr := lterm (('+' | '-') lterm)*
    lterm   := ['-'] float '*' var | ['-'] var
    var     := 'x' int

Strict comparisons are read as their non-strict counterparts.
"""
from __future__ import annotations

import re
from dataclasses import dataclass

from ..errors import FormulaSyntaxError, IntervalError
from .formula import Always, And, Atom, Eventually, Formula, Not, Or, Predicate

_TOKEN = re.compile(
    r"\s*(?:"
    r"(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<var>x\d+)"
    r"|(?P<kw>and|or|not|G|F)(?![A-Za-z0-9_])"
    r"|(?P<op>>=|<=|>|<|\[|\]|\(|\)|,|\*|\+|-)"
    r")"
)


@dataclass
class _Tok:
    kind: str
    text: str
    pos: int


def _tokenize(text: str) -> list[_Tok]:
    toks = []
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            raise FormulaSyntaxError(f"unexpected character {text[pos]!r}", pos)
        kind = m.lastgroup
        toks.append(_Tok(kind, m.group(kind), m.start(kind)))
        pos = m.end()
    toks.append(_Tok("end", "", len(text)))
    return toks


class _Parser:
    def __init__(self, text: str):
        self.toks = _tokenize(text)
        self.i = 0

    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def take(self, text: str | None = None, kind: str | None = None) -> _Tok:
        t = self.tok
        if (text is not None and t.text != text) or (kind is not None and t.kind != kind):
            want = repr(text) if text is not None else kind
            got = repr(t.text) if t.kind != "end" else "end of input"
            raise FormulaSyntaxError(f"expected {want}, got {got}", t.pos)
        self.i += 1
        return t

    def at(self, text: str) -> bool:
        return self.tok.text == text and self.tok.kind in ("kw", "op")

    def parse(self) -> Formula:
        f = self.expr()
        if self.tok.kind != "end":
            raise FormulaSyntaxError(f"unexpected {self.tok.text!r}", self.tok.pos)
        return f

    def expr(self) -> Formula:
        parts = [self.conj()]
        while self.at("or"):
            self.take("or")
            parts.append(self.conj())
        return parts[0] if len(parts) == 1 else Or(tuple(parts))

    def conj(self) -> Formula:
        parts = [self.term()]
        while self.at("and"):
            self.take("and")
            parts.append(self.term())
        return parts[0] if len(parts) == 1 else And(tuple(parts))

    def term(self) -> Formula:
        if self.at("not"):
            self.take("not")
            return Not(self.term())
        if self.at("G") or self.at("F"):
            op = self.take()
            self.take("[")
            t1 = self._int()
            self.take(",")
            t2 = self._int()
            self.take("]")
            if t1 > t2:
                raise IntervalError(f"interval [{t1},{t2}] at position {op.pos}: t1 > t2")
            self.take("(")
            child = self.expr()
            self.take(")")
            cls = Always if op.text == "G" else Eventually
            return cls(t1, t2, child)
        if self.at("("):
            self.take("(")
            f = self.expr()
            self.take(")")
            return f
        return self.atom()

    def _int(self) -> int:
        t = self.take(kind="num")
        if not re.fullmatch(r"\d+", t.text):
            raise FormulaSyntaxError(f"expected an integer time bound, got {t.text!r}", t.pos)
        return int(t.text)

    def _float(self) -> float:
        sign = 1.0
        if self.at("-"):
            self.take("-")
            sign = -1.0
        elif self.at("+"):
            self.take("+")
        return sign * float(self.take(kind="num").text)

    def _lterm(self, sign: float, coef: dict[int, float]) -> None:
        if self.at("-"):
            self.take("-")
            sign = -sign
        if self.tok.kind == "var":
            c = 1.0
        else:
            c = float(self.take(kind="num").text)
            self.take("*")
        var = self.take(kind="var")
        j = int(var.text[1:])
        coef[j] = coef.get(j, 0.0) + sign * c

    def atom(self) -> Formula:
        start = self.tok.pos
        coef: dict[int, float] = {}
        self._lterm(1.0, coef)
        while self.at("+") or self.at("-"):
            sign = 1.0 if self.take().text == "+" else -1.0
            self._lterm(sign, coef)
        op = self.tok
        if op.text not in (">=", "<=", ">", "<"):
            raise FormulaSyntaxError("expected a comparison operator", op.pos)
        self.take()
        rhs = self._float()
        a = [0.0] * (max(coef) + 1)
        for j, c in coef.items():
            a[j] = c
        try:
            if op.text in (">=", ">"):
                return Atom(Predicate(tuple(a), rhs))
            return Atom(Predicate(tuple(-v for v in a), -rhs))
        except ValueError as exc:
            raise FormulaSyntaxError(str(exc), start) from None


def parse(text: str) -> Formula:
    """Parse formula text; raises FormulaSyntaxError or IntervalError."""
    return _Parser(text).parse()


def _num(v: float) -> str:
    s = f"{v:.4f}"
    return "0.0000" if s == "-0.0000" else s


def _atom_text(p: Predicate) -> str:
    nz = [(j, c) for j, c in enumerate(p.a) if c != 0.0]
    if len(nz) == 1 and nz[0][1] == 1.0:
        return f"x{nz[0][0]} >= {_num(p.b)}"
    if len(nz) == 1 and nz[0][1] == -1.0:
        return f"x{nz[0][0]} <= {_num(-p.b)}"
    out = []
    for k, (j, c) in enumerate(nz):
        if k == 0:
            out.append(f"{_num(c)}*x{j}")
        else:
            out.append(f"{'-' if c < 0 else '+'} {_num(abs(c))}*x{j}")
    return f"{' '.join(out)} >= {_num(p.b)}"


def format_formula(f: Formula) -> str:
    """Canonical text for ``f``; ``parse(format_formula(f)) == f`` when the
    coefficients have at most four decimals."""
    if isinstance(f, Atom):
        return _atom_text(f.predicate)
    if isinstance(f, Not):
        inner = format_formula(f.child)
        return f"not ({inner})" if isinstance(f.child, (And, Or)) else f"not {inner}"
    if isinstance(f, (And, Or)):
        word = " and " if isinstance(f, And) else " or "
        parts = []
        for c in f.children:
            s = format_formula(c)
            parts.append(f"({s})" if isinstance(c, (And, Or)) else s)
        return word.join(parts)
    op = "F" if isinstance(f, Eventually) else "G"
    return f"{op}[{f.t1},{f.t2}]({format_formula(f.child)})"


print_formula = format_formula
