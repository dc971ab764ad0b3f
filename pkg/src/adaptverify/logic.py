"""PCTL / CSL formula syntax shared by the DTMC and CTMC checkers.

Supported fragment::

    state := true | false | "atom" | ! state | state & state | state | state | ( state )
           | P cmp p [ path ] | R{"name"} cmp r [ path | C<=t ]
    path  := X state | state U state | state U<=t state | F state | F<=t state
    cmp   := < | <= | > | >=

``S``, ``I=t`` and time-bounded next are recognised and rejected.
"""

from __future__ import annotations

import math
import operator
import re
from dataclasses import dataclass
from typing import Union

from .errors import FormulaError, UnsupportedOperator


@dataclass(frozen=True)
class TrueF:
    def __str__(self) -> str:
        return "true"


@dataclass(frozen=True)
class FalseF:
    def __str__(self) -> str:
        return "false"


@dataclass(frozen=True)
class Atom:
    name: str

    def __str__(self) -> str:
        return f'"{self.name}"'


@dataclass(frozen=True)
class Not:
    arg: "StateFormula"

    def __str__(self) -> str:
        return f"!{_paren(self.arg)}"


@dataclass(frozen=True)
class And:
    left: "StateFormula"
    right: "StateFormula"

    def __str__(self) -> str:
        return f"{_paren(self.left)} & {_paren(self.right)}"


@dataclass(frozen=True)
class Or:
    left: "StateFormula"
    right: "StateFormula"

    def __str__(self) -> str:
        return f"{_paren(self.left)} | {_paren(self.right)}"


@dataclass(frozen=True)
class Next:
    arg: "StateFormula"

    def __str__(self) -> str:
        return f"X {_paren(self.arg)}"


@dataclass(frozen=True)
class Until:
    left: "StateFormula"
    right: "StateFormula"
    bound: float | None = None  # None means unbounded

    def __str__(self) -> str:
        op = "U" if self.bound is None else f"U<={_fmt_num(self.bound)}"
        return f"{_paren(self.left)} {op} {_paren(self.right)}"


@dataclass(frozen=True)
class Cumulative:
    bound: float

    def __str__(self) -> str:
        return f"C<={_fmt_num(self.bound)}"


PathFormula = Union[Next, Until]


@dataclass(frozen=True)
class ProbOp:
    cmp: str
    bound: float
    path: PathFormula

    def __str__(self) -> str:
        return f"P{self.cmp}{_fmt_num(self.bound)} [ {self.path} ]"


@dataclass(frozen=True)
class RewardOp:
    reward: str
    cmp: str
    bound: float
    path: Union[Until, Cumulative]

    def __str__(self) -> str:
        return f'R{{"{self.reward}"}}{self.cmp}{_fmt_num(self.bound)} [ {self.path} ]'


StateFormula = Union[TrueF, FalseF, Atom, Not, And, Or, ProbOp, RewardOp]

COMPARATORS = {"<": operator.lt, "<=": operator.le, ">": operator.gt, ">=": operator.ge}


def compare(cmp: str, value: float, bound: float) -> bool:
    """Exact floating comparison; ``nan`` never satisfies a bound."""
    if math.isnan(value):
        return False
    return COMPARATORS[cmp](value, bound)


def worst(cmp: str, values) -> float:
    """The value that decides a bound over several states (min for lower bounds)."""
    vals = list(values)
    return min(vals) if cmp in (">", ">=") else max(vals)


def _fmt_num(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else repr(float(v))


def _paren(f) -> str:
    return f"({f})" if isinstance(f, (And, Or, Until)) else str(f)


_TOKEN = re.compile(r"""
    \s*(
        "[^"]*"                    |
        <=|>=|=\?|<|>|=            |
        [\[\]{}()!&|]              |
        \d+\.\d*(?:[eE][-+]?\d+)?  |
        \.\d+(?:[eE][-+]?\d+)?     |
        \d+(?:[eE][-+]?\d+)?       |
        [A-Za-z_][A-Za-z0-9_]*
    )""", re.VERBOSE)


def tokenize(text: str) -> list[str]:
    pos, out = 0, []
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            raise FormulaError(f"unexpected text in formula: {text[pos:pos + 12]!r}")
        out.append(m.group(1))
        pos = m.end()
    return out


class _Parser:
    def __init__(self, tokens: list[str], logic: str):
        self.toks = tokens
        self.i = 0
        self.logic = logic

    def peek(self, off: int = 0) -> str | None:
        j = self.i + off
        return self.toks[j] if j < len(self.toks) else None

    def take(self, expected: str | None = None) -> str:
        tok = self.peek()
        if tok is None:
            raise FormulaError(f"formula ended early (expected {expected or 'more input'})")
        if expected is not None and tok != expected:
            raise FormulaError(f"expected {expected!r}, got {tok!r}")
        self.i += 1
        return tok

    def number(self) -> float:
        tok = self.take()
        try:
            return float(tok)
        except ValueError:
            raise FormulaError(f"expected a number, got {tok!r}") from None

    def bound(self) -> float:
        v = self.number()
        if v < 0:
            raise FormulaError("time/step bounds must be nonnegative")
        if self.logic == "pctl" and not float(v).is_integer():
            raise FormulaError("PCTL step bounds must be integers")
        return v

    def state(self) -> StateFormula:
        left = self.conj()
        while self.peek() == "|":
            self.take()
            left = Or(left, self.conj())
        return left

    def conj(self) -> StateFormula:
        left = self.unary()
        while self.peek() == "&":
            self.take()
            left = And(left, self.unary())
        return left

    def unary(self) -> StateFormula:
        tok = self.peek()
        if tok == "!":
            self.take()
            return Not(self.unary())
        if tok == "(":
            self.take()
            inner = self.state()
            self.take(")")
            return inner
        if tok == "true":
            self.take()
            return TrueF()
        if tok == "false":
            self.take()
            return FalseF()
        if tok is not None and tok.startswith('"'):
            self.take()
            return Atom(tok[1:-1])
        if tok == "P":
            self.take()
            cmp = self.comparator()
            p = self.number()
            if not 0.0 <= p <= 1.0:
                raise FormulaError(f"probability bound {p} outside [0, 1]")
            self.take("[")
            path = self.path()
            self.take("]")
            return ProbOp(cmp, p, path)
        if tok == "R":
            if self.logic == "pctl":
                raise UnsupportedOperator("reward operators need a csl requirement")
            self.take()
            self.take("{")
            name = self.take()
            if not name.startswith('"'):
                raise FormulaError("reward structure name must be quoted")
            self.take("}")
            cmp = self.comparator()
            r = self.number()
            if r < 0:
                raise FormulaError("reward bound must be nonnegative")
            self.take("[")
            if self.peek() == "C":
                self.take()
                self.take("<=")
                path = Cumulative(self.bound())
            elif self.peek() == "I":
                raise UnsupportedOperator("instantaneous reward I=t is not supported")
            else:
                path = self.path()
                if isinstance(path, Next):
                    raise UnsupportedOperator("reward of a next formula is not supported")
                if path.bound is not None:
                    raise UnsupportedOperator("time-bounded reachability reward is not supported")
            self.take("]")
            return RewardOp(name[1:-1], cmp, r, path)
        if tok == "S":
            raise UnsupportedOperator("steady-state operator S is not supported")
        raise FormulaError(f"unexpected token {tok!r}")

    def comparator(self) -> str:
        tok = self.take()
        if tok == "=?":
            raise UnsupportedOperator("numeric queries (=?) need a bound in a requirement")
        if tok not in COMPARATORS:
            raise FormulaError(f"expected a comparison operator, got {tok!r}")
        return tok

    def path(self) -> PathFormula:
        tok = self.peek()
        if tok == "X":
            self.take()
            if self.peek() == "<=":
                raise UnsupportedOperator("time-bounded next is not supported")
            return Next(self.unary())
        if tok == "F":
            self.take()
            b = self._opt_bound()
            return Until(TrueF(), self.state(), b)
        if tok == "G":
            raise UnsupportedOperator("globally (G) is not supported")
        left = self.conj_or_atom()
        self.take("U")
        b = self._opt_bound()
        right = self.conj_or_atom()
        return Until(left, right, b)

    def conj_or_atom(self) -> StateFormula:
        return self.state()

    def _opt_bound(self) -> float | None:
        if self.peek() == "<=":
            self.take()
            return self.bound()
        return None


def parse_formula(text: str, logic: str = "csl") -> StateFormula:
    if logic not in ("pctl", "csl"):
        raise FormulaError(f"unknown logic {logic!r}")
    p = _Parser(tokenize(text), logic)
    f = p.state()
    if p.peek() is not None:
        raise FormulaError(f"trailing input in formula: {' '.join(p.toks[p.i:])}")
    return f


def atoms(f) -> set[str]:
    """Atomic propositions mentioned anywhere in ``f``."""
    if isinstance(f, Atom):
        return {f.name}
    out: set[str] = set()
    for attr in ("arg", "left", "right", "path"):
        sub = getattr(f, attr, None)
        if sub is not None:
            out |= atoms(sub)
    return out
