"""Arithmetic expressions over named parameters (e.g. ``20/T`` or ``1/(20/B)``).

Parsing is delegated to :mod:`ast`; only numbers, parameter names, ``+ - * /``
and parentheses are accepted.
"""

from __future__ import annotations

import ast
from dataclasses import dataclass, field
from typing import Mapping

from .errors import ExpressionError, MissingParameter

_BINOPS = {
    ast.Add: lambda a, b: a + b,
    ast.Sub: lambda a, b: a - b,
    ast.Mult: lambda a, b: a * b,
    ast.Div: lambda a, b: a / b,
}


def _check(node: ast.AST, text: str) -> None:
    if isinstance(node, ast.Expression):
        _check(node.body, text)
    elif isinstance(node, ast.BinOp):
        if type(node.op) not in _BINOPS:
            raise ExpressionError(f"operator not allowed in '{text}'")
        _check(node.left, text)
        _check(node.right, text)
    elif isinstance(node, ast.UnaryOp):
        if not isinstance(node.op, (ast.USub, ast.UAdd)):
            raise ExpressionError(f"operator not allowed in '{text}'")
        _check(node.operand, text)
    elif isinstance(node, ast.Constant):
        if isinstance(node.value, bool) or not isinstance(node.value, (int, float)):
            raise ExpressionError(f"non-numeric constant in '{text}'")
    elif isinstance(node, ast.Name):
        pass
    else:
        raise ExpressionError(f"unsupported construct in '{text}'")


def _eval(node: ast.AST, env: Mapping[str, float]) -> float:
    if isinstance(node, ast.BinOp):
        left = _eval(node.left, env)
        right = _eval(node.right, env)
        if isinstance(node.op, ast.Div) and right == 0:
            raise ExpressionError("division by zero")
        return _BINOPS[type(node.op)](left, right)
    if isinstance(node, ast.UnaryOp):
        v = _eval(node.operand, env)
        return -v if isinstance(node.op, ast.USub) else v
    if isinstance(node, ast.Constant):
        return float(node.value)
    if isinstance(node, ast.Name):
        if node.id not in env:
            raise MissingParameter(node.id)
        return float(env[node.id])
    raise ExpressionError("unsupported construct")  # pragma: no cover


@dataclass(frozen=True)
class Expr:
    """A parsed expression. Equality is by normalized source text."""

    text: str
    _tree: ast.Expression = field(compare=False, repr=False, hash=False)
    params: frozenset[str] = field(compare=False, hash=False)

    @classmethod
    def parse(cls, text: str) -> "Expr":
        try:
            tree = ast.parse(text.strip(), mode="eval")
        except SyntaxError as exc:
            raise ExpressionError(f"cannot parse expression '{text}': {exc.msg}") from None
        _check(tree, text)
        names = frozenset(n.id for n in ast.walk(tree) if isinstance(n, ast.Name))
        return cls(ast.unparse(tree), tree, names)

    @classmethod
    def const(cls, value: float) -> "Expr":
        return cls.parse(repr(float(value)) if value != int(value) else str(int(value)))

    def evaluate(self, valuation: Mapping[str, float] | None = None) -> float:
        return _eval(self._tree.body, valuation or {})

    @property
    def is_constant(self) -> bool:
        return not self.params

    def __str__(self) -> str:
        return self.text.replace(" ", "")
