"""A small arithmetic grammar for user-defined scalar fields.

Accepted: numbers, coordinates ``x1 .. xn``, ``+ - * / **``, unary minus,
parentheses, ``sin cos exp`` and the constants ``pi`` and ``e``.
Expressions are parsed with :mod:`ast` and evaluated on numpy arrays.
"""

from __future__ import annotations

import ast
import math
import operator
import re
from typing import Callable

import numpy as np

_BINOPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
    ast.Pow: operator.pow,
}
_UNARY = {ast.USub: operator.neg, ast.UAdd: operator.pos}
_FUNCS = {"sin": np.sin, "cos": np.cos, "exp": np.exp}
_CONSTS = {"pi": math.pi, "e": math.e}
_COORD = re.compile(r"x([1-9][0-9]*)$")


class ExpressionError(ValueError):
    pass


def _compile(node: ast.AST, dim: int) -> Callable[[np.ndarray], np.ndarray]:
    if isinstance(node, ast.Expression):
        return _compile(node.body, dim)
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) and not isinstance(node.value, bool):
        c = float(node.value)
        return lambda p: np.full(p.shape[:-1], c)
    if isinstance(node, ast.Name):
        if node.id in _CONSTS:
            c = _CONSTS[node.id]
            return lambda p: np.full(p.shape[:-1], c)
        m = _COORD.match(node.id)
        if m:
            i = int(m.group(1)) - 1
            if i >= dim:
                raise ExpressionError(f"coordinate {node.id} exceeds dimension {dim}")
            return lambda p: p[..., i]
        raise ExpressionError(f"unknown name {node.id!r}")
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        op = _BINOPS[type(node.op)]
        a, b = _compile(node.left, dim), _compile(node.right, dim)
        return lambda p: op(a(p), b(p))
    if isinstance(node, ast.UnaryOp) and type(node.op) in _UNARY:
        op = _UNARY[type(node.op)]
        a = _compile(node.operand, dim)
        return lambda p: op(a(p))
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id in _FUNCS:
        if len(node.args) != 1 or node.keywords:
            raise ExpressionError(f"{node.func.id} takes exactly one argument")
        fn = _FUNCS[node.func.id]
        a = _compile(node.args[0], dim)
        return lambda p: fn(a(p))
    raise ExpressionError(f"unsupported syntax: {ast.dump(node)[:60]}")


def parse_scalar(text: str, dim: int) -> Callable[[np.ndarray], np.ndarray]:
    """Compile ``text`` into a vectorized function of points ``(..., dim)``."""
    try:
        tree = ast.parse(text.strip(), mode="eval")
    except SyntaxError as exc:
        raise ExpressionError(f"cannot parse {text!r}: {exc.msg}") from exc
    fn = _compile(tree, dim)

    def field(p):
        p = np.asarray(p, dtype=float)
        with np.errstate(all="ignore"):
            return np.asarray(fn(p), dtype=float)

    return field
