"""Safe evaluation of small arithmetic expressions used in scenario files.

Only numeric literals, the declared variable names, ``+ - * / **``, unary
signs and a fixed set of numpy functions are allowed.
"""
from __future__ import annotations

import ast
import functools
import math

import numpy as np

FUNCTIONS = {
    "sin": np.sin,
    "cos": np.cos,
    "tan": np.tan,
    "exp": np.exp,
    "log": np.log,
    "sqrt": np.sqrt,
    "abs": np.abs,
    "tanh": np.tanh,
    "sinh": np.sinh,
    "cosh": np.cosh,
    "minimum": np.minimum,
    "maximum": np.maximum,
}
CONSTANTS = {"pi": math.pi, "e": math.e}

_BINOPS = {
    ast.Add: np.add,
    ast.Sub: np.subtract,
    ast.Mult: np.multiply,
    ast.Div: np.divide,
    ast.Pow: np.power,
}
_UNARY = {ast.UAdd: np.positive, ast.USub: np.negative}


class ExpressionError(ValueError):
    pass


@functools.lru_cache(maxsize=512)
def _parse(text: str, names: tuple[str, ...]) -> ast.AST:
    try:
        tree = ast.parse(text, mode="eval")
    except SyntaxError as exc:
        raise ExpressionError(f"cannot parse expression {text!r}: {exc.msg}") from None
    for node in ast.walk(tree):
        if isinstance(node, (ast.Expression, ast.Load)) or type(node) in _BINOPS or type(node) in _UNARY:
            continue
        if isinstance(node, (ast.BinOp, ast.UnaryOp)):
            op = node.op
            if type(op) not in _BINOPS and type(op) not in _UNARY:
                raise ExpressionError(f"operator {type(op).__name__} not allowed in {text!r}")
            continue
        if isinstance(node, ast.Constant):
            if not isinstance(node.value, (int, float)) or isinstance(node.value, bool):
                raise ExpressionError(f"only numeric literals allowed in {text!r}")
            continue
        if isinstance(node, ast.Name):
            if node.id not in names and node.id not in CONSTANTS and node.id not in FUNCTIONS:
                raise ExpressionError(f"unknown name {node.id!r} in {text!r}")
            continue
        if isinstance(node, ast.Call):
            if not isinstance(node.func, ast.Name) or node.func.id not in FUNCTIONS or node.keywords:
                raise ExpressionError(f"only calls to {sorted(FUNCTIONS)} allowed in {text!r}")
            continue
        raise ExpressionError(f"construct {type(node).__name__} not allowed in {text!r}")
    return tree


def _eval(node, env):
    if isinstance(node, ast.Expression):
        return _eval(node.body, env)
    if isinstance(node, ast.Constant):
        return float(node.value)
    if isinstance(node, ast.Name):
        if node.id in env:
            return env[node.id]
        return CONSTANTS[node.id]
    if isinstance(node, ast.BinOp):
        return _BINOPS[type(node.op)](_eval(node.left, env), _eval(node.right, env))
    if isinstance(node, ast.UnaryOp):
        return _UNARY[type(node.op)](_eval(node.operand, env))
    if isinstance(node, ast.Call):
        return FUNCTIONS[node.func.id](*[_eval(a, env) for a in node.args])
    raise ExpressionError(f"unsupported node {type(node).__name__}")


def evaluate(text, **variables):
    """Evaluate ``text`` (or pass a number through) with the given variables."""
    if isinstance(text, (int, float)) and not isinstance(text, bool):
        return float(text)
    if not isinstance(text, str):
        raise ExpressionError(f"expected a number or an expression string, got {type(text).__name__}")
    tree = _parse(text, tuple(sorted(variables)))
    with np.errstate(all="ignore"):
        return _eval(tree, variables)


def compile_expr(text, var: str = "x"):
    """Return a vectorized callable of one variable for ``text``."""
    if isinstance(text, (int, float)) and not isinstance(text, bool):
        value = float(text)
        return lambda v: np.full(np.shape(v), value) if np.ndim(v) else value
    _parse(str(text), (var,))

    def fn(v):
        out = evaluate(text, **{var: v})
        return np.broadcast_to(out, np.shape(v)).astype(float) if np.ndim(v) else float(out)

    return fn
