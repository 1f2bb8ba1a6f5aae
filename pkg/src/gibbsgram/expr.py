"""Arithmetic expressions over state symbols ``x1 .. xn``.

Allowed: numbers, the symbols, ``+ - * / ^`` and parentheses.  ``^`` is
exponentiation; small non-negative integer exponents are expanded into
repeated multiplication so evaluation stays bit-reproducible.

>>> f = compile_expression("x1 - x1^3", 1)
>>> float(f(np.array([2.0])))
-6.0
"""
import ast
import operator
import re

import numpy as np

from .errors import ConfigurationError

_SYMBOL = re.compile(r"^x([1-9][0-9]*)$")
_BINOPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
}


def _ipow(base, k):
    out = base
    for _ in range(k - 1):
        out = out * base
    return out


def _build(node, n, text):
    if isinstance(node, ast.Expression):
        return _build(node.body, n, text)
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) \
            and not isinstance(node.value, bool):
        value = float(node.value)
        return lambda X: value
    if isinstance(node, ast.Name):
        m = _SYMBOL.match(node.id)
        if not m or int(m.group(1)) > n:
            raise ConfigurationError(
                f"unknown symbol {node.id!r} in {text!r} (state symbols are x1..x{n})")
        j = int(m.group(1)) - 1
        return lambda X: X[..., j]
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        inner = _build(node.operand, n, text)
        if isinstance(node.op, ast.USub):
            return lambda X: -inner(X)
        return inner
    if isinstance(node, ast.BinOp):
        left = _build(node.left, n, text)
        if isinstance(node.op, ast.Pow):
            exp = node.right
            if isinstance(exp, ast.Constant) and isinstance(exp.value, int) \
                    and 1 <= exp.value <= 16:
                k = exp.value
                return lambda X: _ipow(left(X), k)
            right = _build(exp, n, text)
            return lambda X: np.power(left(X), right(X))
        op = _BINOPS.get(type(node.op))
        if op is None:
            raise ConfigurationError(f"unsupported operator in {text!r}")
        right = _build(node.right, n, text)
        return lambda X: op(left(X), right(X))
    raise ConfigurationError(f"unsupported syntax in expression {text!r}")


def compile_expression(text, n):
    """Compile ``text`` into a vectorized function of states ``(..., n)``."""
    if not isinstance(text, str) or not text.strip():
        raise ConfigurationError("expression must be a non-empty string")
    try:
        tree = ast.parse(text.replace("^", "**"), mode="eval")
    except SyntaxError as exc:
        raise ConfigurationError(f"cannot parse expression {text!r}: {exc.msg}") from None
    fn = _build(tree, n, text)

    def evaluate(X):
        X = np.asarray(X, dtype=float)
        return np.broadcast_to(np.asarray(fn(X), dtype=float), X.shape[:-1])

    evaluate.source = text
    return evaluate
