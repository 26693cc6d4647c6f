"""Parameter rules: small arithmetic expressions such as ``ceil(7*sqrt(n)*log(n))``.

Only numbers, the variables passed in, the operators ``+ - * / // % **`` and
the functions below are accepted. Anything else is a configuration error.
"""

from __future__ import annotations

import ast
import math
import re
import operator

FUNCTIONS = {
    "ceil": math.ceil,
    "floor": math.floor,
    "sqrt": math.sqrt,
    "log": math.log,
    "log2": math.log2,
    "exp": math.exp,
    "min": min,
    "max": max,
    "round": round,
    "abs": abs,
}

_BINOPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
    ast.FloorDiv: operator.floordiv,
    ast.Mod: operator.mod,
    ast.Pow: operator.pow,
}
_UNARY = {ast.UAdd: operator.pos, ast.USub: operator.neg}


class RuleError(ValueError):
    pass


def _eval(node, env):
    if isinstance(node, ast.Expression):
        return _eval(node.body, env)
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) and not isinstance(node.value, bool):
        return node.value
    if isinstance(node, ast.Name):
        if node.id in env:
            return env[node.id]
        if node.id in ("pi", "e"):
            return getattr(math, node.id)
        raise RuleError(f"unknown variable {node.id!r} (available: {', '.join(sorted(env))})")
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        return _BINOPS[type(node.op)](_eval(node.left, env), _eval(node.right, env))
    if isinstance(node, ast.UnaryOp) and type(node.op) in _UNARY:
        return _UNARY[type(node.op)](_eval(node.operand, env))
    if (
        isinstance(node, ast.Call)
        and isinstance(node.func, ast.Name)
        and node.func.id in FUNCTIONS
        and not node.keywords
    ):
        return FUNCTIONS[node.func.id](*[_eval(a, env) for a in node.args])
    raise RuleError(f"unsupported expression element: {ast.dump(node)[:60]}")


def check(expr: str) -> ast.Expression:
    # ``lambda`` is a Python keyword; rules may still use it as a name
    text = re.sub(r"\blambda\b", "lam", str(expr).strip())
    try:
        tree = ast.parse(text, mode="eval")
    except SyntaxError as exc:
        raise RuleError(f"cannot parse rule {expr!r}: {exc.msg}") from None
    return tree


def evaluate(expr, **env) -> float:
    """Value of ``expr`` with the given variables; plain numbers pass through."""
    if isinstance(expr, (int, float)) and not isinstance(expr, bool):
        return expr
    try:
        return _eval(check(expr), env)
    except (ArithmeticError, TypeError) as exc:
        raise RuleError(f"rule {expr!r} failed: {exc}") from None


def evaluate_int(expr, **env) -> int:
    """Integer rule; non-integral results are floored."""
    v = evaluate(expr, **env)
    return int(math.floor(v))
