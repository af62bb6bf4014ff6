"""Built-in arithmetic evaluator.

Accepts numeric literals combined with + - * / ^ (power), parentheses, and
unary minus, evaluated in IEEE double precision. `^` and the unicode
multiplication/division/minus signs are translated before parsing, and the
expression is then walked through a whitelisted AST: anything outside the
grammar (names, calls, comparisons) raises EvalError.
"""

from __future__ import annotations

import ast
from typing import Union

from .errors import EvalError

_TRANSLATION = str.maketrans({"×": "*", "÷": "/", "−": "-"})


def _translate(expr: str) -> str:
    return expr.replace("^", "**").translate(_TRANSLATION)


def _eval_node(node: ast.AST) -> float:
    if isinstance(node, ast.Expression):
        return _eval_node(node.body)
    if isinstance(node, ast.Constant):
        if isinstance(node.value, bool) or not isinstance(node.value, (int, float)):
            raise EvalError(f"unsupported literal {node.value!r}")
        return float(node.value)
    if isinstance(node, ast.UnaryOp):
        if isinstance(node.op, ast.USub):
            return -_eval_node(node.operand)
        if isinstance(node.op, ast.UAdd):
            return _eval_node(node.operand)
        raise EvalError("unsupported unary operator")
    if isinstance(node, ast.BinOp):
        left = _eval_node(node.left)
        right = _eval_node(node.right)
        try:
            if isinstance(node.op, ast.Add):
                return left + right
            if isinstance(node.op, ast.Sub):
                return left - right
            if isinstance(node.op, ast.Mult):
                return left * right
            if isinstance(node.op, ast.Div):
                return left / right
            if isinstance(node.op, ast.Pow):
                result = left ** right
                if isinstance(result, complex):
                    # negative base, fractional exponent
                    raise EvalError("result is not a real number")
                return result
        except ZeroDivisionError:
            raise EvalError("division by zero") from None
        except OverflowError:
            raise EvalError("result exceeds double range") from None
        except ValueError as exc:
            raise EvalError(str(exc)) from None
        raise EvalError("unsupported binary operator")
    raise EvalError(f"unsupported syntax: {type(node).__name__}")


def evaluate_arithmetic(expression: str) -> float:
    """Evaluate a pure arithmetic expression to a double.

    0^0 evaluates to 1 per IEEE pow. Division by zero, malformed syntax,
    and any non-arithmetic construct raise EvalError.
    """
    if not expression or not expression.strip():
        raise EvalError("empty expression")
    try:
        tree = ast.parse(_translate(expression), mode="eval")
    except SyntaxError as exc:
        raise EvalError(f"malformed expression: {exc.msg}") from exc
    return _eval_node(tree)


def format_number(value: Union[int, float]) -> str:
    """Render a double compactly: integral values lose the trailing .0."""
    value = float(value)
    if value.is_integer() and abs(value) < 1e16:
        return str(int(value))
    return repr(value)
