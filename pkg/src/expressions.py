from typing import Callable

import numpy as np
import sympy as sym
from sympy.core.function import AppliedUndef
from sympy.parsing.sympy_parser import (
    convert_xor,
    parse_expr,
    standard_transformations,
)

from src.custom_exceptions import ExpressionError
from src.utils import logger


X = sym.Symbol("x", real=True)

ALLOWED_NAMES: dict[str, object] = {
    "x": X,
    "pi": sym.pi,
    "E": sym.E,
    "cosh": sym.cosh,
    "sinh": sym.sinh,
    "tanh": sym.tanh,
    "sech": sym.sech,
    "exp": sym.exp,
    "sqrt": sym.sqrt,
}

# only what the parser's own transformations emit
_PARSER_GLOBALS: dict[str, object] = {
    "Integer": sym.Integer,
    "Float": sym.Float,
    "Rational": sym.Rational,
    "Symbol": sym.Symbol,
    "Function": sym.Function,
}

_TRANSFORMATIONS = standard_transformations + (convert_xor,)


def parse_expression(text: str) -> sym.Expr:
    """
    Parse an initial-condition expression in the variable x.

    `^` is exponentiation. Allowed names are listed in ALLOWED_NAMES.

    Raises:
        ExpressionError: On syntax errors, unknown symbols or unknown functions.
    """
    if not text or not text.strip():
        raise ExpressionError("Expression is empty.")
    try:
        expression = parse_expr(
            text,
            local_dict=dict(ALLOWED_NAMES),
            global_dict=dict(_PARSER_GLOBALS),
            transformations=_TRANSFORMATIONS,
        )
    except Exception as e:
        logger.error(f"Could not parse expression '{text}'. Error: {e}")
        raise ExpressionError("Invalid expression syntax.", {"expression": text}) from e

    if not isinstance(expression, sym.Expr):
        raise ExpressionError("Expression does not evaluate to a number.", {"expression": text})

    unknown_functions = sorted(str(f.func) for f in expression.atoms(AppliedUndef))
    if unknown_functions:
        raise ExpressionError(
            "Unknown function in expression.",
            {"expression": text, "functions": ",".join(unknown_functions)},
        )
    unknown_symbols = sorted(str(s) for s in expression.free_symbols - {X})
    if unknown_symbols:
        raise ExpressionError(
            "Unknown symbol in expression.",
            {"expression": text, "symbols": ",".join(unknown_symbols)},
        )
    return expression


def compile_expression(text: str) -> Callable[[np.ndarray], np.ndarray]:
    """Parse `text` and return a vectorised numpy function of x."""
    expression = parse_expression(text)
    expression = expression.replace(sym.sech, lambda arg: 1 / sym.cosh(arg))
    numeric = sym.lambdify(X, expression, "numpy")
    logger.debug(f"Compiled expression '{text}' as {expression}")

    def evaluate(xs: np.ndarray) -> np.ndarray:
        xs = np.asarray(xs, dtype=float)
        # constant expressions come back as scalars
        return np.asarray(numeric(xs), dtype=float) + np.zeros_like(xs)

    return evaluate
