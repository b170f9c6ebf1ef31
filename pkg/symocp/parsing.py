"""Polynomial strings in t, x1..xn, u1..um.

Literals are rationalized before expansion, so integer and decimal constants
reach the float coefficients exactly as Python would read them.
"""

from typing import Dict

import sympy
from sympy.parsing.sympy_parser import (
    convert_xor,
    parse_expr,
    rationalize,
    standard_transformations,
)
from sympy.polys.polyerrors import PolynomialError

from .poly import Polynomial, VarLayout

_TRANSFORMATIONS = standard_transformations + (convert_xor, rationalize)


class PolynomialSyntaxError(ValueError):
    """Raised when a polynomial string cannot be parsed."""


def _symbols(layout: VarLayout) -> Dict[str, sympy.Symbol]:
    table = {name: sympy.Symbol(name) for name in layout.names}
    # single state / control problems may write plain x and u
    if layout.n == 1:
        table["x"] = table["x1"]
    if layout.m == 1:
        table["u"] = table["u1"]
    return table


def parse_polynomial(text: str, layout: VarLayout) -> Polynomial:
    """Parse ``text`` into a Polynomial over ``layout``.

    Args:
        text: Expression using +, -, *, ^ (or **), parentheses and numeric literals
        layout: Variable counts the expression lives in

    Returns:
        The expanded polynomial
    """
    if not isinstance(text, str):
        if isinstance(text, (int, float)):
            return Polynomial.constant(float(text), layout)
        raise PolynomialSyntaxError(f"expected a polynomial string, got {type(text).__name__}")
    source = text.replace("−", "-").strip()
    if not source:
        raise PolynomialSyntaxError("empty polynomial string")
    table = _symbols(layout)
    try:
        expr = parse_expr(source, local_dict=dict(table), transformations=_TRANSFORMATIONS)
    except (SyntaxError, TypeError, ValueError, sympy.SympifyError) as e:
        raise PolynomialSyntaxError(f"cannot parse {text!r}: {e}") from e

    allowed = set(table.values())
    unknown = {str(s) for s in getattr(expr, "free_symbols", set())} - {str(s) for s in allowed}
    if unknown:
        raise PolynomialSyntaxError(
            f"unknown variables {sorted(unknown)} in {text!r}; expected {', '.join(layout.names)}"
        )

    gens = [table[name] for name in layout.names]
    try:
        poly = sympy.Poly(sympy.expand(expr), *gens)
    except PolynomialError as e:
        raise PolynomialSyntaxError(f"{text!r} is not a polynomial: {e}") from e
    try:
        terms = {monom: float(coeff) for monom, coeff in poly.terms()}
    except TypeError as e:
        raise PolynomialSyntaxError(f"{text!r} has non-numeric coefficients") from e
    return Polynomial(terms, layout)
