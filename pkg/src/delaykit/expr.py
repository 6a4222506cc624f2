"""Small arithmetic expression language for configuration files.

Grammar (EBNF)::

    expr    = term , { ("+" | "-") , term } ;
    term    = factor , { ("*" | "/") , factor } ;
    factor  = [ "+" | "-" ] , power ;
    power   = atom , [ "**" , factor ] ;
    atom    = number | name | call | "(" , expr , ")" ;
    call    = ("sin" | "cos" | "exp") , "(" , expr , ")" ;
    name    = "t" | "x" | "pi" | "e" ;

Python's own parser produces the tree; every node is then checked against a
whitelist before the expression is compiled, so nothing outside the grammar
ever runs.  ``^`` is accepted as a synonym for ``**``.
"""
import ast

import numpy as np

from .errors import InvalidArgumentError

__all__ = ["ExpressionError", "Expression", "compile_expression", "FUNCTIONS", "CONSTANTS"]

FUNCTIONS = {"sin": np.sin, "cos": np.cos, "exp": np.exp}
CONSTANTS = {"pi": np.pi, "e": np.e}

_BINOPS = (ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow)
_UNARY = (ast.UAdd, ast.USub)


class ExpressionError(InvalidArgumentError):
    pass


def _check(node, variables, src):
    if isinstance(node, ast.Expression):
        return _check(node.body, variables, src)
    if isinstance(node, ast.BinOp):
        if not isinstance(node.op, _BINOPS):
            raise ExpressionError(f"operator {type(node.op).__name__} not allowed in {src!r}")
        _check(node.left, variables, src)
        _check(node.right, variables, src)
        return
    if isinstance(node, ast.UnaryOp):
        if not isinstance(node.op, _UNARY):
            raise ExpressionError(f"operator {type(node.op).__name__} not allowed in {src!r}")
        _check(node.operand, variables, src)
        return
    if isinstance(node, ast.Constant):
        if isinstance(node.value, bool) or not isinstance(node.value, (int, float)):
            raise ExpressionError(f"literal {node.value!r} not allowed in {src!r}")
        return
    if isinstance(node, ast.Name):
        if node.id not in variables and node.id not in CONSTANTS:
            raise ExpressionError(f"unknown identifier {node.id!r} in {src!r}")
        return
    if isinstance(node, ast.Call):
        fn = node.func
        if not isinstance(fn, ast.Name) or fn.id not in FUNCTIONS:
            name = fn.id if isinstance(fn, ast.Name) else ast.dump(fn)
            raise ExpressionError(f"unknown function {name!r} in {src!r}")
        if len(node.args) != 1 or node.keywords:
            raise ExpressionError(f"{fn.id} takes exactly one argument in {src!r}")
        _check(node.args[0], variables, src)
        return
    raise ExpressionError(f"syntax {type(node).__name__} not allowed in {src!r}")


class Expression:
    """A validated expression, callable with keyword arrays for its variables.

    The result is broadcast against the inputs, so constant expressions still
    return arrays of the right shape.
    """

    def __init__(self, source, variables=("t",)):
        if not isinstance(source, str):
            raise ExpressionError(f"expression must be a string, got {type(source).__name__}")
        self.source = source
        self.variables = tuple(variables)
        text = source.replace("^", "**")
        try:
            tree = ast.parse(text.strip(), mode="eval")
        except SyntaxError as exc:
            raise ExpressionError(f"cannot parse {source!r}: {exc.msg}") from None
        _check(tree, self.variables, source)
        # integer literals become floats so that "9**9**9" cannot stall in bignum arithmetic
        for node in ast.walk(tree):
            if isinstance(node, ast.Constant):
                node.value = float(node.value)
        self._code = compile(tree, "<expr>", "eval")

    def __call__(self, **values):
        missing = [v for v in self.variables if v not in values]
        if missing:
            raise ExpressionError(f"missing value for {missing[0]!r}")
        ns = {"__builtins__": {}}
        ns.update(FUNCTIONS)
        ns.update(CONSTANTS)
        args = [np.asarray(values[v], dtype=float) for v in self.variables]
        ns.update(zip(self.variables, args))
        try:
            with np.errstate(all="ignore"):
                out = eval(self._code, ns)  # whitelisted tree, empty builtins
        except (OverflowError, ZeroDivisionError) as exc:
            raise ExpressionError(f"{self.source!r}: {exc}") from None
        return np.broadcast_arrays(np.asarray(out, dtype=float), *args)[0].astype(float)

    def __repr__(self):
        return f"Expression({self.source!r}, variables={self.variables})"


def compile_expression(source, variables=("t",)):
    return Expression(source, variables)
