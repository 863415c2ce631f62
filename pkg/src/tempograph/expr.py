"""Expression evaluation with three-valued logic.

NULL propagates through comparisons and NOT; AND/OR follow Kleene logic.
Equality between values of different types is false, except that ints and
floats compare numerically. Ordering values of different types is an
EvalError rather than a silent false.
"""

from __future__ import annotations

from .cypher import ast
from .errors import EvalError
from .results import VersionResult
from .timemodel import INF, NEG_INF


def _is_number(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def values_equal(a, b):
    if a is None or b is None:
        return None
    if _is_number(a) and _is_number(b):
        return a == b
    if type(a) is not type(b):
        return False
    return a == b


def _order(op, a, b):
    if a is None or b is None:
        return None
    comparable = (_is_number(a) and _is_number(b)) or (isinstance(a, str) and isinstance(b, str))
    if not comparable:
        raise EvalError(f"cannot order {type(a).__name__} against {type(b).__name__}")
    if op == "<":
        return a < b
    if op == "<=":
        return a <= b
    if op == ">":
        return a > b
    return a >= b


def _truth(value, where):
    if value is None or isinstance(value, bool):
        return value
    raise EvalError(f"{where} expects a boolean, got {type(value).__name__}")


class Evaluator:
    """Evaluates expressions against a row of variable bindings."""

    def __init__(self, params=None, now=None):
        self.params = dict(params or {})
        self.now = now

    def eval(self, node, env):
        if isinstance(node, ast.Literal):
            return node.value
        if isinstance(node, ast.Prop):
            if node.var not in env:
                raise EvalError(f"variable {node.var!r} is not defined")
            target = env[node.var]
            if target is None:
                return None
            if not isinstance(target, VersionResult):
                raise EvalError(f"{node.var!r} is not a vertex or edge")
            return target.get(node.key)
        if isinstance(node, ast.Var):
            if node.name not in env:
                raise EvalError(f"variable {node.name!r} is not defined")
            return env[node.name]
        if isinstance(node, ast.Param):
            if node.name not in self.params:
                raise EvalError(f"parameter ${node.name} was not supplied")
            return self.params[node.name]
        if isinstance(node, ast.FuncCall):
            if node.name == "now":
                if self.now is None:
                    raise EvalError("now() is unavailable here")
                return self.now
            raise EvalError(f"unknown function {node.name}()")
        if isinstance(node, ast.Not):
            value = _truth(self.eval(node.operand, env), "NOT")
            return None if value is None else not value
        if isinstance(node, ast.Binary):
            return self._binary(node, env)
        raise EvalError(f"cannot evaluate {type(node).__name__}")

    def _binary(self, node, env):
        op = node.op
        if op == "AND":
            left = _truth(self.eval(node.left, env), "AND")
            if left is False:
                return False
            right = _truth(self.eval(node.right, env), "AND")
            if right is False:
                return False
            return None if left is None or right is None else True
        if op == "OR":
            left = _truth(self.eval(node.left, env), "OR")
            if left is True:
                return True
            right = _truth(self.eval(node.right, env), "OR")
            if right is True:
                return True
            return None if left is None or right is None else False
        left, right = self.eval(node.left, env), self.eval(node.right, env)
        if op == "=":
            return values_equal(left, right)
        if op == "<>":
            eq = values_equal(left, right)
            return None if eq is None else not eq
        return _order(op, left, right)

    def predicate(self, node, env) -> bool:
        """WHERE semantics: only TRUE keeps the row."""
        if node is None:
            return True
        return _truth(self.eval(node, env), "WHERE") is True

    def timestamp(self, node, env=None) -> int:
        value = self.eval(node, env or {})
        if not _is_number(value) or isinstance(value, float) and not value.is_integer():
            raise EvalError(f"a transaction time must be an integer, got {value!r}")
        value = int(value)
        if not NEG_INF <= value <= INF:
            raise EvalError(f"transaction time {value} is out of range")
        return value
