"""Canonical text for syntax trees; ``parse(render(s)) == s``."""

from __future__ import annotations

import re

from . import ast
from .lexer import KEYWORDS

_PLAIN = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")
_PREC = {"OR": 1, "AND": 2, "NOT": 3}
_CMP_PREC = 4
_ATOM_PREC = 5


def render_name(name: str) -> str:
    if _PLAIN.match(name) and name.upper() not in KEYWORDS:
        return name
    return "`" + name.replace("`", "``") + "`"


def render_literal(value) -> str:
    if value is None:
        return "NULL"
    if value is True:
        return "TRUE"
    if value is False:
        return "FALSE"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        text = repr(value)
        if text in ("inf", "-inf", "nan"):
            raise ValueError(f"{text} has no literal form")
        return text
    escaped = (value.replace("\\", "\\\\").replace("'", "\\'")
               .replace("\n", "\\n").replace("\t", "\\t").replace("\r", "\\r"))
    return f"'{escaped}'"


def _prec(node) -> int:
    if isinstance(node, ast.Binary):
        return _PREC.get(node.op, _CMP_PREC)
    if isinstance(node, ast.Not):
        return _PREC["NOT"]
    return _ATOM_PREC


def render_expr(node, parent_prec=0, right=False) -> str:
    text = _expr_text(node)
    p = _prec(node)
    if p < parent_prec or (right and p == parent_prec and p != _PREC["NOT"]):
        return f"({text})"
    # comparison operands are atoms in the grammar
    if parent_prec == _CMP_PREC and p <= _CMP_PREC:
        return f"({text})"
    return text


def _expr_text(node) -> str:
    if isinstance(node, ast.Literal):
        return render_literal(node.value)
    if isinstance(node, ast.Param):
        return "$" + node.name
    if isinstance(node, ast.Var):
        return render_name(node.name)
    if isinstance(node, ast.Prop):
        return f"{render_name(node.var)}.{render_name(node.key)}"
    if isinstance(node, ast.FuncCall):
        return f"{node.name}()"
    if isinstance(node, ast.Not):
        return "NOT " + render_expr(node.operand, _PREC["NOT"])
    if isinstance(node, ast.Binary):
        p = _prec(node)
        return f"{render_expr(node.left, p)} {node.op} {render_expr(node.right, p, right=True)}"
    raise TypeError(f"not an expression node: {node!r}")


def _props(props) -> str:
    if not props:
        return ""
    body = ", ".join(f"{render_name(k)}: {render_expr(v)}" for k, v in sorted(props, key=lambda kv: kv[0]))
    return "{" + body + "}"


def render_node(node: ast.NodePattern) -> str:
    parts = [render_name(node.var) if node.var else ""]
    parts.extend(":" + render_name(label) for label in node.labels)
    text = "".join(parts)
    props = _props(node.props)
    if props:
        text = f"{text} {props}" if text else props
    return f"({text})"


def render_rel(rel: ast.RelPattern) -> str:
    inner = render_name(rel.var) if rel.var else ""
    if rel.type:
        inner += ":" + render_name(rel.type)
    props = _props(rel.props)
    if props:
        inner = f"{inner} {props}" if inner else props
    body = f"-[{inner}]-"
    if rel.direction == "out":
        return body + ">"
    if rel.direction == "in":
        return "<" + body
    return body


def render_pattern(pattern: ast.Pattern) -> str:
    out = [render_node(pattern.nodes[0])]
    for rel, node in zip(pattern.rels, pattern.nodes[1:]):
        out.append(render_rel(rel))
        out.append(render_node(node))
    return "".join(out)


def _patterns(patterns) -> str:
    return ", ".join(render_pattern(p) for p in patterns)


def render_temporal(clause) -> str:
    if isinstance(clause, ast.AsOf):
        return f"FOR TT AS OF {render_expr(clause.t)}"
    return f"FOR TT FROM {render_expr(clause.t1)} TO {render_expr(clause.t2)}"


def render_return_item(item: ast.ReturnItem) -> str:
    text = render_expr(item.expr)
    return f"{text} AS {render_name(item.alias)}" if item.alias else text


def _match_prefix(patterns, where) -> str:
    text = "MATCH " + _patterns(patterns)
    if where is not None:
        text += " WHERE " + render_expr(where)
    return text


def render(stmt) -> str:
    if isinstance(stmt, ast.MatchQuery):
        text = _match_prefix(stmt.patterns, stmt.where)
        if stmt.temporal is not None:
            text += " " + render_temporal(stmt.temporal)
        return text + " RETURN " + ", ".join(render_return_item(i) for i in stmt.returns)
    if isinstance(stmt, ast.CreateStmt):
        create = "CREATE " + _patterns(stmt.patterns)
        if stmt.match:
            return _match_prefix(stmt.match, stmt.where) + " " + create
        return create
    if isinstance(stmt, ast.SetStmt):
        items = ", ".join(f"{render_name(i.var)}.{render_name(i.key)} = {render_expr(i.expr)}"
                          for i in stmt.items)
        return _match_prefix(stmt.match, stmt.where) + " SET " + items
    if isinstance(stmt, ast.DeleteStmt):
        verb = "DETACH DELETE " if stmt.detach else "DELETE "
        return _match_prefix(stmt.match, stmt.where) + " " + verb + ", ".join(map(render_name, stmt.vars))
    raise TypeError(f"not a statement: {stmt!r}")
