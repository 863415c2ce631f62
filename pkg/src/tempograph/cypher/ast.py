"""Syntax tree for the query language. All nodes are immutable and comparable."""

from __future__ import annotations

from dataclasses import dataclass


# -- expressions --------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Literal:
    value: object

    # 1, 1.0 and True must stay distinct nodes
    def __eq__(self, other):
        return (isinstance(other, Literal) and type(self.value) is type(other.value)
                and self.value == other.value)

    def __hash__(self):
        return hash((type(self.value).__name__, self.value))


@dataclass(frozen=True)
class Param:
    name: str


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Prop:
    var: str
    key: str


@dataclass(frozen=True)
class FuncCall:
    name: str
    args: tuple = ()


@dataclass(frozen=True)
class Not:
    operand: object


@dataclass(frozen=True)
class Binary:
    op: str  # AND OR = <> < <= > >=
    left: object
    right: object


# -- patterns -----------------------------------------------------------------

@dataclass(frozen=True)
class NodePattern:
    var: str | None = None
    labels: tuple = ()
    props: tuple = ()  # ((key, Expr), ...) sorted by key


@dataclass(frozen=True)
class RelPattern:
    var: str | None = None
    type: str | None = None
    direction: str = "both"  # out | in | both
    props: tuple = ()


@dataclass(frozen=True)
class Pattern:
    nodes: tuple
    rels: tuple = ()

    def __post_init__(self):
        if len(self.nodes) != len(self.rels) + 1:
            raise ValueError("a pattern alternates nodes and relationships")


# -- clauses and statements ---------------------------------------------------

@dataclass(frozen=True)
class AsOf:
    t: object


@dataclass(frozen=True)
class FromTo:
    t1: object
    t2: object


@dataclass(frozen=True)
class ReturnItem:
    expr: object
    alias: str | None = None


@dataclass(frozen=True)
class MatchQuery:
    patterns: tuple
    where: object = None
    temporal: object = None
    returns: tuple = ()


@dataclass(frozen=True)
class CreateStmt:
    patterns: tuple
    match: tuple = ()
    where: object = None


@dataclass(frozen=True)
class SetItem:
    var: str
    key: str
    expr: object


@dataclass(frozen=True)
class SetStmt:
    match: tuple
    items: tuple
    where: object = None


@dataclass(frozen=True)
class DeleteStmt:
    match: tuple
    vars: tuple
    where: object = None
    detach: bool = False


WRITE_STATEMENTS = (CreateStmt, SetStmt, DeleteStmt)
