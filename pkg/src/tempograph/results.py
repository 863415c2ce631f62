"""Query result values."""

from __future__ import annotations

from dataclasses import dataclass, field

from .cypher.render import render_literal, render_name
from .timemodel import INF


@dataclass(frozen=True, eq=False)
class VersionResult:
    """One version of a vertex or edge as seen by a query.

    Two results are equal when they denote the same version, i.e. the same
    object and lifespan; the origin is bookkeeping and never compared.
    """

    kind: str  # "vertex" | "edge"
    gid: int
    st: int
    ed: int
    props: dict
    labels: tuple = ()
    type: str | None = None
    src: int | None = None
    dst: int | None = None
    origin: str = field(default="current")

    @property
    def key(self):
        return (self.kind, self.gid, self.st, self.ed)

    @property
    def omega(self):
        return (self.st, self.ed)

    def __eq__(self, other):
        return isinstance(other, VersionResult) and self.key == other.key

    def __hash__(self):
        return hash(self.key)

    def get(self, key):
        if key == "_st":
            return self.st
        if key == "_ed":
            return self.ed
        return self.props.get(key)

    def canonical(self):
        """Hashable full description used to compare result multisets."""
        props = tuple(sorted((k, type(v).__name__, v) for k, v in self.props.items()))
        if self.kind == "vertex":
            return ("V", self.gid, self.st, self.ed, tuple(sorted(self.labels)), props)
        return ("E", self.gid, self.st, self.ed, self.type, self.src, self.dst, props)

    def __str__(self):
        ed = "inf" if self.ed == INF else str(self.ed)
        props = ", ".join(f"{render_name(k)}: {render_literal(v)}" for k, v in sorted(self.props.items()))
        props = " {" + props + "}" if props else ""
        if self.kind == "vertex":
            labels = "".join(":" + render_name(x) for x in self.labels)
            return f"(#{self.gid}{labels}{props})@[{self.st},{ed})"
        return f"[#{self.gid}:{render_name(self.type)}{props} {self.src}->{self.dst}]@[{self.st},{ed})"


def canonical_value(value):
    """Hashable, type-tagged form of any cell value."""
    if isinstance(value, VersionResult):
        return value.canonical()
    return (type(value).__name__, value)


def canonical_rows(rows):
    seen = {}  # the same version object recurs across rows

    def one(v):
        if not isinstance(v, VersionResult):
            return (type(v).__name__, v)
        key = id(v)
        if key not in seen:
            seen[key] = v.canonical()
        return seen[key]

    return [tuple(one(v) for v in row) for row in rows]


def format_value(value) -> str:
    if isinstance(value, VersionResult):
        return str(value)
    if value is None:
        return "null"
    if value is True:
        return "true"
    if value is False:
        return "false"
    return str(value)


@dataclass
class QueryResult:
    columns: list
    rows: list
    counters: dict
    summary: dict = field(default_factory=dict)

    def canonical(self):
        return canonical_rows(self.rows)
