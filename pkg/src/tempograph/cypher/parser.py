"""Recursive-descent parser.

Grammar (keywords case-insensitive)::

    statement := match_stmt | "CREATE" patterns
    match_stmt := "MATCH" patterns ["WHERE" expr]
                  ( [temporal] "RETURN" items
                  | "CREATE" patterns
                  | "SET" set_item ("," set_item)*
                  | ["DETACH"] "DELETE" name ("," name)* )
    temporal := "FOR" "TT" ("AS" "OF" expr | "FROM" expr "TO" expr)
    expr     := or ; or := and ("OR" and)* ; and := not ("AND" not)*
    not      := "NOT" not | cmp ; cmp := atom [cmp_op atom]
    atom     := literal | $param | name ["." name] | name "(" ")" | "(" expr ")"
"""

from __future__ import annotations

from ..codec import INT64_MAX, INT64_MIN
from ..errors import ParseError
from . import ast
from .lexer import tokenize

MAX_DEPTH = 100
_CMP_OPS = ("=", "<>", "<", "<=", ">", ">=")
FUNCTIONS = {"now": 0}


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = tokenize(text)
        self.i = 0
        self.depth = 0

    # -- token helpers ------------------------------------------------------

    @property
    def tok(self):
        return self.tokens[self.i]

    def peek(self, k=1):
        return self.tokens[min(self.i + k, len(self.tokens) - 1)]

    def error(self, message, expected=(), tok=None):
        tok = tok or self.tok
        raise ParseError(message, tok.line, tok.col, expected, self.text)

    def fail_expected(self, *expected):
        self.error(f"unexpected {self.tok.describe()}", expected)

    def at_punct(self, value, offset=0):
        t = self.peek(offset) if offset else self.tok
        return t.kind == "PUNCT" and t.value == value

    def at_kw(self, *words):
        return self.tok.kind == "KEYWORD" and self.tok.value in words

    def advance(self):
        t = self.tok
        if t.kind != "EOF":
            self.i += 1
        return t

    def expect_punct(self, value):
        if not self.at_punct(value):
            self.fail_expected(repr(value))
        return self.advance()

    def expect_kw(self, word):
        if not self.at_kw(word):
            self.fail_expected(word)
        return self.advance()

    def name(self, allow_keyword=False, what="name"):
        t = self.tok
        if t.kind == "IDENT" or (allow_keyword and t.kind == "KEYWORD"):
            self.advance()
            return t.value
        self.fail_expected(what)

    # -- statements ---------------------------------------------------------

    def statement(self):
        if self.at_kw("CREATE"):
            self.advance()
            stmt = ast.CreateStmt(self.patterns())
        elif self.at_kw("MATCH"):
            stmt = self.match_statement()
        else:
            self.fail_expected("MATCH", "CREATE")
        if self.at_punct(";"):
            self.advance()
        if self.tok.kind != "EOF":
            self.fail_expected("end of input")
        return stmt

    def match_statement(self):
        self.expect_kw("MATCH")
        patterns = self.patterns()
        where = None
        if self.at_kw("WHERE"):
            self.advance()
            where = self.expr()
        if self.at_kw("FOR"):
            temporal = self.temporal()
            if not self.at_kw("RETURN"):
                self.error("a temporal qualifier must be followed by RETURN; "
                           "write statements act on the current state", ("RETURN",))
            self.advance()
            return ast.MatchQuery(patterns, where, temporal, self.return_items())
        if self.at_kw("RETURN"):
            self.advance()
            return ast.MatchQuery(patterns, where, None, self.return_items())
        if self.at_kw("CREATE"):
            self.advance()
            return ast.CreateStmt(self.patterns(), patterns, where)
        if self.at_kw("SET"):
            self.advance()
            items = [self.set_item()]
            while self.at_punct(","):
                self.advance()
                items.append(self.set_item())
            return ast.SetStmt(patterns, tuple(items), where)
        detach = False
        if self.at_kw("DETACH"):
            self.advance()
            detach = True
            if not self.at_kw("DELETE"):
                self.fail_expected("DELETE")
        if self.at_kw("DELETE"):
            self.advance()
            names = [self.name(what="variable")]
            while self.at_punct(","):
                self.advance()
                names.append(self.name(what="variable"))
            return ast.DeleteStmt(patterns, tuple(names), where, detach)
        expected = ["FOR", "RETURN", "CREATE", "SET", "DELETE", "DETACH"]
        if where is None:
            expected.append("WHERE")
        self.fail_expected(*expected)

    def temporal(self):
        self.expect_kw("FOR")
        self.expect_kw("TT")
        if self.at_kw("AS"):
            self.advance()
            self.expect_kw("OF")
            return ast.AsOf(self.expr())
        if self.at_kw("FROM"):
            self.advance()
            t1 = self.expr()
            self.expect_kw("TO")
            return ast.FromTo(t1, self.expr())
        self.fail_expected("AS", "FROM")

    def return_items(self):
        items = [self.return_item()]
        while self.at_punct(","):
            self.advance()
            items.append(self.return_item())
        return tuple(items)

    def return_item(self):
        expr = self.expr()
        alias = None
        if self.at_kw("AS"):
            self.advance()
            alias = self.name(what="alias")
        return ast.ReturnItem(expr, alias)

    def set_item(self):
        var = self.name(what="variable")
        self.expect_punct(".")
        key = self.name(allow_keyword=True, what="property name")
        self.expect_punct("=")
        return ast.SetItem(var, key, self.expr())

    # -- patterns -----------------------------------------------------------

    def patterns(self):
        out = [self.pattern()]
        while self.at_punct(","):
            self.advance()
            out.append(self.pattern())
        return tuple(out)

    def pattern(self):
        nodes = [self.node()]
        rels = []
        while self.at_punct("-") or (self.at_punct("<") and self.at_punct("-", 1)):
            rels.append(self.rel())
            nodes.append(self.node())
        return ast.Pattern(tuple(nodes), tuple(rels))

    def node(self):
        self.expect_punct("(")
        var = self.name(what="variable") if self.tok.kind == "IDENT" else None
        labels = []
        while self.at_punct(":"):
            self.advance()
            labels.append(self.name(allow_keyword=True, what="label"))
        props = self.prop_map() if self.at_punct("{") else ()
        if not self.at_punct(")"):
            self.fail_expected("')'", "':'", "'{'")
        self.advance()
        return ast.NodePattern(var, tuple(labels), props)

    def rel(self):
        incoming = False
        if self.at_punct("<"):
            self.advance()
            incoming = True
        self.expect_punct("-")
        var, rtype, props = None, None, ()
        if self.at_punct("["):
            self.advance()
            if self.tok.kind == "IDENT":
                var = self.name()
            if self.at_punct(":"):
                self.advance()
                rtype = self.name(allow_keyword=True, what="relationship type")
            if self.at_punct("{"):
                props = self.prop_map()
            self.expect_punct("]")
        self.expect_punct("-")
        outgoing = False
        if self.at_punct(">"):
            self.advance()
            outgoing = True
        if incoming and outgoing:
            self.error("a relationship cannot point both ways")
        direction = "in" if incoming else "out" if outgoing else "both"
        return ast.RelPattern(var, rtype, direction, props)

    def prop_map(self):
        self.expect_punct("{")
        entries = {}
        if not self.at_punct("}"):
            while True:
                key_tok = self.tok
                key = self.name(allow_keyword=True, what="property name")
                if key in entries:
                    self.error(f"duplicate property {key!r} in map", tok=key_tok)
                self.expect_punct(":")
                entries[key] = self.expr()
                if not self.at_punct(","):
                    break
                self.advance()
        self.expect_punct("}")
        return tuple(sorted(entries.items()))

    # -- expressions --------------------------------------------------------

    def expr(self):
        self.depth += 1
        if self.depth > MAX_DEPTH:
            self.error("expression nested too deeply")
        try:
            return self.or_expr()
        finally:
            self.depth -= 1

    def or_expr(self):
        left = self.and_expr()
        while self.at_kw("OR"):
            self.advance()
            left = ast.Binary("OR", left, self.and_expr())
        return left

    def and_expr(self):
        left = self.not_expr()
        while self.at_kw("AND"):
            self.advance()
            left = ast.Binary("AND", left, self.not_expr())
        return left

    def not_expr(self):
        if self.at_kw("NOT"):
            self.advance()
            self.depth += 1
            if self.depth > MAX_DEPTH:
                self.error("expression nested too deeply")
            try:
                return ast.Not(self.not_expr())
            finally:
                self.depth -= 1
        return self.comparison()

    def comparison(self):
        left = self.atom()
        if self.tok.kind == "PUNCT" and self.tok.value in _CMP_OPS:
            op = self.advance().value
            right = self.atom()
            if self.tok.kind == "PUNCT" and self.tok.value in _CMP_OPS:
                self.error("comparisons cannot be chained; use AND")
            return ast.Binary(op, left, right)
        return left

    def atom(self):
        t = self.tok
        if t.kind == "PUNCT" and t.value == "-":
            self.advance()
            num = self.tok
            if num.kind not in ("INT", "FLOAT"):
                self.fail_expected("number")
            self.advance()
            return self._number(-num.value, num)
        if t.kind in ("INT", "FLOAT"):
            self.advance()
            return self._number(t.value, t)
        if t.kind == "STRING":
            self.advance()
            return ast.Literal(t.value)
        if t.kind == "PARAM":
            self.advance()
            return ast.Param(t.value)
        if t.kind == "KEYWORD" and t.value in ("TRUE", "FALSE", "NULL"):
            self.advance()
            return ast.Literal({"TRUE": True, "FALSE": False, "NULL": None}[t.value])
        if t.kind == "PUNCT" and t.value == "(":
            self.advance()
            inner = self.expr()
            self.expect_punct(")")
            return inner
        if t.kind == "IDENT":
            self.advance()
            if self.at_punct("("):
                return self._call(t)
            if self.at_punct("."):
                self.advance()
                return ast.Prop(t.value, self.name(allow_keyword=True, what="property name"))
            return ast.Var(t.value)
        self.fail_expected("expression")

    def _call(self, name_tok):
        fname = name_tok.value.lower()
        if fname not in FUNCTIONS:
            self.error(f"unknown function {name_tok.value!r}", tok=name_tok)
        self.expect_punct("(")
        self.expect_punct(")")
        return ast.FuncCall(fname, ())

    def _number(self, value, tok):
        if isinstance(value, int) and not INT64_MIN <= value <= INT64_MAX:
            self.error("integer literal does not fit in 64 bits", tok=tok)
        return ast.Literal(value)


def parse(text: str):
    """Parse one statement; raises ParseError with position and expected tokens."""
    if not isinstance(text, str):
        raise ParseError("query text must be a string")
    return _Parser(text).statement()
