"""Tokenizer for the Cypher subset."""

from __future__ import annotations

from dataclasses import dataclass

from ..errors import ParseError

KEYWORDS = frozenset({
    "MATCH", "WHERE", "RETURN", "CREATE", "SET", "DELETE", "DETACH",
    "AND", "OR", "NOT", "TRUE", "FALSE", "NULL",
    "FOR", "TT", "AS", "OF", "FROM", "TO",
})

# longest first so "<=" wins over "<"
_PUNCT = ("<>", "<=", ">=", "(", ")", "[", "]", "{", "}", ":", ",", ".", "-", ">", "<", "=", ";")

_ESCAPES = {"\\": "\\", "'": "'", '"': '"', "n": "\n", "t": "\t", "r": "\r"}


@dataclass(frozen=True)
class Token:
    kind: str  # IDENT KEYWORD INT FLOAT STRING PARAM PUNCT EOF
    value: object
    pos: int
    line: int
    col: int

    def describe(self) -> str:
        if self.kind == "EOF":
            return "end of input"
        if self.kind in ("PUNCT", "KEYWORD"):
            return repr(self.value)
        return f"{self.kind.lower()} {self.value!r}"


def _is_ident_start(ch):
    return ch.isascii() and (ch.isalpha() or ch == "_")


def _is_ident_char(ch):
    return ch.isascii() and (ch.isalnum() or ch == "_")


def tokenize(text: str) -> list:
    tokens = []
    i, n = 0, len(text)
    line, line_start = 1, 0

    def error(msg, at):
        raise ParseError(msg, line, at - line_start + 1, (), text)

    while i < n:
        ch = text[i]
        if ch == "\n":
            i += 1
            line, line_start = line + 1, i
            continue
        if ch in " \t\r":
            i += 1
            continue
        if text.startswith("//", i):
            while i < n and text[i] != "\n":
                i += 1
            continue
        col = i - line_start + 1
        start = i
        if _is_ident_start(ch):
            while i < n and _is_ident_char(text[i]):
                i += 1
            word = text[start:i]
            if word.upper() in KEYWORDS:
                tokens.append(Token("KEYWORD", word.upper(), start, line, col))
            else:
                tokens.append(Token("IDENT", word, start, line, col))
            continue
        if ch == "`":
            i += 1
            buf = []
            while True:
                if i >= n:
                    error("unterminated quoted name", start)
                if text[i] == "`":
                    if text.startswith("``", i):
                        buf.append("`")
                        i += 2
                        continue
                    i += 1
                    break
                if text[i] == "\n":
                    error("newline in quoted name", i)
                buf.append(text[i])
                i += 1
            if not buf:
                error("empty quoted name", start)
            tokens.append(Token("IDENT", "".join(buf), start, line, col))
            continue
        if ch.isascii() and ch.isdigit():
            while i < n and text[i].isascii() and text[i].isdigit():
                i += 1
            is_float = False
            if i + 1 < n and text[i] == "." and text[i + 1].isascii() and text[i + 1].isdigit():
                is_float = True
                i += 1
                while i < n and text[i].isascii() and text[i].isdigit():
                    i += 1
            if i < n and text[i] in "eE":
                j = i + 1
                if j < n and text[j] in "+-":
                    j += 1
                if j < n and text[j].isascii() and text[j].isdigit():
                    is_float = True
                    i = j
                    while i < n and text[i].isascii() and text[i].isdigit():
                        i += 1
            if i < n and _is_ident_char(text[i]):
                error("malformed number", start)
            raw = text[start:i]
            if is_float:
                value = float(raw)
                if value in (float("inf"), float("-inf")):
                    error("float literal out of range", start)
                tokens.append(Token("FLOAT", value, start, line, col))
            else:
                tokens.append(Token("INT", int(raw), start, line, col))
            continue
        if ch in "'\"":
            quote = ch
            i += 1
            buf = []
            while True:
                if i >= n:
                    error("unterminated string literal", start)
                c = text[i]
                if c == quote:
                    i += 1
                    break
                if c == "\n":
                    error("newline in string literal", i)
                if c == "\\":
                    if i + 1 >= n or text[i + 1] not in _ESCAPES:
                        error("invalid escape sequence", i)
                    buf.append(_ESCAPES[text[i + 1]])
                    i += 2
                    continue
                buf.append(c)
                i += 1
            tokens.append(Token("STRING", "".join(buf), start, line, col))
            continue
        if ch == "$":
            i += 1
            if i >= n or not _is_ident_start(text[i]):
                error("expected a parameter name after '$'", start)
            while i < n and _is_ident_char(text[i]):
                i += 1
            tokens.append(Token("PARAM", text[start + 1:i], start, line, col))
            continue
        for p in _PUNCT:
            if text.startswith(p, i):
                tokens.append(Token("PUNCT", p, start, line, col))
                i += len(p)
                break
        else:
            error(f"unexpected character {ch!r}", start)
    tokens.append(Token("EOF", None, n, line, n - line_start + 1))
    return tokens
