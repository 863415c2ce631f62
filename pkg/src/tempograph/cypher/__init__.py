"""Cypher subset with transaction-time qualifiers (FOR TT AS OF / FROM..TO)."""

from . import ast
from .lexer import KEYWORDS, Token, tokenize
from .parser import parse
from .render import render, render_expr

__all__ = ["ast", "KEYWORDS", "Token", "tokenize", "parse", "render", "render_expr"]
