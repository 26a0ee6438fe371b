"""Tokenizer for the specification language."""

from __future__ import annotations

import re
from dataclasses import dataclass

from .ast import Span, SpecSyntaxError

KEYWORDS = frozenset([
    "goal", "let", "in", "function", "predicate", "type",
    "forall", "exists", "fun", "if", "then", "else", "not",
    "requires", "ensures", "true", "false",
])

# Longest match first.
OPERATORS = [
    ".<=", ".>=", ".<", ".>", ".+", ".-", ".*", "./",
    "->", "/\\", "\\/", "<=", ">=", "<>", "@@",
    "=", "<", ">", "+", "-", "*", "/",
    "(", ")", "[", "]", "{", "}", ",", ":", ".",
]

_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_']*(?:\.[A-Za-z_][A-Za-z0-9_']*)*")
_NUMBER = re.compile(r"\d+(?:\.\d+)?(?:[eE][+-]?\d+)?")
_STRING = re.compile(r'"(?:[^"\\\n]|\\.)*"')


@dataclass(frozen=True)
class Token:
    kind: str  # "ident" | "int" | "float" | "string" | "kw" | "op" | "eof"
    text: str
    span: Span


def tokenize(source: str) -> list[Token]:
    tokens: list[Token] = []
    line = 1
    col = 1
    i = 0
    n = len(source)

    def advance(text: str):
        nonlocal line, col
        for ch in text:
            if ch == "\n":
                line += 1
                col = 1
            else:
                col += 1

    while i < n:
        ch = source[i]
        if ch in " \t\r\n":
            advance(ch)
            i += 1
            continue
        if source.startswith("(*", i):
            depth = 1
            j = i + 2
            while j < n and depth:
                if source.startswith("(*", j):
                    depth += 1
                    j += 2
                elif source.startswith("*)", j):
                    depth -= 1
                    j += 2
                else:
                    j += 1
            if depth:
                raise SpecSyntaxError(Span(line, col), "unterminated comment")
            advance(source[i:j])
            i = j
            continue
        start = Span(line, col)
        m = _NUMBER.match(source, i)
        if m:
            text = m.group()
            kind = "float" if ("." in text or "e" in text or "E" in text) else "int"
            advance(text)
            tokens.append(Token(kind, text, Span(start.line, start.col, line, col)))
            i = m.end()
            continue
        m = _IDENT.match(source, i)
        if m:
            text = m.group()
            kind = "kw" if text in KEYWORDS else "ident"
            advance(text)
            tokens.append(Token(kind, text, Span(start.line, start.col, line, col)))
            i = m.end()
            continue
        m = _STRING.match(source, i)
        if m:
            text = m.group()
            advance(text)
            tokens.append(Token("string", text, Span(start.line, start.col, line, col)))
            i = m.end()
            continue
        for op in OPERATORS:
            if source.startswith(op, i):
                advance(op)
                tokens.append(Token("op", op, Span(start.line, start.col, line, col)))
                i += len(op)
                break
        else:
            raise SpecSyntaxError(start, f"unexpected character {ch!r}")
    tokens.append(Token("eof", "", Span(line, col)))
    return tokens
