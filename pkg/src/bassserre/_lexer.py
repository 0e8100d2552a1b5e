"""Tokenizer shared by the graph, move and word text formats."""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import List, Optional


class ParseError(ValueError):
    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"line {line}, column {col}: {message}")
        self.message = message
        self.line = line
        self.col = col


@dataclass(frozen=True)
class Token:
    kind: str  # "id", "int", "sep", "punct", "eof"
    value: str
    line: int
    col: int


_TOKEN_RE = re.compile(
    r"(?P<ws>[ \t\r]+)"
    r"|(?P<comment>\#[^\n]*)"
    r"|(?P<sep>[\n;])"
    r"|(?P<int>-?\d+)"
    r"|(?P<id>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<punct>[{}()\[\],:/*%.'=^])"
)


def tokenize(text: str) -> List[Token]:
    tokens = []
    line, line_start = 1, 0
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        col = pos - line_start + 1
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", line, col)
        kind = m.lastgroup
        value = m.group()
        if kind == "sep":
            tokens.append(Token("sep", value, line, col))
            if value == "\n":
                line += 1
                line_start = m.end()
        elif kind not in ("ws", "comment"):
            tokens.append(Token(kind, value, line, col))
        pos = m.end()
    tokens.append(Token("eof", "", line, pos - line_start + 1))
    return tokens


class TokenStream:
    def __init__(self, tokens: List[Token]):
        self.tokens = tokens
        self.pos = 0

    @classmethod
    def of(cls, text: str) -> "TokenStream":
        return cls(tokenize(text))

    def peek(self, offset: int = 0) -> Token:
        return self.tokens[min(self.pos + offset, len(self.tokens) - 1)]

    def next(self) -> Token:
        tok = self.peek()
        self.pos += 1
        return tok

    def error(self, message: str, tok: Optional[Token] = None) -> ParseError:
        tok = tok or self.peek()
        shown = "end of input" if tok.kind == "eof" else repr(tok.value)
        return ParseError(f"{message} (found {shown})", tok.line, tok.col)

    def at(self, kind: str, value: Optional[str] = None) -> bool:
        tok = self.peek()
        return tok.kind == kind and (value is None or tok.value == value)

    def accept(self, kind: str, value: Optional[str] = None) -> Optional[Token]:
        if self.at(kind, value):
            return self.next()
        return None

    def expect(self, kind: str, value: Optional[str] = None, what: Optional[str] = None) -> Token:
        if self.at(kind, value):
            return self.next()
        raise self.error(f"expected {what or value or kind}")

    def expect_int(self, what: str = "integer") -> int:
        return int(self.expect("int", what=what).value)

    def skip_seps(self) -> None:
        while self.at("sep"):
            self.next()
