"""Lexer for the rule language.

Tokens: structural keywords, identifiers, numbers, clock literals,
parentheses, and quoted strings. Whitespace-insensitive; commas are treated
as whitespace (trailing commas in time phrases are tolerated). Quoted spans
become STRING tokens; the parser re-tokenizes them where an action clause is
expected, which lets typographically quoted action text parse verbatim.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from ..errors import HearthError
from ..timeutil import parse_clock

KEYWORDS = {
    "IF", "THEN", "AND", "OR", "NOT", "IN", "IS", "AT",
    "SET", "KEEP", "BETWEEN", "ABOVE", "BELOW", "EQUAL",
    "NOTIFY", "WARN", "ACTIVITY", "ON", "OFF", "OPEN", "CLOSE",
}

_QUOTE_PAIRS = {"'": "'", '"': '"', "‘": "’", "“": "”"}

_CLOCK_RE = re.compile(r"\d{1,2}:\d{2}(?![0-9])")
_AMPM_RE = re.compile(r"\d{1,2}\s*[AaPp]\.?\s?[Mm]\.?(?![A-Za-z0-9_])")
_NUMBER_RE = re.compile(r"\d+(\.\d+)?(?![0-9.])")
_IDENT_RE = re.compile(r"[A-Za-z][A-Za-z0-9_]*")


class LexError(HearthError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at byte {offset}", offset=offset)
        self.offset = offset


@dataclass(frozen=True)
class Token:
    kind: str       # KEYWORD | IDENT | NUMBER | CLOCK | LPAREN | RPAREN | STRING | EOF
    text: str
    offset: int     # byte offset into the source

    def is_kw(self, *names: str) -> bool:
        return self.kind == "KEYWORD" and self.text in names


def _byte_offset(text: str, pos: int) -> int:
    return len(text[:pos].encode("utf-8"))


def tokenize(text: str) -> list[Token]:
    """Lex rule text into a token list ending with EOF."""
    tokens: list[Token] = []
    pos = 0
    n = len(text)
    while pos < n:
        ch = text[pos]
        if ch.isspace() or ch == ",":
            pos += 1
            continue
        offset = _byte_offset(text, pos)
        if ch == "(":
            tokens.append(Token("LPAREN", "(", offset))
            pos += 1
            continue
        if ch == ")":
            tokens.append(Token("RPAREN", ")", offset))
            pos += 1
            continue
        if ch in _QUOTE_PAIRS:
            closing = _QUOTE_PAIRS[ch]
            end = text.find(closing, pos + 1)
            if end < 0:
                raise LexError("unterminated quote", offset)
            tokens.append(Token("STRING", text[pos + 1:end], offset))
            pos = end + 1
            continue
        if ch.isdigit():
            m = _CLOCK_RE.match(text, pos) or _AMPM_RE.match(text, pos)
            if m:
                clock = parse_clock(m.group(0))
                if clock is None:
                    raise LexError(f"malformed clock literal {m.group(0)!r}", offset)
                tokens.append(Token("CLOCK", clock, offset))
                pos = m.end()
                continue
            m = _NUMBER_RE.match(text, pos)
            if not m:
                raise LexError("malformed number", offset)
            tokens.append(Token("NUMBER", m.group(0), offset))
            pos = m.end()
            continue
        m = _IDENT_RE.match(text, pos)
        if m:
            word = m.group(0)
            kind = "KEYWORD" if word.upper() in KEYWORDS else "IDENT"
            canon = word.upper() if kind == "KEYWORD" else word
            tokens.append(Token(kind, canon, offset))
            pos = m.end()
            continue
        raise LexError(f"illegal character {ch!r}", offset)
    tokens.append(Token("EOF", "", _byte_offset(text, n)))
    return tokens
