"""Boolean keyword expressions for screening criteria.

Grammar (case-insensitive operators, AND binds tighter than OR):

    expr   := or
    or     := and ( OR and )*
    and    := unary ( AND unary )*
    unary  := NOT unary | atom
    atom   := '(' expr ')' | '"' phrase '"' | term

A term matches when it equals any token of the searched text; a quoted phrase
matches only as consecutive tokens.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .biblio import StudyRecord

_TOKEN = re.compile(r"\(|\)|\"[^\"]*\"|[^\s()\"]+")
_WORD = re.compile(r"[a-z0-9]+")


class ExpressionError(ValueError):
    """The expression text cannot be parsed."""


@dataclass(frozen=True)
class Term:
    word: str

    def matches(self, tokens: tuple[str, ...]) -> bool:
        return self.word in tokens


@dataclass(frozen=True)
class Phrase:
    words: tuple[str, ...]

    def matches(self, tokens: tuple[str, ...]) -> bool:
        span = len(self.words)
        return any(
            tokens[i:i + span] == self.words
            for i in range(len(tokens) - span + 1)
        )


@dataclass(frozen=True)
class Not:
    operand: "Expr"

    def matches(self, tokens: tuple[str, ...]) -> bool:
        return not self.operand.matches(tokens)


@dataclass(frozen=True)
class And:
    operands: tuple["Expr", ...]

    def matches(self, tokens: tuple[str, ...]) -> bool:
        return all(op.matches(tokens) for op in self.operands)


@dataclass(frozen=True)
class Or:
    operands: tuple["Expr", ...]

    def matches(self, tokens: tuple[str, ...]) -> bool:
        return any(op.matches(tokens) for op in self.operands)


Expr = Term | Phrase | Not | And | Or


def tokenize_text(text: str) -> tuple[str, ...]:
    return tuple(_WORD.findall(text.lower()))


def record_tokens(record: StudyRecord) -> tuple[str, ...]:
    """Search surface of a record: title, abstract, and keywords."""
    parts = [record.title, record.abstract or "", " ".join(record.keywords)]
    return tokenize_text(" ".join(parts))


class _Parser:
    def __init__(self, text: str):
        self.tokens = _TOKEN.findall(text)
        self.pos = 0
        if not self.tokens:
            raise ExpressionError("empty expression")

    def peek(self) -> str | None:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def take(self) -> str:
        token = self.peek()
        if token is None:
            raise ExpressionError("unexpected end of expression")
        self.pos += 1
        return token

    def parse(self) -> Expr:
        expr = self.parse_or()
        if self.peek() is not None:
            raise ExpressionError(f"unexpected token {self.peek()!r}")
        return expr

    def parse_or(self) -> Expr:
        operands = [self.parse_and()]
        while self.peek() is not None and self.peek().upper() == "OR":
            self.take()
            operands.append(self.parse_and())
        return operands[0] if len(operands) == 1 else Or(tuple(operands))

    def parse_and(self) -> Expr:
        operands = [self.parse_unary()]
        while self.peek() is not None and self.peek().upper() == "AND":
            self.take()
            operands.append(self.parse_unary())
        return operands[0] if len(operands) == 1 else And(tuple(operands))

    def parse_unary(self) -> Expr:
        token = self.peek()
        if token is not None and token.upper() == "NOT":
            self.take()
            return Not(self.parse_unary())
        return self.parse_atom()

    def parse_atom(self) -> Expr:
        token = self.take()
        if token == "(":
            inner = self.parse_or()
            if self.peek() != ")":
                raise ExpressionError("missing closing parenthesis")
            self.take()
            return inner
        if token == ")":
            raise ExpressionError("unexpected ')'")
        if token.upper() in ("AND", "OR", "NOT"):
            raise ExpressionError(f"operator {token!r} where a term was expected")
        if token.startswith('"'):
            words = tokenize_text(token[1:-1])
            if not words:
                raise ExpressionError("empty phrase")
            return Phrase(words) if len(words) > 1 else Term(words[0])
        words = tokenize_text(token)
        if not words:
            raise ExpressionError(f"term {token!r} has no searchable characters")
        # A hyphenated term like cross-company behaves as a phrase.
        return Phrase(tuple(words)) if len(words) > 1 else Term(words[0])


def parse_expression(text: str) -> Expr:
    return _Parser(text).parse()


def matches_record(expr: Expr, record: StudyRecord) -> bool:
    return expr.matches(record_tokens(record))
