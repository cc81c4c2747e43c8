"""Match-query language for limiting transformation scope.

Grammar: `reads:<name> | writes:<name> | tag:<name> | id:<glob> | all`,
combined with `not`, `and`, `or` and parentheses. ReadsVar matches reads
anywhere in the fully expanded instruction (rule invocations included).
"""

from __future__ import annotations

import fnmatch
import re
from dataclasses import dataclass

from .. import expr as ex
from .. import kernel as kn
from ..diagnostics import QuerySyntaxError


@dataclass(frozen=True)
class All:
    def matches(self, k, insn) -> bool:
        return True

    def __str__(self):
        return "all"


@dataclass(frozen=True)
class ReadsVar:
    name: str

    def matches(self, k: kn.Kernel, insn: kn.Instruction) -> bool:
        expanded = k.expanded_rhs(insn)
        if self.name in ex.referenced_arrays(expanded):
            return True
        if self.name in ex.free_variables(expanded):
            return True
        if insn.is_update and insn.assignee == self.name:
            return True
        for idx in insn.assignee_indices:
            if self.name in ex.referenced_arrays(idx) \
                    or self.name in ex.free_variables(idx):
                return True
        return False

    def __str__(self):
        return f"reads:{self.name}"


@dataclass(frozen=True)
class WritesVar:
    name: str

    def matches(self, k, insn) -> bool:
        return insn.assignee == self.name

    def __str__(self):
        return f"writes:{self.name}"


@dataclass(frozen=True)
class Tagged:
    tag: str

    def matches(self, k, insn) -> bool:
        return self.tag in insn.tags

    def __str__(self):
        return f"tag:{self.tag}"


@dataclass(frozen=True)
class IdGlob:
    pattern: str

    def matches(self, k, insn) -> bool:
        return fnmatch.fnmatchcase(insn.id, self.pattern)

    def __str__(self):
        return f"id:{self.pattern}"


@dataclass(frozen=True)
class Not:
    inner: "MatchPredicate"

    def matches(self, k, insn) -> bool:
        return not self.inner.matches(k, insn)

    def __str__(self):
        return f"not {self.inner}"


@dataclass(frozen=True)
class AndPred:
    parts: tuple["MatchPredicate", ...]

    def matches(self, k, insn) -> bool:
        return all(p.matches(k, insn) for p in self.parts)

    def __str__(self):
        return "(" + " and ".join(str(p) for p in self.parts) + ")"


@dataclass(frozen=True)
class OrPred:
    parts: tuple["MatchPredicate", ...]

    def matches(self, k, insn) -> bool:
        return any(p.matches(k, insn) for p in self.parts)

    def __str__(self):
        return "(" + " or ".join(str(p) for p in self.parts) + ")"


MatchPredicate = All | ReadsVar | WritesVar | Tagged | IdGlob | Not | AndPred | OrPred

_TOKEN = re.compile(r"\s*(\(|\)|[A-Za-z_][\w.*?:\[\]-]*|\S)")


def parse_match(text: str) -> MatchPredicate:
    tokens: list[str] = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            break
        tok = m.group(1)
        if not tok.strip():
            raise QuerySyntaxError(f"cannot tokenize match query at {text[pos:]!r}")
        tokens.append(tok)
        pos = m.end()

    idx = 0

    def peek():
        return tokens[idx] if idx < len(tokens) else None

    def take(expected=None):
        nonlocal idx
        tok = peek()
        if tok is None or (expected is not None and tok != expected):
            raise QuerySyntaxError(
                f"expected {expected!r}, got {tok!r} in match query {text!r}")
        idx += 1
        return tok

    def parse_or():
        parts = [parse_and()]
        while peek() == "or":
            take()
            parts.append(parse_and())
        return parts[0] if len(parts) == 1 else OrPred(tuple(parts))

    def parse_and():
        parts = [parse_unary()]
        while peek() == "and":
            take()
            parts.append(parse_unary())
        return parts[0] if len(parts) == 1 else AndPred(tuple(parts))

    def parse_unary():
        tok = peek()
        if tok == "not":
            take()
            return Not(parse_unary())
        if tok == "(":
            take()
            inner = parse_or()
            take(")")
            return inner
        return parse_atom()

    def parse_atom():
        tok = take()
        if tok == "all":
            return All()
        for prefix, cls in (("reads:", ReadsVar), ("writes:", WritesVar),
                            ("tag:", Tagged), ("id:", IdGlob)):
            if tok.startswith(prefix):
                arg = tok[len(prefix):]
                if not arg:
                    raise QuerySyntaxError(f"empty argument in {tok!r}")
                return cls(arg)
        raise QuerySyntaxError(f"bad match atom {tok!r}")

    out = parse_or()
    if peek() is not None:
        raise QuerySyntaxError(f"trailing tokens in match query {text!r}")
    return out
