"""Parser for the imperative source subset.

Free-form source restricted to: subroutine/end subroutine, integer/real
declarations (optionally with dimension), unit-stride do loops starting at
1, assignments over +,-,*,/,** with parenthesized subscripts, `!` comments,
and `!$loopy` directives (tagged regions and the embedded transform block).
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .. import expr as ex
from ..diagnostics import SourceSyntaxError, UnsupportedConstruct


@dataclass
class Declaration:
    kind: str  # "integer" | "real"
    names: list[str]
    dimension: list[ex.Expression] | None
    line: int


@dataclass
class Assignment:
    target: str
    target_indices: list[ex.Expression] | None  # None for scalar targets
    rhs: ex.Expression
    line: int


@dataclass
class DoLoop:
    var: str
    extent: ex.Expression  # loop runs 1..extent, unit stride
    body: list["Statement"]
    line: int


Statement = Assignment | DoLoop


@dataclass
class Subroutine:
    name: str
    arg_names: list[str]
    declarations: list[Declaration]
    body: list[Statement]
    line: int


@dataclass
class SourceUnit:
    subroutines: list[Subroutine]
    transform_block: str | None
    tagged_regions: list[tuple[str, int, int]]  # (tag, first line, last line)


_UNSUPPORTED_HEADS = (
    "if", "select", "case", "where", "call", "goto", "while", "function",
    "module", "use", "implicit", "print", "write", "read", "return",
)

_DIRECTIVE = re.compile(r"^\s*!\$loopy\s+(.*)$", re.IGNORECASE)


class _FortranExprParser:
    """Expression grammar of the subset; name(...) is an array reference."""

    _TOKEN = re.compile(
        r"\s*(?:(?P<num>\d+\.\d*(?:[eEdD][+-]?\d+)?|\.\d+(?:[eEdD][+-]?\d+)?"
        r"|\d+[eEdD][+-]?\d+|\d+)"
        r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
        r"|(?P<op>\*\*|[-+*/(),]))")

    def __init__(self, text: str, line: int):
        self.text = text
        self.line = line
        self.tokens: list[tuple[str, str, int]] = []
        pos = 0
        while pos < len(text):
            m = self._TOKEN.match(text, pos)
            if not m:
                if text[pos:].strip():
                    raise SourceSyntaxError(
                        f"cannot tokenize {text[pos:].strip()!r}", line, pos + 1)
                break
            for kind in ("num", "name", "op"):
                if m.group(kind) is not None:
                    self.tokens.append((kind, m.group(kind), m.start(kind) + 1))
                    break
            pos = m.end()
        self.pos = 0

    def peek(self):
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def take(self, value=None):
        tok = self.peek()
        if tok is None or (value is not None and tok[1] != value):
            got = tok[1] if tok else "end of statement"
            raise SourceSyntaxError(f"expected {value!r}, got {got!r}",
                                    self.line, tok[2] if tok else None)
        self.pos += 1
        return tok

    def parse(self) -> ex.Expression:
        e = self.expr()
        if self.peek() is not None:
            raise SourceSyntaxError(
                f"trailing input {self.peek()[1]!r}", self.line, self.peek()[2])
        return e

    def expr(self):
        if self.peek() and self.peek()[1] in "+-":
            sign = self.take()[1]
            e = self.term()
            if sign == "-":
                e = ex.UnaryOp("neg", e)
        else:
            e = self.term()
        while self.peek() and self.peek()[1] in "+-":
            op = self.take()[1]
            e = ex.BinaryOp("add" if op == "+" else "sub", e, self.term())
        return e

    def term(self):
        e = self.power()
        while self.peek() and self.peek()[1] in "*/":
            op = self.take()[1]
            e = ex.BinaryOp("mul" if op == "*" else "div", e, self.power())
        return e

    def power(self):
        e = self.unary()
        if self.peek() and self.peek()[1] == "**":
            self.take()
            return ex.BinaryOp("pow", e, self.power())
        return e

    def unary(self):
        if self.peek() and self.peek()[1] == "-":
            self.take()
            return ex.UnaryOp("neg", self.unary())
        return self.atom()

    def atom(self):
        tok = self.peek()
        if tok is None:
            raise SourceSyntaxError("unexpected end of expression", self.line)
        kind, value, col = self.take()
        if kind == "num":
            if re.fullmatch(r"\d+", value):
                return ex.lit(int(value))
            return ex.lit(float(value.lower().replace("d", "e")), ex.F32)
        if kind == "name":
            nxt = self.peek()
            if nxt and nxt[1] == "(":
                self.take("(")
                args = [self.expr()]
                while self.peek() and self.peek()[1] == ",":
                    self.take(",")
                    args.append(self.expr())
                self.take(")")
                return ex.Subscript(value, tuple(args))
            return ex.var(value)
        if value == "(":
            e = self.expr()
            self.take(")")
            return e
        raise SourceSyntaxError(f"unexpected token {value!r}", self.line, col)


def _parse_expr(text: str, line: int) -> ex.Expression:
    return _FortranExprParser(text, line).parse()


def _split_top_level(text: str, sep: str) -> list[str]:
    parts, depth, cur = [], 0, []
    for ch in text:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        if ch == sep and depth == 0:
            parts.append("".join(cur))
            cur = []
        else:
            cur.append(ch)
    parts.append("".join(cur))
    return parts


def parse_source(text: str) -> SourceUnit:
    """Parse a source file of the subset into subroutine ASTs, tagged
    regions and the verbatim transform comment block."""
    subroutines: list[Subroutine] = []
    transform_lines: list[str] | None = None
    transform_block: str | None = None
    regions: list[tuple[str, int, int]] = []
    open_regions: dict[str, int] = {}

    current: Subroutine | None = None
    stack: list[list[Statement]] = []
    loop_stack: list[DoLoop] = []
    in_transform = False

    for lineno, raw in enumerate(text.splitlines(), start=1):
        directive = _DIRECTIVE.match(raw)
        if directive:
            d = directive.group(1).strip()
            if d.lower() == "begin transform":
                if in_transform:
                    raise SourceSyntaxError("nested transform block", lineno)
                in_transform = True
                transform_lines = []
                continue
            if d.lower() == "end transform":
                if not in_transform:
                    raise SourceSyntaxError(
                        "end transform without begin", lineno)
                in_transform = False
                transform_block = "\n".join(transform_lines or [])
                continue
            m = re.fullmatch(r"begin tagged:\s*([A-Za-z_][A-Za-z_0-9]*)", d)
            if m:
                tag = m.group(1)
                if tag in open_regions:
                    raise SourceSyntaxError(
                        f"region {tag!r} already open", lineno)
                open_regions[tag] = lineno
                continue
            m = re.fullmatch(r"end tagged:\s*([A-Za-z_][A-Za-z_0-9]*)", d)
            if m:
                tag = m.group(1)
                if tag not in open_regions:
                    raise SourceSyntaxError(
                        f"region {tag!r} closed but not open", lineno)
                regions.append((tag, open_regions.pop(tag), lineno))
                continue
            raise SourceSyntaxError(f"unknown directive {d!r}", lineno)

        if in_transform:
            assert transform_lines is not None
            stripped = raw.strip()
            if stripped.startswith("!"):
                stripped = stripped[1:].lstrip()
            transform_lines.append(stripped)
            continue

        # ordinary line: strip comment, skip blanks
        line = raw.split("!", 1)[0].strip()
        if not line:
            continue
        low = line.lower()

        m = re.fullmatch(r"subroutine\s+(\w+)\s*\(([^)]*)\)", line,
                         re.IGNORECASE)
        if m:
            if current is not None:
                raise SourceSyntaxError("nested subroutine", lineno)
            args = [a.strip() for a in m.group(2).split(",") if a.strip()]
            current = Subroutine(m.group(1), args, [], [], lineno)
            stack = [current.body]
            continue
        if re.fullmatch(r"end\s+subroutine(\s+\w+)?", low):
            if current is None:
                raise SourceSyntaxError("end subroutine outside subroutine",
                                        lineno)
            if loop_stack:
                raise SourceSyntaxError(
                    f"unclosed do loop from line {loop_stack[-1].line}", lineno)
            subroutines.append(current)
            current = None
            stack = []
            continue
        if current is None:
            raise SourceSyntaxError(f"statement outside subroutine: {line!r}",
                                    lineno)

        if "::" in line:
            head, names_part = line.split("::", 1)
            specs = _split_top_level(head.strip(), ",")
            kind = specs[0].strip().lower()
            if kind not in ("integer", "real"):
                raise UnsupportedConstruct(f"declaration type {kind!r}", lineno)
            dimension = None
            for spec in specs[1:]:
                spec = spec.strip()
                dm = re.fullmatch(r"dimension\s*\((.*)\)", spec, re.IGNORECASE)
                if dm:
                    dimension = [
                        _parse_expr(p.strip(), lineno)
                        for p in _split_top_level(dm.group(1), ",")
                    ]
                else:
                    raise UnsupportedConstruct(
                        f"declaration attribute {spec!r}", lineno)
            names = [n.strip() for n in names_part.split(",") if n.strip()]
            for n in names:
                if not re.fullmatch(r"[A-Za-z_]\w*", n):
                    raise SourceSyntaxError(f"bad declared name {n!r}", lineno)
            current.declarations.append(
                Declaration(kind, names, dimension, lineno))
            continue

        dm = re.fullmatch(r"do\s+(\w+)\s*=\s*(.+)", line, re.IGNORECASE)
        if dm and low.startswith("do ") or low == "do":
            if not dm:
                raise SourceSyntaxError("malformed do statement", lineno)
            bounds = _split_top_level(dm.group(2), ",")
            if len(bounds) == 3:
                raise UnsupportedConstruct("non-unit loop stride", lineno)
            if len(bounds) != 2:
                raise SourceSyntaxError("do statement needs lower, upper",
                                        lineno)
            lower = _parse_expr(bounds[0].strip(), lineno)
            if not (isinstance(lower, ex.NumericLiteral) and lower.value == 1):
                raise UnsupportedConstruct(
                    "do loop must start at 1 (unit lower bound)", lineno)
            loop = DoLoop(dm.group(1), _parse_expr(bounds[1].strip(), lineno),
                          [], lineno)
            stack[-1].append(loop)
            stack.append(loop.body)
            loop_stack.append(loop)
            continue
        if re.fullmatch(r"end\s*do", low):
            if not loop_stack:
                raise SourceSyntaxError("end do without do", lineno)
            loop_stack.pop()
            stack.pop()
            continue

        head_word = re.match(r"[A-Za-z_]\w*", low)
        if head_word and head_word.group(0) in _UNSUPPORTED_HEADS:
            raise UnsupportedConstruct(
                f"{head_word.group(0)!r} statement", lineno)

        if "=" in line:
            lhs_text, rhs_text = line.split("=", 1)
            lhs = _parse_expr(lhs_text.strip(), lineno)
            rhs = _parse_expr(rhs_text.strip(), lineno)
            if isinstance(lhs, ex.Subscript):
                stack[-1].append(Assignment(
                    lhs.array, list(lhs.indices), rhs, lineno))
            elif isinstance(lhs, ex.VariableRef):
                stack[-1].append(Assignment(lhs.name, None, rhs, lineno))
            else:
                raise SourceSyntaxError("bad assignment target", lineno)
            continue

        raise SourceSyntaxError(f"cannot parse statement {line!r}", lineno)

    if in_transform:
        raise SourceSyntaxError("transform block never closed", 0)
    if open_regions:
        tag, start = next(iter(open_regions.items()))
        raise SourceSyntaxError(f"tagged region {tag!r} never closed", start)
    if current is not None:
        raise SourceSyntaxError("subroutine never closed", current.line)

    return SourceUnit(subroutines, transform_block, regions)
