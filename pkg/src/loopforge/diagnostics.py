"""Error types and non-throwing diagnostics shared by all loopforge modules."""

from __future__ import annotations

from dataclasses import dataclass


class LoopforgeError(Exception):
    """Base class for all loopforge errors."""


# expression evaluation / rewriting

class UnboundVariable(LoopforgeError):
    pass


class IndexOutOfBounds(LoopforgeError):
    pass


class DivisionByZero(LoopforgeError):
    pass


class UnknownRule(LoopforgeError):
    pass


class ArityMismatch(LoopforgeError):
    pass


class UnknownFunction(LoopforgeError):
    pass


# frontend

class SourceSyntaxError(LoopforgeError):
    def __init__(self, message: str, line: int, column: int | None = None):
        loc = f"line {line}" if column is None else f"line {line}, column {column}"
        super().__init__(f"{loc}: {message}")
        self.line = line
        self.column = column


class UnsupportedConstruct(LoopforgeError):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class ShadowedName(LoopforgeError):
    pass


class NonRectangularLoop(LoopforgeError):
    pass


class ScriptSyntaxError(LoopforgeError):
    pass


class UnknownCommand(LoopforgeError):
    pass


class BadArgument(LoopforgeError):
    pass


class QuerySyntaxError(LoopforgeError):
    pass


# kernel / transforms

class UnknownIname(LoopforgeError):
    pass


class DomainMismatch(LoopforgeError):
    def __init__(self, iname: str, detail: str = ""):
        msg = f"domain extents differ on iname '{iname}'"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)
        self.iname = iname


class ArgumentConflict(LoopforgeError):
    pass


class UnknownParameter(LoopforgeError):
    pass


class NonScalarParameter(LoopforgeError):
    pass


class MalformedConstraint(LoopforgeError):
    pass


class TaggedNotSequential(LoopforgeError):
    pass


class AxisConflict(LoopforgeError):
    pass


class VecExtentMismatch(LoopforgeError):
    pass


class ExtentMismatch(LoopforgeError):
    pass


class RankMismatch(LoopforgeError):
    pass


class NonLiteralExtent(LoopforgeError):
    pass


class NotDivisible(LoopforgeError):
    pass


class NonLiteralSubscript(LoopforgeError):
    pass


class MultipleVecAxes(LoopforgeError):
    pass


class BadPermutation(LoopforgeError):
    pass


class MultipleWriters(LoopforgeError):
    pass


class WriteAfterRead(LoopforgeError):
    pass


class VarReadInsideRule(LoopforgeError):
    pass


class FootprintNotAffine(LoopforgeError):
    pass


class VarIsWritten(LoopforgeError):
    pass


class FootprintMismatch(LoopforgeError):
    pass


class SpaceMismatch(LoopforgeError):
    pass


class MixedAccess(LoopforgeError):
    pass


class InvalidTransform(LoopforgeError):
    pass


class NoMatch(LoopforgeError):
    """Raised only when a warning-level no-match must abort; usually the
    transform logs a warning and returns the kernel unchanged."""


# schedule / codegen / exec

class SchedulingImpossible(LoopforgeError):
    pass


class UnfixedParameterInShape(LoopforgeError):
    pass


class VecAccessMisaligned(LoopforgeError):
    pass


class UnresolvedExtent(LoopforgeError):
    pass


class ExecutionError(LoopforgeError):
    pass


@dataclass(frozen=True)
class Diagnostic:
    """A non-fatal finding returned by consistency and validity checks."""

    kind: str
    message: str

    def __str__(self) -> str:
        return f"[{self.kind}] {self.message}"
