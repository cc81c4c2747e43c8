"""Kernel intermediate representation.

A kernel is a parametric-box loop domain (each iname ranges over
[0, extent)), a partially ordered sequence of assignment instructions,
array/scalar declarations, substitution rules, iname implementation tags,
and scheduling directives (loop priority, assumptions, alias groups).

Kernels are immutable values; every transformation produces a new kernel.
Substitution-rule bodies are closed over inames: any iname dependence is
threaded through rule parameters, never referenced from the body directly.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from typing import Iterable

from . import expr as ex
from .diagnostics import Diagnostic, UnknownIname

GLOBAL = "global"
SCRATCHPAD = "scratchpad"
PRIVATE = "private"
SPACES = (GLOBAL, SCRATCHPAD, PRIVATE)


# array axis implementation tags

@dataclass(frozen=True)
class NestingOrder:
    """Stride rank of a non-vector axis; rank 0 varies fastest after vec."""
    rank: int

    def __str__(self):
        return f"N{self.rank}"


@dataclass(frozen=True)
class VecAxis:
    """Axis realized as the lanes of a short vector; always the fastest."""

    def __str__(self):
        return "vec"


DimTag = NestingOrder | VecAxis


# iname implementation tags

@dataclass(frozen=True)
class Sequential:
    def __str__(self):
        return "seq"


@dataclass(frozen=True)
class CoreAxis:
    axis: int

    def __str__(self):
        return f"core.{self.axis}"


@dataclass(frozen=True)
class LaneAxis:
    axis: int
    extent: int

    def __str__(self):
        return f"lane.{self.axis}"


@dataclass(frozen=True)
class VecIname:
    def __str__(self):
        return "vec"


@dataclass(frozen=True)
class UnrollIname:
    def __str__(self):
        return "unroll"


InameTag = Sequential | CoreAxis | LaneAxis | VecIname | UnrollIname


@dataclass(frozen=True)
class ScalarParam:
    name: str
    dtype: str = ex.I32


@dataclass(frozen=True)
class ArrayDescriptor:
    name: str
    shape: tuple[ex.Expression, ...]
    dtype: str = ex.F32
    space: str = GLOBAL
    axis_names: tuple[str, ...] | None = None
    dim_tags: tuple[DimTag, ...] | None = None

    @property
    def rank(self) -> int:
        return len(self.shape)

    def literal_shape(self) -> tuple[int, ...] | None:
        out = []
        for s in self.shape:
            if not isinstance(s, ex.NumericLiteral):
                return None
            out.append(int(s.value))
        return tuple(out)

    def vec_axis(self) -> int | None:
        if self.dim_tags is None:
            return None
        for i, t in enumerate(self.dim_tags):
            if isinstance(t, VecAxis):
                return i
        return None


@dataclass(frozen=True)
class LoopDomain:
    """Ordered inames with extents over parameters, plus the parameter set."""

    inames: tuple[tuple[str, ex.Expression], ...]
    parameters: tuple[str, ...]

    def names(self) -> list[str]:
        return [n for n, _ in self.inames]

    def __contains__(self, name: str) -> bool:
        return any(n == name for n, _ in self.inames)

    def extent(self, name: str) -> ex.Expression:
        for n, e in self.inames:
            if n == name:
                return e
        raise UnknownIname(f"no iname {name!r} in domain")

    def with_iname(self, name: str, extent: ex.Expression) -> "LoopDomain":
        if name in self:
            raise ValueError(f"iname {name!r} already in domain")
        return LoopDomain(self.inames + ((name, extent),), self.parameters)

    def without_iname(self, name: str) -> "LoopDomain":
        return LoopDomain(
            tuple((n, e) for n, e in self.inames if n != name), self.parameters)


@dataclass(frozen=True)
class Instruction:
    """One assignment; `is_update` marks read-modify-write accumulation,
    whose rhs holds only the added increment."""

    id: str
    assignee: str
    assignee_indices: tuple[ex.Expression, ...]
    rhs: ex.Expression
    is_update: bool = False
    within_inames: frozenset[str] = frozenset()
    depends_on: frozenset[str] = frozenset()
    tags: frozenset[str] = frozenset()

    def copy(self, **kw) -> "Instruction":
        return replace(self, **kw)


@dataclass(frozen=True)
class Assumption:
    param: str
    op: str  # > >= < <= ==
    value: int

    def __str__(self):
        return f"{self.param} {self.op} {self.value}"


@dataclass(frozen=True, eq=True)
class Kernel:
    name: str
    domain: LoopDomain
    instructions: tuple[Instruction, ...]
    args: tuple[ArrayDescriptor | ScalarParam, ...]
    temporaries: tuple[ArrayDescriptor, ...] = ()
    rules: ex.RuleRegistry = field(default_factory=ex.RuleRegistry)
    iname_tags: tuple[tuple[str, InameTag], ...] = ()
    loop_priority: tuple[str, ...] = ()
    assumptions: tuple[Assumption, ...] = ()
    aliases: tuple[tuple[str, ...], ...] = ()

    def copy(self, **kw) -> "Kernel":
        return replace(self, **kw)

    # declarations

    def arrays(self) -> dict[str, ArrayDescriptor]:
        out = {}
        for a in self.args:
            if isinstance(a, ArrayDescriptor):
                out[a.name] = a
        for t in self.temporaries:
            out[t.name] = t
        return out

    def array(self, name: str) -> ArrayDescriptor:
        d = self.arrays().get(name)
        if d is None:
            raise KeyError(f"no array {name!r} in kernel {self.name!r}")
        return d

    def scalar_params(self) -> dict[str, ScalarParam]:
        return {a.name: a for a in self.args if isinstance(a, ScalarParam)}

    def temporaries_by_name(self) -> dict[str, ArrayDescriptor]:
        return {t.name: t for t in self.temporaries}

    def instruction(self, insn_id: str) -> Instruction:
        for i in self.instructions:
            if i.id == insn_id:
                return i
        raise KeyError(f"no instruction {insn_id!r}")

    # iname tags

    def tag_of(self, iname: str) -> InameTag:
        for n, t in self.iname_tags:
            if n == iname:
                return t
        return Sequential()

    def is_sequential(self, iname: str) -> bool:
        return isinstance(self.tag_of(iname), (Sequential, UnrollIname))

    def sequential_within(self, insn: Instruction) -> list[str]:
        """Instruction's sequential within-inames in domain order."""
        return [n for n in self.domain.names()
                if n in insn.within_inames and self.is_sequential(n)]

    def core_inames(self) -> list[tuple[str, CoreAxis]]:
        return [(n, t) for n, t in self.iname_tags if isinstance(t, CoreAxis)]

    def lane_inames(self) -> list[tuple[str, LaneAxis]]:
        return [(n, t) for n, t in self.iname_tags if isinstance(t, LaneAxis)]

    def lane_grid(self) -> tuple[int, ...]:
        """Extent per lane axis (validated equal across same-axis inames)."""
        per_axis: dict[int, int] = {}
        for _n, t in self.lane_inames():
            per_axis.setdefault(t.axis, t.extent)
        if not per_axis:
            return ()
        return tuple(per_axis[a] for a in sorted(per_axis))

    # expression helpers

    def expanded_rhs(self, insn: Instruction) -> ex.Expression:
        """Instruction rhs with every rule invocation expanded (cached; the
        cache lives outside the dataclass fields and never enters eq)."""
        cache = self.__dict__.get("_expand_cache")
        if cache is None:
            cache = {}
            object.__setattr__(self, "_expand_cache", cache)
        out = cache.get(insn.id)
        if out is None:
            out = ex.expand_rules(insn.rhs, self.rules)
            cache[insn.id] = out
        return out

    def readers_of(self, name: str) -> list[Instruction]:
        out = []
        for i in self.instructions:
            refs = ex.referenced_arrays(self.expanded_rhs(i))
            fv = ex.free_variables(self.expanded_rhs(i))
            idx_refs = set()
            for idx in i.assignee_indices:
                idx_refs.update(ex.referenced_arrays(idx))
                idx_refs.update(ex.free_variables(idx))
            if name in refs or name in fv or name in idx_refs:
                out.append(i)
        return out

    def writers_of(self, name: str) -> list[Instruction]:
        return [i for i in self.instructions if i.assignee == name]


# consistency checking

_IDENT = re.compile(r"^[A-Za-z_][A-Za-z_0-9]*$")


def check_consistency(k: Kernel) -> list[Diagnostic]:
    """Return an empty list iff the kernel satisfies every IR invariant."""
    diags: list[Diagnostic] = []

    def bad(kind, msg):
        diags.append(Diagnostic(kind, msg))

    iname_names = k.domain.names()
    if len(set(iname_names)) != len(iname_names):
        bad("domain", "duplicate iname names")
    params = set(k.domain.parameters)
    arrays = {}
    declared = set()
    for a in list(k.args) + list(k.temporaries):
        if a.name in declared:
            bad("decl", f"name {a.name!r} declared more than once")
        declared.add(a.name)
        if isinstance(a, ArrayDescriptor):
            arrays[a.name] = a
    for p in k.domain.parameters:
        if p not in declared:
            bad("decl", f"domain parameter {p!r} is not declared as an argument")
    for n in iname_names:
        if n in declared:
            bad("domain", f"iname {n!r} collides with a declared name")

    for n, extent in k.domain.inames:
        for v in ex.free_variables(extent):
            if v not in params:
                bad("domain", f"extent of iname {n!r} references non-parameter {v!r}")

    scalar_names = {a.name for a in k.args if isinstance(a, ScalarParam)}
    scalar_names |= {t.name for t in k.temporaries if t.rank == 0}

    # array descriptor invariants
    for a in arrays.values():
        if a.space not in SPACES:
            bad("array", f"{a.name!r}: unknown space {a.space!r}")
        if a.axis_names is not None and len(a.axis_names) != a.rank:
            bad("array", f"{a.name!r}: {len(a.axis_names)} axis names for rank {a.rank}")
        if a.dim_tags is not None:
            if len(a.dim_tags) != a.rank:
                bad("array", f"{a.name!r}: {len(a.dim_tags)} dim tags for rank {a.rank}")
            vecs = [i for i, t in enumerate(a.dim_tags) if isinstance(t, VecAxis)]
            if len(vecs) > 1:
                bad("array", f"{a.name!r}: more than one vec axis")
            if vecs and not isinstance(a.shape[vecs[0]], ex.NumericLiteral):
                bad("array", f"{a.name!r}: vec axis extent is not a literal")
            ranks = sorted(t.rank for t in a.dim_tags if isinstance(t, NestingOrder))
            if ranks != list(range(len(ranks))):
                bad("array", f"{a.name!r}: nesting ranks {ranks} are not a permutation")

    # iname tag invariants
    tagged = set()
    axis_extents: dict[tuple[str, int], list[tuple[str, object]]] = {}
    for n, t in k.iname_tags:
        if n in tagged:
            bad("tags", f"iname {n!r} tagged twice")
        tagged.add(n)
        if n not in k.domain:
            bad("tags", f"tag on unknown iname {n!r}")
            continue
        if isinstance(t, LaneAxis):
            extent = k.domain.extent(n)
            if not isinstance(extent, ex.NumericLiteral) or int(extent.value) != t.extent:
                bad("tags", f"lane iname {n!r}: tag extent {t.extent} does not "
                            f"match domain extent {ex.format_expression(extent)}")
            axis_extents.setdefault(("lane", t.axis), []).append((n, t.extent))
        if isinstance(t, CoreAxis):
            axis_extents.setdefault(("core", t.axis), []).append(
                (n, ex.format_expression(k.domain.extent(n))))
        if isinstance(t, VecIname):
            extent = k.domain.extent(n)
            if not isinstance(extent, ex.NumericLiteral):
                bad("tags", f"vec iname {n!r} has non-literal extent")
    for (kind, axis), entries in axis_extents.items():
        extents = {e for _n, e in entries}
        if len(extents) > 1:
            bad("tags", f"{kind} axis {axis}: inames {[n for n, _ in entries]} "
                        f"have differing extents {sorted(map(str, extents))}")

    # instruction invariants
    ids = set()
    by_id = {}
    for insn in k.instructions:
        if insn.id in ids:
            bad("insn", f"duplicate instruction id {insn.id!r}")
        ids.add(insn.id)
        by_id[insn.id] = insn
    for insn in k.instructions:
        for w in insn.within_inames:
            if w not in k.domain:
                bad("insn", f"{insn.id}: within iname {w!r} not in domain")
        # at most one within-iname per core/lane axis
        per_axis: dict[tuple[str, int], list[str]] = {}
        for w in insn.within_inames:
            t = k.tag_of(w)
            if isinstance(t, LaneAxis):
                per_axis.setdefault(("lane", t.axis), []).append(w)
            elif isinstance(t, CoreAxis):
                per_axis.setdefault(("core", t.axis), []).append(w)
        for (kind, axis), names in per_axis.items():
            if len(names) > 1:
                bad("insn", f"{insn.id}: inames {sorted(names)} both map to "
                            f"{kind} axis {axis}")
        if insn.assignee not in arrays and insn.assignee not in scalar_names:
            bad("insn", f"{insn.id}: assignee {insn.assignee!r} is not declared")
        elif insn.assignee in arrays:
            d = arrays[insn.assignee]
            if len(insn.assignee_indices) != d.rank:
                bad("insn", f"{insn.id}: assignee rank mismatch for {insn.assignee!r}")
        try:
            expanded = k.expanded_rhs(insn)
        except Exception as err:  # rule problems surface in registry check too
            bad("insn", f"{insn.id}: rhs does not expand: {err}")
            continue
        exprs = [expanded] + list(insn.assignee_indices)
        for e in exprs:
            for v in ex.free_variables(e):
                if v in k.domain:
                    if v not in insn.within_inames:
                        bad("insn", f"{insn.id}: references iname {v!r} outside "
                                    f"its within set")
                elif v not in params and v not in scalar_names:
                    bad("insn", f"{insn.id}: unbound name {v!r}")
            for node in ex.walk(e):
                if isinstance(node, ex.Subscript):
                    d = arrays.get(node.array)
                    if d is None:
                        bad("insn", f"{insn.id}: subscript of undeclared array "
                                    f"{node.array!r}")
                    elif len(node.indices) != d.rank:
                        bad("insn", f"{insn.id}: rank mismatch subscripting "
                                    f"{node.array!r}")
        for dep in insn.depends_on:
            if dep not in ids:
                bad("insn", f"{insn.id}: depends on unknown instruction {dep!r}")

    # dependency acyclicity
    color: dict[str, int] = {}

    def visit(iid: str) -> bool:
        color[iid] = 1
        for dep in sorted(by_id[iid].depends_on):
            if dep not in by_id:
                continue
            c = color.get(dep, 0)
            if c == 1 or (c == 0 and visit(dep)):
                return True
        color[iid] = 2
        return False

    for iid in sorted(ids):
        if color.get(iid, 0) == 0 and visit(iid):
            bad("deps", f"dependency cycle involving {iid!r}")
            break

    # rules: registry well-formedness + iname-closed bodies
    for p in k.rules.check():
        bad("rules", p)
    for rule in k.rules:
        body_free = ex.free_variables(rule.body)
        for v in body_free:
            if v in rule.params:
                continue
            if v in k.domain:
                bad("rules", f"rule {rule.name!r} references iname {v!r} "
                             f"directly (must be threaded through a parameter)")
            elif v not in params and v not in scalar_names:
                bad("rules", f"rule {rule.name!r}: unbound name {v!r}")

    # alias groups
    temps = k.temporaries_by_name()
    for group in k.aliases:
        fps = set()
        spaces = set()
        for name in group:
            d = temps.get(name)
            if d is None:
                bad("alias", f"alias member {name!r} is not a temporary")
                continue
            spaces.add(d.space)
            shape = d.literal_shape()
            if shape is None:
                bad("alias", f"alias member {name!r} has non-literal shape")
            else:
                n = 1
                for s in shape:
                    n *= s
                fps.add(n * 4)
        if len(fps) > 1:
            bad("alias", f"alias group {group}: byte footprints differ {sorted(fps)}")
        if len(spaces) > 1:
            bad("alias", f"alias group {group}: spaces differ {sorted(spaces)}")

    # assumptions / priority
    for a in k.assumptions:
        if a.param not in params:
            bad("assume", f"assumption on unknown parameter {a.param!r}")
    for n in k.loop_priority:
        if n not in k.domain:
            bad("priority", f"loop priority names unknown iname {n!r}")

    return diags


def domain_projection(k: Kernel, subset: Iterable[str]) -> dict[str, ex.Expression]:
    """Extents of exactly the requested inames (box projection)."""
    out = {}
    for name in subset:
        out[name] = k.domain.extent(name)  # raises UnknownIname
    return out


def alias_storage_of(k: Kernel, temp: str) -> str:
    """Name of the storage unit holding `temp` (its alias group leader)."""
    for group in k.aliases:
        if temp in group:
            return group[0]
    return temp


# text dump / parse

def _fmt_tag(t: InameTag) -> str:
    return str(t)


def dump_kernel(k: Kernel) -> str:
    """Human-readable, re-parseable kernel dump; stable across runs."""
    lines = [f"kernel {k.name}"]
    for a in k.args:
        if isinstance(a, ScalarParam):
            lines.append(f"param {a.name} : {a.dtype}")
    for n, extent in k.domain.inames:
        tag = k.tag_of(n)
        suffix = "" if isinstance(tag, Sequential) else f" tag={_fmt_tag(tag)}"
        lines.append(f"iname {n} : {ex.format_expression(extent)}{suffix}")
    for a in k.args:
        if isinstance(a, ArrayDescriptor):
            lines.append("arg " + _fmt_array(a))
    for t in k.temporaries:
        lines.append("temp " + _fmt_array(t))
    for a in k.assumptions:
        lines.append(f"assume {a}")
    if k.loop_priority:
        lines.append("priority " + ", ".join(k.loop_priority))
    for group in k.aliases:
        lines.append("alias " + ", ".join(group))
    for r in k.rules:
        lines.append(f"rule {r.name}({', '.join(r.params)}) := "
                     f"{ex.format_expression(r.body)}")
    order = {n: i for i, n in enumerate(k.domain.names())}
    for i in k.instructions:
        if i.assignee_indices:
            target = f"{i.assignee}[{', '.join(ex.format_expression(x) for x in i.assignee_indices)}]"
        else:
            target = i.assignee
        arrow = "<+-" if i.is_update else "<-"
        within = ", ".join(sorted(i.within_inames, key=lambda n: order.get(n, 99)))
        deps = ", ".join(sorted(i.depends_on))
        tags = ", ".join(sorted(i.tags))
        lines.append(f"insn {i.id}: {target} {arrow} {ex.format_expression(i.rhs)} "
                     f"{{{within}}} deps=({deps}) tags=({tags})")
    return "\n".join(lines) + "\n"


def _fmt_array(a: ArrayDescriptor) -> str:
    shape = ", ".join(ex.format_expression(s) for s in a.shape)
    out = f"{a.name} : {a.dtype} {a.space} [{shape}]"
    if a.axis_names is not None:
        out += f" axes=({', '.join(a.axis_names)})"
    if a.dim_tags is not None:
        out += f" dims=({', '.join(str(t) for t in a.dim_tags)})"
    return out


class _ExprParser:
    """Parser for the dump format's expression sub-language."""

    _TOKEN = re.compile(
        r"\s*(?:(?P<num>\d+\.\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?"
        r"|\d+[eE][+-]?\d+|\d+)"
        r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
        r"|(?P<op>\*\*|[-+*/(),\[\]]))")

    def __init__(self, text: str, rule_names: set[str]):
        self.tokens: list[tuple[str, str]] = []
        pos = 0
        while pos < len(text):
            m = self._TOKEN.match(text, pos)
            if not m:
                if text[pos:].strip():
                    raise ValueError(f"cannot tokenize {text[pos:]!r}")
                break
            pos = m.end()
            for kind in ("num", "name", "op"):
                if m.group(kind) is not None:
                    self.tokens.append((kind, m.group(kind)))
                    break
        self.pos = 0
        self.rule_names = rule_names

    def peek(self) -> tuple[str, str] | None:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def take(self, value: str | None = None) -> tuple[str, str]:
        tok = self.peek()
        if tok is None or (value is not None and tok[1] != value):
            raise ValueError(f"expected {value!r}, got {tok!r}")
        self.pos += 1
        return tok

    def parse(self) -> ex.Expression:
        e = self.expr()
        if self.peek() is not None:
            raise ValueError(f"trailing tokens at {self.peek()!r}")
        return e

    def expr(self) -> ex.Expression:
        e = self.term()
        while self.peek() and self.peek()[1] in "+-" and self.peek()[0] == "op":
            op = self.take()[1]
            e = ex.BinaryOp("add" if op == "+" else "sub", e, self.term())
        return e

    def term(self) -> ex.Expression:
        e = self.power()
        while self.peek() and self.peek()[1] in "*/" and self.peek()[0] == "op":
            op = self.take()[1]
            e = ex.BinaryOp("mul" if op == "*" else "div", e, self.power())
        return e

    def power(self) -> ex.Expression:
        e = self.unary()
        if self.peek() and self.peek()[1] == "**":
            self.take()
            return ex.BinaryOp("pow", e, self.power())
        return e

    def unary(self) -> ex.Expression:
        if self.peek() and self.peek()[1] == "-":
            self.take()
            return ex.UnaryOp("neg", self.unary())
        return self.atom()

    def atom(self) -> ex.Expression:
        kind, value = self.take()
        if kind == "num":
            if re.fullmatch(r"\d+", value):
                return ex.lit(int(value))
            return ex.lit(float(value), ex.F32)
        if kind == "name":
            nxt = self.peek()
            if nxt and nxt[1] == "(":
                self.take("(")
                args = self.args(")")
                if value in self.rule_names:
                    return ex.RuleInvocation(value, tuple(args))
                return ex.Call(value, tuple(args))
            if nxt and nxt[1] == "[":
                self.take("[")
                return ex.Subscript(value, tuple(self.args("]")))
            return ex.var(value)
        if value == "(":
            e = self.expr()
            self.take(")")
            return e
        raise ValueError(f"unexpected token {value!r}")

    def args(self, closer: str) -> list[ex.Expression]:
        out: list[ex.Expression] = []
        if self.peek() and self.peek()[1] == closer:
            self.take(closer)
            return out
        out.append(self.expr())
        while self.peek() and self.peek()[1] == ",":
            self.take(",")
            out.append(self.expr())
        self.take(closer)
        return out


def parse_expression(text: str, rule_names: set[str] | None = None) -> ex.Expression:
    return _ExprParser(text, rule_names or set()).parse()


_INSN_RE = re.compile(
    r"insn\s+(?P<id>\S+):\s+(?P<target>.+?)\s+(?P<arrow><\+-|<-)\s+(?P<rest>.*)$")
_RULE_RE = re.compile(r"rule\s+(?P<name>\w+)\((?P<params>[^)]*)\)\s+:=\s+(?P<body>.*)$")


def parse_kernel_dump(text: str) -> Kernel:
    """Re-read a dump produced by dump_kernel into a structurally equal kernel."""
    name = None
    params: list[ScalarParam] = []
    inames: list[tuple[str, ex.Expression]] = []
    tags: list[tuple[str, InameTag]] = []
    args: list[ArrayDescriptor | ScalarParam] = []
    temps: list[ArrayDescriptor] = []
    assumptions: list[Assumption] = []
    priority: tuple[str, ...] = ()
    aliases: list[tuple[str, ...]] = []
    rule_lines: list[tuple[str, tuple[str, ...], str]] = []
    insn_lines: list[str] = []

    lines = [ln.rstrip() for ln in text.splitlines() if ln.strip()]
    for ln in lines:
        head = ln.split(None, 1)[0]
        if head == "kernel":
            name = ln.split(None, 1)[1].strip()
        elif head == "param":
            pname, dtype = [p.strip() for p in ln[len("param"):].split(":")]
            params.append(ScalarParam(pname, dtype))
        elif head == "iname":
            body = ln[len("iname"):].strip()
            iname_part, _, tag_part = body.partition(" tag=")
            nm, extent_text = [p.strip() for p in iname_part.split(":", 1)]
            inames.append((nm, parse_expression(extent_text)))
            if tag_part:
                tags.append((nm, _parse_iname_tag(tag_part.strip(), inames[-1][1])))
        elif head in ("arg", "temp"):
            d = _parse_array_line(ln[len(head):].strip())
            (args if head == "arg" else temps).append(d)
        elif head == "assume":
            m = re.fullmatch(r"assume\s+(\w+)\s*(>=|<=|==|>|<)\s*(-?\d+)", ln)
            if not m:
                raise ValueError(f"bad assume line: {ln!r}")
            assumptions.append(Assumption(m.group(1), m.group(2), int(m.group(3))))
        elif head == "priority":
            priority = tuple(p.strip() for p in ln[len("priority"):].split(","))
        elif head == "alias":
            aliases.append(tuple(p.strip() for p in ln[len("alias"):].split(",")))
        elif head == "rule":
            m = _RULE_RE.match(ln)
            if not m:
                raise ValueError(f"bad rule line: {ln!r}")
            ps = tuple(p.strip() for p in m.group("params").split(",") if p.strip())
            rule_lines.append((m.group("name"), ps, m.group("body")))
        elif head == "insn":
            insn_lines.append(ln)
        else:
            raise ValueError(f"unknown dump line: {ln!r}")

    rule_names = {r[0] for r in rule_lines}
    rules = ex.RuleRegistry(
        ex.SubstitutionRule(nm, ps, parse_expression(body, rule_names))
        for nm, ps, body in rule_lines)

    instructions = []
    for ln in insn_lines:
        m = _INSN_RE.match(ln)
        if not m:
            raise ValueError(f"bad insn line: {ln!r}")
        rest = m.group("rest")
        rm = re.fullmatch(
            r"(?P<rhs>.*?)\s+\{(?P<within>[^}]*)\}\s+deps=\((?P<deps>[^)]*)\)"
            r"\s+tags=\((?P<tags>[^)]*)\)", rest)
        if not rm:
            raise ValueError(f"bad insn tail: {rest!r}")
        target = parse_expression(m.group("target"), rule_names)
        if isinstance(target, ex.Subscript):
            assignee, indices = target.array, target.indices
        elif isinstance(target, ex.VariableRef):
            assignee, indices = target.name, ()
        else:
            raise ValueError(f"bad assignment target in {ln!r}")
        split = lambda s: frozenset(x.strip() for x in s.split(",") if x.strip())  # noqa: E731
        instructions.append(Instruction(
            id=m.group("id"),
            assignee=assignee,
            assignee_indices=indices,
            rhs=parse_expression(rm.group("rhs"), rule_names),
            is_update=m.group("arrow") == "<+-",
            within_inames=split(rm.group("within")),
            depends_on=split(rm.group("deps")),
            tags=split(rm.group("tags")),
        ))

    if name is None:
        raise ValueError("dump has no kernel line")
    domain_params = tuple(p.name for p in params if p.dtype == ex.I32)
    return Kernel(
        name=name,
        domain=LoopDomain(tuple(inames), domain_params),
        instructions=tuple(instructions),
        args=tuple(params) + tuple(a for a in args),
        temporaries=tuple(temps),
        rules=rules,
        iname_tags=tuple(tags),
        loop_priority=priority,
        assumptions=tuple(assumptions),
        aliases=tuple(aliases),
    )


def _parse_iname_tag(text: str, extent: ex.Expression) -> InameTag:
    if text == "seq":
        return Sequential()
    if text == "vec":
        return VecIname()
    if text == "unroll":
        return UnrollIname()
    m = re.fullmatch(r"core\.(\d+)", text)
    if m:
        return CoreAxis(int(m.group(1)))
    m = re.fullmatch(r"lane\.(\d+)", text)
    if m:
        if not isinstance(extent, ex.NumericLiteral):
            raise ValueError(f"lane tag on non-literal extent "
                             f"{ex.format_expression(extent)}")
        return LaneAxis(int(m.group(1)), int(extent.value))
    raise ValueError(f"unknown iname tag {text!r}")


def _parse_array_line(body: str) -> ArrayDescriptor:
    m = re.match(
        r"(?P<name>\w+)\s*:\s*(?P<dtype>\w+)\s+(?P<space>\w+)\s+\[(?P<shape>[^\]]*)\]"
        r"(?:\s+axes=\((?P<axes>[^)]*)\))?(?:\s+dims=\((?P<dims>[^)]*)\))?$", body)
    if not m:
        raise ValueError(f"bad array line: {body!r}")
    shape = tuple(parse_expression(s.strip())
                  for s in m.group("shape").split(",") if s.strip())
    axes = None
    if m.group("axes") is not None:
        axes = tuple(a.strip() for a in m.group("axes").split(",") if a.strip())
    dims = None
    if m.group("dims") is not None:
        dims = tuple(_parse_dim_tag(d.strip())
                     for d in m.group("dims").split(",") if d.strip())
    return ArrayDescriptor(
        name=m.group("name"), shape=shape, dtype=m.group("dtype"),
        space=m.group("space"), axis_names=axes, dim_tags=dims)


def _parse_dim_tag(text: str) -> DimTag:
    if text == "vec":
        return VecAxis()
    m = re.fullmatch(r"N(\d+)", text)
    if m:
        return NestingOrder(int(m.group(1)))
    raise ValueError(f"unknown dim tag {text!r}")
