"""Device-dialect source emission and the static FLOP/traffic cost model.

The emitted dialect is a fixed C-like surface: builtin identifiers
GROUP_ID(n), LOCAL_ID(n), BARRIER(), a width-4 vector type vec4f with
.s0..s3 components, GLOBAL/LOCAL address-space qualifiers and a KERNEL
function qualifier. A short OpenCL prelude (see the emitted header comment)
makes the output compilable as-is.

Counting rules: add, subtract, multiply, divide, power and other calls
count one FLOP each; one multiply feeding an add or subtract fuses (a*b+c
is a single FLOP). Bytes count every reference (read or write) to global
memory, four bytes per element, with no cache modeling; on-chip traffic is
excluded.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import expr as ex
from . import kernel as kn
from .diagnostics import (
    UnfixedParameterInShape,
    UnresolvedExtent,
    VecAccessMisaligned,
)
from .interp import resolve_extent
from .schedule import Barrier, EnterLoop, LeaveLoop, RunInstruction, Schedule


@dataclass(frozen=True)
class TargetConfig:
    lane_extents: tuple[int, ...] = ()
    vector_width: int = 4
    scalar_type: str = "float"


# static cost model

@dataclass(frozen=True)
class CostReport:
    flops: int
    global_bytes_read: int
    global_bytes_written: int
    per_array: tuple[tuple[str, int, int], ...]  # (name, read, written)

    def reads_of(self, name: str) -> int:
        return next((r for n, r, _w in self.per_array if n == name), 0)

    def writes_of(self, name: str) -> int:
        return next((w for n, _r, w in self.per_array if n == name), 0)

    def text(self) -> str:
        lines = [
            f"flops={self.flops}",
            f"global_bytes_read={self.global_bytes_read}",
            f"global_bytes_written={self.global_bytes_written}",
        ]
        for name, r, w in self.per_array:
            lines.append(f"array.{name}.read={r}")
            lines.append(f"array.{name}.written={w}")
        return "\n".join(lines) + "\n"


def count_flops_expr(e: ex.Expression, as_update: bool = False) -> int:
    """Arithmetic operation count with single-level multiply-add fusion."""

    def cost(node: ex.Expression) -> int:
        if isinstance(node, ex.BinaryOp):
            if node.op in ("add", "sub"):
                if isinstance(node.rhs, ex.BinaryOp) and node.rhs.op == "mul":
                    return 1 + cost(node.lhs) + cost(node.rhs.lhs) \
                        + cost(node.rhs.rhs)
                if isinstance(node.lhs, ex.BinaryOp) and node.lhs.op == "mul":
                    return 1 + cost(node.rhs) + cost(node.lhs.lhs) \
                        + cost(node.lhs.rhs)
                return 1 + cost(node.lhs) + cost(node.rhs)
            return 1 + cost(node.lhs) + cost(node.rhs)
        if isinstance(node, ex.UnaryOp):
            return cost(node.operand)
        if isinstance(node, ex.Call):
            return 1 + sum(cost(a) for a in node.args)
        if isinstance(node, ex.Subscript):
            return sum(cost(i) for i in node.indices)
        return 0

    if as_update:
        # the accumulation is Add(current, rhs); a product rhs fuses
        if isinstance(e, ex.BinaryOp) and e.op == "mul":
            return 1 + cost(e.lhs) + cost(e.rhs)
        return 1 + cost(e)
    return cost(e)


def instruction_trips(k: kn.Kernel, insn: kn.Instruction,
                      params: dict[str, int]) -> int:
    """Executed instances of one instruction: the core grid times covered
    lane extents times all sequential/vec loop extents."""
    trips = 1
    core_names = {n for n, _t in k.core_inames()}
    for _n, tag in k.core_inames():
        trips *= resolve_extent(k.domain.extent(_n), params)
    if not core_names:
        trips *= 1
    for n in insn.within_inames:
        if n in core_names:
            continue
        tag = k.tag_of(n)
        if isinstance(tag, kn.LaneAxis):
            trips *= tag.extent
        else:
            trips *= resolve_extent(k.domain.extent(n), params)
    return trips


def count_cost(k: kn.Kernel, s: Schedule,
               param_bindings: dict[str, int] | None = None) -> CostReport:
    """Statically counted FLOPs and global-memory bytes of one launch."""
    params = dict(param_bindings or {})
    global_arrays = {a.name for a in k.args
                     if isinstance(a, kn.ArrayDescriptor)
                     and a.space == kn.GLOBAL}
    flops = 0
    reads: dict[str, int] = {}
    writes: dict[str, int] = {}
    for insn in k.instructions:
        trips = instruction_trips(k, insn, params)
        expanded = k.expanded_rhs(insn)
        flops += trips * count_flops_expr(expanded, as_update=insn.is_update)
        for e in [expanded] + list(insn.assignee_indices):
            for node in ex.walk(e):
                if isinstance(node, ex.Subscript) and node.array in global_arrays:
                    reads[node.array] = reads.get(node.array, 0) + trips
        if insn.assignee in global_arrays:
            writes[insn.assignee] = writes.get(insn.assignee, 0) + trips
            if insn.is_update:
                reads[insn.assignee] = reads.get(insn.assignee, 0) + trips

    per_array = tuple(
        (name, 4 * reads.get(name, 0), 4 * writes.get(name, 0))
        for name in sorted(set(reads) | set(writes)))
    return CostReport(
        flops=flops,
        global_bytes_read=4 * sum(reads.values()),
        global_bytes_written=4 * sum(writes.values()),
        per_array=per_array)


# source emission

_PRELUDE = """\
// Compile as OpenCL with this prelude:
//   #define KERNEL __kernel
//   #define GLOBAL __global
//   #define LOCAL __local
//   #define GROUP_ID(n) ((int) get_group_id(n))
//   #define LOCAL_ID(n) ((int) get_local_id(n))
//   #define BARRIER() barrier(CLK_LOCAL_MEM_FENCE)
//   typedef float4 vec4f;
"""


class _Emitter:
    def __init__(self, k: kn.Kernel, s: Schedule, cfg: TargetConfig):
        self.k = k
        self.s = s
        self.cfg = cfg
        self.lines: list[str] = []
        self.indent = 1
        self.guarded: set[str] = set()

    def line(self, text: str) -> None:
        self.lines.append("    " * self.indent + text)

    # layout helpers

    def _order(self, desc: kn.ArrayDescriptor) -> tuple[int | None, list[int]]:
        """(vec axis or None, non-vec axes fastest-to-slowest)."""
        if desc.dim_tags is None:
            return None, list(range(desc.rank))
        vec_axis = desc.vec_axis()
        ranked = sorted(
            (t.rank, ax) for ax, t in enumerate(desc.dim_tags)
            if isinstance(t, kn.NestingOrder))
        return vec_axis, [ax for _r, ax in ranked]

    def _extent_text(self, e: ex.Expression) -> str:
        return self._expr(e, vec_iname=None)

    def _linear_index(self, desc: kn.ArrayDescriptor,
                      indices: tuple[ex.Expression, ...],
                      vec_iname: str | None) -> str:
        vec_axis, fast_to_slow = self._order(desc)
        axes = list(reversed(fast_to_slow))  # slowest first for Horner
        out = None
        for ax in axes:
            term = self._expr(indices[ax], vec_iname)
            extent = self._extent_text(desc.shape[ax])
            out = term if out is None else f"({out}) * {extent} + {term}"
        return out if out is not None else "0"

    def _subscript(self, node: ex.Subscript, vec_iname: str | None) -> str:
        desc = self.k.array(node.array)
        vec_axis = desc.vec_axis()
        name = self._storage_name(node.array)
        if desc.rank == 0:
            return name
        if vec_axis is None:
            return f"{name}[{self._linear_index(desc, node.indices, vec_iname)}]"
        non_vec = tuple(i for ax, i in enumerate(node.indices)
                        if ax != vec_axis)
        stripped = kn.ArrayDescriptor(
            desc.name,
            tuple(s for ax, s in enumerate(desc.shape) if ax != vec_axis),
            desc.dtype, desc.space, None,
            tuple(t for t in (desc.dim_tags or ()) if not isinstance(t, kn.VecAxis)))
        base = f"{name}[{self._linear_index(stripped, non_vec, vec_iname)}]"
        comp = node.indices[vec_axis]
        if vec_iname is not None and comp == ex.var(vec_iname):
            return base  # full-width vector access
        if isinstance(comp, ex.NumericLiteral):
            return f"{base}.s{int(comp.value)}"
        raise VecAccessMisaligned(
            f"component {ex.format_expression(comp)} on the vec axis of "
            f"{node.array!r} is neither the vec iname nor a literal")

    def _storage_name(self, array: str) -> str:
        return kn.alias_storage_of(self.k, array)

    # expression rendering

    def _expr(self, e: ex.Expression, vec_iname: str | None,
              prec: int = 0) -> str:
        if isinstance(e, ex.NumericLiteral):
            if e.dtype == ex.I32:
                return str(int(e.value))
            return f"{float(e.value)!r}f"
        if isinstance(e, ex.VariableRef):
            return e.name
        if isinstance(e, ex.Subscript):
            return self._subscript(e, vec_iname)
        if isinstance(e, ex.UnaryOp):
            return f"-{self._expr(e.operand, vec_iname, 4)}"
        if isinstance(e, ex.Call):
            args = ", ".join(self._expr(a, vec_iname) for a in e.args)
            return f"{e.fn}({args})"
        assert isinstance(e, ex.BinaryOp)
        if e.op == "pow":
            exp = e.rhs
            if isinstance(exp, ex.NumericLiteral) and exp.dtype == ex.I32 \
                    and 0 <= int(exp.value) <= 4:
                n = int(exp.value)
                if n == 0:
                    return "1.0f"
                base = self._expr(e.lhs, vec_iname, 4)
                return "(" + " * ".join([base] * n) + ")" if n > 1 else base
            return (f"pow({self._expr(e.lhs, vec_iname)}, "
                    f"{self._expr(e.rhs, vec_iname)})")
        sym = {"add": "+", "sub": "-", "mul": "*", "div": "/"}[e.op]
        my_prec = 1 if e.op in ("add", "sub") else 2
        lhs = self._expr(e.lhs, vec_iname, my_prec)
        rhs = self._expr(e.rhs, vec_iname, my_prec + 1)
        text = f"{lhs} {sym} {rhs}"
        return f"({text})" if my_prec < prec else text

    # statements

    def _vec_iname_of(self, insn: kn.Instruction) -> str | None:
        vecs = [n for n in insn.within_inames
                if isinstance(self.k.tag_of(n), kn.VecIname)]
        if len(vecs) > 1:
            raise VecAccessMisaligned(
                f"{insn.id}: more than one vec iname is not emittable")
        return vecs[0] if vecs else None

    def _vectorizable(self, insn: kn.Instruction, v: str) -> bool:
        """The statement emits as one vector operation iff the assignee's
        vec axis is indexed by `v` and `v` appears nowhere else but vec
        axes (or not at all)."""
        desc = self.k.array(insn.assignee)
        vec_axis = desc.vec_axis()
        if vec_axis is None or insn.assignee_indices[vec_axis] != ex.var(v):
            return False
        for e in [self.k.expanded_rhs(insn)] + list(insn.assignee_indices):
            for node in ex.walk(e):
                if isinstance(node, ex.Subscript):
                    d = self.k.array(node.array)
                    va = d.vec_axis()
                    for ax, idx in enumerate(node.indices):
                        if v in ex.free_variables(idx) and ax != va:
                            return False
                        if ax == va and v in ex.free_variables(idx) \
                                and idx != ex.var(v):
                            return False
        return True

    def _emit_insn(self, insn: kn.Instruction) -> None:
        # lanes the kernel uses but this instruction does not cover run at
        # lane coordinate zero only
        lane_axes_used = {t.axis for _n, t in self.k.lane_inames()}
        covered = {self.k.tag_of(n).axis for n in insn.within_inames
                   if isinstance(self.k.tag_of(n), kn.LaneAxis)}
        guards = [f"LOCAL_ID({a}) == 0"
                  for a in sorted(lane_axes_used - covered)]
        if guards:
            self.line(f"if ({' && '.join(guards)}) {{")
            self.indent += 1

        rhs_expr = self.k.expanded_rhs(insn)
        v = self._vec_iname_of(insn)
        copies: list[tuple[ex.Expression, tuple[ex.Expression, ...], str | None]]
        if v is None:
            copies = [(rhs_expr, insn.assignee_indices, None)]
        elif self._vectorizable(insn, v):
            copies = [(rhs_expr, insn.assignee_indices, v)]
        else:
            width = resolve_extent(self.k.domain.extent(v), {})
            copies = []
            for lane in range(width):
                sub = {v: ex.lit(lane)}
                copies.append((
                    ex.fold_constants(ex.substitute(rhs_expr, sub)),
                    tuple(ex.fold_constants(ex.substitute(i, sub))
                          for i in insn.assignee_indices),
                    None))

        for rhs, indices, vec in copies:
            desc = self.k.array(insn.assignee)
            if desc.rank == 0:
                target = self._storage_name(insn.assignee)
            else:
                target = self._subscript(
                    ex.Subscript(insn.assignee, indices), vec)
            op = "+=" if insn.is_update else "="
            self.line(f"{target} {op} {self._expr(rhs, vec)};  // {insn.id}")

        if guards:
            self.indent -= 1
            self.line("}")

    def _loop_guard_needed(self, extent: ex.Expression) -> bool:
        refs = [v for v in ex.free_variables(extent)]
        if not refs:
            return False
        assumed = {a.param for a in self.k.assumptions
                   if (a.op == ">" and a.value >= 0)
                   or (a.op == ">=" and a.value >= 1)}
        return any(r not in assumed for r in refs)

    def emit(self) -> str:
        k = self.k
        out = [_PRELUDE]
        core = k.core_inames()
        lanes = k.lane_inames()
        grid = " x ".join(ex.format_expression(k.domain.extent(n))
                          for n, _t in core) or "1"
        lane_grid = " x ".join(str(n) for n in k.lane_grid()) or "1"
        out.append(f"// kernel: {k.name}")
        out.append(f"// launch: groups = {grid}, lanes per group = {lane_grid}")

        written = {i.assignee for i in k.instructions}
        sig = []
        for a in k.args:
            if isinstance(a, kn.ScalarParam):
                ctype = "int" if a.dtype == ex.I32 else "float"
                sig.append(f"{ctype} {a.name}")
            else:
                qual = "GLOBAL float*" if a.vec_axis() is None \
                    else "GLOBAL vec4f*"
                if a.name not in written:
                    qual = qual.replace("GLOBAL ", "GLOBAL const ")
                sig.append(f"{qual} restrict {a.name}")
        out.append(f"KERNEL void {k.name}({', '.join(sig)})")
        out.append("{")

        body_start = len(out)
        for n, t in sorted(core, key=lambda p: p[1].axis):
            self.line(f"const int {n} = GROUP_ID({t.axis});")
        for n, t in sorted(lanes, key=lambda p: (p[1].axis, p[0])):
            self.line(f"const int {n} = LOCAL_ID({t.axis});")

        declared: set[str] = set()
        for t in k.temporaries:
            storage = kn.alias_storage_of(k, t.name)
            if storage in declared:
                continue
            declared.add(storage)
            shape = t.literal_shape()
            if t.rank and shape is None:
                raise UnfixedParameterInShape(
                    f"on-chip array {t.name!r} has a parametric shape")
            vec_axis = t.vec_axis()
            size = 1
            for ax, n in enumerate(shape or ()):
                if ax != vec_axis:
                    size *= n
            ctype = "float" if vec_axis is None else "vec4f"
            prefix = "LOCAL " if t.space == kn.SCRATCHPAD else ""
            members = next((g for g in k.aliases if t.name in g), None)
            note = f"  // aliases: {', '.join(members)}" if members \
                and len(members) > 1 else ""
            if t.rank == 0:
                self.line(f"{prefix}{ctype} {storage};{note}")
            else:
                self.line(f"{prefix}{ctype} {storage}[{size}];{note}")

        pos = 0
        events = self.s.events
        while pos < len(events):
            ev = events[pos]
            if isinstance(ev, EnterLoop):
                extent = k.domain.extent(ev.iname)
                unroll = isinstance(k.tag_of(ev.iname), kn.UnrollIname)
                if self._loop_guard_needed(extent):
                    self.line(f"if ({self._extent_text(extent)} > 0)")
                    self.line("{")
                    self.indent += 1
                    self.guarded.add(ev.iname)
                hint = "  // unroll" if unroll else ""
                self.line(f"for (int {ev.iname} = 0; {ev.iname} < "
                          f"{self._extent_text(extent)}; ++{ev.iname}){hint}")
                self.line("{")
                self.indent += 1
            elif isinstance(ev, LeaveLoop):
                self.indent -= 1
                self.line("}")
                if ev.iname in self.guarded:
                    self.guarded.discard(ev.iname)
                    self.indent -= 1
                    self.line("}")
            elif isinstance(ev, Barrier):
                self.line("BARRIER();")
            else:
                assert isinstance(ev, RunInstruction)
                self._emit_insn(k.instruction(ev.insn_id))
            pos += 1

        out.extend(self.lines)
        out.append("}")
        return "\n".join(out) + "\n"


def emit_source(k: kn.Kernel, s: Schedule,
                cfg: TargetConfig | None = None) -> str:
    """Deterministic device-dialect source for (kernel, schedule)."""
    cfg = cfg or TargetConfig()
    grid = k.lane_grid()
    if cfg.lane_extents and tuple(cfg.lane_extents) != grid:
        raise UnresolvedExtent(
            f"config lane extents {cfg.lane_extents} do not match the "
            f"kernel's lane grid {grid}")
    for n, t in k.iname_tags:
        if isinstance(t, kn.VecIname):
            extent = k.domain.extent(n)
            if not isinstance(extent, ex.NumericLiteral) \
                    or int(extent.value) != cfg.vector_width:
                raise VecAccessMisaligned(
                    f"vec iname {n!r} extent does not match the vector "
                    f"width {cfg.vector_width}")
    return _Emitter(k, s, cfg).emit()
