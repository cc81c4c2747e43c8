"""Reference interpreter: executes (kernel, schedule) on concrete arrays.

Core-tagged axes run as outermost independent groups; inside a group the
event stream between consecutive barriers forms a phase, and each phase's
instruction instances execute for every lane tuple before the barrier is
crossed (two-phase SPMD emulation, vectorized over the lane grid with
numpy). Vec-tagged inames iterate their lanes elementwise. All arithmetic
is f32; accumulation follows schedule order.

This is the semantics oracle every transformation is checked against.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import expr as ex
from . import kernel as kn
from .diagnostics import (
    Diagnostic,
    DivisionByZero,
    ExecutionError,
    IndexOutOfBounds,
    UnresolvedExtent,
)
from .schedule import Barrier, EnterLoop, LeaveLoop, RunInstruction, Schedule

F32 = np.float32


def resolve_extent(e: ex.Expression, params: dict[str, int]) -> int:
    e = ex.fold_constants(ex.substitute(
        e, {p: ex.lit(v) for p, v in params.items()}))
    if isinstance(e, ex.NumericLiteral):
        return int(e.value)
    raise UnresolvedExtent(
        f"extent {ex.format_expression(e)} does not resolve under {params}")


@dataclass
class ExecutionEnvironment:
    """Parameter bindings plus array storage and dynamic access counters."""

    params: dict[str, int | float]
    arrays: dict[str, np.ndarray]
    read_counts: dict[str, int] = field(default_factory=dict)
    write_counts: dict[str, int] = field(default_factory=dict)

    @classmethod
    def for_kernel(cls, k: kn.Kernel, params: dict[str, int | float],
                   arrays: dict[str, np.ndarray]) -> "ExecutionEnvironment":
        """Validate and bind the kernel's global arguments."""
        int_params = {p: int(v) for p, v in params.items()
                      if isinstance(v, (int, np.integer))}
        bound: dict[str, np.ndarray] = {}
        for a in k.args:
            if isinstance(a, kn.ScalarParam):
                if a.name not in params:
                    raise ExecutionError(f"missing scalar argument {a.name!r}")
                continue
            if a.name not in arrays:
                raise ExecutionError(f"missing array argument {a.name!r}")
            arr = arrays[a.name]
            want = tuple(resolve_extent(s, int_params) for s in a.shape)
            if arr.shape != want:
                raise ExecutionError(
                    f"array {a.name!r} has shape {arr.shape}, kernel "
                    f"expects {want}")
            if arr.dtype != np.float32:
                raise ExecutionError(f"array {a.name!r} must be float32")
            bound[a.name] = arr
        return cls(dict(params), bound)

    def copy(self) -> "ExecutionEnvironment":
        return ExecutionEnvironment(
            dict(self.params),
            {n: a.copy() for n, a in self.arrays.items()})


class _GroupState:
    """Scratchpad and private storage of one core group."""

    def __init__(self, k: kn.Kernel, int_params: dict[str, int],
                 lane_shape: tuple[int, int]):
        self.scratch: dict[str, np.ndarray] = {}
        storages: dict[str, np.ndarray] = {}
        for t in k.temporaries:
            shape = tuple(resolve_extent(s, int_params) for s in t.shape)
            if t.space == kn.SCRATCHPAD:
                storage = kn.alias_storage_of(k, t.name)
                size = int(np.prod(shape)) if shape else 1
                if storage not in storages:
                    storages[storage] = np.zeros(size, F32)
                buf = storages[storage]
                if buf.size < size:  # pragma: no cover - alias check catches
                    raise ExecutionError(
                        f"alias storage {storage!r} smaller than {t.name!r}")
                self.scratch[t.name] = buf[:size].reshape(shape)
            elif t.space == kn.PRIVATE:
                self.scratch[t.name] = np.zeros(lane_shape + shape, F32)

    def is_private(self, k: kn.Kernel, name: str) -> bool:
        return k.array(name).space == kn.PRIVATE


class _Engine:
    def __init__(self, k: kn.Kernel, s: Schedule, env: ExecutionEnvironment,
                 record_hazards: bool):
        self.k = k
        self.s = s
        self.env = env
        self.record = record_hazards
        self.hazards: list[Diagnostic] = []
        self.int_params = {p: int(v) for p, v in env.params.items()
                           if isinstance(v, (int, np.integer))}

        lanes: dict[int, int] = {}
        for _n, t in k.lane_inames():
            lanes[t.axis] = t.extent
        if lanes and sorted(lanes) != list(range(len(lanes))):
            raise ExecutionError(f"lane axes not dense: {sorted(lanes)}")
        self.lane_shape = (lanes.get(0, 1), lanes.get(1, 1))
        if len(lanes) > 2:
            raise ExecutionError("at most two lane axes supported")

        cores = [(t.axis, n) for n, t in k.core_inames()]
        if len(cores) > 1:
            raise ExecutionError("at most one core axis supported")
        self.core_iname = cores[0][1] if cores else None
        self.core_extent = (
            resolve_extent(k.domain.extent(self.core_iname), self.int_params)
            if self.core_iname else 1)

        self.by_id = {i.id: i for i in k.instructions}
        self.expanded = {i.id: k.expanded_rhs(i) for i in k.instructions}
        self.read_occurrences = {
            i.id: self._count_subscripts(self.expanded[i.id],
                                         list(i.assignee_indices))
            for i in k.instructions}
        self.scratch_names = {t.name for t in k.temporaries
                              if t.space == kn.SCRATCHPAD}
        # hazards are tracked per storage unit: aliased members share one
        self.storage_of = {t.name: kn.alias_storage_of(k, t.name)
                           for t in k.temporaries}

        # per-instruction lane handling
        self.lane_iname_axis = {n: t.axis for n, t in k.lane_inames()}
        self.vec_extent = {
            n: resolve_extent(k.domain.extent(n), self.int_params)
            for n, t in k.iname_tags if isinstance(t, kn.VecIname)}

    @staticmethod
    def _count_subscripts(rhs: ex.Expression,
                          extra: list[ex.Expression]) -> dict[str, int]:
        counts: dict[str, int] = {}
        for e in [rhs] + extra:
            for node in ex.walk(e):
                if isinstance(node, ex.Subscript):
                    counts[node.array] = counts.get(node.array, 0) + 1
        return counts

    # lane grids for one instruction

    def _grids(self, insn: kn.Instruction):
        covered = {self.lane_iname_axis[n]
                   for n in insn.within_inames if n in self.lane_iname_axis}
        a0 = self.lane_shape[0] if 0 in covered else 1
        a1 = self.lane_shape[1] if 1 in covered else 1
        l0 = np.arange(a0, dtype=np.int64).reshape(a0, 1)
        l1 = np.arange(a1, dtype=np.int64).reshape(1, a1)
        return (a0, a1), l0, l1

    def run(self) -> None:
        events = self.s.events
        for group in range(self.core_extent):
            state = _GroupState(self.k, self.int_params, self.lane_shape)
            phase: list[tuple[kn.Instruction, dict[str, int]]] = []
            phase_writes: dict[tuple, set] = {}
            phase_reads: dict[tuple, set] = {}

            def flush():
                for insn, binds in phase:
                    self._execute(insn, binds, group, state,
                                  phase_writes, phase_reads)
                phase.clear()
                if self.record:
                    self._check_phase(phase_writes, phase_reads)
                phase_writes.clear()
                phase_reads.clear()

            def exec_range(pos: int, end: int, binds: dict[str, int]) -> None:
                while pos < end:
                    ev = events[pos]
                    if isinstance(ev, EnterLoop):
                        depth, close = 1, pos + 1
                        while depth:
                            if isinstance(events[close], EnterLoop):
                                depth += 1
                            elif isinstance(events[close], LeaveLoop):
                                depth -= 1
                            close += 1
                        close -= 1  # index of the matching LeaveLoop
                        extent = resolve_extent(
                            self.k.domain.extent(ev.iname), self.int_params)
                        for v in range(extent):
                            binds[ev.iname] = v
                            exec_range(pos + 1, close, binds)
                        binds.pop(ev.iname, None)
                        pos = close + 1
                    elif isinstance(ev, Barrier):
                        flush()
                        pos += 1
                    else:
                        assert isinstance(ev, RunInstruction)
                        insn = self.by_id[ev.insn_id]
                        vecs = [n for n in self.k.domain.names()
                                if n in insn.within_inames and n in self.vec_extent]
                        if vecs:
                            self._append_vec(phase, insn, dict(binds), vecs)
                        else:
                            phase.append((insn, dict(binds)))
                        pos += 1

            exec_range(0, len(events), {})
            flush()

    def _append_vec(self, phase, insn, binds, vecs):
        if not vecs:
            phase.append((insn, binds))
            return
        head, rest = vecs[0], vecs[1:]
        for v in range(self.vec_extent[head]):
            b = dict(binds)
            b[head] = v
            self._append_vec(phase, insn, b, rest)

    # expression evaluation over the active lane grid

    def _execute(self, insn, binds, group, state, phase_writes, phase_reads):
        shape, l0, l1 = self._grids(insn)
        values: dict[str, object] = {}
        for n in insn.within_inames:
            if n in self.lane_iname_axis:
                values[n] = l0 if self.lane_iname_axis[n] == 0 else l1
            elif n == self.core_iname:
                values[n] = np.int64(group)
            elif n in binds:
                values[n] = np.int64(binds[n])
            elif n in self.vec_extent:
                values[n] = np.int64(binds[n])
            else:  # pragma: no cover - validate_schedule prevents this
                raise ExecutionError(
                    f"{insn.id}: iname {n!r} has no value at this event")

        def context() -> str:
            vals = {n: int(v) for n, v in values.items()
                    if isinstance(v, np.int64)}
            return f"(instruction {insn.id}, inames {vals})"

        def lookup_array(name: str) -> tuple[np.ndarray, bool]:
            if name in state.scratch:
                d = self.k.array(name)
                return state.scratch[name], d.space == kn.PRIVATE
            arr = self.env.arrays.get(name)
            if arr is None:
                raise ExecutionError(f"unbound array {name!r} {context()}")
            return arr, False

        def read_subscript(node: ex.Subscript):
            arr, private = lookup_array(node.array)
            idx = [self._ev(i, values, context) for i in node.indices]
            rank_offset = 2 if private else 0
            self._bounds(node.array, idx, arr.shape[rank_offset:], context)
            if private:
                return arr[(l0, l1, *idx)]
            value = arr[tuple(idx)]
            if self.record and node.array in self.scratch_names:
                self._record(phase_reads, node.array, idx, arr.shape,
                             l0, l1, shape)
            return value

        def ev(node: ex.Expression):
            if isinstance(node, ex.Subscript):
                return read_subscript(node)
            if isinstance(node, ex.NumericLiteral):
                return (np.int64(node.value) if node.dtype == ex.I32
                        else F32(node.value))
            if isinstance(node, ex.VariableRef):
                if node.name in values:
                    return values[node.name]
                if node.name in state.scratch:  # private scalar temp
                    arr = state.scratch[node.name]
                    return arr[l0, l1]
                if node.name in self.env.params:
                    v = self.env.params[node.name]
                    return np.int64(v) if isinstance(v, (int, np.integer)) \
                        else F32(v)
                raise ExecutionError(f"unbound name {node.name!r} {context()}")
            if isinstance(node, ex.UnaryOp):
                return -ev(node.operand)
            if isinstance(node, ex.Call):
                args = [np.asarray(ev(a), F32) for a in node.args]
                if node.fn == "sqrt":
                    return np.sqrt(args[0])
                if node.fn == "abs":
                    return np.abs(args[0])
                if node.fn == "fma":
                    return args[0] * args[1] + args[2]
                raise ExecutionError(f"unknown function {node.fn!r} {context()}")
            assert isinstance(node, ex.BinaryOp), node
            a, b = ev(node.lhs), ev(node.rhs)
            int_op = _is_int(a) and _is_int(b)
            if not int_op:
                a = np.asarray(a, F32)
                b = np.asarray(b, F32)
            if node.op == "add":
                return a + b
            if node.op == "sub":
                return a - b
            if node.op == "mul":
                return a * b
            if node.op == "div":
                if int_op:
                    return a // b
                if np.any(np.asarray(b) == 0):
                    raise DivisionByZero(f"division by zero {context()}")
                return a / b
            return np.power(np.asarray(a, F32), np.asarray(b, F32))

        result = ev(self.expanded[insn.id])

        # dynamic access counters
        lanes = shape[0] * shape[1]
        for arr_name, occ in self.read_occurrences[insn.id].items():
            self.env.read_counts[arr_name] = (
                self.env.read_counts.get(arr_name, 0) + occ * lanes)
        if insn.is_update:
            self.env.read_counts[insn.assignee] = (
                self.env.read_counts.get(insn.assignee, 0) + lanes)
        self.env.write_counts[insn.assignee] = (
            self.env.write_counts.get(insn.assignee, 0) + lanes)

        # store
        arr, private = lookup_array(insn.assignee)
        idx = [self._ev(i, values, context) for i in insn.assignee_indices]
        rank_offset = 2 if private else 0
        self._bounds(insn.assignee, idx, arr.shape[rank_offset:], context)
        bidx = [np.broadcast_to(np.asarray(i), shape) for i in idx]
        if private:
            target = (np.broadcast_to(l0, shape), np.broadcast_to(l1, shape),
                      *bidx)
        else:
            target = tuple(bidx) if bidx else tuple()
        value = np.asarray(result, F32)
        if insn.is_update:
            arr[target] = arr[target] + value
        else:
            arr[target] = value
        if self.record and insn.assignee in self.scratch_names:
            self._record(phase_writes, insn.assignee, idx, arr.shape,
                         l0, l1, shape)

    def _ev(self, e, values, context):
        """Integer index evaluation over the lane grid."""
        if isinstance(e, ex.NumericLiteral):
            return np.int64(e.value)
        if isinstance(e, ex.VariableRef):
            if e.name in values:
                return values[e.name]
            if e.name in self.env.params:
                return np.int64(self.env.params[e.name])
            raise ExecutionError(f"unbound index name {e.name!r} {context()}")
        if isinstance(e, ex.UnaryOp):
            return -self._ev(e.operand, values, context)
        if isinstance(e, ex.BinaryOp):
            a = self._ev(e.lhs, values, context)
            b = self._ev(e.rhs, values, context)
            if e.op == "add":
                return a + b
            if e.op == "sub":
                return a - b
            if e.op == "mul":
                return a * b
            if e.op == "div":
                return a // b
            raise ExecutionError(f"index operator {e.op!r} {context()}")
        raise ExecutionError(f"bad index expression {context()}")

    @staticmethod
    def _bounds(name, idx, dims, context):
        for d, (i, n) in enumerate(zip(idx, dims)):
            arr = np.asarray(i)
            if arr.size and (int(arr.min()) < 0 or int(arr.max()) >= n):
                raise IndexOutOfBounds(
                    f"{name!r} axis {d}: index range "
                    f"[{int(arr.min())}, {int(arr.max())}] outside [0, {n}) "
                    f"{context()}")
        if len(idx) != len(dims):
            raise IndexOutOfBounds(
                f"{name!r}: rank mismatch {len(idx)} vs {len(dims)} {context()}")

    def _record(self, store, array, idx, shape, l0, l1, active):
        """Accumulate per-location lane sets for hazard checking; aliased
        temporaries record against their shared storage unit."""
        if idx:
            flat = np.ravel_multi_index(
                tuple(np.broadcast_to(i, active) for i in idx), shape)
        else:
            flat = np.zeros(active, dtype=np.int64)
        storage = self.storage_of.get(array, array)
        lane = np.broadcast_to(l0 * self.lane_shape[1] + l1, active)
        for loc, ln in zip(flat.ravel().tolist(), lane.ravel().tolist()):
            store.setdefault((storage, loc), set()).add(ln)

    def _check_phase(self, phase_writes, phase_reads):
        for (array, loc), writers in phase_writes.items():
            if len(writers) > 1:
                self.hazards.append(Diagnostic(
                    "hazard", f"scratchpad {array!r} location {loc} written "
                              f"by lanes {sorted(writers)} in one phase"))
            readers = phase_reads.get((array, loc), set())
            if readers - writers:
                if writers:
                    self.hazards.append(Diagnostic(
                        "hazard",
                        f"scratchpad {array!r} location {loc} written by "
                        f"lane(s) {sorted(writers)} and read by lane(s) "
                        f"{sorted(readers - writers)} in one phase"))


def _is_int(v) -> bool:
    return isinstance(v, (int, np.integer)) or (
        isinstance(v, np.ndarray) and np.issubdtype(v.dtype, np.integer))


def run_kernel(k: kn.Kernel, s: Schedule,
               env: ExecutionEnvironment) -> ExecutionEnvironment:
    """Execute the schedule, mutating the environment's arrays and
    populating its access counters."""
    engine = _Engine(k, s, env, record_hazards=False)
    engine.run()
    return env


def hazard_check(k: kn.Kernel, s: Schedule,
                 env: ExecutionEnvironment) -> list[Diagnostic]:
    """Empirically validate barrier placement: no scratchpad location may
    be written by one lane tuple and read or written by a different lane
    tuple within one barrier-delimited phase. Runs on a copy of `env`."""
    engine = _Engine(k, s, env.copy(), record_hazards=True)
    engine.run()
    # deduplicate, keep first occurrence order
    seen = set()
    out = []
    for d in engine.hazards:
        if d.message.split(" location ")[0] not in seen:
            seen.add(d.message.split(" location ")[0])
            out.append(d)
    return out
