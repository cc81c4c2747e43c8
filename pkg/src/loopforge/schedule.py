"""Kernel linearization.

Produces a loop-nest event sequence (enter/leave, instruction runs,
lane-group barriers) that respects instruction dependencies, loop priority,
alias-group liveness and scratchpad synchronization:

* greedy list scheduling over a loop forest derived from each
  instruction's sequential inames (domain order, with prioritized inames
  permuted into loop-priority order); ready instructions run before child
  loops, ties broken by instruction position, so generated computes (which
  sit immediately before their first consumer) run as late as possible;
* alias groups act as locks: once a member is written, no other member of
  the same storage may be written until every reader of the first has run;
* barriers separate scratchpad accesses whose index signatures differ
  (conservatively treated as touching the same locations from different
  lane tuples); loop-carried conflicts get a barrier at the top of the
  loop body. A final pass removes every barrier whose deletion keeps the
  schedule hazard-free, so each remaining barrier is load-bearing.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import expr as ex
from . import kernel as kn
from .diagnostics import Diagnostic, SchedulingImpossible


@dataclass(frozen=True)
class EnterLoop:
    iname: str

    def __str__(self):
        return f"enter {self.iname}"


@dataclass(frozen=True)
class LeaveLoop:
    iname: str

    def __str__(self):
        return f"leave {self.iname}"


@dataclass(frozen=True)
class RunInstruction:
    insn_id: str

    def __str__(self):
        return f"run {self.insn_id}"


@dataclass(frozen=True)
class Barrier:
    scope: str = "lane-group"

    def __str__(self):
        return "barrier"


Event = EnterLoop | LeaveLoop | RunInstruction | Barrier


@dataclass(frozen=True)
class Schedule:
    events: tuple[Event, ...]

    def dump(self) -> str:
        return "\n".join(str(e) for e in self.events) + "\n"


# access records used for barrier reasoning

@dataclass(frozen=True)
class _Access:
    kind: str  # "R" | "W"
    storage: str
    signature: str  # member name + formatted index tuple
    insn_id: str


def _scratch_accesses(k: kn.Kernel, insn: kn.Instruction) -> list[_Access]:
    scratch = {t.name: t for t in k.temporaries if t.space == kn.SCRATCHPAD}
    out: list[_Access] = []
    if insn.assignee in scratch:
        sig = insn.assignee + "[" + ", ".join(
            ex.format_expression(i) for i in insn.assignee_indices) + "]"
        out.append(_Access("W", kn.alias_storage_of(k, insn.assignee), sig,
                           insn.id))
    seen = set()
    for node in ex.walk(k.expanded_rhs(insn)):
        if isinstance(node, ex.Subscript) and node.array in scratch:
            sig = node.array + "[" + ", ".join(
                ex.format_expression(i) for i in node.indices) + "]"
            key = (node.array, sig)
            if key not in seen:
                seen.add(key)
                out.append(_Access("R", kn.alias_storage_of(k, node.array),
                                   sig, insn.id))
    return out


def _conflict(a: _Access, b: _Access) -> bool:
    if a.storage != b.storage:
        return False
    if a.kind == "R" and b.kind == "R":
        return False
    # identical signatures mean every lane touches the cell it owns
    return a.signature != b.signature


# unrolled hazard simulation: loop bodies repeated twice expose
# loop-carried conflicts between consecutive iterations.

def _unroll_events(events: list[Event]) -> list[Event]:
    def helper(pos: int, stop: int) -> tuple[list[Event], int]:
        out: list[Event] = []
        while pos < stop:
            ev = events[pos]
            if isinstance(ev, EnterLoop):
                depth = 1
                end = pos + 1
                while depth:
                    if isinstance(events[end], EnterLoop):
                        depth += 1
                    elif isinstance(events[end], LeaveLoop):
                        depth -= 1
                    end += 1
                body, _ = helper(pos + 1, end - 1)
                out.append(ev)
                out.extend(body)
                out.extend(body)
                out.append(events[end - 1])
                pos = end
            else:
                out.append(ev)
                pos += 1
        return out, pos

    return helper(0, len(events))[0]


def _barrier_violations(k: kn.Kernel, events: list[Event],
                        access_of: dict[str, list[_Access]] | None = None
                        ) -> list[str]:
    """Missing-barrier findings over the twice-unrolled event stream."""
    if access_of is None:
        access_of = {i.id: _scratch_accesses(k, i) for i in k.instructions}
    live: list[_Access] = []
    problems = []
    for ev in _unroll_events(events):
        if isinstance(ev, Barrier):
            live = []
        elif isinstance(ev, RunInstruction):
            for acc in access_of[ev.insn_id]:
                for prev in live:
                    if _conflict(prev, acc):
                        problems.append(
                            f"{prev.kind} {prev.signature} ({prev.insn_id}) and "
                            f"{acc.kind} {acc.signature} ({acc.insn_id}) touch "
                            f"storage {acc.storage!r} without a barrier")
                        return problems  # first finding is enough
            live.extend(access_of[ev.insn_id])
    return problems


def _priority_rank(k: kn.Kernel):
    rank = {n: i for i, n in enumerate(k.loop_priority)}

    def key(iname: str) -> tuple[int, int]:
        return (rank.get(iname, len(rank)), k.domain.names().index(iname))

    return key


def _sequential_chain(k: kn.Kernel, insn: kn.Instruction) -> list[str]:
    """Nesting order of an instruction's sequential inames: domain
    declaration order, with prioritized inames permuted among their own
    positions so they appear in loop-priority order."""
    names = k.sequential_within(insn)
    listed = set(k.loop_priority)
    desired = iter([n for n in k.loop_priority if n in insn.within_inames
                    and k.is_sequential(n)])
    return [next(desired) if n in listed else n for n in names]


class _Scheduler:
    def __init__(self, k: kn.Kernel):
        self.k = k
        self.insns = list(k.instructions)
        self.position = {i.id: n for n, i in enumerate(self.insns)}
        self.by_id = {i.id: i for i in self.insns}
        self.rank_key = _priority_rank(k)

        # loop forest from per-instruction sequential chains
        self.parent: dict[str, str | None] = {}
        self.node_insns: dict[str | None, list[kn.Instruction]] = {None: []}
        self.children: dict[str | None, list[str]] = {None: []}
        for insn in self.insns:
            chain = _sequential_chain(k, insn)
            prev: str | None = None
            for iname in chain:
                if iname in self.parent:
                    if self.parent[iname] != prev:
                        raise SchedulingImpossible(
                            f"iname {iname!r} would need to nest under both "
                            f"{self.parent[iname]!r} and {prev!r}")
                else:
                    self.parent[iname] = prev
                    self.children.setdefault(prev, []).append(iname)
                    self.children.setdefault(iname, [])
                    self.node_insns.setdefault(iname, [])
                prev = iname
            self.node_insns.setdefault(prev, []).append(insn)

        # alias bookkeeping
        self.member_storage: dict[str, str] = {}
        self.storage_members: dict[str, list[str]] = {}
        for group in k.aliases:
            storage = group[0]
            for m in group:
                self.member_storage[m] = storage
                self.storage_members.setdefault(storage, []).append(m)
        self.member_readers: dict[str, set[str]] = {}
        self.member_writers: dict[str, set[str]] = {}
        for m in self.member_storage:
            self.member_readers[m] = {
                i.id for i in self.insns
                if m in ex.referenced_arrays(k.expanded_rhs(i))}
            self.member_writers[m] = {i.id for i in k.writers_of(m)}

        self.subtree_insns: dict[str, list[kn.Instruction]] = {}
        for iname in self.parent:
            self.subtree_insns[iname] = self._collect_subtree(iname)

        self.access_of = {i.id: _scratch_accesses(k, i) for i in self.insns}
        self.scheduled: set[str] = set()
        self.live: list[_Access] = []
        self.events: list[Event] = []

    def _collect_subtree(self, iname: str) -> list[kn.Instruction]:
        out = list(self.node_insns.get(iname, []))
        for c in self.children.get(iname, []):
            out.extend(self._collect_subtree(c))
        return out

    # alias locks

    def _storage_holder(self, storage: str) -> str | None:
        for m in self.storage_members[storage]:
            written = any(w in self.scheduled for w in self.member_writers[m])
            readers_left = any(r not in self.scheduled
                               for r in self.member_readers[m])
            if written and readers_left:
                return m
        return None

    def _write_admissible(self, insn: kn.Instruction) -> bool:
        storage = self.member_storage.get(insn.assignee)
        if storage is None:
            return True
        holder = self._storage_holder(storage)
        return holder is None or holder == insn.assignee

    # barrier tracker

    def _needs_barrier(self, accesses: list[_Access]) -> bool:
        return any(_conflict(prev, acc)
                   for acc in accesses for prev in self.live)

    def _run(self, insn: kn.Instruction) -> None:
        accesses = self.access_of[insn.id]
        if self._needs_barrier(accesses):
            self.events.append(Barrier())
            self.live = []
        self.events.append(RunInstruction(insn.id))
        self.scheduled.add(insn.id)
        self.live.extend(accesses)

    def _deps_met(self, insn: kn.Instruction) -> bool:
        return all(d in self.scheduled for d in insn.depends_on)

    def _subtree_ready(self, iname: str) -> bool:
        inside = {i.id for i in self.subtree_insns[iname]}
        for insn in self.subtree_insns[iname]:
            for d in insn.depends_on:
                if d not in inside and d not in self.scheduled:
                    return False
            if not inside.issuperset(self.member_readers.get(insn.assignee, ())):
                pass  # readers elsewhere do not block opening
            storage = self.member_storage.get(insn.assignee)
            if storage is not None:
                holder = self._storage_holder(storage)
                if holder is not None and holder != insn.assignee:
                    return False
        return True

    def _emit_node(self, node: str | None) -> None:
        pending = list(self.node_insns.get(node, []))
        pending_children = list(self.children.get(node, []))
        while pending or pending_children:
            progress = False
            while True:
                ready = [i for i in pending
                         if self._deps_met(i) and self._write_admissible(i)]
                if not ready:
                    break
                insn = min(ready, key=lambda i: self.position[i.id])
                self._run(insn)
                pending.remove(insn)
                progress = True
            ready_children = [c for c in pending_children
                              if self._subtree_ready(c)]
            if ready_children:
                child = min(ready_children, key=lambda c: (
                    self.rank_key(c),
                    min(self.position[i.id] for i in self.subtree_insns[c])))
                subtree_accesses = [a for i in self.subtree_insns[child]
                                    for a in self.access_of[i.id]]
                entry_barrier = self._needs_barrier(subtree_accesses)
                self.events.append(EnterLoop(child))
                if entry_barrier:
                    self.events.append(Barrier())
                    self.live = []
                self._emit_node(child)
                self.events.append(LeaveLoop(child))
                pending_children.remove(child)
                progress = True
            if not progress:
                blocked = [i.id for i in pending] + pending_children
                holders = {s: self._storage_holder(s)
                           for s in self.storage_members}
                raise SchedulingImpossible(
                    f"no schedulable instruction or loop among {blocked}; "
                    f"alias holders: { {s: h for s, h in holders.items() if h} }")

    def schedule(self) -> list[Event]:
        self._emit_node(None)
        missing = [i.id for i in self.insns if i.id not in self.scheduled]
        if missing:  # pragma: no cover - defensive
            raise SchedulingImpossible(f"instructions never scheduled: {missing}")
        self._fix_loop_carried()
        self._minimize_barriers()
        return self.events

    def _fix_loop_carried(self) -> None:
        # add a barrier at the top of any loop body whose iteration boundary
        # carries a conflict
        for _ in range(64):
            if not _barrier_violations(self.k, self.events, self.access_of):
                return
            inserted = self._insert_wrap_barrier()
            if not inserted:  # pragma: no cover - defensive
                raise SchedulingImpossible(
                    "cannot separate scratchpad hazard with barriers: "
                    + "; ".join(_barrier_violations(self.k, self.events,
                                                    self.access_of)))
        raise SchedulingImpossible(  # pragma: no cover - defensive
            "barrier insertion did not converge")

    def _insert_wrap_barrier(self) -> bool:
        # innermost-first: a loop with a violating wrap gets a top barrier
        spans = []
        stack = []
        for idx, ev in enumerate(self.events):
            if isinstance(ev, EnterLoop):
                stack.append(idx)
            elif isinstance(ev, LeaveLoop):
                start = stack.pop()
                spans.append((start, idx))
        # inner spans first (they are appended before enclosing ones)
        for start, end in spans:
            body = self.events[start + 1:end]
            if body and isinstance(body[0], Barrier):
                continue
            trial = (self.events[:start + 1] + [Barrier()]
                     + self.events[start + 1:])
            if len(_barrier_violations(self.k, trial, self.access_of)) < max(
                    1, len(_barrier_violations(self.k, self.events,
                                               self.access_of))):
                self.events = trial
                return True
        # fall back: try every loop top even if it does not reduce findings
        for start, end in spans:
            body = self.events[start + 1:end]
            if body and not isinstance(body[0], Barrier):
                self.events = (self.events[:start + 1] + [Barrier()]
                               + self.events[start + 1:])
                return True
        return False

    def _minimize_barriers(self) -> None:
        changed = True
        while changed:
            changed = False
            for idx, ev in enumerate(self.events):
                if isinstance(ev, Barrier):
                    trial = self.events[:idx] + self.events[idx + 1:]
                    if not _barrier_violations(self.k, trial, self.access_of):
                        self.events = trial
                        changed = True
                        break


def linearize(k: kn.Kernel) -> Schedule:
    problems = kn.check_consistency(k)
    if problems:
        raise SchedulingImpossible(
            "kernel is inconsistent: " + "; ".join(str(p) for p in problems))
    return Schedule(tuple(_Scheduler(k).schedule()))


def validate_schedule(k: kn.Kernel, s: Schedule) -> list[Diagnostic]:
    """Empty iff the schedule satisfies nesting, coverage, dependency order,
    loop priority, alias liveness and barrier placement."""
    diags: list[Diagnostic] = []

    def bad(kind, msg):
        diags.append(Diagnostic(kind, msg))

    by_id = {i.id: i for i in k.instructions}
    stack: list[str] = []
    run_index: dict[str, int] = {}
    opened: set[str] = set()
    for idx, ev in enumerate(s.events):
        if isinstance(ev, EnterLoop):
            if ev.iname in opened:
                bad("nesting", f"loop {ev.iname!r} opened twice")
            opened.add(ev.iname)
            stack.append(ev.iname)
        elif isinstance(ev, LeaveLoop):
            if not stack or stack[-1] != ev.iname:
                bad("nesting", f"leave {ev.iname!r} does not match "
                               f"innermost open loop")
                if ev.iname in stack:
                    while stack and stack[-1] != ev.iname:
                        stack.pop()
            if stack:
                stack.pop()
        elif isinstance(ev, RunInstruction):
            insn = by_id.get(ev.insn_id)
            if insn is None:
                bad("run", f"unknown instruction {ev.insn_id!r}")
                continue
            if ev.insn_id in run_index:
                bad("run", f"instruction {ev.insn_id!r} runs twice")
            run_index[ev.insn_id] = idx
            want = set(k.sequential_within(insn))
            if set(stack) != want:
                bad("run", f"{ev.insn_id!r} runs inside loops {sorted(stack)} "
                           f"but needs exactly {sorted(want)}")
    if stack:
        bad("nesting", f"loops never left: {stack}")
    for insn in k.instructions:
        if insn.id not in run_index:
            bad("run", f"instruction {insn.id!r} never runs")
    if diags:
        return diags

    for insn in k.instructions:
        for dep in insn.depends_on:
            if run_index[dep] > run_index[insn.id]:
                bad("deps", f"{insn.id!r} runs before its dependency {dep!r}")

    # loop priority: earlier-listed inames must sit outside later-listed
    # ones whenever their loops nest
    enters = {ev.iname: i for i, ev in enumerate(s.events)
              if isinstance(ev, EnterLoop)}
    leaves = {ev.iname: i for i, ev in enumerate(s.events)
              if isinstance(ev, LeaveLoop)}
    prio = [n for n in k.loop_priority if n in enters]
    for a_pos, a in enumerate(prio):
        for b in prio[a_pos + 1:]:
            if enters[b] < enters[a] and leaves[a] < leaves[b]:
                bad("priority", f"{b!r} encloses {a!r} against loop priority")

    # alias-group liveness: member live ranges must not overlap
    for group in k.aliases:
        ranges = []
        for m in group:
            writes = [run_index[i.id] for i in k.writers_of(m)
                      if i.id in run_index]
            reads = [run_index[i.id] for i in k.instructions
                     if m in ex.referenced_arrays(k.expanded_rhs(i))]
            if writes:
                ranges.append((m, min(writes), max(reads + writes)))
        for i1 in range(len(ranges)):
            for i2 in range(i1 + 1, len(ranges)):
                m1, a1, b1 = ranges[i1]
                m2, a2, b2 = ranges[i2]
                if a1 <= b2 and a2 <= b1:
                    bad("alias", f"live ranges of {m1!r} and {m2!r} overlap")

    for msg in _barrier_violations(k, list(s.events)):
        bad("barrier", msg)
    return diags
