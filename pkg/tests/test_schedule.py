"""Linearization: event structure, determinism, alias locks, validation."""

import pytest

from helpers import corpus_text

from loopforge import expr as ex
from loopforge import kernel as kn
from loopforge import schedule as sch
from loopforge.diagnostics import SchedulingImpossible
from loopforge.frontend import lower_to_kernels, parse_source


def single_insn_kernel():
    domain = kn.LoopDomain((("i", ex.lit(4)),), ())
    insn = kn.Instruction(
        id="i00_out", assignee="out", assignee_indices=(ex.var("i"),),
        rhs=ex.add(ex.sub("a", "i"), ex.lit(1.0)),
        within_inames=frozenset({"i"}))
    return kn.Kernel(
        name="k", domain=domain, instructions=(insn,),
        args=(kn.ArrayDescriptor("a", (ex.lit(4),)),
              kn.ArrayDescriptor("out", (ex.lit(4),))))


def test_single_instruction_schedule():
    s = sch.linearize(single_insn_kernel())
    assert [str(e) for e in s.events] == ["enter i", "run i00_out", "leave i"]
    assert sch.validate_schedule(single_insn_kernel(), s) == []


def test_determinism_and_dump():
    k = single_insn_kernel()
    assert sch.linearize(k) == sch.linearize(k)
    assert sch.linearize(k).dump() == "enter i\nrun i00_out\nleave i\n"


def test_run_before_dependency_flagged():
    k = single_insn_kernel()
    extra = k.instructions[0].copy(
        id="i01_out2", assignee="out",
        depends_on=frozenset({"i00_out"}))
    k = k.copy(instructions=(k.instructions[0], extra))
    bad = sch.Schedule((
        sch.EnterLoop("i"), sch.RunInstruction("i01_out2"),
        sch.RunInstruction("i00_out"), sch.LeaveLoop("i")))
    diags = sch.validate_schedule(k, bad)
    assert any("before its dependency" in d.message for d in diags)


def test_loop_priority_controls_nesting():
    domain = kn.LoopDomain((("a", ex.lit(2)), ("b", ex.lit(3))), ())
    insn = kn.Instruction(
        id="i00_out", assignee="out",
        assignee_indices=(ex.var("a"), ex.var("b")),
        rhs=ex.lit(1.0), within_inames=frozenset({"a", "b"}))
    args = (kn.ArrayDescriptor("out", (ex.lit(2), ex.lit(3))),)
    k = kn.Kernel(name="k", domain=domain, instructions=(insn,), args=args,
                  loop_priority=("b", "a"))
    s = sch.linearize(k)
    assert [str(e) for e in s.events[:2]] == ["enter b", "enter a"]
    assert sch.validate_schedule(k, s) == []
    # the opposite nesting violates the priority
    flipped = sch.Schedule((
        sch.EnterLoop("a"), sch.EnterLoop("b"),
        sch.RunInstruction("i00_out"),
        sch.LeaveLoop("b"), sch.LeaveLoop("a")))
    diags = sch.validate_schedule(k, flipped)
    assert any("priority" in d.kind for d in diags)


def test_alias_deadlock_is_reported():
    # two aliased temporaries with interlocking dependencies: the reader of
    # the first written member depends on the second member's writer
    domain = kn.LoopDomain((("i", ex.lit(2)),), ())
    t = lambda n: kn.ArrayDescriptor(  # noqa: E731
        n, (ex.lit(2),), space=kn.SCRATCHPAD)
    w1 = kn.Instruction(id="a_w1", assignee="t1",
                        assignee_indices=(ex.var("i"),), rhs=ex.lit(1.0),
                        within_inames=frozenset({"i"}))
    w2 = kn.Instruction(id="b_w2", assignee="t2",
                        assignee_indices=(ex.var("i"),), rhs=ex.lit(2.0),
                        within_inames=frozenset({"i"}),
                        depends_on=frozenset({"a_w1"}))
    r1 = kn.Instruction(id="c_r1", assignee="out",
                        assignee_indices=(ex.var("i"),),
                        rhs=ex.add(ex.sub("t1", "i"), ex.sub("t2", "i")),
                        within_inames=frozenset({"i"}),
                        depends_on=frozenset({"a_w1", "b_w2"}))
    k = kn.Kernel(
        name="k", domain=domain, instructions=(w1, w2, r1),
        args=(kn.ArrayDescriptor("out", (ex.lit(2),)),),
        temporaries=(t("t1"), t("t2")), aliases=(("t1", "t2"),))
    with pytest.raises(SchedulingImpossible):
        sch.linearize(k)


def test_corpus_lowered_kernels_schedule_cleanly():
    kernels = lower_to_kernels(parse_source(corpus_text()))
    for k in kernels:
        s = sch.linearize(k)
        assert sch.validate_schedule(k, s) == []
        # untagged, unfused kernels need no barriers
        assert not any(isinstance(e, sch.Barrier) for e in s.events)
        # natural source nesting: e outermost
        assert str(s.events[0]) == "enter e"


def test_scratchpad_write_read_gets_barrier():
    # lane-parallel producer and a consumer reading across lanes
    domain = kn.LoopDomain((("i", ex.lit(4)), ("n", ex.lit(4))), ())
    produce = kn.Instruction(
        id="a_fill", assignee="tmp", assignee_indices=(ex.var("i"),),
        rhs=ex.sub("a", "i"), within_inames=frozenset({"i"}))
    consume = kn.Instruction(
        id="b_use", assignee="out", assignee_indices=(ex.var("i"),),
        rhs=ex.sub("tmp", "n"), is_update=True,
        within_inames=frozenset({"i", "n"}),
        depends_on=frozenset({"a_fill"}))
    k = kn.Kernel(
        name="k", domain=domain, instructions=(produce, consume),
        args=(kn.ArrayDescriptor("a", (ex.lit(4),)),
              kn.ArrayDescriptor("out", (ex.lit(4),))),
        temporaries=(kn.ArrayDescriptor("tmp", (ex.lit(4),),
                                        space=kn.SCRATCHPAD),),
        iname_tags=(("i", kn.LaneAxis(0, 4)),))
    s = sch.linearize(k)
    assert sch.validate_schedule(k, s) == []
    kinds = [str(e) for e in s.events]
    assert "barrier" in kinds
    assert kinds.index("run a_fill") < kinds.index("barrier") < kinds.index(
        "run b_use")
    # the barrier is load-bearing: removing it breaks validation
    without = sch.Schedule(tuple(
        e for e in s.events if not isinstance(e, sch.Barrier)))
    diags = sch.validate_schedule(k, without)
    assert any(d.kind == "barrier" for d in diags)


def test_randomized_small_kernels_schedule_and_validate():
    import numpy as np

    rng = np.random.default_rng(2024)
    for trial in range(25):
        n_inames = int(rng.integers(1, 4))
        inames = tuple((f"x{t}", ex.lit(int(rng.integers(1, 4))))
                       for t in range(n_inames))
        domain = kn.LoopDomain(inames, ())
        names = [n for n, _e in inames]
        insns = []
        arrays = {}
        for t in range(int(rng.integers(1, 6))):
            # loop sets nest like source loops: prefixes of the iname order
            within = names[:int(rng.integers(0, n_inames + 1))]
            arr = f"a{t}"
            arrays[arr] = kn.ArrayDescriptor(
                arr, tuple(domain.extent(n) for n in within))
            deps = frozenset(
                i.id for i in insns if rng.random() < 0.3)
            insns.append(kn.Instruction(
                id=f"i{t:02d}", assignee=arr,
                assignee_indices=tuple(ex.var(n) for n in within),
                rhs=ex.lit(float(t)), within_inames=frozenset(within),
                depends_on=deps))
        k = kn.Kernel(name="rand", domain=domain,
                      instructions=tuple(insns),
                      args=tuple(arrays.values()))
        assert kn.check_consistency(k) == []
        s = sch.linearize(k)
        assert sch.validate_schedule(k, s) == [], trial
        assert sch.linearize(k) == s
