"""Reference interpreter: semantics, counters, SPMD emulation, hazards."""

import numpy as np
import pytest

from helpers import corpus_text, max_rel_error, run_unit_ast

from loopforge import expr as ex
from loopforge import kernel as kn
from loopforge import schedule as sch
from loopforge.diagnostics import DivisionByZero
from loopforge.frontend import lower_to_kernels, parse_source
from loopforge.interp import ExecutionEnvironment, hazard_check, run_kernel


def test_add_one():
    domain = kn.LoopDomain((("i", ex.lit(3)),), ())
    insn = kn.Instruction(
        id="i00_out", assignee="out", assignee_indices=(ex.var("i"),),
        rhs=ex.add(ex.sub("a", "i"), ex.lit(1.0)),
        within_inames=frozenset({"i"}))
    k = kn.Kernel(
        name="k", domain=domain, instructions=(insn,),
        args=(kn.ArrayDescriptor("a", (ex.lit(3),)),
              kn.ArrayDescriptor("out", (ex.lit(3),))))
    env = ExecutionEnvironment.for_kernel(
        k, {}, {"a": np.array([1, 2, 3], np.float32),
                "out": np.zeros(3, np.float32)})
    run_kernel(k, sch.linearize(k), env)
    assert env.arrays["out"].tolist() == [2.0, 3.0, 4.0]
    assert env.read_counts["a"] == 3
    assert env.write_counts["out"] == 3


def test_update_counts_read_and_write():
    domain = kn.LoopDomain((("i", ex.lit(4)),), ())
    insn = kn.Instruction(
        id="i00_out", assignee="out", assignee_indices=(ex.var("i"),),
        rhs=ex.mul(ex.sub("a", "i"), ex.sub("b", "i")), is_update=True,
        within_inames=frozenset({"i"}))
    k = kn.Kernel(
        name="k", domain=domain, instructions=(insn,),
        args=(kn.ArrayDescriptor("a", (ex.lit(4),)),
              kn.ArrayDescriptor("b", (ex.lit(4),)),
              kn.ArrayDescriptor("out", (ex.lit(4),))))
    a = np.arange(1, 5, dtype=np.float32)
    b = np.full(4, 2, np.float32)
    out = np.ones(4, np.float32)
    env = ExecutionEnvironment.for_kernel(k, {}, {"a": a, "b": b, "out": out})
    run_kernel(k, sch.linearize(k), env)
    assert out.tolist() == [3.0, 5.0, 7.0, 9.0]
    assert env.read_counts == {"a": 4, "b": 4, "out": 4}
    assert env.write_counts == {"out": 4}


def test_core_and_lane_tags_match_sequential_result():
    def build(tagged):
        domain = kn.LoopDomain(
            (("e", ex.var("Ne")), ("i", ex.lit(4))), ("Ne",))
        insn = kn.Instruction(
            id="i00_out", assignee="out",
            assignee_indices=(ex.var("i"), ex.var("e")),
            rhs=ex.mul(ex.sub("a", "i", "e"), ex.lit(3.0)),
            within_inames=frozenset({"e", "i"}))
        tags = (("e", kn.CoreAxis(0)), ("i", kn.LaneAxis(0, 4))) if tagged else ()
        return kn.Kernel(
            name="k", domain=domain, instructions=(insn,),
            args=(kn.ScalarParam("Ne"),
                  kn.ArrayDescriptor("a", (ex.lit(4), ex.var("Ne"))),
                  kn.ArrayDescriptor("out", (ex.lit(4), ex.var("Ne")))),
            iname_tags=tags)

    rng = np.random.default_rng(3)
    a = rng.random((4, 2), np.float32)
    outs = []
    for tagged in (False, True):
        k = build(tagged)
        out = np.zeros((4, 2), np.float32)
        env = ExecutionEnvironment.for_kernel(
            k, {"Ne": 2}, {"a": a.copy(), "out": out})
        s = sch.linearize(k)
        if tagged:  # no explicit loops for core/lane inames
            assert s.events == (sch.RunInstruction("i00_out"),)
        run_kernel(k, s, env)
        outs.append(out)
    np.testing.assert_array_equal(outs[0], outs[1])


def test_division_by_zero_reports_context():
    domain = kn.LoopDomain((("i", ex.lit(2)),), ())
    insn = kn.Instruction(
        id="i00_out", assignee="out", assignee_indices=(ex.var("i"),),
        rhs=ex.div(ex.lit(1.0), ex.sub("a", "i")),
        within_inames=frozenset({"i"}))
    k = kn.Kernel(
        name="k", domain=domain, instructions=(insn,),
        args=(kn.ArrayDescriptor("a", (ex.lit(2),)),
              kn.ArrayDescriptor("out", (ex.lit(2),))))
    env = ExecutionEnvironment.for_kernel(
        k, {}, {"a": np.array([1, 0], np.float32),
                "out": np.zeros(2, np.float32)})
    with pytest.raises(DivisionByZero) as err:
        run_kernel(k, sch.linearize(k), env)
    assert "i00_out" in str(err.value)


def _corpus_arrays(nq, ne, seed):
    rng = np.random.default_rng(seed)
    q = np.empty((nq, nq, nq, 8, ne), np.float32)
    q[:, :, :, 0] = rng.uniform(0.5, 1.5, (nq, nq, nq, ne))
    q[:, :, :, 1:4] = rng.uniform(-0.1, 0.1, (nq, nq, nq, 3, ne))
    q[:, :, :, 4] = (1.0e5 / 287.0) * rng.uniform(0.9, 1.1, (nq, nq, nq, ne))
    q[:, :, :, 5:8] = rng.uniform(0.0, 1.0, (nq, nq, nq, 3, ne))
    return {
        "q": q,
        "rhsq": np.zeros((nq, nq, nq, 8, ne), np.float32),
        "D": rng.uniform(-1, 1, (nq, nq)).astype(np.float32),
        "g": rng.uniform(-1, 1, (nq, nq, nq, 3, 3, ne)).astype(np.float32),
        "Jinv": rng.uniform(0.5, 2.0, (nq, nq, nq, ne)).astype(np.float32),
    }


def test_lowering_preserves_semantics_against_ast_walker():
    nq, ne = 3, 2
    unit = parse_source(corpus_text())
    kernels = lower_to_kernels(parse_source(corpus_text()))
    arrays = _corpus_arrays(nq, ne, seed=11)
    scalars = {"Nq": np.int32(nq), "Ne": np.int32(ne),
               "p0": np.float32(1.0e5), "Rgas": np.float32(287.0),
               "gam": np.float32(1.4)}

    ast_env = {**{n: a.copy() for n, a in arrays.items()}, **scalars}
    run_unit_ast(unit, ast_env)

    ir_arrays = {n: a.copy() for n, a in arrays.items()}
    params = {"Nq": nq, "Ne": ne, "p0": 1.0e5, "Rgas": 287.0, "gam": 1.4}
    for k in kernels:
        env = ExecutionEnvironment.for_kernel(k, params, ir_arrays)
        run_kernel(k, sch.linearize(k), env)

    err = max_rel_error(ir_arrays["rhsq"], ast_env["rhsq"])
    assert err <= 1e-6, f"lowered kernels diverge from AST walk: {err}"
    assert float(np.abs(ast_env["rhsq"]).max()) > 0


def test_hazard_check_flags_missing_barrier():
    domain = kn.LoopDomain((("i", ex.lit(4)), ("n", ex.lit(4))), ())
    produce = kn.Instruction(
        id="a_fill", assignee="tmp", assignee_indices=(ex.var("i"),),
        rhs=ex.sub("a", "i"), within_inames=frozenset({"i"}))
    consume = kn.Instruction(
        id="b_use", assignee="out", assignee_indices=(ex.var("i"),),
        rhs=ex.sub("tmp", "n"), is_update=True,
        within_inames=frozenset({"i", "n"}), depends_on=frozenset({"a_fill"}))
    k = kn.Kernel(
        name="k", domain=domain, instructions=(produce, consume),
        args=(kn.ArrayDescriptor("a", (ex.lit(4),)),
              kn.ArrayDescriptor("out", (ex.lit(4),))),
        temporaries=(kn.ArrayDescriptor("tmp", (ex.lit(4),),
                                        space=kn.SCRATCHPAD),),
        iname_tags=(("i", kn.LaneAxis(0, 4)),))
    s = sch.linearize(k)
    arrays = {"a": np.arange(4, dtype=np.float32),
              "out": np.zeros(4, np.float32)}
    env = ExecutionEnvironment.for_kernel(k, {}, arrays)
    assert hazard_check(k, s, env) == []
    mutated = sch.Schedule(tuple(
        e for e in s.events if not isinstance(e, sch.Barrier)))
    diags = hazard_check(k, mutated, env)
    assert diags and "tmp" in diags[0].message
    # hazard_check must not disturb the environment
    assert env.arrays["out"].tolist() == [0.0] * 4


def test_kernel_without_scratchpad_has_no_hazards():
    domain = kn.LoopDomain((("i", ex.lit(3)),), ())
    insn = kn.Instruction(
        id="i00_out", assignee="out", assignee_indices=(ex.var("i"),),
        rhs=ex.lit(1.0), within_inames=frozenset({"i"}))
    k = kn.Kernel(name="k", domain=domain, instructions=(insn,),
                  args=(kn.ArrayDescriptor("out", (ex.lit(3),)),))
    env = ExecutionEnvironment.for_kernel(
        k, {}, {"out": np.zeros(3, np.float32)})
    assert hazard_check(k, sch.linearize(k), env) == []
