"""Shared test utilities: a direct AST walker used as the lowering oracle,
plus corpus loading helpers."""

from __future__ import annotations

import importlib.resources as resources

import numpy as np

from loopforge import expr as ex
from loopforge.frontend.fortran import Assignment, DoLoop, SourceUnit, Subroutine

F32 = np.float32


def corpus_text() -> str:
    ref = resources.files("loopforge.bench") / "data" / "volume.f90"
    return ref.read_text()


def run_subroutine_ast(sub: Subroutine, env: dict[str, object]) -> None:
    """Execute a parsed subroutine directly (1-based indexing, f32
    arithmetic), mutating the arrays in `env`. Independent of the kernel IR
    and interpreter; serves as the lowering-semantics oracle."""
    local: dict[str, object] = {}

    def lookup(name: str):
        if name in local:
            return local[name]
        if name in env:
            return env[name]
        raise KeyError(f"unbound {name!r} in AST execution")

    def ev(e: ex.Expression):
        if isinstance(e, ex.NumericLiteral):
            return np.int32(e.value) if e.dtype == ex.I32 else F32(e.value)
        if isinstance(e, ex.VariableRef):
            return lookup(e.name)
        if isinstance(e, ex.Subscript):
            arr = lookup(e.array)
            idx = tuple(int(ev(i)) - 1 for i in e.indices)
            for d, (ii, n) in enumerate(zip(idx, arr.shape)):
                assert 0 <= ii < n, f"{e.array} axis {d}: {ii} not in [0, {n})"
            return arr[idx]
        if isinstance(e, ex.UnaryOp):
            return -ev(e.operand)
        assert isinstance(e, ex.BinaryOp)
        a, b = ev(e.lhs), ev(e.rhs)
        int_op = isinstance(a, (int, np.integer)) and isinstance(b, (int, np.integer))
        if not int_op:
            a, b = F32(a), F32(b)
        if e.op == "add":
            return a + b
        if e.op == "sub":
            return a - b
        if e.op == "mul":
            return a * b
        if e.op == "div":
            return np.int32(int(a) // int(b)) if int_op else a / b
        return F32(np.power(F32(a), F32(b)))

    def run(stmts):
        for s in stmts:
            if isinstance(s, DoLoop):
                for v in range(1, int(ev(s.extent)) + 1):
                    local[s.var] = np.int32(v)
                    run(s.body)
            else:
                assert isinstance(s, Assignment)
                val = ev(s.rhs)
                if s.target_indices is None:
                    local[s.target] = F32(val)
                else:
                    arr = lookup(s.target)
                    idx = tuple(int(ev(i)) - 1 for i in s.target_indices)
                    arr[idx] = F32(val)

    run(sub.body)


def run_unit_ast(unit: SourceUnit, env: dict[str, object]) -> None:
    for sub in unit.subroutines:
        run_subroutine_ast(sub, env)


def max_rel_error(got: np.ndarray, want: np.ndarray) -> float:
    """Max-norm relative error: worst absolute difference over the scale
    of the expected values."""
    got = np.asarray(got, np.float64)
    want = np.asarray(want, np.float64)
    if not want.size:
        return 0.0
    scale = float(np.max(np.abs(want)))
    diff = float(np.max(np.abs(got - want)))
    return diff / scale if scale else diff
