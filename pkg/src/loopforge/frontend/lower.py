"""Lowering from the parsed source AST to kernel IR.

Loop variables become zero-based inames (bounds 1..N normalize to [0, N)
with subscripts shifted accordingly); each assignment becomes one
instruction whose within set is the enclosing loop variables; scalars
assigned inside loops become private temporaries. Dependencies are
inferred pairwise in lexical order: a later instruction depends on an
earlier one whenever one of them writes a name the other touches with
potentially overlapping subscripts.
"""

from __future__ import annotations

from .. import expr as ex
from .. import kernel as kn
from ..diagnostics import NonRectangularLoop, ShadowedName, SourceSyntaxError
from .fortran import Assignment, Declaration, DoLoop, SourceUnit, Subroutine


def _normalize_zero_based(e: ex.Expression, loop_vars: set[str]) -> ex.Expression:
    """Rewrite a 1-based source expression to the 0-based iname convention.

    Subscript indices are decremented; loop variables (whose iname value is
    the source value minus one) are then incremented everywhere, so plain
    iname indices come out unchanged and literals drop by one.
    """

    def decrement_indices(node: ex.Expression) -> ex.Expression:
        if isinstance(node, ex.Subscript):
            return ex.Subscript(node.array, tuple(
                ex.BinaryOp("sub", i, ex.lit(1)) for i in node.indices))
        return node

    e = ex.transform_bottom_up(e, decrement_indices)
    e = ex.substitute(e, {v: ex.add(ex.var(v), ex.lit(1)) for v in loop_vars})
    return ex.fold_constants(e)


def _indices_overlap(a: tuple[ex.Expression, ...],
                     b: tuple[ex.Expression, ...]) -> bool:
    """Conservative subscript overlap: disjoint only when some axis has two
    distinct literal indices."""
    if len(a) != len(b):
        return True
    for ia, ib in zip(a, b):
        if (isinstance(ia, ex.NumericLiteral) and isinstance(ib, ex.NumericLiteral)
                and ia.value != ib.value):
            return False
    return True


def _access_sites(insn: kn.Instruction, scalars: set[str]):
    """(reads, writes) as lists of (name, index tuple or None for scalars)."""
    reads: list[tuple[str, tuple[ex.Expression, ...] | None]] = []
    exprs = [insn.rhs] + list(insn.assignee_indices)
    for e in exprs:
        for node in ex.walk(e):
            if isinstance(node, ex.Subscript):
                reads.append((node.array, node.indices))
            elif isinstance(node, ex.VariableRef) and node.name in scalars:
                reads.append((node.name, None))
    if insn.is_update:
        reads.append((insn.assignee,
                      insn.assignee_indices if insn.assignee_indices else None))
    writes = [(insn.assignee,
               insn.assignee_indices if insn.assignee_indices else None)]
    return reads, writes


def _sites_conflict(site_a, site_b) -> bool:
    name_a, idx_a = site_a
    name_b, idx_b = site_b
    if name_a != name_b:
        return False
    if idx_a is None or idx_b is None:
        return True
    return _indices_overlap(idx_a, idx_b)


def infer_dependencies(instructions: list[kn.Instruction],
                       scalars: set[str]) -> list[kn.Instruction]:
    """Add lexical-order dependencies for RAW, WAR and WAW conflicts."""
    sites = [_access_sites(i, scalars) for i in instructions]
    out = []
    for j, insn in enumerate(instructions):
        deps = set(insn.depends_on)
        reads_j, writes_j = sites[j]
        for i in range(j):
            reads_i, writes_i = sites[i]
            conflict = any(
                _sites_conflict(w, r) for w in writes_i for r in reads_j
            ) or any(
                _sites_conflict(w, r) for w in writes_j for r in reads_i
            ) or any(
                _sites_conflict(w, v) for w in writes_i for v in writes_j
            )
            if conflict:
                deps.add(instructions[i].id)
        out.append(insn.copy(depends_on=frozenset(deps)))
    return out


def _lower_subroutine(sub: Subroutine,
                      regions: list[tuple[str, int, int]]) -> kn.Kernel:
    arg_set = set(sub.arg_names)
    decls: dict[str, Declaration] = {}
    for d in sub.declarations:
        for n in d.names:
            if n in decls:
                raise ShadowedName(f"{n!r} declared twice in {sub.name!r}")
            decls[n] = d
    for a in sub.arg_names:
        if a not in decls:
            raise SourceSyntaxError(
                f"argument {a!r} of {sub.name!r} is not declared", sub.line)

    args: list[kn.ArrayDescriptor | kn.ScalarParam] = []
    temporaries: list[kn.ArrayDescriptor] = []
    int_scalars: list[str] = []
    for name in sub.arg_names:
        d = decls[name]
        if d.dimension is None:
            dtype = ex.I32 if d.kind == "integer" else ex.F32
            args.append(kn.ScalarParam(name, dtype))
            if d.kind == "integer":
                int_scalars.append(name)

    def lower_shape(dim: list[ex.Expression]) -> tuple[ex.Expression, ...]:
        # dimension extents are sizes, not indices: no shifting
        return tuple(dim)

    loop_var_names: set[str] = set()

    def collect_loop_vars(stmts):
        for s in stmts:
            if isinstance(s, DoLoop):
                loop_var_names.add(s.var)
                collect_loop_vars(s.body)

    collect_loop_vars(sub.body)

    for name in sub.arg_names:
        d = decls[name]
        if d.dimension is not None:
            args.append(kn.ArrayDescriptor(
                name, lower_shape(d.dimension), dtype=ex.F32, space=kn.GLOBAL))
    for name, d in decls.items():
        if name in arg_set or name in loop_var_names:
            continue
        if d.dimension is not None:
            temporaries.append(kn.ArrayDescriptor(
                name, lower_shape(d.dimension), dtype=ex.F32,
                space=kn.PRIVATE))
        elif d.kind == "real":
            temporaries.append(kn.ArrayDescriptor(
                name, (), dtype=ex.F32, space=kn.PRIVATE))
    for v in loop_var_names:
        if decls.get(v) is None or decls[v].kind != "integer":
            raise SourceSyntaxError(
                f"loop variable {v!r} must be declared integer", sub.line)
        if v in arg_set:
            raise ShadowedName(f"loop variable {v!r} is also an argument")

    scalar_temps = {t.name for t in temporaries if t.rank == 0}

    inames: list[tuple[str, ex.Expression]] = []
    instructions: list[kn.Instruction] = []
    counter = 0

    def tag_for_line(line: int) -> frozenset[str]:
        return frozenset(t for t, lo, hi in regions if lo <= line <= hi)

    def lower_stmts(stmts, enclosing: list[str]):
        nonlocal counter
        for s in stmts:
            if isinstance(s, DoLoop):
                if s.var in enclosing:
                    raise ShadowedName(
                        f"loop variable {s.var!r} reused in nested loop "
                        f"(line {s.line})")
                extent = s.extent
                for v in ex.free_variables(extent):
                    if v not in int_scalars:
                        raise NonRectangularLoop(
                            f"extent of loop {s.var!r} (line {s.line}) "
                            f"references {v!r}; bounds may only use "
                            f"integer parameters")
                for known, ext in inames:
                    if known == s.var:
                        if ext != extent:
                            raise SourceSyntaxError(
                                f"loop variable {s.var!r} reused with a "
                                f"different extent", s.line)
                        break
                else:
                    inames.append((s.var, extent))
                lower_stmts(s.body, enclosing + [s.var])
            else:
                assert isinstance(s, Assignment)
                loop_vars = set(enclosing)
                if s.target_indices is not None:
                    target = _normalize_zero_based(
                        ex.Subscript(s.target, tuple(s.target_indices)),
                        loop_vars)
                    assert isinstance(target, ex.Subscript)
                    indices = target.indices
                else:
                    indices = ()
                rhs = _normalize_zero_based(s.rhs, loop_vars)

                is_update = False
                if (indices and isinstance(rhs, ex.BinaryOp) and rhs.op == "add"
                        and rhs.lhs == ex.Subscript(s.target, indices)):
                    is_update = True
                    rhs = rhs.rhs
                counter_id = f"i{counter:02d}_{s.target}"
                counter += 1
                instructions.append(kn.Instruction(
                    id=counter_id,
                    assignee=s.target,
                    assignee_indices=indices,
                    rhs=rhs,
                    is_update=is_update,
                    within_inames=frozenset(enclosing),
                    tags=tag_for_line(s.line),
                ))

    lower_stmts(sub.body, [])
    instructions = infer_dependencies(instructions, scalar_temps)

    domain = kn.LoopDomain(tuple(inames), tuple(int_scalars))
    return kn.Kernel(
        name=sub.name,
        domain=domain,
        instructions=tuple(instructions),
        args=tuple(args),
        temporaries=tuple(temporaries),
    )


def lower_to_kernels(unit: SourceUnit) -> list[kn.Kernel]:
    """One kernel per subroutine, in declaration order."""
    out = []
    for sub in unit.subroutines:
        k = _lower_subroutine(sub, unit.tagged_regions)
        problems = kn.check_consistency(k)
        if problems:
            raise SourceSyntaxError(
                f"lowering {sub.name!r} produced inconsistent IR: "
                + "; ".join(str(p) for p in problems), sub.line)
        out.append(k)
    return out
