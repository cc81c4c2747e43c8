"""Structural transformations: fusion, parameter fixing, tagging, layout."""

from __future__ import annotations

import re

from .. import expr as ex
from .. import kernel as kn
from ..diagnostics import (
    ArgumentConflict,
    AxisConflict,
    BadPermutation,
    DomainMismatch,
    ExtentMismatch,
    FootprintMismatch,
    InvalidTransform,
    MalformedConstraint,
    MultipleVecAxes,
    NonLiteralExtent,
    NonLiteralSubscript,
    NonScalarParameter,
    NotDivisible,
    RankMismatch,
    SpaceMismatch,
    TaggedNotSequential,
    UnknownIname,
    UnknownParameter,
    VecExtentMismatch,
)
from .base import log, replace_descriptor, rewrite_instruction_exprs
from .match import MatchPredicate, parse_match


def fuse_kernels(kernels: list[kn.Kernel],
                 suffixes: list[str]) -> kn.Kernel:
    """Join kernels on same-named inames; for every pair the domain
    projections onto the shared iname subset must agree. Same-named
    arguments merge; temporaries, local rules and instruction ids are kept
    private by appending each kernel's suffix."""
    if len(kernels) != len(suffixes):
        raise InvalidTransform(
            f"{len(kernels)} kernels but {len(suffixes)} suffixes")
    if not kernels:
        raise InvalidTransform("nothing to fuse")

    for a_pos in range(len(kernels)):
        for b_pos in range(a_pos + 1, len(kernels)):
            ka, kb = kernels[a_pos], kernels[b_pos]
            shared = [n for n in ka.domain.names() if n in kb.domain]
            for n in shared:
                if ka.domain.extent(n) != kb.domain.extent(n):
                    raise DomainMismatch(
                        n, f"{ex.format_expression(ka.domain.extent(n))} in "
                           f"{ka.name!r} vs "
                           f"{ex.format_expression(kb.domain.extent(n))} in "
                           f"{kb.name!r}")

    inames: list[tuple[str, ex.Expression]] = []
    params: list[str] = []
    args: dict[str, kn.ArrayDescriptor | kn.ScalarParam] = {}
    temporaries: list[kn.ArrayDescriptor] = []
    rules: list[ex.SubstitutionRule] = []
    instructions: list[kn.Instruction] = []
    iname_tags: list[tuple[str, kn.InameTag]] = []
    priority: list[str] = []
    assumptions: list[kn.Assumption] = []
    aliases: list[tuple[str, ...]] = []

    for k, suffix in zip(kernels, suffixes):
        for n, extent in k.domain.inames:
            if not any(n == m for m, _ in inames):
                inames.append((n, extent))
        for p in k.domain.parameters:
            if p not in params:
                params.append(p)
        for a in k.args:
            if a.name in args:
                if args[a.name] != a:
                    raise ArgumentConflict(
                        f"argument {a.name!r} declared differently across "
                        f"fused kernels")
            else:
                args[a.name] = a
        rename = {t.name: t.name + suffix for t in k.temporaries}
        for t in k.temporaries:
            temporaries.append(kn.ArrayDescriptor(
                rename[t.name], t.shape, t.dtype, t.space, t.axis_names,
                t.dim_tags))
        rule_rename = {r.name: r.name + suffix for r in k.rules}
        for r in k.rules:
            body = ex.rename_arrays(r.body, rename)
            body = ex.rename_invocations(body, rule_rename)
            rules.append(ex.SubstitutionRule(rule_rename[r.name], r.params, body))
        for i in k.instructions:
            def remap(e: ex.Expression) -> ex.Expression:
                return ex.rename_invocations(
                    ex.rename_arrays(e, rename), rule_rename)
            instructions.append(kn.Instruction(
                id=i.id + suffix,
                assignee=rename.get(i.assignee, i.assignee),
                assignee_indices=tuple(remap(x) for x in i.assignee_indices),
                rhs=remap(i.rhs),
                is_update=i.is_update,
                within_inames=i.within_inames,
                depends_on=frozenset(d + suffix for d in i.depends_on),
                tags=i.tags,
            ))
        for n, t in k.iname_tags:
            if not any(n == m for m, _ in iname_tags):
                iname_tags.append((n, t))
        for n in k.loop_priority:
            if n not in priority:
                priority.append(n)
        for a in k.assumptions:
            if a not in assumptions:
                assumptions.append(a)
        for group in k.aliases:
            aliases.append(tuple(m + suffix for m in group))

    name = "fused" + "".join(suffixes) if len(kernels) > 1 \
        else kernels[0].name + suffixes[0]
    return kn.Kernel(
        name=name,
        domain=kn.LoopDomain(tuple(inames), tuple(params)),
        instructions=tuple(instructions),
        args=tuple(args.values()),
        temporaries=tuple(temporaries),
        rules=ex.RuleRegistry(rules),
        iname_tags=tuple(iname_tags),
        loop_priority=tuple(priority),
        assumptions=tuple(assumptions),
        aliases=tuple(aliases),
    )


def fix_parameters(k: kn.Kernel, bindings: dict[str, int]) -> kn.Kernel:
    for name in bindings:
        if name in {a.name for a in k.args if isinstance(a, kn.ArrayDescriptor)}:
            raise NonScalarParameter(f"{name!r} is an array, not a parameter")
        sp = k.scalar_params().get(name)
        if sp is None:
            raise UnknownParameter(f"no scalar parameter {name!r}")
        if sp.dtype != ex.I32:
            raise NonScalarParameter(f"{name!r} is not an integer parameter")
    subst = {n: ex.lit(v) for n, v in bindings.items()}

    def fix(e: ex.Expression) -> ex.Expression:
        return ex.fold_constants(ex.substitute(e, subst))

    domain = kn.LoopDomain(
        tuple((n, fix(extent)) for n, extent in k.domain.inames),
        tuple(p for p in k.domain.parameters if p not in bindings))
    args = tuple(
        kn.ArrayDescriptor(a.name, tuple(fix(s) for s in a.shape), a.dtype,
                           a.space, a.axis_names, a.dim_tags)
        if isinstance(a, kn.ArrayDescriptor) else a
        for a in k.args if a.name not in bindings)
    temps = tuple(
        kn.ArrayDescriptor(t.name, tuple(fix(s) for s in t.shape), t.dtype,
                           t.space, t.axis_names, t.dim_tags)
        for t in k.temporaries)
    instructions = tuple(rewrite_instruction_exprs(i, fix)
                         for i in k.instructions)
    rules = ex.RuleRegistry(
        ex.SubstitutionRule(r.name, r.params, fix(r.body)) for r in k.rules)
    assumptions = []
    for a in k.assumptions:
        if a.param in bindings:
            v = bindings[a.param]
            ok = {"<": v < a.value, "<=": v <= a.value, ">": v > a.value,
                  ">=": v >= a.value, "==": v == a.value}[a.op]
            if not ok:
                raise InvalidTransform(
                    f"fixing {a.param}={v} violates assumption {a}")
        else:
            assumptions.append(a)
    return k.copy(domain=domain, args=args, temporaries=temps,
                  instructions=instructions, rules=rules,
                  assumptions=tuple(assumptions))


_CONSTRAINT = re.compile(r"^\s*(\w+)\s*(>=|<=|==|>|<)\s*(-?\d+)\s*$")


def assume(k: kn.Kernel, constraint: str) -> kn.Kernel:
    m = _CONSTRAINT.match(constraint)
    if not m:
        raise MalformedConstraint(
            f"constraint must look like 'Ne > 0', got {constraint!r}")
    param, op, value = m.group(1), m.group(2), int(m.group(3))
    if param not in k.scalar_params():
        raise MalformedConstraint(
            f"constraint references unknown parameter {param!r}")
    a = kn.Assumption(param, op, value)
    if a in k.assumptions:
        return k
    return k.copy(assumptions=k.assumptions + (a,))


def prioritize_loops(k: kn.Kernel, order: list[str]) -> kn.Kernel:
    for n in order:
        if n not in k.domain:
            raise UnknownIname(f"loop priority names unknown iname {n!r}")
        if not k.is_sequential(n):
            raise TaggedNotSequential(
                f"{n!r} is {k.tag_of(n)}, not a sequential loop")
    return k.copy(loop_priority=tuple(order))


def _parse_tag(k: kn.Kernel, iname: str, text: str) -> kn.InameTag:
    if text == "seq":
        return kn.Sequential()
    if text == "unroll":
        return kn.UnrollIname()
    if text == "vec":
        extent = k.domain.extent(iname)
        if not isinstance(extent, ex.NumericLiteral) or int(extent.value) != 4:
            raise VecExtentMismatch(
                f"vec iname {iname!r} must have literal extent 4, has "
                f"{ex.format_expression(extent)}")
        return kn.VecIname()
    m = re.fullmatch(r"core\.(\d+)", text)
    if m:
        return kn.CoreAxis(int(m.group(1)))
    m = re.fullmatch(r"lane\.(\d+)", text)
    if m:
        extent = k.domain.extent(iname)
        if not isinstance(extent, ex.NumericLiteral):
            raise AxisConflict(
                f"lane iname {iname!r} needs a literal extent, has "
                f"{ex.format_expression(extent)}")
        return kn.LaneAxis(int(m.group(1)), int(extent.value))
    raise InvalidTransform(f"unknown iname tag {text!r}")


def tag_inames(k: kn.Kernel, tags: list[tuple[str, str]]) -> kn.Kernel:
    new = dict(k.iname_tags)
    for iname, text in tags:
        if iname not in k.domain:
            raise UnknownIname(f"cannot tag unknown iname {iname!r}")
        new[iname] = _parse_tag(k, iname, text)
    # same-axis inames must agree on extents (several inames may share a
    # lane axis as long as only one appears per instruction)
    per_axis: dict[tuple[str, int], object] = {}
    for n, t in new.items():
        if isinstance(t, kn.LaneAxis):
            key = ("lane", t.axis)
            if key in per_axis and per_axis[key] != t.extent:
                raise AxisConflict(
                    f"lane axis {t.axis}: extent {t.extent} of {n!r} differs "
                    f"from {per_axis[key]}")
            per_axis[key] = t.extent
        elif isinstance(t, kn.CoreAxis):
            key = ("core", t.axis)
            extent = ex.format_expression(k.domain.extent(n))
            if key in per_axis and per_axis[key] != extent:
                raise AxisConflict(
                    f"core axis {t.axis}: extents differ across inames")
            per_axis[key] = extent
    out = k.copy(iname_tags=tuple(new.items()))
    for insn in out.instructions:
        seen: dict[tuple[str, int], str] = {}
        for w in insn.within_inames:
            t = out.tag_of(w)
            if isinstance(t, (kn.LaneAxis, kn.CoreAxis)):
                kind = "lane" if isinstance(t, kn.LaneAxis) else "core"
                key = (kind, t.axis)
                if key in seen:
                    raise AxisConflict(
                        f"instruction {insn.id!r} lies within both {seen[key]!r} "
                        f"and {w!r} on {kind} axis {t.axis}")
                seen[key] = w
    return out


def rename_iname(k: kn.Kernel, old: str, new: str,
                 within: str | MatchPredicate = "all",
                 existing_ok: bool = False) -> kn.Kernel:
    if old not in k.domain:
        raise UnknownIname(f"cannot rename unknown iname {old!r}")
    pred = parse_match(within) if isinstance(within, str) else within
    matched = [i for i in k.instructions
               if pred.matches(k, i) and old in i.within_inames]
    if not matched:
        log.warning("rename_iname: no matched instruction references %r "
                    "(kernel unchanged)", old)
        return k

    extent = k.domain.extent(old)
    domain = k.domain
    tags = dict(k.iname_tags)
    if new in k.domain:
        if not existing_ok:
            raise InvalidTransform(
                f"iname {new!r} exists; pass existing_ok to reuse it")
        if k.domain.extent(new) != extent:
            raise ExtentMismatch(
                f"extent of {new!r} differs from extent of {old!r}")
    else:
        domain = domain.with_iname(new, extent)
        old_tag = k.tag_of(old)
        if not isinstance(old_tag, kn.Sequential):
            tags[new] = old_tag

    matched_ids = {i.id for i in matched}
    instructions = []
    for i in k.instructions:
        if i.id in matched_ids:
            i = rewrite_instruction_exprs(
                i, lambda e: ex.rename_variables(e, {old: new}))
            i = i.copy(within_inames=(i.within_inames - {old}) | {new})
        instructions.append(i)

    still_used = any(
        old in i.within_inames
        or old in ex.free_variables(i.rhs)
        or any(old in ex.free_variables(x) for x in i.assignee_indices)
        for i in instructions)
    priority = k.loop_priority
    if not still_used:
        domain = domain.without_iname(old)
        tags.pop(old, None)
        priority = tuple(p for p in priority if p != old)
    return k.copy(domain=domain, instructions=tuple(instructions),
                  iname_tags=tuple(tags.items()), loop_priority=priority)


def set_array_axis_names(k: kn.Kernel, array: str,
                         names: list[str]) -> kn.Kernel:
    desc = k.array(array)
    if len(names) != desc.rank:
        raise RankMismatch(
            f"{array!r} has rank {desc.rank}, got {len(names)} names")
    return replace_descriptor(
        k, kn.ArrayDescriptor(desc.name, desc.shape, desc.dtype, desc.space,
                              tuple(names), desc.dim_tags))


def split_array_axis(k: kn.Kernel, array: str, axis: str | int,
                     factor: int) -> kn.Kernel:
    desc = k.array(array)
    if isinstance(axis, str) and not axis.isdigit():
        if desc.axis_names is None or axis not in desc.axis_names:
            raise InvalidTransform(
                f"{array!r} has no axis named {axis!r}")
        axis_idx = desc.axis_names.index(axis)
    else:
        axis_idx = int(axis)
    if not 0 <= axis_idx < desc.rank:
        raise InvalidTransform(f"axis {axis_idx} out of range for {array!r}")
    if desc.dim_tags is not None:
        raise InvalidTransform(
            f"split {array!r} before tagging its axes")
    extent = desc.shape[axis_idx]
    if not isinstance(extent, ex.NumericLiteral):
        raise NonLiteralExtent(
            f"axis {axis_idx} of {array!r} has extent "
            f"{ex.format_expression(extent)}")
    total = int(extent.value)
    if factor <= 0 or total % factor:
        raise NotDivisible(f"extent {total} not divisible by {factor}")

    shape = (desc.shape[:axis_idx] + (ex.lit(factor), ex.lit(total // factor))
             + desc.shape[axis_idx + 1:])
    axis_names = None
    if desc.axis_names is not None:
        base = desc.axis_names[axis_idx]
        axis_names = (desc.axis_names[:axis_idx]
                      + (f"{base}_inner", f"{base}_outer")
                      + desc.axis_names[axis_idx + 1:])
    k = replace_descriptor(k, kn.ArrayDescriptor(
        desc.name, shape, desc.dtype, desc.space, axis_names, None))

    def split_indices(indices: tuple[ex.Expression, ...],
                      where: str) -> tuple[ex.Expression, ...]:
        s = indices[axis_idx]
        if not isinstance(s, ex.NumericLiteral):
            raise NonLiteralSubscript(
                f"cannot split axis {axis_idx} of {array!r} in {where}: "
                f"subscript {ex.format_expression(s)} is not a literal")
        v = int(s.value)
        return (indices[:axis_idx]
                + (ex.lit(v % factor), ex.lit(v // factor))
                + indices[axis_idx + 1:])

    def rewrite(e: ex.Expression) -> ex.Expression:
        def repl(node: ex.Expression) -> ex.Expression:
            if isinstance(node, ex.Subscript) and node.array == array:
                return ex.Subscript(node.array,
                                    split_indices(node.indices, "rhs"))
            return node
        return ex.transform_bottom_up(e, repl)

    instructions = []
    for i in k.instructions:
        i = rewrite_instruction_exprs(i, rewrite)
        if i.assignee == array:
            i = i.copy(assignee_indices=split_indices(i.assignee_indices, i.id))
        instructions.append(i)
    rules = ex.RuleRegistry(
        ex.SubstitutionRule(r.name, r.params, rewrite(r.body))
        for r in k.rules)
    return k.copy(instructions=tuple(instructions), rules=rules)


def tag_array_axes(k: kn.Kernel, array: str, tags: list[str]) -> kn.Kernel:
    desc = k.array(array)
    if len(tags) != desc.rank:
        raise RankMismatch(
            f"{array!r} has rank {desc.rank}, got {len(tags)} dim tags")
    parsed: list[kn.DimTag] = []
    for t in tags:
        if t == "vec":
            parsed.append(kn.VecAxis())
        elif re.fullmatch(r"N\d+", t):
            parsed.append(kn.NestingOrder(int(t[1:])))
        else:
            raise InvalidTransform(f"unknown dim tag {t!r}")
    vecs = [i for i, t in enumerate(parsed) if isinstance(t, kn.VecAxis)]
    if len(vecs) > 1:
        raise MultipleVecAxes(f"{array!r}: more than one vec axis")
    if vecs and not isinstance(desc.shape[vecs[0]], ex.NumericLiteral):
        raise VecExtentMismatch(
            f"{array!r}: vec axis extent must be a literal")
    ranks = sorted(t.rank for t in parsed if isinstance(t, kn.NestingOrder))
    if ranks != list(range(len(ranks))):
        raise BadPermutation(
            f"{array!r}: nesting ranks {ranks} are not 0..{len(ranks) - 1}")
    return replace_descriptor(k, kn.ArrayDescriptor(
        desc.name, desc.shape, desc.dtype, desc.space, desc.axis_names,
        tuple(parsed)))


def alias_temporaries(k: kn.Kernel, names: list[str]) -> kn.Kernel:
    temps = k.temporaries_by_name()
    footprints = set()
    spaces = set()
    for n in names:
        d = temps.get(n)
        if d is None:
            raise InvalidTransform(f"{n!r} is not a temporary")
        for group in k.aliases:
            if n in group:
                raise InvalidTransform(f"{n!r} is already in an alias group")
        shape = d.literal_shape()
        if shape is None:
            raise FootprintMismatch(f"{n!r} has a non-literal shape")
        size = 4
        for s in shape:
            size *= s
        footprints.add(size)
        spaces.add(d.space)
    if len(footprints) > 1:
        raise FootprintMismatch(
            f"alias group {names}: byte footprints {sorted(footprints)} differ")
    if len(spaces) > 1:
        raise SpaceMismatch(f"alias group {names}: spaces {sorted(spaces)} differ")
    return k.copy(aliases=k.aliases + (tuple(names),))
