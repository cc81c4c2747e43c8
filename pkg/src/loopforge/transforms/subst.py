"""Substitution-rule transformations: imperative-to-functional conversion,
materialization of rule values into temporaries, and global prefetching."""

from __future__ import annotations

from .. import expr as ex
from .. import kernel as kn
from ..diagnostics import (
    ExtentMismatch,
    FootprintNotAffine,
    InvalidTransform,
    MultipleWriters,
    VarIsWritten,
    VarReadInsideRule,
    WriteAfterRead,
)
from .base import insert_before_first, lane_axis_of, log, require_fresh
from .match import MatchPredicate, parse_match


def _transitively_depends(k: kn.Kernel, start: str, target: str) -> bool:
    seen = set()
    frontier = [start]
    while frontier:
        cur = frontier.pop()
        if cur == target:
            return True
        if cur in seen:
            continue
        seen.add(cur)
        frontier.extend(k.instruction(cur).depends_on)
    return False


def assignment_to_subst(k: kn.Kernel, var: str) -> kn.Kernel:
    """Turn the single assignment to scalar temporary `var` into a
    substitution rule `<var>_subst`; every read becomes an invocation.

    Rule parameters are the writer's within-inames that the defining
    expression actually depends on, in first-occurrence order. Sites pass
    the inames themselves, so later per-site rewrites are argument
    rewrites and never touch the rule body.
    """
    temp = k.temporaries_by_name().get(var)
    if temp is None or temp.rank != 0:
        raise InvalidTransform(
            f"{var!r} is not a scalar temporary")
    writers = k.writers_of(var)
    if len(writers) != 1:
        raise MultipleWriters(
            f"{var!r} is written by {len(writers)} instructions")
    writer = writers[0]
    if writer.is_update:
        raise InvalidTransform(f"{var!r} is accumulated, not assigned")

    for rule in k.rules:
        if var in ex.free_variables(rule.body):
            raise VarReadInsideRule(
                f"{var!r} is read inside rule {rule.name!r}; convert "
                f"consumers before producers")

    readers = [i for i in k.instructions if i.id != writer.id
               and var in ex.free_variables(i.rhs)]
    for r in readers:
        if not _transitively_depends(k, r.id, writer.id):
            raise WriteAfterRead(
                f"{r.id!r} reads {var!r} without depending on its writer")

    params = tuple(n for n in ex.free_variables(writer.rhs)
                   if n in writer.within_inames)
    rule_name = f"{var}_subst"
    require_fresh(k, rule_name)
    rule = ex.SubstitutionRule(rule_name, params, writer.rhs)
    invocation = ex.RuleInvocation(
        rule_name, tuple(ex.var(p) for p in params))

    instructions = []
    for i in k.instructions:
        if i.id == writer.id:
            continue
        if var in ex.free_variables(i.rhs):
            i = i.copy(rhs=ex.substitute(i.rhs, {var: invocation}))
        instructions.append(i)
    k = k.copy(
        instructions=tuple(instructions),
        temporaries=tuple(t for t in k.temporaries if t.name != var),
        rules=k.rules.with_rule(rule))
    # dependents of the removed writer inherit its dependencies
    fixed = []
    for i in k.instructions:
        if writer.id in i.depends_on:
            i = i.copy(depends_on=(i.depends_on - {writer.id})
                       | writer.depends_on)
        fixed.append(i)
    return k.copy(instructions=tuple(fixed))


def _lane_equivalent(k: kn.Kernel, a: str, b: str) -> bool:
    if a == b:
        return True
    ax_a, ax_b = lane_axis_of(k, a), lane_axis_of(k, b)
    return ax_a is not None and ax_a == ax_b


def _find_sites(k: kn.Kernel, rule_name: str, pred: MatchPredicate):
    """(instruction, [invocation nodes]) for matched instructions."""
    sites = []
    for i in k.instructions:
        if not pred.matches(k, i):
            continue
        nodes = [n for n in ex.walk(i.rhs)
                 if isinstance(n, ex.RuleInvocation) and n.rule == rule_name]
        if nodes:
            sites.append((i, nodes))
    return sites


def precompute(k: kn.Kernel, rule: str, footprint_inames: list[str],
               compute_inames: list[str],
               storage_axes: list[str] | None = None,
               within: str | MatchPredicate = "all",
               temp_space: str = kn.SCRATCHPAD) -> kn.Kernel:
    """Materialize a rule's values over the footprint into a temporary.

    A loop nest over the compute inames evaluates the rule body (footprint
    parameters replaced by compute inames) into `<rule>_store`; matched
    invocations become reads of the store, indexed by the footprint
    arguments they passed. For private storage, a footprint axis whose
    site argument and compute iname sit on the same SIMD lane axis is
    dropped: every lane keeps its own value.
    """
    r = k.rules.get(rule)
    if len(footprint_inames) != len(compute_inames):
        raise InvalidTransform("footprint and compute iname counts differ")
    pred = parse_match(within) if isinstance(within, str) else within

    for other in k.rules:
        if other.name != rule and rule in ex.invoked_rules(other.body):
            raise InvalidTransform(
                f"rule {rule!r} is invoked inside rule {other.name!r}; "
                f"precompute consumers before their callees")

    sites = _find_sites(k, rule, pred)
    if not sites:
        log.warning("precompute: rule %r not invoked in any matched "
                    "instruction (kernel unchanged)", rule)
        return k

    # footprint positions from the first site's arguments
    first_args = sites[0][1][0].args
    positions: list[int] = []
    for f in footprint_inames:
        pos = next((t for t, a in enumerate(first_args)
                    if isinstance(a, ex.VariableRef)
                    and _lane_equivalent(k, a.name, f)), None)
        if pos is None or pos in positions:
            raise FootprintNotAffine(
                f"footprint iname {f!r} is not a distinct argument of "
                f"{rule!r} at its first site")
        positions.append(pos)

    # validate all invocations and collect the shared non-footprint args
    context_args: dict[int, ex.Expression] = {}
    for insn, nodes in sites:
        for node in nodes:
            if len(node.args) != len(first_args):
                raise FootprintNotAffine(f"inconsistent arity at {insn.id!r}")
            for t, pos in enumerate(positions):
                a = node.args[pos]
                want = footprint_inames[t]
                if not (isinstance(a, ex.VariableRef)
                        and _lane_equivalent(k, a.name, want)):
                    raise FootprintNotAffine(
                        f"at {insn.id!r}, argument {pos} of {rule!r} is "
                        f"{ex.format_expression(a)}, expected {want!r} or a "
                        f"lane-equivalent iname")
            for pos, a in enumerate(node.args):
                if pos in positions:
                    continue
                if pos in context_args:
                    if context_args[pos] != a:
                        raise FootprintNotAffine(
                            f"non-footprint argument {pos} of {rule!r} "
                            f"differs across sites")
                else:
                    context_args[pos] = a

    # compute inames: create fresh ones with the footprint extents
    domain = k.domain
    for f, c in zip(footprint_inames, compute_inames):
        extent = k.domain.extent(f)
        if c in domain:
            if domain.extent(c) != extent:
                raise ExtentMismatch(
                    f"existing compute iname {c!r} has extent "
                    f"{ex.format_expression(domain.extent(c))}, footprint "
                    f"{f!r} needs {ex.format_expression(extent)}")
        else:
            domain = domain.with_iname(c, extent)
    k = k.copy(domain=domain)

    # storage axes: lane-equivalent private axes are elided
    materialized: list[int] = []  # positions in footprint order
    for t, (f, c) in enumerate(zip(footprint_inames, compute_inames)):
        elide = (temp_space == kn.PRIVATE
                 and lane_axis_of(k, c) is not None
                 and _lane_equivalent(k, f, c))
        if not elide:
            materialized.append(t)
    if storage_axes is not None:
        want = [footprint_inames[t] for t in materialized]
        if sorted(storage_axes) != sorted(want):
            raise InvalidTransform(
                f"storage axes {storage_axes} do not cover the materialized "
                f"footprint {want}")
        materialized = [footprint_inames.index(n) for n in storage_axes]

    store_name = (rule[:-len("_subst")] if rule.endswith("_subst") else rule) \
        + "_store"
    require_fresh(k, store_name)
    shape = tuple(k.domain.extent(footprint_inames[t]) for t in materialized)
    store = kn.ArrayDescriptor(store_name, shape, ex.F32, temp_space)

    # compute instruction: rule body with footprint params -> compute inames
    subst: dict[str, ex.Expression] = {}
    for t, pos in enumerate(positions):
        subst[r.params[pos]] = ex.var(compute_inames[t])
    for pos, a in context_args.items():
        subst[r.params[pos]] = a
    body = ex.substitute(r.body, subst)
    within_set = set(compute_inames)
    for e in [body] + list(context_args.values()):
        within_set |= {v for v in ex.free_variables(e) if v in k.domain}
    cmp_id = f"{store_name}_cmp"
    compute_insn = kn.Instruction(
        id=cmp_id,
        assignee=store_name,
        assignee_indices=tuple(
            ex.var(compute_inames[t]) for t in materialized),
        rhs=body,
        within_inames=frozenset(within_set),
    )

    # rewrite invocation sites to store reads
    def rewrite(e: ex.Expression) -> ex.Expression:
        def repl(node: ex.Expression) -> ex.Expression:
            if isinstance(node, ex.RuleInvocation) and node.rule == rule:
                if materialized:
                    return ex.Subscript(store_name, tuple(
                        node.args[positions[t]] for t in materialized))
                return ex.var(store_name)
            return node
        return ex.transform_bottom_up(e, repl)

    site_ids = {i.id for i, _nodes in sites}
    instructions = []
    for i in k.instructions:
        if i.id in site_ids:
            i = i.copy(rhs=rewrite(i.rhs),
                       depends_on=i.depends_on | {cmp_id})
        instructions.append(i)

    k = k.copy(instructions=tuple(instructions),
               temporaries=k.temporaries + (store,))
    return insert_before_first(k, compute_insn, site_ids)


def add_prefetch(k: kn.Kernel, var: str, fetch: list[str],
                 temp_space: str = kn.SCRATCHPAD,
                 sweep: list[str] = (),
                 within: str | MatchPredicate = "all") -> kn.Kernel:
    """Fetch a global array into on-chip storage and redirect all matched
    reads: the composition of rule creation over the array's indices,
    reference replacement, and precompute of that rule.

    Array axes whose matched accesses all use one shared iname stay as
    pass-through indices of the fetch; axes indexed by literals or by
    differing inames are materialized in the on-chip copy and swept by the
    given fetch inames. Listing an iname in `sweep` forces the axes it
    indexes to be materialized as well.
    """
    desc = k.arrays().get(var)
    if desc is None or desc.space != kn.GLOBAL:
        raise InvalidTransform(f"{var!r} is not a global array")
    if k.writers_of(var):
        raise VarIsWritten(f"{var!r} is written; prefetch reads only")
    for rule in k.rules:
        if var in ex.referenced_arrays(rule.body):
            raise InvalidTransform(
                f"{var!r} is read inside rule {rule.name!r}; materialize "
                f"that rule first")
    pred = parse_match(within) if isinstance(within, str) else within

    sites: list[tuple[kn.Instruction, list[ex.Subscript]]] = []
    for i in k.instructions:
        if not pred.matches(k, i):
            continue
        nodes = [n for n in ex.walk(i.rhs)
                 if isinstance(n, ex.Subscript) and n.array == var]
        if nodes:
            sites.append((i, nodes))
    if not sites:
        log.warning("add_prefetch: no matched read of %r (kernel unchanged)",
                    var)
        return k

    # per-axis classification
    per_axis: list[list[ex.Expression]] = [[] for _ in range(desc.rank)]
    for _insn, nodes in sites:
        for node in nodes:
            for ax, idx in enumerate(node.indices):
                if idx not in per_axis[ax]:
                    per_axis[ax].append(idx)

    materialized: list[int] = []
    boxes: list[ex.Expression] = []
    for ax, exprs in enumerate(per_axis):
        if len(exprs) == 1 and isinstance(exprs[0], ex.VariableRef) \
                and exprs[0].name in k.domain \
                and exprs[0].name not in sweep:
            continue  # pass-through
        if all(isinstance(e, ex.NumericLiteral) for e in exprs):
            boxes.append(ex.lit(max(int(e.value) for e in exprs) + 1))
        elif all(isinstance(e, ex.VariableRef) and e.name in k.domain
                 for e in exprs):
            extents = {k.domain.extent(e.name) for e in exprs}
            if len(extents) != 1:
                raise ExtentMismatch(
                    f"axis {ax} of {var!r} is indexed by inames of "
                    f"differing extents")
            boxes.append(next(iter(extents)))
        else:
            raise FootprintNotAffine(
                f"axis {ax} of {var!r} mixes literals and inames or uses "
                f"compound index expressions")
        materialized.append(ax)

    if len(fetch) != len(materialized):
        raise InvalidTransform(
            f"{len(materialized)} array axes are materialized but "
            f"{len(fetch)} fetch inames were given")

    temp_name = f"{var}_pf"
    require_fresh(k, temp_name)
    domain = k.domain
    for name, box in zip(fetch, boxes):
        require_fresh(k, name)
        domain = domain.with_iname(name, box)
    k = k.copy(domain=domain)

    axis_names = None
    if desc.axis_names is not None:
        axis_names = tuple(desc.axis_names[ax] for ax in materialized)
    temp = kn.ArrayDescriptor(temp_name, tuple(boxes), ex.F32, temp_space,
                              axis_names)

    fetch_index = []
    fetch_pos = 0
    pass_through: list[str] = []
    for ax in range(desc.rank):
        if ax in materialized:
            fetch_index.append(ex.var(fetch[fetch_pos]))
            fetch_pos += 1
        else:
            iname = per_axis[ax][0].name
            fetch_index.append(ex.var(iname))
            pass_through.append(iname)
    fetch_id = f"{temp_name}_fetch"
    fetch_insn = kn.Instruction(
        id=fetch_id,
        assignee=temp_name,
        assignee_indices=tuple(ex.var(n) for n in fetch),
        rhs=ex.Subscript(var, tuple(fetch_index)),
        within_inames=frozenset(list(fetch) + pass_through),
    )

    def rewrite(e: ex.Expression) -> ex.Expression:
        def repl(node: ex.Expression) -> ex.Expression:
            if isinstance(node, ex.Subscript) and node.array == var:
                return ex.Subscript(temp_name, tuple(
                    node.indices[ax] for ax in materialized))
            return node
        return ex.transform_bottom_up(e, repl)

    site_ids = {i.id for i, _n in sites}
    instructions = []
    for i in k.instructions:
        if i.id in site_ids:
            i = i.copy(rhs=rewrite(i.rhs), depends_on=i.depends_on | {fetch_id})
        instructions.append(i)
    k = k.copy(instructions=tuple(instructions),
               temporaries=k.temporaries + (temp,))
    return insert_before_first(k, fetch_insn, site_ids)
