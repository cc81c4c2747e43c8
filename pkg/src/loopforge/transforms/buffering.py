"""On-chip buffering of global accumulations and distributive-law hoisting."""

from __future__ import annotations

from .. import expr as ex
from .. import kernel as kn
from ..diagnostics import (
    ExtentMismatch,
    FootprintNotAffine,
    InvalidTransform,
    MixedAccess,
)
from .base import insert_before_first, lane_axis_of, require_fresh


def buffer_array(k: kn.Kernel, var: str, buffer_inames: list[str] = (),
                 init: str = "zero", store: str = "accumulate") -> kn.Kernel:
    """Accumulate into an on-chip buffer instead of global memory.

    The buffer covers the access footprint of all updates of `var`: array
    axes indexed by literals or by differing inames are materialized
    (their sweeping inames must be listed in `buffer_inames`), axes
    indexed by one shared iname stay implicit. A zero fill (or initial
    load) precedes the first update and one write-back per buffered
    element follows the last; with store=accumulate the write-back is a
    read-modify-write of the global array.
    """
    desc = k.arrays().get(var)
    if desc is None or desc.space != kn.GLOBAL:
        raise InvalidTransform(f"{var!r} is not a global array")
    if init not in ("zero", "load") or store not in ("assign", "accumulate"):
        raise InvalidTransform("init must be zero|load, store assign|accumulate")

    updates = [i for i in k.instructions if i.assignee == var]
    if not updates:
        raise InvalidTransform(f"{var!r} is never written")
    readers = [i for i in k.instructions
               if i.assignee != var
               and var in ex.referenced_arrays(k.expanded_rhs(i))]
    if store == "accumulate":
        if readers or any(not u.is_update for u in updates):
            raise MixedAccess(
                f"store=accumulate requires every access of {var!r} to be "
                f"an update")

    # per-axis classification of the update subscripts
    per_axis: list[list[ex.Expression]] = [[] for _ in range(desc.rank)]
    for u in updates:
        for ax, idx in enumerate(u.assignee_indices):
            if idx not in per_axis[ax]:
                per_axis[ax].append(idx)
    materialized: list[int] = []
    boxes: list[ex.Expression] = []
    for ax, exprs in enumerate(per_axis):
        if len(exprs) == 1 and isinstance(exprs[0], ex.VariableRef) \
                and exprs[0].name in k.domain:
            continue
        if all(isinstance(e, ex.NumericLiteral) for e in exprs):
            boxes.append(ex.lit(max(int(e.value) for e in exprs) + 1))
        elif all(isinstance(e, ex.VariableRef) and e.name in k.domain
                 for e in exprs):
            for e in exprs:
                if buffer_inames and e.name not in buffer_inames:
                    raise InvalidTransform(
                        f"axis {ax} of {var!r} is swept by {e.name!r}, which "
                        f"is not in buffer_inames {list(buffer_inames)}")
            extents = {k.domain.extent(e.name) for e in exprs}
            if len(extents) != 1:
                raise ExtentMismatch(
                    f"axis {ax} of {var!r} is indexed by inames of differing "
                    f"extents")
            boxes.append(next(iter(extents)))
        else:
            raise FootprintNotAffine(
                f"axis {ax} of {var!r} has a non-affine access footprint")
        materialized.append(ax)

    pass_through = [per_axis[ax][0].name for ax in range(desc.rank)
                    if ax not in materialized]
    space = kn.PRIVATE if any(lane_axis_of(k, n) is not None
                              for n in pass_through) else kn.SCRATCHPAD

    buf_name = f"{var}_buf"
    require_fresh(k, buf_name)
    axis_label = [desc.axis_names[ax] if desc.axis_names is not None
                  else f"ax{ax}" for ax in materialized]
    init_inames = [f"{var}_binit_{lbl}" for lbl in axis_label]
    store_inames = [f"{var}_bstore_{lbl}" for lbl in axis_label]
    domain = k.domain
    for name, box in zip(init_inames + store_inames, boxes + boxes):
        require_fresh(k, name)
        domain = domain.with_iname(name, box)
    k = k.copy(domain=domain)

    axis_names = tuple(axis_label) if desc.axis_names is not None else None
    buf = kn.ArrayDescriptor(buf_name, tuple(boxes), ex.F32, space, axis_names)

    init_id = f"{buf_name}_init"
    if init == "zero":
        init_rhs: ex.Expression = ex.lit(0.0, ex.F32)
    else:
        idx = []
        mat_pos = 0
        for ax in range(desc.rank):
            if ax in materialized:
                idx.append(ex.var(init_inames[mat_pos]))
                mat_pos += 1
            else:
                idx.append(ex.var(per_axis[ax][0].name))
        init_rhs = ex.Subscript(var, tuple(idx))
    init_insn = kn.Instruction(
        id=init_id, assignee=buf_name,
        assignee_indices=tuple(ex.var(n) for n in init_inames),
        rhs=init_rhs,
        within_inames=frozenset(init_inames + pass_through),
    )

    wb_index = []
    mat_pos = 0
    for ax in range(desc.rank):
        if ax in materialized:
            wb_index.append(ex.var(store_inames[mat_pos]))
            mat_pos += 1
        else:
            wb_index.append(ex.var(per_axis[ax][0].name))
    wb_id = f"{buf_name}_store"
    wb_insn = kn.Instruction(
        id=wb_id, assignee=var,
        assignee_indices=tuple(wb_index),
        rhs=ex.Subscript(buf_name, tuple(ex.var(n) for n in store_inames)),
        is_update=(store == "accumulate"),
        within_inames=frozenset(store_inames + pass_through),
        depends_on=frozenset([init_id] + [u.id for u in updates]),
    )

    update_ids = {u.id for u in updates}
    instructions = []
    for i in k.instructions:
        if i.id in update_ids:
            i = i.copy(
                assignee=buf_name,
                assignee_indices=tuple(
                    i.assignee_indices[ax] for ax in materialized),
                depends_on=i.depends_on | {init_id},
            )
        instructions.append(i)
    k = k.copy(instructions=tuple(instructions) + (wb_insn,),
               temporaries=k.temporaries + (buf,))
    return insert_before_first(k, init_insn, update_ids)


def collect_common_factors(k: kn.Kernel, var: str) -> kn.Kernel:
    """Pull factors common to every accumulation into `var` out of the
    update expressions and apply them once at the write-back.

    A factor qualifies when, after mapping each update's buffer-axis
    indices to the write-back's sweep inames, every update carries a
    structurally identical copy whose free inames are all in scope at the
    write-back. Applied greedily until no common factor remains.
    """
    temp = k.temporaries_by_name().get(var)
    if temp is None:
        raise InvalidTransform(f"{var!r} is not a temporary")
    updates = [i for i in k.instructions if i.assignee == var and i.is_update]
    if not updates:
        raise InvalidTransform(f"{var!r} has no accumulating updates")
    consumers = [i for i in k.instructions
                 if var in ex.referenced_arrays(k.expanded_rhs(i))]
    if len(consumers) != 1:
        raise InvalidTransform(
            f"{var!r} needs exactly one write-back consumer, found "
            f"{len(consumers)}")
    wb = consumers[0]
    wb_reads = [n for n in ex.walk(wb.rhs)
                if isinstance(n, ex.Subscript) and n.array == var]
    if len(wb_reads) != 1:
        raise InvalidTransform(
            f"write-back {wb.id!r} must read {var!r} exactly once")
    wb_idx = wb_reads[0].indices

    def sigma(update: kn.Instruction) -> dict[str, ex.Expression]:
        out: dict[str, ex.Expression] = {}
        for u_idx, w_idx in zip(update.assignee_indices, wb_idx):
            if isinstance(u_idx, ex.VariableRef):
                out[u_idx.name] = w_idx
        return out

    wb_scope = set(wb.within_inames)

    while True:
        factors0 = ex.flatten_chain(updates[0].rhs, "mul")
        chosen: ex.Expression | None = None
        for f in factors0:
            image = ex.substitute(f, sigma(updates[0]))
            if any(v in k.domain and v not in wb_scope
                   for v in ex.free_variables(image)):
                continue
            if all(any(ex.substitute(g, sigma(u)) == image
                       for g in ex.flatten_chain(u.rhs, "mul"))
                   for u in updates[1:]):
                chosen = f
                chosen_image = image
                break
        if chosen is None:
            return k

        new_updates = []
        for u in updates:
            chain = ex.flatten_chain(u.rhs, "mul")
            img = chosen_image
            pick = next(g for g in chain
                        if ex.substitute(g, sigma(u)) == img)
            chain.remove(pick)
            new_updates.append(u.copy(
                rhs=ex.rebuild_chain(chain, "mul", ex.lit(1.0, ex.F32))))
        new_wb = wb.copy(rhs=ex.mul(wb.rhs, chosen_image))

        replaced = {u.id: u for u in new_updates}
        replaced[wb.id] = new_wb
        k = k.copy(instructions=tuple(
            replaced.get(i.id, i) for i in k.instructions))
        updates = new_updates
        wb = new_wb
