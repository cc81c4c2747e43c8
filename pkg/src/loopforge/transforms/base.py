"""Shared machinery for the transformation catalog."""

from __future__ import annotations

import logging

from .. import expr as ex
from .. import kernel as kn
from ..diagnostics import InvalidTransform

log = logging.getLogger("loopforge.transforms")


def normalize(k: kn.Kernel) -> kn.Kernel:
    """Post-transform pass: merge structurally identical rules, prune rules
    unreachable from any instruction, and assert IR consistency."""
    bodies = [i.rhs for i in k.instructions]
    registry, bodies, renames = ex.unify_identical_rules(k.rules, bodies)
    if renames:
        k = k.copy(
            rules=registry,
            instructions=tuple(
                i.copy(rhs=b) for i, b in zip(k.instructions, bodies)))
    # reachability prune
    reachable: set[str] = set()
    frontier: list[str] = []
    for i in k.instructions:
        frontier.extend(ex.invoked_rules(i.rhs))
    while frontier:
        name = frontier.pop()
        if name in reachable or name not in k.rules:
            continue
        reachable.add(name)
        frontier.extend(ex.invoked_rules(k.rules.get(name).body))
    dead = [r.name for r in k.rules if r.name not in reachable]
    if dead:
        k = k.copy(rules=k.rules.without(dead))
    problems = kn.check_consistency(k)
    if problems:
        raise InvalidTransform(
            "transform produced inconsistent IR: "
            + "; ".join(str(p) for p in problems))
    return k


def insert_before_first(k: kn.Kernel, new_insn: kn.Instruction,
                        consumer_ids: set[str]) -> kn.Kernel:
    """Place a generated instruction immediately before its first consumer
    in instruction order (or at the end when it has none)."""
    insns = list(k.instructions)
    pos = len(insns)
    for idx, i in enumerate(insns):
        if i.id in consumer_ids:
            pos = idx
            break
    insns.insert(pos, new_insn)
    return k.copy(instructions=tuple(insns))


def require_fresh(k: kn.Kernel, name: str) -> None:
    taken = set(k.arrays()) | set(k.scalar_params()) | set(k.domain.names())
    if name in taken or name in k.rules:
        raise InvalidTransform(f"generated name {name!r} is already in use")


def replace_descriptor(k: kn.Kernel, desc: kn.ArrayDescriptor) -> kn.Kernel:
    args = tuple(desc if isinstance(a, kn.ArrayDescriptor)
                 and a.name == desc.name else a for a in k.args)
    temps = tuple(desc if t.name == desc.name else t for t in k.temporaries)
    return k.copy(args=args, temporaries=temps)


def lane_axis_of(k: kn.Kernel, iname: str) -> int | None:
    tag = k.tag_of(iname)
    return tag.axis if isinstance(tag, kn.LaneAxis) else None


def rewrite_instruction_exprs(insn: kn.Instruction, fn) -> kn.Instruction:
    return insn.copy(
        rhs=fn(insn.rhs),
        assignee_indices=tuple(fn(i) for i in insn.assignee_indices))
