"""Transformation catalog: pure Kernel -> Kernel functions plus the
script-command dispatcher.

After every command the kernel is normalized: structurally identical
substitution rules are merged, unreachable rules pruned, and the IR
consistency check must come back clean.
"""

from __future__ import annotations

from .. import commands as cmd
from .. import kernel as kn
from ..diagnostics import InvalidTransform
from .base import normalize
from .buffering import buffer_array, collect_common_factors
from .match import MatchPredicate, parse_match
from .structure import (
    alias_temporaries,
    assume,
    fix_parameters,
    fuse_kernels,
    prioritize_loops,
    rename_iname,
    set_array_axis_names,
    split_array_axis,
    tag_array_axes,
    tag_inames,
)
from .subst import add_prefetch, assignment_to_subst, precompute

__all__ = [
    "MatchPredicate", "parse_match",
    "fuse_kernels", "fix_parameters", "assume", "prioritize_loops",
    "tag_inames", "rename_iname", "set_array_axis_names", "split_array_axis",
    "tag_array_axes", "assignment_to_subst", "precompute", "add_prefetch",
    "alias_temporaries", "buffer_array", "collect_common_factors",
    "apply_command", "apply_script", "normalize",
]


def apply_command(state: list[kn.Kernel],
                  command: cmd.TransformCommand) -> list[kn.Kernel]:
    """Apply one script command to the kernel state (a list because the
    state before fusion holds one kernel per subroutine)."""
    if isinstance(command, cmd.Fuse):
        return [normalize(fuse_kernels(state, list(command.suffixes)))]
    if len(state) != 1:
        raise InvalidTransform(
            f"{type(command).__name__} needs a single kernel; fuse first "
            f"({len(state)} kernels in flight)")
    k = state[0]
    if isinstance(command, cmd.FixParameters):
        k = fix_parameters(k, dict(command.bindings))
    elif isinstance(command, cmd.Assume):
        k = assume(k, command.constraint)
    elif isinstance(command, cmd.PrioritizeLoops):
        k = prioritize_loops(k, list(command.order))
    elif isinstance(command, cmd.TagInames):
        k = tag_inames(k, list(command.tags))
    elif isinstance(command, cmd.RenameIname):
        k = rename_iname(k, command.old, command.new, command.within,
                         command.existing_ok)
    elif isinstance(command, cmd.SetArrayAxisNames):
        k = set_array_axis_names(k, command.array, list(command.names))
    elif isinstance(command, cmd.SplitArrayAxis):
        k = split_array_axis(k, command.array, command.axis, command.factor)
    elif isinstance(command, cmd.TagArrayAxes):
        k = tag_array_axes(k, command.array, list(command.tags))
    elif isinstance(command, cmd.AssignmentToSubst):
        k = assignment_to_subst(k, command.var)
    elif isinstance(command, cmd.Precompute):
        k = precompute(k, command.rule, list(command.footprint),
                       list(command.compute),
                       list(command.storage) if command.storage else None,
                       command.within, command.temp_space)
    elif isinstance(command, cmd.AddPrefetch):
        k = add_prefetch(k, command.var, list(command.fetch),
                         command.temp_space, list(command.sweep),
                         command.within)
    elif isinstance(command, cmd.AliasTemporaries):
        k = alias_temporaries(k, list(command.names))
    elif isinstance(command, cmd.BufferArray):
        k = buffer_array(k, command.var, list(command.buffer_inames),
                         command.init, command.store)
    elif isinstance(command, cmd.CollectCommonFactors):
        k = collect_common_factors(k, command.var)
    else:  # pragma: no cover - exhaustive over the command union
        raise InvalidTransform(f"unhandled command {command!r}")
    return [normalize(k)]


def apply_script(state: list[kn.Kernel],
                 commands: list[cmd.TransformCommand]) -> list[kn.Kernel]:
    for c in commands:
        try:
            state = apply_command(state, c)
        except Exception as err:
            if err.args and isinstance(err.args[0], str):
                err.args = (f"{err.args[0]} [while applying {c!r}]",) \
                    + err.args[1:]
            raise
    return state
