"""Typed transform-script commands.

One dataclass per catalog entry; the script frontend produces these and
`transforms.apply_command` executes them against the kernel state.
"""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class Fuse:
    suffixes: tuple[str, ...]


@dataclass(frozen=True)
class FixParameters:
    bindings: tuple[tuple[str, int], ...]


@dataclass(frozen=True)
class Assume:
    constraint: str


@dataclass(frozen=True)
class PrioritizeLoops:
    order: tuple[str, ...]


@dataclass(frozen=True)
class TagInames:
    tags: tuple[tuple[str, str], ...]  # (iname, tag text like "core.0")


@dataclass(frozen=True)
class RenameIname:
    old: str
    new: str
    within: str = "all"
    existing_ok: bool = False


@dataclass(frozen=True)
class SetArrayAxisNames:
    array: str
    names: tuple[str, ...]


@dataclass(frozen=True)
class SplitArrayAxis:
    array: str
    axis: str  # axis name or decimal index
    factor: int


@dataclass(frozen=True)
class TagArrayAxes:
    array: str
    tags: tuple[str, ...]


@dataclass(frozen=True)
class AssignmentToSubst:
    var: str


@dataclass(frozen=True)
class Precompute:
    rule: str
    footprint: tuple[str, ...]
    compute: tuple[str, ...]
    temp_space: str = "scratchpad"
    storage: tuple[str, ...] | None = None
    within: str = "all"


@dataclass(frozen=True)
class AddPrefetch:
    var: str
    fetch: tuple[str, ...]
    temp_space: str = "scratchpad"
    sweep: tuple[str, ...] = ()
    within: str = "all"


@dataclass(frozen=True)
class AliasTemporaries:
    names: tuple[str, ...]


@dataclass(frozen=True)
class BufferArray:
    var: str
    buffer_inames: tuple[str, ...] = ()
    init: str = "zero"  # zero | load
    store: str = "accumulate"  # assign | accumulate


@dataclass(frozen=True)
class CollectCommonFactors:
    var: str


TransformCommand = (
    Fuse | FixParameters | Assume | PrioritizeLoops | TagInames | RenameIname
    | SetArrayAxisNames | SplitArrayAxis | TagArrayAxes | AssignmentToSubst
    | Precompute | AddPrefetch | AliasTemporaries | BufferArray
    | CollectCommonFactors
)

COMMAND_NAMES = {
    "fuse": Fuse,
    "fix_parameters": FixParameters,
    "assume": Assume,
    "prioritize_loops": PrioritizeLoops,
    "tag_inames": TagInames,
    "rename_iname": RenameIname,
    "set_array_axis_names": SetArrayAxisNames,
    "split_array_axis": SplitArrayAxis,
    "tag_array_axes": TagArrayAxes,
    "assignment_to_subst": AssignmentToSubst,
    "precompute": Precompute,
    "add_prefetch": AddPrefetch,
    "alias_temporaries": AliasTemporaries,
    "buffer_array": BufferArray,
    "collect_common_factors": CollectCommonFactors,
}
