"""Line-oriented transform-script parser.

Grammar: one command per line, `<command> key=value key=value ...`;
list values are comma-separated; values containing spaces (match queries)
are double-quoted; `#` starts a comment.
"""

from __future__ import annotations

import re

from ..commands import (
    COMMAND_NAMES,
    AddPrefetch,
    AliasTemporaries,
    AssignmentToSubst,
    Assume,
    BufferArray,
    CollectCommonFactors,
    FixParameters,
    Fuse,
    Precompute,
    PrioritizeLoops,
    RenameIname,
    SetArrayAxisNames,
    SplitArrayAxis,
    TagArrayAxes,
    TagInames,
    TransformCommand,
)
from ..diagnostics import BadArgument, ScriptSyntaxError, UnknownCommand

_PAIR = re.compile(r'([A-Za-z_][\w.]*)=("(?:[^"]*)"|[^\s]+)')


def _parse_pairs(rest: str, lineno: int) -> list[tuple[str, str]]:
    pairs = []
    pos = 0
    while pos < len(rest):
        if rest[pos].isspace():
            pos += 1
            continue
        m = _PAIR.match(rest, pos)
        if not m:
            raise ScriptSyntaxError(
                f"line {lineno}: cannot parse argument at {rest[pos:]!r}")
        value = m.group(2)
        if value.startswith('"'):
            if len(value) < 2 or not value.endswith('"'):
                raise ScriptSyntaxError(
                    f"line {lineno}: unterminated quoted value {value!r}")
            value = value[1:-1]
        pairs.append((m.group(1), value))
        pos = m.end()
    return pairs


def _csv(value: str) -> tuple[str, ...]:
    return tuple(v.strip() for v in value.split(",") if v.strip())


def _bool(value: str, lineno: int) -> bool:
    if value.lower() in ("true", "yes", "1"):
        return True
    if value.lower() in ("false", "no", "0"):
        return False
    raise BadArgument(f"line {lineno}: bad boolean {value!r}")


def _int(value: str, lineno: int) -> int:
    try:
        return int(value)
    except ValueError:
        raise BadArgument(f"line {lineno}: bad integer {value!r}") from None


def parse_transform_script(text: str) -> list[TransformCommand]:
    commands: list[TransformCommand] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw).strip()
        if not line:
            continue
        name, _, rest = line.partition(" ")
        if name not in COMMAND_NAMES:
            raise UnknownCommand(f"line {lineno}: unknown command {name!r}")
        pairs = _parse_pairs(rest, lineno)
        kw = dict(pairs)
        if len(kw) != len(pairs) and name not in ("tag_inames", "fix_parameters"):
            raise BadArgument(f"line {lineno}: duplicate argument key")

        def need(key: str) -> str:
            if key not in kw:
                raise BadArgument(
                    f"line {lineno}: {name} requires {key}=...")
            return kw.pop(key)

        try:
            if name == "fuse":
                cmd: TransformCommand = Fuse(_csv(need("suffixes")))
            elif name == "fix_parameters":
                if not pairs:
                    raise BadArgument(
                        f"line {lineno}: fix_parameters needs name=value pairs")
                cmd = FixParameters(
                    tuple((k, _int(v, lineno)) for k, v in pairs))
                kw = {}
            elif name == "assume":
                cmd = Assume(need("constraint"))
            elif name == "prioritize_loops":
                cmd = PrioritizeLoops(_csv(need("order")))
            elif name == "tag_inames":
                if not pairs:
                    raise BadArgument(
                        f"line {lineno}: tag_inames needs iname=tag pairs")
                cmd = TagInames(tuple(pairs))
                kw = {}
            elif name == "rename_iname":
                cmd = RenameIname(
                    old=need("old"), new=need("new"),
                    within=kw.pop("within", "all"),
                    existing_ok=_bool(kw.pop("existing_ok", "false"), lineno))
            elif name == "set_array_axis_names":
                cmd = SetArrayAxisNames(need("array"), _csv(need("names")))
            elif name == "split_array_axis":
                cmd = SplitArrayAxis(
                    need("array"), need("axis"), _int(need("factor"), lineno))
            elif name == "tag_array_axes":
                cmd = TagArrayAxes(need("array"), _csv(need("tags")))
            elif name == "assignment_to_subst":
                cmd = AssignmentToSubst(need("var"))
            elif name == "precompute":
                cmd = Precompute(
                    rule=need("rule"),
                    footprint=_csv(need("footprint")),
                    compute=_csv(need("compute")),
                    temp_space=kw.pop("temp_space", "scratchpad"),
                    storage=_csv(kw.pop("storage")) if "storage" in kw else None,
                    within=kw.pop("within", "all"))
            elif name == "add_prefetch":
                cmd = AddPrefetch(
                    var=need("var"), fetch=_csv(need("fetch")),
                    temp_space=kw.pop("temp_space", "scratchpad"),
                    sweep=_csv(kw.pop("sweep", "")),
                    within=kw.pop("within", "all"))
            elif name == "alias_temporaries":
                cmd = AliasTemporaries(_csv(need("names")))
            elif name == "buffer_array":
                init = kw.pop("init", "zero")
                store = kw.pop("store", "accumulate")
                if init not in ("zero", "load"):
                    raise BadArgument(f"line {lineno}: init must be zero|load")
                if store not in ("assign", "accumulate"):
                    raise BadArgument(
                        f"line {lineno}: store must be assign|accumulate")
                cmd = BufferArray(
                    var=need("var"),
                    buffer_inames=_csv(kw.pop("buffer_inames", "")),
                    init=init, store=store)
            else:
                assert name == "collect_common_factors"
                cmd = CollectCommonFactors(need("var"))
        except KeyError as err:  # pragma: no cover - defensive
            raise BadArgument(f"line {lineno}: {err}") from None
        if kw:
            raise BadArgument(
                f"line {lineno}: unknown argument(s) {sorted(kw)} for {name}")
        commands.append(cmd)
    return commands


def _strip_comment(line: str) -> str:
    out = []
    in_quote = False
    for ch in line:
        if ch == '"':
            in_quote = not in_quote
        if ch == "#" and not in_quote:
            break
        out.append(ch)
    return "".join(out)
