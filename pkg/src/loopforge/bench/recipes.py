"""Optimization-level recipes for the volume-term corpus.

recipe(L) is a prefix of recipe(L+1); each block carries the kernel from
one optimization level to the next. The embedded transform block of the
shipped corpus source equals transform_recipe(8, nq=8) line for line.
"""

from __future__ import annotations

_FIELDS = range(1, 9)

_PREP_VARS_R = ["rho", "u1", "u2", "u3", "th", "qt1", "qt2", "qt3",
                "rhoinv", "p", "g1", "g2", "g3"]
_PREP_VARS_T = ["rhop", "v1", "v2", "v3", "thp", "qp1", "qp2", "qp3",
                "rhopinv", "pp", "h1", "h2", "h3"]

# level-6 precompute order: a rule must be materialized before the rules its
# body invokes, so consumers go first (flxu before g/u, p before th, ...)
_DOF_RULES = (
    ["flxu_r_subst", "flxu_s_subst", "tflxu_s_subst",
     "p_r_subst", "rhoinv_r_subst", "rho_r_subst",
     "u1_r_subst", "u2_r_subst", "u3_r_subst", "th_r_subst",
     "qt1_r_subst", "qt2_r_subst", "qt3_r_subst"]
    + [f"g{a}_r_subst" for a in (1, 2, 3)]
    + [f"g{a}_s_subst" for a in (1, 2, 3)]
    + [f"h{a}_s_subst" for a in (1, 2, 3)]
)


def _level_1(nq: int) -> list[str]:
    return [
        "fuse suffixes=_r,_s",
        f"fix_parameters Nq={nq}",
        'assume constraint="Ne > 0"',
        "prioritize_loops order=k,n",
        "tag_inames e=core.0 i=lane.0 j=lane.1",
    ]


def _level_2(nq: int) -> list[str]:
    return [
        "set_array_axis_names array=q names=i,j,k,field,e",
        "set_array_axis_names array=rhsq names=i,j,k,field,e",
        "split_array_axis array=q axis=field factor=4",
        "split_array_axis array=rhsq axis=field factor=4",
        "tag_array_axes array=q tags=N0,N1,N2,vec,N3,N4",
        "tag_array_axes array=rhsq tags=N0,N1,N2,vec,N3,N4",
    ]


def _level_3(nq: int) -> list[str]:
    return ["add_prefetch var=D fetch=D_f0,D_f1 temp_space=scratchpad"]


def _level_4(nq: int) -> list[str]:
    lines = []
    for v in _PREP_VARS_R:
        lines.append(f"assignment_to_subst var={v}_r")
    for v in _PREP_VARS_R:
        lines.append(f"assignment_to_subst var={v}_s")
    for v in _PREP_VARS_T:
        lines.append(f"assignment_to_subst var={v}_s")
    return lines


def _level_5(nq: int) -> list[str]:
    lines = []
    for part in ("r", "s"):
        lines.append(f"assignment_to_subst var=flxu_{part}")
        for b in _FIELDS:
            lines.append(f"assignment_to_subst var=flx{b}_{part}")
    lines.append("assignment_to_subst var=tflxu_s")
    for b in _FIELDS:
        lines.append(f"assignment_to_subst var=tflx{b}_s")
    for b in _FIELDS:
        lines.append(f"precompute rule=flx{b}_r_subst footprint=j,n "
                     f"compute=jj,ii temp_space=scratchpad")
    for b in _FIELDS:
        lines.append(f"precompute rule=flx{b}_s_subst footprint=i,n "
                     f"compute=ii,jj temp_space=scratchpad")
    lines.append("tag_inames ii=lane.0 jj=lane.1")
    for b in _FIELDS:
        lines.append(f"precompute rule=tflx{b}_s_subst footprint=i,j "
                     f"compute=ii,jj temp_space=private")
    # one summation-loop copy per flux pair first: a single n loop cannot be
    # scheduled once the flux stores alias each other
    for b in _FIELDS:
        lines.append(
            f"rename_iname old=n new=n_f{b} "
            f'within="reads:flx{b}_r_store or reads:flx{b}_s_store"')
    for part in ("r", "s"):
        names = ",".join(f"flx{b}_{part}_store" for b in _FIELDS)
        lines.append(f"alias_temporaries names={names}")
    return lines


def _level_6(nq: int) -> list[str]:
    return [f"precompute rule={r} footprint=ii,jj compute=ii,jj "
            f"temp_space=private" for r in _DOF_RULES]


def _level_7(nq: int) -> list[str]:
    return [
        "add_prefetch var=q fetch=q_f0,q_f1 temp_space=private",
        "buffer_array var=rhsq buffer_inames=k,m init=zero store=accumulate",
    ]


def _level_8(nq: int) -> list[str]:
    return [
        "tag_inames q_f0=vec rhsq_binit_field_inner=vec "
        "rhsq_bstore_field_inner=vec",
        "tag_array_axes array=D_pf tags=N0,N1",
        "tag_array_axes array=q_pf tags=vec,N0",
        "tag_array_axes array=rhsq_buf tags=N0,vec,N1",
        "collect_common_factors var=rhsq_buf",
    ]


_BLOCKS = [_level_1, _level_2, _level_3, _level_4, _level_5, _level_6,
           _level_7, _level_8]


def transform_recipe(level: int, nq: int = 8) -> str:
    """Transform-script text reaching optimization level `level` (1..8)."""
    if not 1 <= level <= 8:
        raise ValueError(f"level must be in 1..8, got {level}")
    lines: list[str] = []
    for lv in range(1, level + 1):
        lines.append(f"# level {lv}")
        lines.extend(_BLOCKS[lv - 1](nq))
    return "\n".join(lines) + "\n"


def level_boundaries(nq: int = 8) -> list[int]:
    """Command count after which each level 1..8 is reached."""
    counts = []
    total = 0
    for lv in range(1, 9):
        total += len(_BLOCKS[lv - 1](nq))
        counts.append(total)
    return counts
