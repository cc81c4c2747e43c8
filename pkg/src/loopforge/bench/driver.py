"""Benchmark driver: build pipelines per optimization level, run the
interpreter equivalence check, and produce static cost reports."""

from __future__ import annotations

import importlib.resources as resources
from dataclasses import dataclass

import numpy as np

from .. import kernel as kn
from .. import schedule as sch
from ..codegen import CostReport, count_cost, emit_source
from ..diagnostics import ExecutionError
from ..frontend import lower_to_kernels, parse_source, parse_transform_script
from ..interp import ExecutionEnvironment, run_kernel
from ..transforms import apply_script
from .inputs import BenchmarkConfig, FieldState, bind_state, make_inputs
from .recipes import level_boundaries, transform_recipe
from .reference import reference_volume_term


def corpus_source() -> str:
    ref = resources.files("loopforge.bench") / "data" / "volume.f90"
    return ref.read_text()


def lower_corpus() -> list[kn.Kernel]:
    return lower_to_kernels(parse_source(corpus_source()))


def build_levels(nq: int, up_to: int = 8,
                 kernels: list[kn.Kernel] | None = None
                 ) -> dict[int, list[kn.Kernel]]:
    """Kernel state after each optimization level 1..up_to (prefix reuse:
    one pass over recipe(up_to))."""
    state = kernels if kernels is not None else lower_corpus()
    commands = parse_transform_script(transform_recipe(up_to, nq=nq))
    bounds = level_boundaries(nq)
    out: dict[int, list[kn.Kernel]] = {}
    done = 0
    for level in range(1, up_to + 1):
        state = apply_script(state, commands[done:bounds[level - 1]])
        done = bounds[level - 1]
        out[level] = state
    return out


def build_level(nq: int, level: int) -> kn.Kernel:
    (k,) = build_levels(nq, up_to=level)[level]
    return k


def interpret_state(kernels: list[kn.Kernel], state: FieldState, nq: int,
                    ne: int, collect_counts: bool = False):
    """Run the kernels in sequence on shared arrays; returns (rhsq, envs)."""
    envs = []
    for k in kernels:
        params, arrays = bind_state(k, state, nq, ne)
        env = ExecutionEnvironment.for_kernel(k, params, arrays)
        s = sch.linearize(k)
        diags = sch.validate_schedule(k, s)
        if diags:
            raise ExecutionError(
                f"invalid schedule for {k.name!r}: "
                + "; ".join(str(d) for d in diags))
        run_kernel(k, s, env)
        envs.append(env)
    return state.rhsq, envs


def max_rel_error(got: np.ndarray, want: np.ndarray) -> float:
    """Max-norm relative error per field component, worst over components.

    Each of the eight prognostic components has its own magnitude (the
    momentum equations carry the pressure, the tracers do not), so errors
    are measured against the per-component scale; an f32 pipeline checked
    against an f64 oracle cannot hold per-element relative bounds at
    points where the derivative sums nearly cancel."""
    got64 = np.asarray(got, np.float64)
    want64 = np.asarray(want, np.float64)
    worst = 0.0
    for b in range(want64.shape[3]):
        w = want64[:, :, :, b]
        d = np.abs(got64[:, :, :, b] - w)
        scale = float(np.max(np.abs(w))) if w.size else 0.0
        if scale == 0.0:
            worst = max(worst, float(np.max(d)) if d.size else 0.0)
        else:
            worst = max(worst, float(np.max(d)) / scale)
    return worst


def equivalence_error(kernels: list[kn.Kernel], cfg: BenchmarkConfig) -> float:
    """Max relative error of the interpreted pipeline against the
    brute-force oracle on cfg's inputs."""
    state = make_inputs(cfg)
    want = reference_volume_term(state)
    got, _ = interpret_state(kernels, state.copy(), cfg.nq, cfg.ne)
    return max_rel_error(got, want)


@dataclass(frozen=True)
class BenchReport:
    level: int
    nq: int
    ne: int
    cost: CostReport
    equivalence_error: float | None  # None when the check was skipped
    source: str
    schedule_dump: str
    kernel_dump: str

    def row_text(self) -> str:
        parts = [
            f"level={self.level}", f"Nq={self.nq}", f"Ne={self.ne}",
            f"flops={self.cost.flops}",
            f"bytes_read={self.cost.global_bytes_read}",
            f"bytes_written={self.cost.global_bytes_written}",
        ]
        if self.equivalence_error is not None:
            parts.append(f"equiv_rel_err={self.equivalence_error:.3e}")
        lines = ["  ".join(parts)]
        for name, r, w in self.cost.per_array:
            lines.append(f"    {name}: read={r} written={w}")
        return "\n".join(lines)

    def row_csv(self) -> str:
        breakdown = ";".join(f"{n}:{r}:{w}" for n, r, w in self.cost.per_array)
        err = "" if self.equivalence_error is None \
            else f"{self.equivalence_error:.6e}"
        return (f"{self.level},{self.nq},{self.ne},{self.cost.flops},"
                f"{self.cost.global_bytes_read},"
                f"{self.cost.global_bytes_written},{err},{breakdown}")

    @staticmethod
    def csv_header() -> str:
        return ("level,nq,ne,flops,bytes_read,bytes_written,"
                "equiv_rel_err,per_array")


def run_benchmark(cfg: BenchmarkConfig, check: bool | None = None
                  ) -> BenchReport:
    """Build the kernel at cfg.level, optionally verify it against the
    oracle (always when Nq <= 4 unless disabled), and report static costs."""
    k = build_level(cfg.nq, cfg.level)
    s = sch.linearize(k)
    diags = sch.validate_schedule(k, s)
    if diags:
        raise ExecutionError("; ".join(str(d) for d in diags))
    cost = count_cost(k, s, {"Ne": cfg.ne})
    err = None
    if check is None:
        check = cfg.nq <= 4
    if check:
        err = equivalence_error([k], cfg)
    return BenchReport(
        level=cfg.level, nq=cfg.nq, ne=cfg.ne, cost=cost,
        equivalence_error=err,
        source=emit_source(k, s),
        schedule_dump=s.dump(),
        kernel_dump=kn.dump_kernel(k))


def full_check(levels: list[int], nqs: list[int], nes: list[int],
               seeds: list[int],
               kernels: list[kn.Kernel] | None = None,
               tolerance: float = 1e-5):
    """Equivalence suite over the whole grid; yields result rows."""
    for nq in nqs:
        staged = build_levels(nq, up_to=max(levels), kernels=kernels)
        for level in levels:
            k_state = staged[level]
            for ne in nes:
                for seed in seeds:
                    cfg = BenchmarkConfig(nq=nq, ne=ne, level=level, seed=seed)
                    err = equivalence_error(k_state, cfg)
                    yield cfg, err, err <= tolerance
