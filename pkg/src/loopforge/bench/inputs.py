"""Benchmark state: physical constants, deterministic pseudo-random inputs,
and shape adaptation between the canonical field layout and a transformed
kernel's argument declarations."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import kernel as kn
from ..interp import resolve_extent

F32 = np.float32


@dataclass(frozen=True)
class PhysicalConstants:
    """Dry-air defaults; any positive values with gamma = cp/cv > 1 work."""

    p0: float = 1.0e5
    R: float = 287.0
    gamma: float = 1.4

    def __post_init__(self):
        if not (self.p0 > 0 and self.R > 0 and self.gamma > 1):
            raise ValueError("need p0 > 0, R > 0, gamma > 1")

    @property
    def cv(self) -> float:
        return self.R / (self.gamma - 1.0)

    @property
    def cp(self) -> float:
        return self.gamma * self.cv


@dataclass(frozen=True)
class BenchmarkConfig:
    nq: int
    ne: int
    level: int = 8
    seed: int = 1

    def __post_init__(self):
        if self.nq < 1 or self.ne < 1:
            raise ValueError("Nq and Ne must be at least 1")
        if not 1 <= self.level <= 8:
            raise ValueError("level must be in 1..8")


@dataclass
class FieldState:
    """The 8 prognostic fields with differentiation matrix and metric terms.

    q and rhsq are [Nq, Nq, Nq, 8, Ne] (fields: density, three momenta,
    potential-temperature density, three tracers); D is [Nq, Nq] with exact
    zero row sums; g is [Nq, Nq, Nq, 3, 3, Ne]; Jinv is [Nq, Nq, Nq, Ne].
    """

    q: np.ndarray
    rhsq: np.ndarray
    D: np.ndarray
    g: np.ndarray
    Jinv: np.ndarray
    constants: PhysicalConstants = field(default_factory=PhysicalConstants)

    def arrays(self) -> dict[str, np.ndarray]:
        return {"q": self.q, "rhsq": self.rhsq, "D": self.D, "g": self.g,
                "Jinv": self.Jinv}

    def copy(self) -> "FieldState":
        return FieldState(self.q.copy(), self.rhsq.copy(), self.D.copy(),
                          self.g.copy(), self.Jinv.copy(), self.constants)


def differentiation_matrix(nq: int) -> np.ndarray:
    """Analytic differentiation-like matrix with exact zero row sums in f32:
    D[i][n] = (n - i)/Nq off the diagonal, diagonal = -sum of the row."""
    d = np.zeros((nq, nq), F32)
    for i in range(nq):
        row = F32(0.0)
        for n in range(nq):
            if n != i:
                v = F32(F32(n - i) / F32(nq))
                d[i, n] = v
                row = F32(row + v)
        d[i, i] = -row
    return d


def make_inputs(cfg: BenchmarkConfig,
                constants: PhysicalConstants | None = None) -> FieldState:
    """Deterministic pseudo-random state for one configuration: positive
    density, small momenta, potential temperature scaled so the pressure is
    O(p0), tracers in [0, 1]."""
    c = constants or PhysicalConstants()
    rng = np.random.default_rng(cfg.seed)
    nq, ne = cfg.nq, cfg.ne
    q = np.empty((nq, nq, nq, 8, ne), F32)
    q[:, :, :, 0] = rng.uniform(0.5, 1.5, (nq, nq, nq, ne))
    q[:, :, :, 1:4] = rng.uniform(-0.1, 0.1, (nq, nq, nq, 3, ne))
    q[:, :, :, 4] = (c.p0 / c.R) * rng.uniform(0.9, 1.1, (nq, nq, nq, ne))
    q[:, :, :, 5:8] = rng.uniform(0.0, 1.0, (nq, nq, nq, 3, ne))
    return FieldState(
        q=q,
        rhsq=np.zeros((nq, nq, nq, 8, ne), F32),
        D=differentiation_matrix(nq),
        g=rng.uniform(-1.0, 1.0, (nq, nq, nq, 3, 3, ne)).astype(F32),
        Jinv=rng.uniform(0.5, 2.0, (nq, nq, nq, ne)).astype(F32),
        constants=c,
    )


def scalar_arguments(state: FieldState, nq: int, ne: int) -> dict[str, float | int]:
    c = state.constants
    return {"Nq": nq, "Ne": ne, "p0": c.p0, "Rgas": c.R, "gam": c.gamma}


def adapt_array(canonical: np.ndarray, target_shape: tuple[int, ...]) -> np.ndarray:
    """View of `canonical` matching a transformed declaration whose axes may
    be split inner-first (axis d -> (inner, outer) with d = inner*outer and
    flat index f = inner_extent*outer + inner)."""
    if canonical.shape == target_shape:
        return canonical
    src = canonical
    ci, ti = 0, 0
    view = src
    while ci < view.ndim and ti < len(target_shape):
        if view.shape[ci] == target_shape[ti]:
            ci += 1
            ti += 1
            continue
        if ti + 1 < len(target_shape) and \
                target_shape[ti] * target_shape[ti + 1] == view.shape[ci]:
            inner, outer = target_shape[ti], target_shape[ti + 1]
            new_shape = view.shape[:ci] + (outer, inner) + view.shape[ci + 1:]
            view = np.moveaxis(view.reshape(new_shape), ci, ci + 1)
            ci += 2
            ti += 2
            continue
        raise ValueError(
            f"cannot adapt shape {canonical.shape} to {target_shape}")
    if view.shape != tuple(target_shape):
        raise ValueError(
            f"cannot adapt shape {canonical.shape} to {target_shape}")
    return view


def bind_state(k: kn.Kernel, state: FieldState, nq: int,
               ne: int) -> tuple[dict[str, float | int], dict[str, np.ndarray]]:
    """Scalar and (possibly reshaped) array bindings for one kernel; the
    array views share memory with the state, so kernel writes land in it."""
    params = scalar_arguments(state, nq, ne)
    int_params = {p: v for p, v in params.items() if isinstance(v, int)}
    arrays = {}
    for a in k.args:
        if isinstance(a, kn.ScalarParam):
            continue
        want = tuple(resolve_extent(s, int_params) for s in a.shape)
        arrays[a.name] = adapt_array(state.arrays()[a.name], want)
    usable = {p: v for p, v in params.items()
              if p in k.scalar_params()}
    return usable, arrays
