"""Brute-force volume-term oracle.

Straightforward per-element loops over the summation index and flux
columns, accumulating in float64 and returning the float32 increment.
Independent of the kernel IR, the scheduler and the interpreter.
"""

from __future__ import annotations

import numpy as np

from .inputs import FieldState, PhysicalConstants


def flux_columns(q64: np.ndarray, c: PhysicalConstants) -> np.ndarray:
    """f[a, b, i, j, k] for one element: column a of the flux of field b."""
    rho = q64[:, :, :, 0]
    U = [q64[:, :, :, 1], q64[:, :, :, 2], q64[:, :, :, 3]]
    theta = q64[:, :, :, 4]
    tracers = [q64[:, :, :, 5], q64[:, :, :, 6], q64[:, :, :, 7]]
    p = c.p0 * (c.R * theta / c.p0) ** c.gamma
    nq = rho.shape[0]
    f = np.zeros((3, 8, nq, nq, nq))
    for a in range(3):
        f[a, 0] = U[a]
        for b in range(3):
            f[a, 1 + b] = U[a] * U[b] / rho
            if a == b:
                f[a, 1 + b] += p
        f[a, 4] = U[a] * theta / rho
        for t in range(3):
            f[a, 5 + t] = U[a] * tracers[t] / rho
    return f


def reference_volume_term(state: FieldState,
                          c: PhysicalConstants | None = None) -> np.ndarray:
    """The rhsq increment of the volume term: for every point and field,
    1/J times the three reference-direction derivative sums of the
    metric-contracted flux."""
    c = c or state.constants
    nq, ne = state.q.shape[0], state.q.shape[4]
    D = state.D.astype(np.float64)
    out = np.zeros((nq, nq, nq, 8, ne))
    for e in range(ne):
        q64 = state.q[:, :, :, :, e].astype(np.float64)
        g64 = state.g[:, :, :, :, :, e].astype(np.float64)
        jinv = state.Jinv[:, :, :, e].astype(np.float64)
        f = flux_columns(q64, c)
        # gf[dir, b] = sum_a g[..., a, dir] * f[a, b]
        gf = np.zeros((3, 8, nq, nq, nq))
        for direction in range(3):
            for b in range(8):
                for a in range(3):
                    gf[direction, b] += g64[:, :, :, a, direction] * f[a, b]
        v = np.zeros((nq, nq, nq, 8))
        for b in range(8):
            for n in range(nq):
                # derivative along i: D[i, n] with flux at (n, j, k)
                v[:, :, :, b] += (D[:, n][:, None, None]
                                  * gf[0, b][n, :, :][None, :, :])
                # derivative along j: D[j, n] with flux at (i, n, k)
                v[:, :, :, b] += (D[:, n][None, :, None]
                                  * gf[1, b][:, n, :][:, None, :])
                # derivative along k: D[k, n] with flux at (i, j, n)
                v[:, :, :, b] += (D[:, n][None, None, :]
                                  * gf[2, b][:, :, n][:, :, None])
            v[:, :, :, b] *= jinv
        out[:, :, :, :, e] = v
    return out.astype(np.float32)
